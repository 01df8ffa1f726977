//! Sentence-comment co-attention head: conformity matrix, cross-attention
//! maps, attention weights, attended summaries, class prediction, and loss.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::init::glorot_uniform;
use crate::tensor::{Axis, DenseMatrix, NodeId, ParamId, ParamSet, Tape, TensorError};

/// Trainable weights of the co-attention head. Sentences are stored d x N
/// (one column per sentence), fused user-comment rows K x d.
#[derive(Debug, Clone)]
pub struct CoAttentionParams {
    /// Projects a concatenated [user, comment] pair (width 2 d_g) down to d.
    pub concat_proj: ParamId,
    pub concat_bias: ParamId,
    /// d x d bilinear form between comment rows and sentence columns.
    pub w_i: ParamId,
    /// k_a x d map applied on the sentence side.
    pub w_s: ParamId,
    /// k_a x d map applied on the comment side.
    pub w_c: ParamId,
    /// 1 x k_a scoring vector for sentence attention.
    pub w_hs: ParamId,
    /// 1 x k_a scoring vector for comment attention.
    pub w_hc: ParamId,
    /// 2 x 2d classifier weights over [attended sentences, attended comments].
    pub w_f: ParamId,
    pub b_f: ParamId,
    /// Learned 1 x d stand-in row used when a news item has no comments.
    pub null_comment: ParamId,
    pub d: usize,
    pub k_a: usize,
}

impl CoAttentionParams {
    pub fn register(
        set: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        d_g: usize,
        d: usize,
        k_a: usize,
    ) -> Self {
        let concat_proj = set.register("coattn.concat_proj", glorot_uniform(rng, 2 * d_g, d));
        let concat_bias = set.register("coattn.concat_bias", DenseMatrix::zeros(1, d));
        let w_i = set.register("coattn.w_i", glorot_uniform(rng, d, d));
        let w_s = set.register("coattn.w_s", glorot_uniform(rng, k_a, d));
        let w_c = set.register("coattn.w_c", glorot_uniform(rng, k_a, d));
        let w_hs = set.register("coattn.w_hs", glorot_uniform(rng, 1, k_a));
        let w_hc = set.register("coattn.w_hc", glorot_uniform(rng, 1, k_a));
        let w_f = set.register("coattn.w_f", glorot_uniform(rng, 2, 2 * d));
        let b_f = set.register("coattn.b_f", DenseMatrix::zeros(1, 2));
        let null_comment = set.register("coattn.null_comment", glorot_uniform(rng, 1, d));
        Self {
            concat_proj,
            concat_bias,
            w_i,
            w_s,
            w_c,
            w_hs,
            w_hc,
            w_f,
            b_f,
            null_comment,
            d,
            k_a,
        }
    }
}

/// Everything the classifier produces for one news item, recorded as plain
/// numbers for reporting and explanation.
#[derive(Debug, Clone, Serialize)]
pub struct ForwardTrace {
    pub news_id: String,
    /// Class probabilities [fake, true]; sums to 1.
    pub prediction: [f64; 2],
    /// Attention over sentences; index i weighs sentence i.
    pub sentence_attention: Vec<f64>,
    /// Attention over comments, aligned with `comment_ids`.
    pub comment_attention: Vec<f64>,
    pub comment_ids: Vec<String>,
    pub attended_sentences: Vec<f64>,
    pub attended_comments: Vec<f64>,
    pub conformity: DenseMatrix,
    pub sentence_map: DenseMatrix,
    pub comment_map: DenseMatrix,
}

/// Fuses author and comment embeddings row by row: concatenate, then apply a
/// learned 2 d_g -> d projection with bias so downstream shapes close.
pub fn user_comment_concat(
    tape: &mut Tape,
    set: &ParamSet,
    params: &CoAttentionParams,
    user_vecs: NodeId,
    comment_vecs: NodeId,
) -> Result<NodeId, TensorError> {
    let pairs = tape.concat(user_vecs, comment_vecs, Axis::Cols)?;
    let proj = tape.param(set, params.concat_proj);
    let bias = tape.param(set, params.concat_bias);
    let projected = tape.matmul(pairs, proj)?;
    tape.add_row_broadcast(projected, bias)
}

/// Conformity between every comment row and sentence column:
/// F = tanh(C' W_I S), K x N with entries in (-1, 1).
pub fn conformity(
    tape: &mut Tape,
    set: &ParamSet,
    params: &CoAttentionParams,
    c_prime: NodeId,
    s: NodeId,
) -> Result<NodeId, TensorError> {
    let w_i = tape.param(set, params.w_i);
    let cw = tape.matmul(c_prime, w_i)?;
    let cws = tape.matmul(cw, s)?;
    Ok(tape.tanh(cws))
}

/// Cross-attention maps over sentences (k_a x N) and comments (k_a x K):
///   H_s = tanh(W_s S + (W_c C'^T) F)
///   H_c = tanh(W_c C'^T + (W_s S) F^T)
/// With `swap_cross_weights` the comment map instead pairs W_s with C' and
/// W_c with S, reproducing the alternate published pairing.
pub fn attention_maps(
    tape: &mut Tape,
    set: &ParamSet,
    params: &CoAttentionParams,
    s: NodeId,
    c_prime: NodeId,
    f: NodeId,
    swap_cross_weights: bool,
) -> Result<(NodeId, NodeId), TensorError> {
    let w_s = tape.param(set, params.w_s);
    let w_c = tape.param(set, params.w_c);
    let c_t = tape.transpose(c_prime);
    let f_t = tape.transpose(f);

    let ws_s = tape.matmul(w_s, s)?;
    let wc_c = tape.matmul(w_c, c_t)?;
    let cross_s = tape.matmul(wc_c, f)?;
    let h_s_pre = tape.add(ws_s, cross_s)?;
    let h_s = tape.tanh(h_s_pre);

    let (direct_c, cross_src) = if swap_cross_weights {
        let ws_c = tape.matmul(w_s, c_t)?;
        let wc_s = tape.matmul(w_c, s)?;
        (ws_c, wc_s)
    } else {
        (wc_c, ws_s)
    };
    let cross_c = tape.matmul(cross_src, f_t)?;
    let h_c_pre = tape.add(direct_c, cross_c)?;
    let h_c = tape.tanh(h_c_pre);
    Ok((h_s, h_c))
}

/// Attention weights over the columns of a map: a = softmax(w H), 1 x T.
pub fn attention_weights(
    tape: &mut Tape,
    set: &ParamSet,
    w: ParamId,
    h: NodeId,
) -> Result<NodeId, TensorError> {
    let w = tape.param(set, w);
    let scores = tape.matmul(w, h)?;
    Ok(tape.softmax_rows(scores))
}

/// Attention-weighted sum of rows: a (1 x T) times rows (T x d).
pub fn attend(tape: &mut Tape, rows: NodeId, a: NodeId) -> Result<NodeId, TensorError> {
    tape.matmul(a, rows)
}

/// Class probabilities from the attended summaries:
/// softmax(W_f [s_hat, c_hat] + b_f), 1 x 2.
pub fn predict(
    tape: &mut Tape,
    set: &ParamSet,
    params: &CoAttentionParams,
    s_hat: NodeId,
    c_hat: NodeId,
) -> Result<NodeId, TensorError> {
    let sc = tape.concat(s_hat, c_hat, Axis::Cols)?;
    let w_f = tape.param(set, params.w_f);
    let b_f = tape.param(set, params.b_f);
    let w_f_t = tape.transpose(w_f);
    let logits = tape.matmul(sc, w_f_t)?;
    let shifted = tape.add(logits, b_f)?;
    Ok(tape.softmax_rows(shifted))
}

/// Binary cross-entropy of the predicted pair against class index `y`
/// (0 = fake, 1 = true), with probabilities clamped to [1e-12, 1 - 1e-12].
/// Returns a 1 x 1 node suitable for backward().
pub fn loss(tape: &mut Tape, y_hat: NodeId, y: usize) -> Result<NodeId, TensorError> {
    assert!(y < 2, "class index must be 0 or 1");
    let p0 = tape.slice_cols(y_hat, 0, 1)?;
    let p1 = tape.slice_cols(y_hat, 1, 1)?;
    let l0 = tape.log_clamped(p0);
    let l1 = tape.log_clamped(p1);
    let t1 = tape.scale(l1, -(y as f64));
    let t0 = tape.scale(l0, -(1.0 - y as f64));
    tape.add(t1, t0)
}
