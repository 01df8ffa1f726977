//! Hierarchical news-content encoding: contextual word vectors from a small
//! self-attention encoder, attention pooling of words into sentence vectors,
//! and a bidirectional GRU over the sentence sequence.

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::init::{glorot_uniform, normal_matrix};
use crate::tensor::{Axis, DenseMatrix, NodeId, ParamId, ParamSet, Tape, TensorError};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot encode an empty sentence")]
    EmptySentence,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One self-attention layer: multi-head attention and a two-layer tanh
/// feed-forward block, both wrapped in residual connections.
#[derive(Debug, Clone)]
pub struct AttentionLayerParams {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub output: ParamId,
    pub ffn_in: ParamId,
    pub ffn_out: ParamId,
}

/// Word-level encoder: token and position embeddings, `layers` stacked
/// self-attention layers, and the word-attention context vector used to pool
/// words into a single vector per sentence.
#[derive(Debug, Clone)]
pub struct WordEncoderParams {
    pub token_embedding: ParamId,
    pub position_embedding: ParamId,
    pub layers: Vec<AttentionLayerParams>,
    pub word_context: ParamId,
    pub d_word: usize,
    pub heads: usize,
}

impl WordEncoderParams {
    pub fn register(
        set: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        vocab_size: usize,
        max_sentence_words: usize,
        d_word: usize,
        layers: usize,
        heads: usize,
        embedding_std: f64,
    ) -> Self {
        assert!(layers >= 1, "need at least one attention layer");
        assert!(
            heads >= 1 && d_word % heads == 0,
            "d_word must divide evenly into heads"
        );
        let token_embedding = set.register(
            "word_enc.token_embedding",
            normal_matrix(rng, vocab_size, d_word, embedding_std),
        );
        let position_embedding = set.register(
            "word_enc.position_embedding",
            normal_matrix(rng, max_sentence_words, d_word, embedding_std),
        );
        let layer_params = (0..layers)
            .map(|l| AttentionLayerParams {
                query: set.register(
                    &format!("word_enc.layer{l}.query"),
                    glorot_uniform(rng, d_word, d_word),
                ),
                key: set.register(
                    &format!("word_enc.layer{l}.key"),
                    glorot_uniform(rng, d_word, d_word),
                ),
                value: set.register(
                    &format!("word_enc.layer{l}.value"),
                    glorot_uniform(rng, d_word, d_word),
                ),
                output: set.register(
                    &format!("word_enc.layer{l}.output"),
                    glorot_uniform(rng, d_word, d_word),
                ),
                ffn_in: set.register(
                    &format!("word_enc.layer{l}.ffn_in"),
                    glorot_uniform(rng, d_word, d_word),
                ),
                ffn_out: set.register(
                    &format!("word_enc.layer{l}.ffn_out"),
                    glorot_uniform(rng, d_word, d_word),
                ),
            })
            .collect();
        let word_context = set.register("word_enc.word_context", glorot_uniform(rng, 1, d_word));
        Self {
            token_embedding,
            position_embedding,
            layers: layer_params,
            word_context,
            d_word,
            heads,
        }
    }
}

/// Contextual word vectors for one sentence: token-plus-position embeddings
/// refined by the self-attention stack. Output is M x d_word.
pub fn encode_words(
    tape: &mut Tape,
    set: &ParamSet,
    params: &WordEncoderParams,
    tokens: &[u32],
) -> Result<NodeId, EncoderError> {
    if tokens.is_empty() {
        return Err(EncoderError::EmptySentence);
    }
    let token_rows: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
    let position_rows: Vec<usize> = (0..tokens.len()).collect();

    let token_table = tape.param(set, params.token_embedding);
    let position_table = tape.param(set, params.position_embedding);
    let tok = tape.gather_rows(token_table, &token_rows)?;
    let pos = tape.gather_rows(position_table, &position_rows)?;
    let mut x = tape.add(tok, pos)?;

    let head_dim = params.d_word / params.heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    for layer in &params.layers {
        let wq = tape.param(set, layer.query);
        let wk = tape.param(set, layer.key);
        let wv = tape.param(set, layer.value);
        let wo = tape.param(set, layer.output);

        let q = tape.matmul(x, wq)?;
        let k = tape.matmul(x, wk)?;
        let v = tape.matmul(x, wv)?;

        let mut heads_out: Option<NodeId> = None;
        for h in 0..params.heads {
            let qh = tape.slice_cols(q, h * head_dim, head_dim)?;
            let kh = tape.slice_cols(k, h * head_dim, head_dim)?;
            let vh = tape.slice_cols(v, h * head_dim, head_dim)?;
            let kht = tape.transpose(kh);
            let scores = tape.matmul(qh, kht)?;
            let scaled = tape.scale(scores, scale);
            let attn = tape.softmax_rows(scaled);
            let head = tape.matmul(attn, vh)?;
            heads_out = Some(match heads_out {
                None => head,
                Some(acc) => tape.concat(acc, head, Axis::Cols)?,
            });
        }
        let mixed = tape.matmul(heads_out.expect("at least one head"), wo)?;
        x = tape.add(x, mixed)?;

        let f1 = tape.param(set, layer.ffn_in);
        let f2 = tape.param(set, layer.ffn_out);
        let hidden = tape.matmul(x, f1)?;
        let activated = tape.tanh(hidden);
        let ffn = tape.matmul(activated, f2)?;
        x = tape.add(x, ffn)?;
    }
    Ok(x)
}

/// Attention pooling of word vectors into one sentence vector.
///
/// Scores come from the tanh-transformed words against the context vector;
/// the weighted sum runs over the untransformed words. Returns
/// (vector: 1 x d_word, weights: 1 x M).
pub fn word_attention(
    tape: &mut Tape,
    set: &ParamSet,
    params: &WordEncoderParams,
    h: NodeId,
) -> Result<(NodeId, NodeId), TensorError> {
    let context = tape.param(set, params.word_context);
    let transformed = tape.tanh(h);
    let context_t = tape.transpose(context);
    let scores = tape.matmul(transformed, context_t)?;
    let scores_row = tape.transpose(scores);
    let alpha = tape.softmax_rows(scores_row);
    let pooled = tape.matmul(alpha, h)?;
    Ok((pooled, alpha))
}

/// Gate weights for one GRU direction: input, recurrent, and bias terms for
/// the update gate, reset gate, and candidate state.
#[derive(Debug, Clone)]
pub struct GruParams {
    pub w_update: ParamId,
    pub u_update: ParamId,
    pub b_update: ParamId,
    pub w_reset: ParamId,
    pub u_reset: ParamId,
    pub b_reset: ParamId,
    pub w_cand: ParamId,
    pub u_cand: ParamId,
    pub b_cand: ParamId,
}

impl GruParams {
    pub fn register(
        set: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        d_in: usize,
        d_hidden: usize,
    ) -> Self {
        let matrix = |name: &str, rows: usize, cols: usize, set: &mut ParamSet,
                          rng: &mut ChaCha8Rng| {
            set.register(&format!("{prefix}.{name}"), glorot_uniform(rng, rows, cols))
        };
        let w_update = matrix("w_update", d_in, d_hidden, set, rng);
        let u_update = matrix("u_update", d_hidden, d_hidden, set, rng);
        let b_update = set.register(
            &format!("{prefix}.b_update"),
            DenseMatrix::zeros(1, d_hidden),
        );
        let w_reset = matrix("w_reset", d_in, d_hidden, set, rng);
        let u_reset = matrix("u_reset", d_hidden, d_hidden, set, rng);
        let b_reset = set.register(
            &format!("{prefix}.b_reset"),
            DenseMatrix::zeros(1, d_hidden),
        );
        let w_cand = matrix("w_cand", d_in, d_hidden, set, rng);
        let u_cand = matrix("u_cand", d_hidden, d_hidden, set, rng);
        let b_cand = set.register(&format!("{prefix}.b_cand"), DenseMatrix::zeros(1, d_hidden));
        Self {
            w_update,
            u_update,
            b_update,
            w_reset,
            u_reset,
            b_reset,
            w_cand,
            u_cand,
            b_cand,
        }
    }
}

/// One GRU step: h_new = (1 - z) * h + z * cand.
pub fn gru_step(
    tape: &mut Tape,
    set: &ParamSet,
    params: &GruParams,
    x: NodeId,
    h: NodeId,
) -> Result<NodeId, TensorError> {
    fn gate(
        tape: &mut Tape,
        set: &ParamSet,
        x: NodeId,
        h: NodeId,
        w: ParamId,
        u: ParamId,
        b: ParamId,
    ) -> Result<NodeId, TensorError> {
        let w = tape.param(set, w);
        let u = tape.param(set, u);
        let b = tape.param(set, b);
        let wx = tape.matmul(x, w)?;
        let uh = tape.matmul(h, u)?;
        let sum = tape.add(wx, uh)?;
        tape.add(sum, b)
    }
    let z_pre = gate(tape, set, x, h, params.w_update, params.u_update, params.b_update)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, set, x, h, params.w_reset, params.u_reset, params.b_reset)?;
    let r = tape.sigmoid(r_pre);

    let w_cand = tape.param(set, params.w_cand);
    let u_cand = tape.param(set, params.u_cand);
    let b_cand = tape.param(set, params.b_cand);
    let wx = tape.matmul(x, w_cand)?;
    let rh = tape.mul(r, h)?;
    let uh = tape.matmul(rh, u_cand)?;
    let pre = tape.add(wx, uh)?;
    let pre_b = tape.add(pre, b_cand)?;
    let cand = tape.tanh(pre_b);

    let neg_z = tape.scale(z, -1.0);
    let one_minus_z = tape.add_scalar(neg_z, 1.0);
    let keep = tape.mul(one_minus_z, h)?;
    let new = tape.mul(z, cand)?;
    tape.add(keep, new)
}

/// Forward and backward GRU stacks of identical shape.
#[derive(Debug, Clone)]
pub struct SentenceEncoderParams {
    pub forward: GruParams,
    pub backward: GruParams,
    pub d_hidden: usize,
}

impl SentenceEncoderParams {
    pub fn register(
        set: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        d_in: usize,
        d_out: usize,
    ) -> Self {
        assert!(d_out % 2 == 0, "sentence width must be even");
        let d_hidden = d_out / 2;
        Self {
            forward: GruParams::register(set, rng, "sent_enc.fwd", d_in, d_hidden),
            backward: GruParams::register(set, rng, "sent_enc.bwd", d_in, d_hidden),
            d_hidden,
        }
    }
}

fn run_gru_direction(
    tape: &mut Tape,
    set: &ParamSet,
    params: &GruParams,
    inputs: &[NodeId],
    d_hidden: usize,
    reverse: bool,
) -> Result<Vec<NodeId>, TensorError> {
    let mut h = tape.input(DenseMatrix::zeros(1, d_hidden));
    let mut states = vec![h; inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for t in order {
        h = gru_step(tape, set, params, inputs[t], h)?;
        states[t] = h;
    }
    Ok(states)
}

/// Bidirectional GRU over sentence vectors. Input is N x d_word, output is
/// N x (2 * d_hidden), row i concatenating forward state i and backward
/// state i.
pub fn encode_sentences(
    tape: &mut Tape,
    set: &ParamSet,
    params: &SentenceEncoderParams,
    v_seq: NodeId,
) -> Result<NodeId, TensorError> {
    let n = tape.value(v_seq).rows();
    assert!(n >= 1, "need at least one sentence");
    let inputs: Vec<NodeId> = (0..n)
        .map(|i| tape.gather_rows(v_seq, &[i]))
        .collect::<Result<_, _>>()?;
    let fwd = run_gru_direction(tape, set, &params.forward, &inputs, params.d_hidden, false)?;
    let bwd = run_gru_direction(tape, set, &params.backward, &inputs, params.d_hidden, true)?;

    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        rows.push(tape.concat(fwd[i], bwd[i], Axis::Cols)?);
    }
    let mut out = rows[0];
    for &row in &rows[1..] {
        out = tape.concat(out, row, Axis::Rows)?;
    }
    Ok(out)
}
