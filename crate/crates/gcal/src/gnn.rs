//! Heterogeneous graph node embedding: attribute-plus-text node features,
//! per-kind Bi-LSTM neighbor aggregation, and types-mixture attention.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{encode_comment_attributes, encode_user_attributes, Dataset};
use crate::encoder::{encode_words, word_attention, EncoderError, WordEncoderParams};
use crate::graph::{sample_neighbors, HeteroGraph, NodeIndex, NodeKind};
use crate::init::glorot_uniform;
use crate::tensor::{Axis, DenseMatrix, NodeId, ParamId, ParamSet, Tape, TensorError};

/// Gate weights for one LSTM direction.
#[derive(Debug, Clone)]
pub struct LstmParams {
    pub w_input: ParamId,
    pub u_input: ParamId,
    pub b_input: ParamId,
    pub w_forget: ParamId,
    pub u_forget: ParamId,
    pub b_forget: ParamId,
    pub w_output: ParamId,
    pub u_output: ParamId,
    pub b_output: ParamId,
    pub w_cell: ParamId,
    pub u_cell: ParamId,
    pub b_cell: ParamId,
}

impl LstmParams {
    pub fn register(
        set: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        d_in: usize,
        d_hidden: usize,
    ) -> Self {
        let w = |name: &str, set: &mut ParamSet, rng: &mut ChaCha8Rng| {
            set.register(&format!("{prefix}.{name}"), glorot_uniform(rng, d_in, d_hidden))
        };
        let w_input = w("w_input", set, rng);
        let w_forget = w("w_forget", set, rng);
        let w_output = w("w_output", set, rng);
        let w_cell = w("w_cell", set, rng);
        let u = |name: &str, set: &mut ParamSet, rng: &mut ChaCha8Rng| {
            set.register(
                &format!("{prefix}.{name}"),
                glorot_uniform(rng, d_hidden, d_hidden),
            )
        };
        let u_input = u("u_input", set, rng);
        let u_forget = u("u_forget", set, rng);
        let u_output = u("u_output", set, rng);
        let u_cell = u("u_cell", set, rng);
        let b = |name: &str, set: &mut ParamSet| {
            set.register(&format!("{prefix}.{name}"), DenseMatrix::zeros(1, d_hidden))
        };
        let b_input = b("b_input", set);
        let b_forget = b("b_forget", set);
        let b_output = b("b_output", set);
        let b_cell = b("b_cell", set);
        Self {
            w_input,
            u_input,
            b_input,
            w_forget,
            u_forget,
            b_forget,
            w_output,
            u_output,
            b_output,
            w_cell,
            u_cell,
            b_cell,
        }
    }
}

/// One LSTM step; returns (hidden, cell).
pub fn lstm_step(
    tape: &mut Tape,
    set: &ParamSet,
    params: &LstmParams,
    x: NodeId,
    h: NodeId,
    c: NodeId,
) -> Result<(NodeId, NodeId), TensorError> {
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
    let i_pre = gate(tape, set, x, h, params.w_input, params.u_input, params.b_input)?;
    let i = tape.sigmoid(i_pre);
    let f_pre = gate(tape, set, x, h, params.w_forget, params.u_forget, params.b_forget)?;
    let f = tape.sigmoid(f_pre);
    let o_pre = gate(tape, set, x, h, params.w_output, params.u_output, params.b_output)?;
    let o = tape.sigmoid(o_pre);
    let g_pre = gate(tape, set, x, h, params.w_cell, params.u_cell, params.b_cell)?;
    let g = tape.tanh(g_pre);

    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c_new = tape.add(keep, write)?;
    let c_act = tape.tanh(c_new);
    let h_new = tape.mul(o, c_act)?;
    Ok((h_new, c_new))
}

/// Forward and backward LSTM stacks over neighbor sequences.
#[derive(Debug, Clone)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
    pub d_hidden: usize,
}

impl BiLstmParams {
    pub fn register(
        set: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        d_in: usize,
        d_out: usize,
    ) -> Self {
        assert!(d_out % 2 == 0, "aggregator width must be even");
        let d_hidden = d_out / 2;
        Self {
            forward: LstmParams::register(set, rng, &format!("{prefix}.fwd"), d_in, d_hidden),
            backward: LstmParams::register(set, rng, &format!("{prefix}.bwd"), d_in, d_hidden),
            d_hidden,
        }
    }
}

/// How the Bi-LSTM's per-step states collapse into one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorReadout {
    Mean,
    Last,
}

/// Everything needed to embed nodes of one graph.
pub struct GnnContext<'a> {
    pub graph: &'a HeteroGraph,
    pub dataset: &'a Dataset,
    pub seed: u64,
    pub comment_sample: usize,
    pub user_sample: usize,
    pub max_text_words: usize,
}

/// Per-tape cache of node feature vectors, keyed by node index.
pub type FeatureCache = BTreeMap<NodeIndex, NodeId>;

/// Trainable pieces of the node-embedding stage. Text vectors are projected
/// from the word encoder's width to the graph width so the elementwise mean
/// with attribute projections is defined.
#[derive(Debug, Clone)]
pub struct HetGnnParams {
    pub user_proj: ParamId,
    pub comment_proj: ParamId,
    pub text_proj: ParamId,
    pub null_text: ParamId,
    pub comment_agg: BiLstmParams,
    pub user_agg: BiLstmParams,
    pub mixture: ParamId,
    pub d_g: usize,
    pub readout: AggregatorReadout,
}

impl HetGnnParams {
    pub fn register(
        set: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        d_word: usize,
        d_g: usize,
        readout: AggregatorReadout,
    ) -> Self {
        use crate::data::{COMMENT_ATTR_DIM, USER_ATTR_DIM};
        let user_proj = set.register("gnn.user_proj", glorot_uniform(rng, USER_ATTR_DIM, d_g));
        let comment_proj = set.register(
            "gnn.comment_proj",
            glorot_uniform(rng, COMMENT_ATTR_DIM, d_g),
        );
        let text_proj = set.register("gnn.text_proj", glorot_uniform(rng, d_word, d_g));
        let null_text = set.register("gnn.null_text", glorot_uniform(rng, 1, d_word));
        let comment_agg = BiLstmParams::register(set, rng, "gnn.comment_agg", d_g, d_g);
        let user_agg = BiLstmParams::register(set, rng, "gnn.user_agg", d_g, d_g);
        let mixture = set.register("gnn.mixture", glorot_uniform(rng, 1, 2 * d_g));
        Self {
            user_proj,
            comment_proj,
            text_proj,
            null_text,
            comment_agg,
            user_agg,
            mixture,
            d_g,
            readout,
        }
    }
}

fn node_text(ctx: &GnnContext<'_>, node: NodeIndex) -> Vec<u32> {
    let info = ctx.graph.node(node);
    match info.kind {
        NodeKind::Comment => {
            let comment = &ctx.dataset.comments[&info.payload_id];
            comment
                .tokens
                .iter()
                .copied()
                .take(ctx.max_text_words)
                .collect()
        }
        NodeKind::User => {
            let mut tokens = Vec::new();
            for &c in ctx.graph.neighbors(node, NodeKind::Comment) {
                let comment_id = &ctx.graph.node(c).payload_id;
                tokens.extend_from_slice(&ctx.dataset.comments[comment_id].tokens);
                if tokens.len() >= ctx.max_text_words {
                    break;
                }
            }
            tokens.truncate(ctx.max_text_words);
            tokens
        }
    }
}

/// Base feature of one node: the elementwise mean of its projected attribute
/// one-hot and its projected text vector. Cached per tape.
pub fn node_features(
    tape: &mut Tape,
    set: &ParamSet,
    gnn: &HetGnnParams,
    word: &WordEncoderParams,
    ctx: &GnnContext<'_>,
    node: NodeIndex,
    cache: &mut FeatureCache,
) -> Result<NodeId, EncoderError> {
    if let Some(&cached) = cache.get(&node) {
        return Ok(cached);
    }
    let info = ctx.graph.node(node);
    let (attrs, proj_id) = match info.kind {
        NodeKind::User => (
            encode_user_attributes(&ctx.dataset.users[&info.payload_id].attributes),
            gnn.user_proj,
        ),
        NodeKind::Comment => (
            encode_comment_attributes(&ctx.dataset.comments[&info.payload_id].attributes),
            gnn.comment_proj,
        ),
    };
    let attr_input = tape.input(DenseMatrix::from_vec(1, attrs.len(), attrs));
    let proj = tape.param(set, proj_id);
    let a_j = tape.matmul(attr_input, proj)?;

    let tokens = node_text(ctx, node);
    let text_vec = if tokens.is_empty() {
        tape.param(set, gnn.null_text)
    } else {
        let h = encode_words(tape, set, word, &tokens)?;
        let (pooled, _alpha) = word_attention(tape, set, word, h)?;
        pooled
    };
    let text_proj = tape.param(set, gnn.text_proj);
    let w_j = tape.matmul(text_vec, text_proj)?;

    let sum = tape.add(a_j, w_j)?;
    let mean = tape.scale(sum, 0.5);
    cache.insert(node, mean);
    Ok(mean)
}

/// Bi-LSTM aggregation of an ordered neighbor feature sequence into one
/// vector. An empty sequence aggregates to the zero vector.
pub fn aggregate_same_type(
    tape: &mut Tape,
    set: &ParamSet,
    agg: &BiLstmParams,
    readout: AggregatorReadout,
    neighbor_feats: &[NodeId],
    d_g: usize,
) -> Result<NodeId, TensorError> {
    if neighbor_feats.is_empty() {
        return Ok(tape.input(DenseMatrix::zeros(1, d_g)));
    }
    let n = neighbor_feats.len();
    let run = |tape: &mut Tape, params: &LstmParams, reverse: bool| -> Result<Vec<NodeId>, TensorError> {
        let mut h = tape.input(DenseMatrix::zeros(1, agg.d_hidden));
        let mut c = tape.input(DenseMatrix::zeros(1, agg.d_hidden));
        let mut states = vec![h; n];
        let order: Vec<usize> = if reverse {
            (0..n).rev().collect()
        } else {
            (0..n).collect()
        };
        for t in order {
            let (h_new, c_new) = lstm_step(tape, set, params, neighbor_feats[t], h, c)?;
            h = h_new;
            c = c_new;
            states[t] = h;
        }
        Ok(states)
    };
    let fwd = run(tape, &agg.forward, false)?;
    let bwd = run(tape, &agg.backward, true)?;

    match readout {
        AggregatorReadout::Mean => {
            let mut rows = Vec::with_capacity(n);
            for t in 0..n {
                rows.push(tape.concat(fwd[t], bwd[t], Axis::Cols)?);
            }
            let mut stacked = rows[0];
            for &row in &rows[1..] {
                stacked = tape.concat(stacked, row, Axis::Rows)?;
            }
            Ok(tape.mean_rows(stacked))
        }
        AggregatorReadout::Last => tape.concat(fwd[n - 1], bwd[0], Axis::Cols),
    }
}

/// Types-mixture attention over the self feature and per-kind aggregates.
/// Returns (mixed vector 1 x d_g, weights 1 x 3 ordered self, comment, user).
pub fn types_mixture(
    tape: &mut Tape,
    set: &ParamSet,
    mixture: ParamId,
    slope: f64,
    self_feat: NodeId,
    comment_agg: NodeId,
    user_agg: NodeId,
) -> Result<(NodeId, NodeId), TensorError> {
    let u = tape.param(set, mixture);
    let u_t = tape.transpose(u);

    let mut scores = Vec::with_capacity(3);
    for &candidate in &[self_feat, comment_agg, user_agg] {
        let pair = tape.concat(candidate, self_feat, Axis::Cols)?;
        let raw = tape.matmul(pair, u_t)?;
        scores.push(tape.leaky_relu(raw, slope));
    }
    let mut score_row = scores[0];
    for &s in &scores[1..] {
        score_row = tape.concat(score_row, s, Axis::Cols)?;
    }
    let alpha = tape.softmax_rows(score_row);

    let mut stacked = self_feat;
    for &v in &[comment_agg, user_agg] {
        stacked = tape.concat(stacked, v, Axis::Rows)?;
    }
    let mixed = tape.matmul(alpha, stacked)?;
    Ok((mixed, alpha))
}

/// Full single-hop embedding of one node on an existing tape: base features
/// for the node and its sampled neighbors, per-kind aggregation, then
/// types-mixture attention.
pub fn embed_node(
    tape: &mut Tape,
    set: &ParamSet,
    gnn: &HetGnnParams,
    word: &WordEncoderParams,
    ctx: &GnnContext<'_>,
    slope: f64,
    node: NodeIndex,
    cache: &mut FeatureCache,
) -> Result<NodeId, EncoderError> {
    let self_feat = node_features(tape, set, gnn, word, ctx, node, cache)?;

    let comment_neighbors = sample_neighbors(
        ctx.graph,
        node,
        NodeKind::Comment,
        ctx.comment_sample,
        ctx.seed,
    );
    let mut comment_feats = Vec::with_capacity(comment_neighbors.len());
    for neighbor in comment_neighbors {
        comment_feats.push(node_features(tape, set, gnn, word, ctx, neighbor, cache)?);
    }
    let comment_agg = aggregate_same_type(
        tape,
        set,
        &gnn.comment_agg,
        gnn.readout,
        &comment_feats,
        gnn.d_g,
    )?;

    let user_neighbors =
        sample_neighbors(ctx.graph, node, NodeKind::User, ctx.user_sample, ctx.seed);
    let mut user_feats = Vec::with_capacity(user_neighbors.len());
    for neighbor in user_neighbors {
        user_feats.push(node_features(tape, set, gnn, word, ctx, neighbor, cache)?);
    }
    let user_agg =
        aggregate_same_type(tape, set, &gnn.user_agg, gnn.readout, &user_feats, gnn.d_g)?;

    let (mixed, _alpha) =
        types_mixture(tape, set, gnn.mixture, slope, self_feat, comment_agg, user_agg)?;
    Ok(mixed)
}

/// Final embeddings for every node of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbeddings {
    pub d_g: usize,
    vectors: BTreeMap<NodeIndex, Vec<f64>>,
}

impl NodeEmbeddings {
    pub fn get(&self, node: NodeIndex) -> Option<&[f64]> {
        self.vectors.get(&node).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeIndex, &[f64])> {
        self.vectors.iter().map(|(&n, v)| (n, v.as_slice()))
    }

    /// Repackages embeddings as named parameters ("user:<id>" or
    /// "comment:<id>") so they share the checkpoint container.
    pub fn to_param_set(&self, graph: &HeteroGraph) -> ParamSet {
        let mut set = ParamSet::new();
        for (&node, vector) in &self.vectors {
            let info = graph.node(node);
            let prefix = match info.kind {
                NodeKind::User => "user",
                NodeKind::Comment => "comment",
            };
            set.register(
                &format!("{prefix}:{}", info.payload_id),
                DenseMatrix::from_vec(1, vector.len(), vector.clone()),
            );
        }
        set
    }
}

/// Embeds every node of the graph, one independent tape per node. Nodes are
/// processed in parallel when the `parallel` feature is on; results are
/// identical either way.
pub fn embed_all_nodes(
    set: &ParamSet,
    gnn: &HetGnnParams,
    word: &WordEncoderParams,
    ctx: &GnnContext<'_>,
    slope: f64,
) -> Result<NodeEmbeddings, EncoderError> {
    let indices: Vec<NodeIndex> = ctx.graph.nodes().map(|(i, _)| i).collect();
    let results: Vec<Result<(NodeIndex, Vec<f64>), EncoderError>> =
        crate::parallel::map_collect(indices, |node| {
            let mut tape = Tape::new();
            let mut cache = FeatureCache::new();
            let out = embed_node(&mut tape, set, gnn, word, ctx, slope, node, &mut cache)?;
            Ok((node, tape.value(out).values().to_vec()))
        });
    let mut vectors = BTreeMap::new();
    for r in results {
        let (node, v) = r?;
        vectors.insert(node, v);
    }
    Ok(NodeEmbeddings {
        d_g: gnn.d_g,
        vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{
        Comment, CommentAttributes, Label, NewsItem, User, UserAttributes, Vocabulary,
    };
    use crate::encoder::WordEncoderParams;
    use crate::graph::build_graph;
    use rand::{Rng, SeedableRng};

    const D_WORD: usize = 8;
    const D_G: usize = 6;
    const SLOPE: f64 = 0.01;

    fn tiny_dataset(comment_count: usize) -> Dataset {
        let mut comments = BTreeMap::new();
        let mut users = BTreeMap::new();
        for i in 0..comment_count {
            let user_id = format!("u{i}");
            comments.insert(
                format!("c{i}"),
                Comment {
                    id: format!("c{i}"),
                    news_id: "n1".to_string(),
                    user_id: user_id.clone(),
                    tokens: vec![2 + (i as u32 % 3)],
                    raw_text: "word".to_string(),
                    timestamp: i as i64,
                    attributes: CommentAttributes {
                        like_count: i as u64,
                        retweet_count: 0,
                        reply_count: 2,
                    },
                },
            );
            users.insert(
                user_id.clone(),
                User {
                    id: user_id,
                    attributes: UserAttributes {
                        follower_count: 10 * i as u64,
                        friend_count: 5,
                        status_count: 100,
                        verified: i % 2 == 0,
                    },
                },
            );
        }
        let mut vocabulary = Vocabulary::with_specials();
        for word in ["alpha", "beta", "gamma"] {
            vocabulary.insert(word);
        }
        Dataset {
            news: vec![NewsItem {
                id: "n1".to_string(),
                sentences: vec![vec![2, 3]],
                raw_sentences: vec!["alpha beta.".to_string()],
                label: Label::Fake,
            }],
            comments,
            users,
            vocabulary,
        }
    }

    fn tiny_model(seed: u64) -> (ParamSet, WordEncoderParams, HetGnnParams) {
        let mut set = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let word = WordEncoderParams::register(&mut set, &mut rng, 5, 10, D_WORD, 1, 2, 0.5);
        let gnn = HetGnnParams::register(&mut set, &mut rng, D_WORD, D_G, AggregatorReadout::Mean);
        (set, word, gnn)
    }

    fn context<'a>(graph: &'a HeteroGraph, dataset: &'a Dataset) -> GnnContext<'a> {
        GnnContext {
            graph,
            dataset,
            seed: 7,
            comment_sample: 10,
            user_sample: 1,
            max_text_words: 10,
        }
    }

    #[test]
    fn node_features_are_mean_of_projected_attrs_and_text() {
        let dataset = tiny_dataset(1);
        let graph = build_graph(&dataset);
        let (set, word, gnn) = tiny_model(0);
        let ctx = context(&graph, &dataset);
        let node = graph.comment_node("c0").unwrap();

        let mut tape = Tape::new();
        let mut cache = FeatureCache::new();
        let feat = node_features(&mut tape, &set, &gnn, &word, &ctx, node, &mut cache).unwrap();
        let got = tape.value(feat).clone();

        let attrs = encode_comment_attributes(&dataset.comments["c0"].attributes);
        let a_j = DenseMatrix::from_vec(1, attrs.len(), attrs)
            .matmul(set.value(gnn.comment_proj))
            .unwrap();
        let mut probe = Tape::new();
        let h = crate::encoder::encode_words(&mut probe, &set, &word, &[2]).unwrap();
        let (pooled, _) = crate::encoder::word_attention(&mut probe, &set, &word, h).unwrap();
        let w_j = probe
            .value(pooled)
            .matmul(set.value(gnn.text_proj))
            .unwrap();
        for c in 0..D_G {
            let want = (a_j.get(0, c) + w_j.get(0, c)) / 2.0;
            assert!((got.get(0, c) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn node_features_cache_returns_same_node() {
        let dataset = tiny_dataset(1);
        let graph = build_graph(&dataset);
        let (set, word, gnn) = tiny_model(1);
        let ctx = context(&graph, &dataset);
        let node = graph.comment_node("c0").unwrap();
        let mut tape = Tape::new();
        let mut cache = FeatureCache::new();
        let a = node_features(&mut tape, &set, &gnn, &word, &ctx, node, &mut cache).unwrap();
        let len_after_first = tape.len();
        let b = node_features(&mut tape, &set, &gnn, &word, &ctx, node, &mut cache).unwrap();
        assert_eq!(a, b);
        assert_eq!(tape.len(), len_after_first);
    }

    #[test]
    fn empty_neighbor_list_aggregates_to_zero() {
        let (set, _word, gnn) = tiny_model(2);
        let mut tape = Tape::new();
        let agg = aggregate_same_type(
            &mut tape,
            &set,
            &gnn.comment_agg,
            AggregatorReadout::Mean,
            &[],
            D_G,
        )
        .unwrap();
        assert_eq!(tape.value(agg).values(), &[0.0; 6]);
    }

    #[test]
    fn single_neighbor_matches_scalar_lstm() {
        let (set, _word, gnn) = tiny_model(3);
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let values: Vec<f64> = (0..D_G).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let input = DenseMatrix::from_vec(1, D_G, values);

        let mut tape = Tape::new();
        let x = tape.input(input.clone());
        let agg = aggregate_same_type(
            &mut tape,
            &set,
            &gnn.comment_agg,
            AggregatorReadout::Mean,
            &[x],
            D_G,
        )
        .unwrap();

        let fwd = crate::selftest::scalar_lstm_sequence(
            &set,
            &gnn.comment_agg.forward,
            &input,
            gnn.comment_agg.d_hidden,
            false,
        );
        let bwd = crate::selftest::scalar_lstm_sequence(
            &set,
            &gnn.comment_agg.backward,
            &input,
            gnn.comment_agg.d_hidden,
            true,
        );
        let got = tape.value(agg);
        for c in 0..gnn.comment_agg.d_hidden {
            assert!((got.get(0, c) - fwd[0][c]).abs() < 1e-12);
            assert!((got.get(0, gnn.comment_agg.d_hidden + c) - bwd[0][c]).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_pair_is_order_insensitive_under_mean_readout() {
        for seed in 0..5 {
            let (set, _word, gnn) = tiny_model(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let values: Vec<f64> = (0..D_G).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut tape = Tape::new();
            let a = tape.input(DenseMatrix::from_vec(1, D_G, values.clone()));
            let b = tape.input(DenseMatrix::from_vec(1, D_G, values));
            let out_ab = aggregate_same_type(
                &mut tape,
                &set,
                &gnn.comment_agg,
                AggregatorReadout::Mean,
                &[a, b],
                D_G,
            )
            .unwrap();
            let out_ba = aggregate_same_type(
                &mut tape,
                &set,
                &gnn.comment_agg,
                AggregatorReadout::Mean,
                &[b, a],
                D_G,
            )
            .unwrap();
            assert_eq!(tape.value(out_ab), tape.value(out_ba));
        }
    }

    #[test]
    fn mixture_of_equal_vectors_is_uniform() {
        let (set, _word, gnn) = tiny_model(4);
        let mut tape = Tape::new();
        let v = tape.input(DenseMatrix::from_vec(1, D_G, vec![0.4; D_G]));
        let (mixed, alpha) =
            types_mixture(&mut tape, &set, gnn.mixture, SLOPE, v, v, v).unwrap();
        for a in tape.value(alpha).values() {
            assert!((a - 1.0 / 3.0).abs() < 1e-12);
        }
        for x in tape.value(mixed).values() {
            assert!((x - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_mixture_vector_gives_uniform_weights() {
        let (mut set, _word, gnn) = tiny_model(5);
        *set.value_mut(gnn.mixture) = DenseMatrix::zeros(1, 2 * D_G);
        let mut tape = Tape::new();
        let a = tape.input(DenseMatrix::from_vec(1, D_G, vec![1.0; D_G]));
        let b = tape.input(DenseMatrix::from_vec(1, D_G, vec![-1.0; D_G]));
        let c = tape.input(DenseMatrix::from_vec(1, D_G, vec![0.5; D_G]));
        let (_, alpha) = types_mixture(&mut tape, &set, gnn.mixture, SLOPE, a, b, c).unwrap();
        for w in tape.value(alpha).values() {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_matches_bruteforce_scores() {
        let (set, _word, gnn) = tiny_model(6);
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let mut rand_row =
            || DenseMatrix::from_vec(1, D_G, (0..D_G).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let self_v = rand_row();
        let com_v = rand_row();
        let usr_v = rand_row();

        let mut tape = Tape::new();
        let s = tape.input(self_v.clone());
        let cm = tape.input(com_v.clone());
        let us = tape.input(usr_v.clone());
        let (mixed, alpha) = types_mixture(&mut tape, &set, gnn.mixture, SLOPE, s, cm, us).unwrap();

        let u = set.value(gnn.mixture);
        let score = |v: &DenseMatrix| {
            let mut raw = 0.0;
            for c in 0..D_G {
                raw += u.get(0, c) * v.get(0, c);
                raw += u.get(0, D_G + c) * self_v.get(0, c);
            }
            if raw >= 0.0 {
                raw
            } else {
                SLOPE * raw
            }
        };
        let scores = [score(&self_v), score(&com_v), score(&usr_v)];
        let expected_alpha = crate::selftest::scalar_softmax(&scores);
        for (got, want) in tape.value(alpha).values().iter().zip(&expected_alpha) {
            assert!((got - want).abs() < 1e-12);
        }
        for c in 0..D_G {
            let want = expected_alpha[0] * self_v.get(0, c)
                + expected_alpha[1] * com_v.get(0, c)
                + expected_alpha[2] * usr_v.get(0, c);
            assert!((tape.value(mixed).get(0, c) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_all_nodes_covers_every_node_and_is_deterministic() {
        let dataset = tiny_dataset(4);
        let graph = build_graph(&dataset);
        let (set, word, gnn) = tiny_model(7);
        let ctx = context(&graph, &dataset);
        let e1 = embed_all_nodes(&set, &gnn, &word, &ctx, SLOPE).unwrap();
        let e2 = embed_all_nodes(&set, &gnn, &word, &ctx, SLOPE).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(e1.len(), graph.node_count());
        for (_, v) in e1.iter() {
            assert_eq!(v.len(), D_G);
            assert!(v.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn isolated_comment_mixes_only_self_against_zeros() {
        let mut dataset = tiny_dataset(1);
        let graph = build_graph(&dataset);
        dataset.comments.get_mut("c0").unwrap();
        let (set, word, gnn) = tiny_model(8);
        let ctx = context(&graph, &dataset);
        let node = graph.comment_node("c0").unwrap();

        let mut tape = Tape::new();
        let mut cache = FeatureCache::new();
        let embedded =
            embed_node(&mut tape, &set, &gnn, &word, &ctx, SLOPE, node, &mut cache).unwrap();

        let mut tape2 = Tape::new();
        let mut cache2 = FeatureCache::new();
        let self_feat =
            node_features(&mut tape2, &set, &gnn, &word, &ctx, node, &mut cache2).unwrap();
        let author = graph.user_node("u0").unwrap();
        let author_feat =
            node_features(&mut tape2, &set, &gnn, &word, &ctx, author, &mut cache2).unwrap();
        let empty_comment_agg = aggregate_same_type(
            &mut tape2,
            &set,
            &gnn.comment_agg,
            gnn.readout,
            &[],
            D_G,
        )
        .unwrap();
        let user_agg = aggregate_same_type(
            &mut tape2,
            &set,
            &gnn.user_agg,
            gnn.readout,
            &[author_feat],
            D_G,
        )
        .unwrap();
        let (expected, _) = types_mixture(
            &mut tape2,
            &set,
            gnn.mixture,
            SLOPE,
            self_feat,
            empty_comment_agg,
            user_agg,
        )
        .unwrap();
        assert_eq!(tape.value(embedded), tape2.value(expected));
    }

    #[test]
    fn perturbing_non_neighbor_leaves_embedding_unchanged() {
        let mut dataset = tiny_dataset(2);
        dataset.news.push(NewsItem {
            id: "n2".to_string(),
            sentences: vec![vec![2]],
            raw_sentences: vec!["alpha.".to_string()],
            label: Label::True,
        });
        dataset.comments.insert(
            "far".to_string(),
            Comment {
                id: "far".to_string(),
                news_id: "n2".to_string(),
                user_id: "u0".to_string(),
                tokens: vec![4],
                raw_text: "gamma".to_string(),
                timestamp: 50,
                attributes: CommentAttributes {
                    like_count: 1,
                    retweet_count: 1,
                    reply_count: 1,
                },
            },
        );
        // c1 on news n1: neighbors are c0 (same news) and its author u1.
        // The "far" comment sits on n2 by a different author entirely.
        let graph = build_graph(&dataset);
        let (set, word, gnn) = tiny_model(9);
        let node = graph.comment_node("c1").unwrap();

        let embed = |ds: &Dataset| {
            let ctx = context(&graph, ds);
            let mut tape = Tape::new();
            let mut cache = FeatureCache::new();
            let out =
                embed_node(&mut tape, &set, &gnn, &word, &ctx, SLOPE, node, &mut cache).unwrap();
            tape.value(out).clone()
        };
        let before = embed(&dataset);

        dataset.comments.get_mut("far").unwrap().attributes.like_count = 99_999;
        let after = embed(&dataset);
        assert_eq!(before, after);
    }
}
