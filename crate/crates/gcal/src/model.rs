//! Whole-model assembly: configuration, parameter registration, and the
//! per-news forward pass from dataset records to loss and trace.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coattn::{self, CoAttentionParams, ForwardTrace};
use crate::data::{Dataset, NewsItem};
use crate::encoder::{
    encode_sentences, encode_words, word_attention, EncoderError, SentenceEncoderParams,
    WordEncoderParams,
};
use crate::gnn::{embed_node, AggregatorReadout, FeatureCache, GnnContext, HetGnnParams};
use crate::graph::HeteroGraph;
use crate::tensor::{Axis, NodeId, ParamSet, Tape};

/// Which input branch feeds the comment fusion, for ablation experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// Both comment and user embeddings flow into the fusion.
    Full,
    /// Comment embeddings zeroed at the fusion input.
    NoComments,
    /// User embeddings zeroed at the fusion input.
    NoUsers,
}

impl Default for AblationMode {
    fn default() -> Self {
        AblationMode::Full
    }
}

/// Model shape and behavior switches. All widths in scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Sentence-representation width; the Bi-GRU runs d/2 per direction.
    pub d: usize,
    /// Word-vector width inside the self-attention encoder.
    pub d_word: usize,
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    /// Graph embedding width for user and comment nodes.
    pub d_g: usize,
    /// Hidden width of the co-attention maps.
    pub k_a: usize,
    pub leaky_slope: f64,
    /// Neighbors sampled per kind when embedding a node.
    pub comment_sample: usize,
    pub user_sample: usize,
    pub max_news_sentences: usize,
    pub max_sentence_words: usize,
    pub max_comment_words: usize,
    pub readout: AggregatorReadout,
    /// Alternate weight pairing in the comment-side attention map.
    pub swap_cross_weights: bool,
    pub ablation: AblationMode,
    /// Standard deviation of the token and position embedding init.
    pub embedding_init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 200,
            d_word: 64,
            encoder_layers: 2,
            encoder_heads: 4,
            d_g: 200,
            k_a: 80,
            leaky_slope: 0.01,
            comment_sample: 10,
            user_sample: 1,
            max_news_sentences: 50,
            max_sentence_words: 50,
            max_comment_words: 20,
            readout: AggregatorReadout::Mean,
            swap_cross_weights: false,
            ablation: AblationMode::Full,
            embedding_init_std: 0.02,
        }
    }
}

impl ModelConfig {
    /// Panics when widths cannot close (odd halves, zero dims, head split).
    pub fn validate(&self) {
        assert!(self.d >= 2 && self.d % 2 == 0, "d must be even and positive");
        assert!(self.d_g >= 2 && self.d_g % 2 == 0, "d_g must be even and positive");
        assert!(self.d_word >= 1 && self.k_a >= 1);
        assert!(self.encoder_layers >= 1 && self.encoder_heads >= 1);
        assert!(
            self.d_word % self.encoder_heads == 0,
            "d_word must split evenly across heads"
        );
        assert!(self.max_news_sentences >= 1);
        assert!(self.max_sentence_words >= 1);
        assert!(self.max_comment_words >= 1);
        assert!(self.leaky_slope > 0.0 && self.leaky_slope < 1.0);
        assert!(self.embedding_init_std > 0.0, "embedding init std must be positive");
    }
}

/// Every trainable weight in the pipeline, grouped by stage. The ParamSet
/// registered alongside holds the actual values in a fixed order.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub word: WordEncoderParams,
    pub sentence: SentenceEncoderParams,
    pub gnn: HetGnnParams,
    pub coattn: CoAttentionParams,
}

impl ModelParams {
    /// Registers all parameters in a deterministic order seeded by `seed`.
    pub fn init(config: &ModelConfig, vocab_size: usize, seed: u64) -> (ParamSet, Self) {
        config.validate();
        let mut set = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max_words = config.max_sentence_words.max(config.max_comment_words);
        let word = WordEncoderParams::register(
            &mut set,
            &mut rng,
            vocab_size,
            max_words,
            config.d_word,
            config.encoder_layers,
            config.encoder_heads,
            config.embedding_init_std,
        );
        let sentence = SentenceEncoderParams::register(&mut set, &mut rng, config.d_word, config.d);
        let gnn = HetGnnParams::register(
            &mut set,
            &mut rng,
            config.d_word,
            config.d_g,
            config.readout,
        );
        let coattn =
            CoAttentionParams::register(&mut set, &mut rng, config.d_g, config.d, config.k_a);
        (
            set,
            ModelParams {
                word,
                sentence,
                gnn,
                coattn,
            },
        )
    }
}

/// Tape handles for one news item's forward pass.
pub struct NewsForward {
    pub loss: NodeId,
    pub prediction: NodeId,
    pub sentence_attention: NodeId,
    pub comment_attention: NodeId,
    pub attended_sentences: NodeId,
    pub attended_comments: NodeId,
    pub conformity: NodeId,
    pub sentence_map: NodeId,
    pub comment_map: NodeId,
    pub comment_ids: Vec<String>,
}

/// Runs the full pipeline for one news item on `tape`: sentence encoding,
/// per-comment graph embeddings, co-attention fusion, prediction, and loss.
pub fn forward_news(
    tape: &mut Tape,
    set: &ParamSet,
    params: &ModelParams,
    config: &ModelConfig,
    dataset: &Dataset,
    graph: &HeteroGraph,
    seed: u64,
    news: &NewsItem,
) -> Result<NewsForward, EncoderError> {
    let sentences: Vec<&Vec<u32>> = news
        .sentences
        .iter()
        .take(config.max_news_sentences)
        .collect();
    assert!(!sentences.is_empty(), "news item without sentences");

    let mut pooled_rows = Vec::with_capacity(sentences.len());
    for tokens in &sentences {
        let words = encode_words(tape, set, &params.word, tokens)?;
        let (pooled, _alpha) = word_attention(tape, set, &params.word, words)?;
        pooled_rows.push(pooled);
    }
    let mut stacked = pooled_rows[0];
    for &row in &pooled_rows[1..] {
        stacked = tape.concat(stacked, row, Axis::Rows)?;
    }
    let sentence_rows = encode_sentences(tape, set, &params.sentence, stacked)?;
    let s = tape.transpose(sentence_rows);

    let comments = dataset.comments_for_news(&news.id);
    let ctx = GnnContext {
        graph,
        dataset,
        seed,
        comment_sample: config.comment_sample,
        user_sample: config.user_sample,
        max_text_words: config.max_comment_words,
    };
    let mut cache = FeatureCache::new();
    let mut comment_ids = Vec::with_capacity(comments.len());
    let mut user_rows = Vec::with_capacity(comments.len());
    let mut comment_rows = Vec::with_capacity(comments.len());
    for comment in &comments {
        let comment_node = graph
            .comment_node(&comment.id)
            .expect("graph missing a comment node for this dataset");
        let user_node = graph
            .user_node(&comment.user_id)
            .expect("graph missing a user node for this dataset");
        let c_vec = embed_node(
            tape,
            set,
            &params.gnn,
            &params.word,
            &ctx,
            config.leaky_slope,
            comment_node,
            &mut cache,
        )?;
        let u_vec = embed_node(
            tape,
            set,
            &params.gnn,
            &params.word,
            &ctx,
            config.leaky_slope,
            user_node,
            &mut cache,
        )?;
        comment_rows.push(c_vec);
        user_rows.push(u_vec);
        comment_ids.push(comment.id.clone());
    }

    let c_prime = if comments.is_empty() {
        tape.param(set, params.coattn.null_comment)
    } else {
        let mut users = user_rows[0];
        let mut comments_stacked = comment_rows[0];
        for &row in &user_rows[1..] {
            users = tape.concat(users, row, Axis::Rows)?;
        }
        for &row in &comment_rows[1..] {
            comments_stacked = tape.concat(comments_stacked, row, Axis::Rows)?;
        }
        let users = match config.ablation {
            AblationMode::NoUsers => tape.scale(users, 0.0),
            _ => users,
        };
        let comments_stacked = match config.ablation {
            AblationMode::NoComments => tape.scale(comments_stacked, 0.0),
            _ => comments_stacked,
        };
        coattn::user_comment_concat(tape, set, &params.coattn, users, comments_stacked)?
    };

    let f = coattn::conformity(tape, set, &params.coattn, c_prime, s)?;
    let (h_s, h_c) = coattn::attention_maps(
        tape,
        set,
        &params.coattn,
        s,
        c_prime,
        f,
        config.swap_cross_weights,
    )?;
    let a_s = coattn::attention_weights(tape, set, params.coattn.w_hs, h_s)?;
    let a_c = coattn::attention_weights(tape, set, params.coattn.w_hc, h_c)?;
    let s_hat = coattn::attend(tape, sentence_rows, a_s)?;
    let c_hat = coattn::attend(tape, c_prime, a_c)?;
    let y_hat = coattn::predict(tape, set, &params.coattn, s_hat, c_hat)?;
    let loss = coattn::loss(tape, y_hat, news.label.index())?;

    Ok(NewsForward {
        loss,
        prediction: y_hat,
        sentence_attention: a_s,
        comment_attention: a_c,
        attended_sentences: s_hat,
        attended_comments: c_hat,
        conformity: f,
        sentence_map: h_s,
        comment_map: h_c,
        comment_ids,
    })
}

/// Reads a finished forward pass off the tape into plain numbers. For a news
/// item without comments the comment attention and ids are both empty.
pub fn trace_from_forward(tape: &Tape, news: &NewsItem, fwd: &NewsForward) -> ForwardTrace {
    let y_hat = tape.value(fwd.prediction);
    let comment_attention = if fwd.comment_ids.is_empty() {
        Vec::new()
    } else {
        tape.value(fwd.comment_attention).values().to_vec()
    };
    ForwardTrace {
        news_id: news.id.clone(),
        prediction: [y_hat.get(0, 0), y_hat.get(0, 1)],
        sentence_attention: tape.value(fwd.sentence_attention).values().to_vec(),
        comment_attention,
        comment_ids: fwd.comment_ids.clone(),
        attended_sentences: tape.value(fwd.attended_sentences).values().to_vec(),
        attended_comments: tape.value(fwd.attended_comments).values().to_vec(),
        conformity: tape.value(fwd.conformity).clone(),
        sentence_map: tape.value(fwd.sentence_map).clone(),
        comment_map: tape.value(fwd.comment_map).clone(),
    }
}
