//! Independent scalar re-implementations of every numeric building block,
//! plus the suites that compare them against the tape-based paths. The
//! oracles use plain f64 loops and never touch the tape, so agreement is
//! meaningful evidence of correctness.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coattn::{
    attend, attention_maps, attention_weights, conformity, loss, predict, user_comment_concat,
    CoAttentionParams,
};
use crate::data::{
    Comment, CommentAttributes, Dataset, Label, NewsItem, User, UserAttributes, Vocabulary,
};
use crate::encoder::{
    encode_sentences, encode_words, word_attention, GruParams, SentenceEncoderParams,
    WordEncoderParams,
};
use crate::gnn::{aggregate_same_type, types_mixture, AggregatorReadout, BiLstmParams};
use crate::graph::build_graph;
use crate::init::glorot_uniform;
use crate::model::{forward_news, ModelConfig, ModelParams};
use crate::tensor::{finite_difference_check, DenseMatrix, ParamSet, Tape};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-wise softmax with max subtraction, on a plain slice.
pub fn scalar_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// GRU recurrence over the rows of `input`, step by step in scalar
/// arithmetic. Returns the hidden state after each row, indexed by row;
/// `reverse` runs the recurrence from the last row backwards.
pub fn scalar_gru_sequence(
    set: &ParamSet,
    params: &GruParams,
    input: &DenseMatrix,
    d_hidden: usize,
    reverse: bool,
) -> Vec<Vec<f64>> {
    let n = input.rows();
    let d_in = input.cols();
    let w_z = set.value(params.w_update);
    let u_z = set.value(params.u_update);
    let b_z = set.value(params.b_update);
    let w_r = set.value(params.w_reset);
    let u_r = set.value(params.u_reset);
    let b_r = set.value(params.b_reset);
    let w_c = set.value(params.w_cand);
    let u_c = set.value(params.u_cand);
    let b_c = set.value(params.b_cand);

    let mut h = vec![0.0; d_hidden];
    let mut states = vec![vec![0.0; d_hidden]; n];
    let order: Vec<usize> = if reverse {
        (0..n).rev().collect()
    } else {
        (0..n).collect()
    };
    for t in order {
        let x: Vec<f64> = (0..d_in).map(|i| input.get(t, i)).collect();
        let mut z = vec![0.0; d_hidden];
        let mut r = vec![0.0; d_hidden];
        for j in 0..d_hidden {
            let mut zs = b_z.get(0, j);
            let mut rs = b_r.get(0, j);
            for (i, &xi) in x.iter().enumerate() {
                zs += xi * w_z.get(i, j);
                rs += xi * w_r.get(i, j);
            }
            for (k, &hk) in h.iter().enumerate() {
                zs += hk * u_z.get(k, j);
                rs += hk * u_r.get(k, j);
            }
            z[j] = sigmoid(zs);
            r[j] = sigmoid(rs);
        }
        let mut cand = vec![0.0; d_hidden];
        for j in 0..d_hidden {
            let mut cs = b_c.get(0, j);
            for (i, &xi) in x.iter().enumerate() {
                cs += xi * w_c.get(i, j);
            }
            for k in 0..d_hidden {
                cs += r[k] * h[k] * u_c.get(k, j);
            }
            cand[j] = cs.tanh();
        }
        for j in 0..d_hidden {
            h[j] = (1.0 - z[j]) * h[j] + z[j] * cand[j];
        }
        states[t] = h.clone();
    }
    states
}

/// LSTM recurrence over the rows of `input`, step by step in scalar
/// arithmetic. Returns the hidden state after each row, indexed by row;
/// `reverse` runs the recurrence from the last row backwards.
pub fn scalar_lstm_sequence(
    set: &ParamSet,
    params: &crate::gnn::LstmParams,
    input: &DenseMatrix,
    d_hidden: usize,
    reverse: bool,
) -> Vec<Vec<f64>> {
    let n = input.rows();
    let d_in = input.cols();
    let gate_params = [
        (params.w_input, params.u_input, params.b_input),
        (params.w_forget, params.u_forget, params.b_forget),
        (params.w_output, params.u_output, params.b_output),
        (params.w_cell, params.u_cell, params.b_cell),
    ];

    let mut h = vec![0.0; d_hidden];
    let mut c = vec![0.0; d_hidden];
    let mut states = vec![vec![0.0; d_hidden]; n];
    let order: Vec<usize> = if reverse {
        (0..n).rev().collect()
    } else {
        (0..n).collect()
    };
    for t in order {
        let x: Vec<f64> = (0..d_in).map(|i| input.get(t, i)).collect();
        let pre = |gate: usize, j: usize| {
            let (w, u, b) = gate_params[gate];
            let w = set.value(w);
            let u = set.value(u);
            let mut s = set.value(b).get(0, j);
            for (i, &xi) in x.iter().enumerate() {
                s += xi * w.get(i, j);
            }
            for (k, &hk) in h.iter().enumerate() {
                s += hk * u.get(k, j);
            }
            s
        };
        let mut h_new = vec![0.0; d_hidden];
        let mut c_new = vec![0.0; d_hidden];
        for j in 0..d_hidden {
            let i_g = sigmoid(pre(0, j));
            let f_g = sigmoid(pre(1, j));
            let o_g = sigmoid(pre(2, j));
            let g = pre(3, j).tanh();
            c_new[j] = f_g * c[j] + i_g * g;
            h_new[j] = o_g * c_new[j].tanh();
        }
        h = h_new;
        c = c_new;
        states[t] = h.clone();
    }
    states
}

/// Concatenate paired user/comment rows and project them with bias, in
/// explicit loops.
pub fn scalar_concat_project(
    user_vecs: &DenseMatrix,
    comment_vecs: &DenseMatrix,
    proj: &DenseMatrix,
    bias: &DenseMatrix,
) -> Vec<Vec<f64>> {
    let k = user_vecs.rows();
    let d_g = user_vecs.cols();
    let d = proj.cols();
    let mut out = vec![vec![0.0; d]; k];
    for r in 0..k {
        for c in 0..d {
            let mut sum = bias.get(0, c);
            for j in 0..d_g {
                sum += user_vecs.get(r, j) * proj.get(j, c);
                sum += comment_vecs.get(r, j) * proj.get(d_g + j, c);
            }
            out[r][c] = sum;
        }
    }
    out
}

/// tanh(C' W_I S) by explicit triple summation.
pub fn scalar_conformity(
    c_prime: &DenseMatrix,
    w_i: &DenseMatrix,
    s: &DenseMatrix,
) -> Vec<Vec<f64>> {
    let k = c_prime.rows();
    let d = c_prime.cols();
    let n = s.cols();
    let mut out = vec![vec![0.0; n]; k];
    for r in 0..k {
        for col in 0..n {
            let mut sum = 0.0;
            for a in 0..d {
                for b in 0..d {
                    sum += c_prime.get(r, a) * w_i.get(a, b) * s.get(b, col);
                }
            }
            out[r][col] = sum.tanh();
        }
    }
    out
}

/// Both cross-attention maps by explicit summation; `swap` exchanges which
/// projection pairs with which side in the comment map.
pub fn scalar_attention_maps(
    s: &DenseMatrix,
    c_prime: &DenseMatrix,
    f: &[Vec<f64>],
    w_s: &DenseMatrix,
    w_c: &DenseMatrix,
    swap: bool,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let k_a = w_s.rows();
    let d = s.rows();
    let n = s.cols();
    let k = c_prime.rows();

    let proj_s = |w: &DenseMatrix, r: usize, col: usize| {
        (0..d).map(|j| w.get(r, j) * s.get(j, col)).sum::<f64>()
    };
    let proj_c = |w: &DenseMatrix, r: usize, row: usize| {
        (0..d).map(|j| w.get(r, j) * c_prime.get(row, j)).sum::<f64>()
    };

    let mut h_s = vec![vec![0.0; n]; k_a];
    for r in 0..k_a {
        for col in 0..n {
            let mut cross = 0.0;
            for t in 0..k {
                cross += proj_c(w_c, r, t) * f[t][col];
            }
            h_s[r][col] = (proj_s(w_s, r, col) + cross).tanh();
        }
    }

    let (direct_w, cross_w) = if swap { (w_s, w_c) } else { (w_c, w_s) };
    let mut h_c = vec![vec![0.0; k]; k_a];
    for r in 0..k_a {
        for row in 0..k {
            let mut cross = 0.0;
            for t in 0..n {
                cross += proj_s(cross_w, r, t) * f[row][t];
            }
            h_c[r][row] = (proj_c(direct_w, r, row) + cross).tanh();
        }
    }
    (h_s, h_c)
}

/// softmax(w H) over the columns of H.
pub fn scalar_attention_weights(w: &DenseMatrix, h: &[Vec<f64>]) -> Vec<f64> {
    let t_len = h[0].len();
    let scores: Vec<f64> = (0..t_len)
        .map(|t| h.iter().enumerate().map(|(j, row)| w.get(0, j) * row[t]).sum())
        .collect();
    scalar_softmax(&scores)
}

/// Attention-weighted row sum.
pub fn scalar_attend(rows: &DenseMatrix, a: &[f64]) -> Vec<f64> {
    let d = rows.cols();
    let mut out = vec![0.0; d];
    for (t, &weight) in a.iter().enumerate() {
        for (j, slot) in out.iter_mut().enumerate() {
            *slot += weight * rows.get(t, j);
        }
    }
    out
}

/// softmax(W_f [s_hat, c_hat] + b_f) with explicit loops.
pub fn scalar_predict(
    s_hat: &[f64],
    c_hat: &[f64],
    w_f: &DenseMatrix,
    b_f: &[f64],
) -> [f64; 2] {
    let d = s_hat.len();
    let mut logits = [0.0; 2];
    for (cls, logit) in logits.iter_mut().enumerate() {
        let mut sum = b_f[cls];
        for j in 0..d {
            sum += w_f.get(cls, j) * s_hat[j];
            sum += w_f.get(cls, d + j) * c_hat[j];
        }
        *logit = sum;
    }
    let soft = scalar_softmax(&logits);
    [soft[0], soft[1]]
}

/// Clamped binary cross-entropy against class index y.
pub fn scalar_loss(y_hat: [f64; 2], y: usize) -> f64 {
    let clamp = |p: f64| p.clamp(1e-12, 1.0 - 1e-12);
    -(y as f64) * clamp(y_hat[1]).ln() - (1.0 - y as f64) * clamp(y_hat[0]).ln()
}

/// Types-mixture attention over (self, comment, user) rows with a shared
/// scoring vector, in plain loops.
pub fn scalar_types_mixture(
    u: &DenseMatrix,
    slope: f64,
    self_feat: &[f64],
    comment_agg: &[f64],
    user_agg: &[f64],
) -> (Vec<f64>, [f64; 3]) {
    let d_g = self_feat.len();
    let score = |candidate: &[f64]| {
        let mut raw = 0.0;
        for j in 0..d_g {
            raw += u.get(0, j) * candidate[j];
            raw += u.get(0, d_g + j) * self_feat[j];
        }
        if raw >= 0.0 {
            raw
        } else {
            slope * raw
        }
    };
    let scores = [score(self_feat), score(comment_agg), score(user_agg)];
    let alpha = scalar_softmax(&scores);
    let mut mixed = vec![0.0; d_g];
    for (weight, candidate) in alpha.iter().zip([self_feat, comment_agg, user_agg]) {
        for (j, slot) in mixed.iter_mut().enumerate() {
            *slot += weight * candidate[j];
        }
    }
    (mixed, [alpha[0], alpha[1], alpha[2]])
}

/// Context-scored word attention: scores from tanh(h) against the context
/// vector, pooling over the untransformed rows.
pub fn scalar_word_attention(h: &DenseMatrix, context: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = h.rows();
    let d = h.cols();
    let scores: Vec<f64> = (0..m)
        .map(|r| (0..d).map(|j| h.get(r, j).tanh() * context[j]).sum())
        .collect();
    let alpha = scalar_softmax(&scores);
    let mut pooled = vec![0.0; d];
    for (r, &weight) in alpha.iter().enumerate() {
        for (j, slot) in pooled.iter_mut().enumerate() {
            *slot += weight * h.get(r, j);
        }
    }
    (pooled, alpha)
}

/// One named numeric check: the worst error observed against its budget.
#[derive(Debug, Clone)]
pub struct SuiteCheck {
    pub name: &'static str,
    pub worst: f64,
    pub limit: f64,
}

impl SuiteCheck {
    pub fn passed(&self) -> bool {
        self.worst < self.limit
    }
}

/// Result of one self-test suite: every check plus wall-clock time.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub checks: Vec<SuiteCheck>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(SuiteCheck::passed)
    }

    /// `[suite ...]` header, elapsed time, then one line per check.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[suite {}]", self.name);
        let _ = writeln!(out, "elapsed_ms = {}", self.elapsed.as_millis());
        for check in &self.checks {
            let _ = writeln!(
                out,
                "check = {} worst = {:.3e} limit = {:.0e} status = {}",
                check.name,
                check.worst,
                check.limit,
                if check.passed() { "pass" } else { "FAIL" }
            );
        }
        out
    }
}

/// Dataset driving the gradient suite: one fake news item with two
/// three-word sentences, two comments, and two users.
pub fn canonical_fixture() -> Dataset {
    let mut vocabulary = Vocabulary::with_specials();
    for word in ["alpha", "beta", "gamma", "delta"] {
        vocabulary.insert(word);
    }
    let mut comments = BTreeMap::new();
    let mut users = BTreeMap::new();
    for (i, (cid, uid)) in [("c1", "u1"), ("c2", "u2")].iter().enumerate() {
        comments.insert(
            cid.to_string(),
            Comment {
                id: cid.to_string(),
                news_id: "n1".to_string(),
                user_id: uid.to_string(),
                tokens: vec![2 + i as u32, 4],
                raw_text: "alpha gamma".to_string(),
                timestamp: i as i64,
                attributes: CommentAttributes {
                    like_count: 5 * i as u64,
                    retweet_count: 1,
                    reply_count: i as u64,
                },
            },
        );
        users.insert(
            uid.to_string(),
            User {
                id: uid.to_string(),
                attributes: UserAttributes {
                    follower_count: 40 + 8 * i as u64,
                    friend_count: 25 * (i as u64 + 1),
                    status_count: 9,
                    verified: i == 0,
                },
            },
        );
    }
    Dataset {
        news: vec![NewsItem {
            id: "n1".to_string(),
            sentences: vec![vec![2, 3, 4], vec![5, 2, 3]],
            raw_sentences: vec![
                "alpha beta gamma.".to_string(),
                "delta alpha beta.".to_string(),
            ],
            label: Label::Fake,
        }],
        comments,
        users,
        vocabulary,
    }
}

/// Narrow model shape shared by the numeric suites.
pub fn suite_config() -> ModelConfig {
    ModelConfig {
        d: 6,
        d_word: 4,
        encoder_layers: 1,
        encoder_heads: 2,
        d_g: 4,
        k_a: 3,
        max_news_sentences: 4,
        max_sentence_words: 6,
        max_comment_words: 4,
        embedding_init_std: 0.5,
        ..ModelConfig::default()
    }
}

/// Compares every parameter's reverse-mode gradient against central finite
/// differences (eps 1e-5) on the canonical fixture.
pub fn gradient_suite() -> SuiteReport {
    let start = Instant::now();
    let dataset = canonical_fixture();
    let graph = build_graph(&dataset);
    let config = suite_config();
    let (mut set, params) = ModelParams::init(&config, dataset.vocabulary.len(), 7);
    let run = |set: &ParamSet| {
        let mut tape = Tape::new();
        let fwd = forward_news(
            &mut tape,
            set,
            &params,
            &config,
            &dataset,
            &graph,
            11,
            &dataset.news[0],
        )
        .expect("canonical fixture forwards cleanly");
        (tape, fwd.loss)
    };
    let (tape, total) = run(&set);
    let analytic = tape.backward(total).expect("loss is scalar");
    let report = finite_difference_check(&mut set, &analytic, 1e-5, |set| {
        let (tape, total) = run(set);
        tape.value(total).get(0, 0)
    });
    SuiteReport {
        name: "gradients",
        checks: vec![SuiteCheck {
            name: "end_to_end_finite_difference",
            worst: report.max_rel_error,
            limit: 1e-4,
        }],
        elapsed: start.elapsed(),
    }
}

fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
}

fn record(worst: &mut BTreeMap<&'static str, f64>, name: &str, error: f64) {
    let slot = worst.get_mut(name).expect("known check name");
    if error > *slot {
        *slot = error;
    }
}

fn sum_error(matrix: &DenseMatrix) -> f64 {
    (matrix.values().iter().sum::<f64>() - 1.0).abs()
}

fn to_checks(
    names: &'static [&'static str],
    worst: BTreeMap<&'static str, f64>,
    limit: f64,
) -> Vec<SuiteCheck> {
    names
        .iter()
        .map(|&name| SuiteCheck {
            name,
            worst: worst[name],
            limit,
        })
        .collect()
}

/// Randomized forward passes through every normalized stage, recording the
/// worst deviation of each attention or probability vector from summing to
/// one.
pub fn normalization_suite(passes: usize) -> SuiteReport {
    const NAMES: [&str; 5] = [
        "word_attention",
        "types_mixture",
        "sentence_attention",
        "comment_attention",
        "prediction",
    ];
    let start = Instant::now();
    let mut worst: BTreeMap<&'static str, f64> = NAMES.iter().map(|&n| (n, 0.0)).collect();
    for pass in 0..passes {
        let mut rng = ChaCha8Rng::seed_from_u64(pass as u64);
        let mut set = ParamSet::new();
        let word = WordEncoderParams::register(&mut set, &mut rng, 8, 8, 4, 1, 2, 0.5);
        let cap = CoAttentionParams::register(&mut set, &mut rng, 3, 4, 3);
        let mixture = set.register("suite.mixture", glorot_uniform(&mut rng, 1, 8));
        let mut tape = Tape::new();

        let token_count = rng.gen_range(1..=6);
        let tokens: Vec<u32> = (0..token_count).map(|_| rng.gen_range(0..8)).collect();
        let h = encode_words(&mut tape, &set, &word, &tokens).expect("nonempty tokens");
        let (_, word_alpha) = word_attention(&mut tape, &set, &word, h).expect("widths close");
        record(&mut worst, "word_attention", sum_error(tape.value(word_alpha)));

        let self_feat = tape.input(rand_matrix(&mut rng, 1, 4));
        let comment_agg = tape.input(rand_matrix(&mut rng, 1, 4));
        let user_agg = tape.input(rand_matrix(&mut rng, 1, 4));
        let (_, mix_alpha) =
            types_mixture(&mut tape, &set, mixture, 0.01, self_feat, comment_agg, user_agg)
                .expect("widths close");
        record(&mut worst, "types_mixture", sum_error(tape.value(mix_alpha)));

        let n = rng.gen_range(1..=5);
        let k = rng.gen_range(1..=5);
        let s = tape.input(rand_matrix(&mut rng, 4, n));
        let c = tape.input(rand_matrix(&mut rng, k, 4));
        let f = conformity(&mut tape, &set, &cap, c, s).expect("widths close");
        let (h_s, h_c) =
            attention_maps(&mut tape, &set, &cap, s, c, f, rng.gen_bool(0.5)).expect("widths close");
        let a_s = attention_weights(&mut tape, &set, cap.w_hs, h_s).expect("widths close");
        let a_c = attention_weights(&mut tape, &set, cap.w_hc, h_c).expect("widths close");
        record(&mut worst, "sentence_attention", sum_error(tape.value(a_s)));
        record(&mut worst, "comment_attention", sum_error(tape.value(a_c)));

        let s_rows = tape.transpose(s);
        let s_hat = attend(&mut tape, s_rows, a_s).expect("widths close");
        let c_hat = attend(&mut tape, c, a_c).expect("widths close");
        let y_hat = predict(&mut tape, &set, &cap, s_hat, c_hat).expect("widths close");
        record(&mut worst, "prediction", sum_error(tape.value(y_hat)));
    }
    SuiteReport {
        name: "normalization",
        checks: to_checks(&NAMES, worst, 1e-12),
        elapsed: start.elapsed(),
    }
}

/// Compares the tape implementations of every numeric stage against the
/// scalar oracles on randomized small instances; records worst absolute
/// differences.
pub fn oracle_suite(instances: usize) -> SuiteReport {
    const NAMES: [&str; 12] = [
        "user_comment_fusion",
        "conformity",
        "attention_maps",
        "sentence_attention",
        "comment_attention",
        "attended_vectors",
        "prediction",
        "loss",
        "types_mixture",
        "word_attention",
        "gru_recurrence",
        "lstm_recurrence",
    ];
    let start = Instant::now();
    let mut worst: BTreeMap<&'static str, f64> = NAMES.iter().map(|&n| (n, 0.0)).collect();
    for instance in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(0x0ff + instance as u64);
        let mut set = ParamSet::new();
        let d_g = 2 + 2 * rng.gen_range(0..2usize);
        let d = 2 + 2 * rng.gen_range(0..3usize);
        let k_a = rng.gen_range(1..=4);
        let d_word = 2 + 2 * rng.gen_range(0..2usize);
        let cap = CoAttentionParams::register(&mut set, &mut rng, d_g, d, k_a);
        let word = WordEncoderParams::register(&mut set, &mut rng, 6, 8, d_word, 1, 1, 0.5);
        let sent = SentenceEncoderParams::register(&mut set, &mut rng, d_word, d);
        let agg = BiLstmParams::register(&mut set, &mut rng, "suite.agg", d_g, d_g);
        let mixture = set.register("suite.mixture", glorot_uniform(&mut rng, 1, 2 * d_g));
        let mut tape = Tape::new();

        let n = rng.gen_range(1..=5);
        let k = rng.gen_range(1..=5);
        let user_m = rand_matrix(&mut rng, k, d_g);
        let cgraph_m = rand_matrix(&mut rng, k, d_g);
        let user_n = tape.input(user_m.clone());
        let cgraph_n = tape.input(cgraph_m.clone());
        let fused = user_comment_concat(&mut tape, &set, &cap, user_n, cgraph_n)
            .expect("widths close");
        let want_fused = scalar_concat_project(
            &user_m,
            &cgraph_m,
            set.value(cap.concat_proj),
            set.value(cap.concat_bias),
        );
        for r in 0..k {
            for col in 0..d {
                record(
                    &mut worst,
                    "user_comment_fusion",
                    (tape.value(fused).get(r, col) - want_fused[r][col]).abs(),
                );
            }
        }

        let s_m = rand_matrix(&mut rng, d, n);
        let c_m = rand_matrix(&mut rng, k, d);
        let s_n = tape.input(s_m.clone());
        let c_n = tape.input(c_m.clone());
        let f_n = conformity(&mut tape, &set, &cap, c_n, s_n).expect("widths close");
        let want_f = scalar_conformity(&c_m, set.value(cap.w_i), &s_m);
        for r in 0..k {
            for col in 0..n {
                record(
                    &mut worst,
                    "conformity",
                    (tape.value(f_n).get(r, col) - want_f[r][col]).abs(),
                );
            }
        }

        let swap = rng.gen_bool(0.5);
        let (hs_n, hc_n) =
            attention_maps(&mut tape, &set, &cap, s_n, c_n, f_n, swap).expect("widths close");
        let (want_hs, want_hc) = scalar_attention_maps(
            &s_m,
            &c_m,
            &want_f,
            set.value(cap.w_s),
            set.value(cap.w_c),
            swap,
        );
        for r in 0..k_a {
            for col in 0..n {
                record(
                    &mut worst,
                    "attention_maps",
                    (tape.value(hs_n).get(r, col) - want_hs[r][col]).abs(),
                );
            }
            for col in 0..k {
                record(
                    &mut worst,
                    "attention_maps",
                    (tape.value(hc_n).get(r, col) - want_hc[r][col]).abs(),
                );
            }
        }

        let as_n = attention_weights(&mut tape, &set, cap.w_hs, hs_n).expect("widths close");
        let ac_n = attention_weights(&mut tape, &set, cap.w_hc, hc_n).expect("widths close");
        let want_as = scalar_attention_weights(set.value(cap.w_hs), &want_hs);
        let want_ac = scalar_attention_weights(set.value(cap.w_hc), &want_hc);
        for (col, want) in want_as.iter().enumerate() {
            record(
                &mut worst,
                "sentence_attention",
                (tape.value(as_n).get(0, col) - want).abs(),
            );
        }
        for (col, want) in want_ac.iter().enumerate() {
            record(
                &mut worst,
                "comment_attention",
                (tape.value(ac_n).get(0, col) - want).abs(),
            );
        }

        let st_n = tape.transpose(s_n);
        let s_hat_n = attend(&mut tape, st_n, as_n).expect("widths close");
        let c_hat_n = attend(&mut tape, c_n, ac_n).expect("widths close");
        let mut st_values = Vec::with_capacity(n * d);
        for row in 0..n {
            for col in 0..d {
                st_values.push(s_m.get(col, row));
            }
        }
        let st_m = DenseMatrix::from_vec(n, d, st_values);
        let want_s_hat = scalar_attend(&st_m, &want_as);
        let want_c_hat = scalar_attend(&c_m, &want_ac);
        for col in 0..d {
            record(
                &mut worst,
                "attended_vectors",
                (tape.value(s_hat_n).get(0, col) - want_s_hat[col]).abs(),
            );
            record(
                &mut worst,
                "attended_vectors",
                (tape.value(c_hat_n).get(0, col) - want_c_hat[col]).abs(),
            );
        }

        let y_n = predict(&mut tape, &set, &cap, s_hat_n, c_hat_n).expect("widths close");
        let want_y = scalar_predict(
            &want_s_hat,
            &want_c_hat,
            set.value(cap.w_f),
            set.value(cap.b_f).values(),
        );
        for col in 0..2 {
            record(
                &mut worst,
                "prediction",
                (tape.value(y_n).get(0, col) - want_y[col]).abs(),
            );
        }

        let label = rng.gen_range(0..2usize);
        let loss_n = loss(&mut tape, y_n, label).expect("prediction is 1x2");
        record(
            &mut worst,
            "loss",
            (tape.value(loss_n).get(0, 0) - scalar_loss(want_y, label)).abs(),
        );

        let self_m = rand_matrix(&mut rng, 1, d_g);
        let com_m = rand_matrix(&mut rng, 1, d_g);
        let usr_m = rand_matrix(&mut rng, 1, d_g);
        let self_n = tape.input(self_m.clone());
        let com_n = tape.input(com_m.clone());
        let usr_n = tape.input(usr_m.clone());
        let (mix_n, alpha_n) =
            types_mixture(&mut tape, &set, mixture, 0.01, self_n, com_n, usr_n)
                .expect("widths close");
        let (want_mix, want_alpha) = scalar_types_mixture(
            set.value(mixture),
            0.01,
            self_m.values(),
            com_m.values(),
            usr_m.values(),
        );
        for col in 0..d_g {
            record(
                &mut worst,
                "types_mixture",
                (tape.value(mix_n).get(0, col) - want_mix[col]).abs(),
            );
        }
        for col in 0..3 {
            record(
                &mut worst,
                "types_mixture",
                (tape.value(alpha_n).get(0, col) - want_alpha[col]).abs(),
            );
        }

        let m = rng.gen_range(1..=6);
        let h_m = rand_matrix(&mut rng, m, d_word);
        let h_n = tape.input(h_m.clone());
        let (pooled_n, walpha_n) =
            word_attention(&mut tape, &set, &word, h_n).expect("widths close");
        let (want_pooled, want_walpha) =
            scalar_word_attention(&h_m, set.value(word.word_context).values());
        for col in 0..d_word {
            record(
                &mut worst,
                "word_attention",
                (tape.value(pooled_n).get(0, col) - want_pooled[col]).abs(),
            );
        }
        for (col, want) in want_walpha.iter().enumerate() {
            record(
                &mut worst,
                "word_attention",
                (tape.value(walpha_n).get(0, col) - want).abs(),
            );
        }

        let rows = rng.gen_range(1..=4);
        let v_m = rand_matrix(&mut rng, rows, d_word);
        let v_n = tape.input(v_m.clone());
        let enc_n = encode_sentences(&mut tape, &set, &sent, v_n).expect("widths close");
        let want_fwd = scalar_gru_sequence(&set, &sent.forward, &v_m, sent.d_hidden, false);
        let want_bwd = scalar_gru_sequence(&set, &sent.backward, &v_m, sent.d_hidden, true);
        for r in 0..rows {
            for col in 0..sent.d_hidden {
                record(
                    &mut worst,
                    "gru_recurrence",
                    (tape.value(enc_n).get(r, col) - want_fwd[r][col]).abs(),
                );
                record(
                    &mut worst,
                    "gru_recurrence",
                    (tape.value(enc_n).get(r, sent.d_hidden + col) - want_bwd[r][col]).abs(),
                );
            }
        }

        let count = rng.gen_range(1..=4);
        let feats_m = rand_matrix(&mut rng, count, d_g);
        let feats_n: Vec<_> = (0..count)
            .map(|r| {
                let row: Vec<f64> = (0..d_g).map(|col| feats_m.get(r, col)).collect();
                tape.input(DenseMatrix::from_vec(1, d_g, row))
            })
            .collect();
        let states_fwd = scalar_lstm_sequence(&set, &agg.forward, &feats_m, agg.d_hidden, false);
        let states_bwd = scalar_lstm_sequence(&set, &agg.backward, &feats_m, agg.d_hidden, true);
        for readout in [AggregatorReadout::Mean, AggregatorReadout::Last] {
            let agg_n = aggregate_same_type(&mut tape, &set, &agg, readout, &feats_n, d_g)
                .expect("widths close");
            for col in 0..agg.d_hidden {
                let (want_f, want_b) = match readout {
                    AggregatorReadout::Mean => {
                        let f = states_fwd.iter().map(|s| s[col]).sum::<f64>() / count as f64;
                        let b = states_bwd.iter().map(|s| s[col]).sum::<f64>() / count as f64;
                        (f, b)
                    }
                    AggregatorReadout::Last => (states_fwd[count - 1][col], states_bwd[0][col]),
                };
                record(
                    &mut worst,
                    "lstm_recurrence",
                    (tape.value(agg_n).get(0, col) - want_f).abs(),
                );
                record(
                    &mut worst,
                    "lstm_recurrence",
                    (tape.value(agg_n).get(0, agg.d_hidden + col) - want_b).abs(),
                );
            }
        }
    }
    SuiteReport {
        name: "oracles",
        checks: to_checks(&NAMES, worst, 1e-10),
        elapsed: start.elapsed(),
    }
}
