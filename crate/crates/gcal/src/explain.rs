//! Sentence-level explanations: attention rankings, reference scores, and
//! mean average precision with a neighbor tolerance.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coattn::ForwardTrace;
use crate::data::{words, Dataset};
use crate::parallel;
use crate::synthetic::CONTENT_MARKER;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("no reference scores for news {0}")]
    OracleMissing(String),
    #[error("{path} line {line}: {source}")]
    Malformed {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Sentences of one news item ordered strongest attention first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRanking {
    pub news_id: String,
    /// (sentence index, attention weight), weight descending, ties by index.
    pub ranked: Vec<(usize, f64)>,
}

/// Reference sentence scores keyed by news id, one score per sentence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleScores {
    by_news: BTreeMap<String, Vec<f64>>,
}

impl OracleScores {
    pub fn insert(&mut self, news_id: impl Into<String>, scores: Vec<f64>) {
        self.by_news.insert(news_id.into(), scores);
    }

    pub fn get(&self, news_id: &str) -> Option<&[f64]> {
        self.by_news.get(news_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.by_news.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_news.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.by_news.iter().map(|(id, s)| (id.as_str(), s.as_slice()))
    }
}

/// Top-`k` sentences of a forward trace by attention weight. Ties break
/// toward the lower index; `k` past the sentence count returns them all.
pub fn rank_sentences(trace: &ForwardTrace, k: usize) -> SentenceRanking {
    assert!(k >= 1, "k must be at least 1");
    SentenceRanking {
        news_id: trace.news_id.clone(),
        ranked: top_indices(&trace.sentence_attention, k),
    }
}

fn top_indices(scores: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite attention weights")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order.into_iter().map(|i| (i, scores[i])).collect()
}

/// Average precision of one ranking against the oracle's top-`k` indices.
///
/// A predicted index at rank r is a hit when it lies within ±`n` of an
/// unconsumed ground-truth index; each ground truth matches once, claimed
/// greedily in rank order by the nearest candidate (ties toward the smaller
/// index). The precision sum is divided by the ground-truth count.
pub fn average_precision(ranking: &SentenceRanking, oracle_scores: &[f64], k: usize, n: usize) -> f64 {
    let gt: Vec<usize> = top_indices(oracle_scores, k).into_iter().map(|(i, _)| i).collect();
    if gt.is_empty() {
        return 0.0;
    }
    let mut consumed = vec![false; gt.len()];
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank0, &(predicted, _)) in ranking.ranked.iter().take(k).enumerate() {
        let mut best: Option<usize> = None;
        for (slot, &truth) in gt.iter().enumerate() {
            if consumed[slot] || predicted.abs_diff(truth) > n {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    let (d, bd) = (predicted.abs_diff(truth), predicted.abs_diff(gt[b]));
                    d < bd || (d == bd && truth < gt[b])
                }
            };
            if better {
                best = Some(slot);
            }
        }
        if let Some(slot) = best {
            consumed[slot] = true;
            hits += 1;
            sum += hits as f64 / (rank0 + 1) as f64;
        }
    }
    sum / gt.len() as f64
}

/// Mean average precision at `k` with ±`n` tolerance over all rankings.
/// Every ranking's news id must be covered by `oracle`.
pub fn map_at_k(
    rankings: &[SentenceRanking],
    oracle: &OracleScores,
    k: usize,
    n: usize,
) -> Result<f64, ExplainError> {
    assert!(k >= 1, "k must be at least 1");
    assert!(n <= 4, "tolerance n must be at most 4");
    if rankings.is_empty() {
        return Ok(0.0);
    }
    let precisions = parallel::map_collect(rankings.iter().collect(), |ranking: &SentenceRanking| {
        oracle
            .get(&ranking.news_id)
            .map(|scores| average_precision(ranking, scores, k, n))
            .ok_or_else(|| ExplainError::OracleMissing(ranking.news_id.clone()))
    });
    let mut total = 0.0;
    for p in precisions {
        total += p?;
    }
    Ok(total / rankings.len() as f64)
}

/// Deterministic reference scores standing in for an external claim scorer:
/// sentences carrying the planted content marker score in [0.9, 1), the rest
/// in [0, 0.1). A corpus without the marker in its vocabulary gets uniform
/// scores in [0, 1) so unplanted data still exercises the MAP machinery.
pub fn synthetic_oracle(dataset: &Dataset, seed: u64) -> OracleScores {
    let planted = dataset.vocabulary.contains(CONTENT_MARKER);
    let mut oracle = OracleScores::default();
    for news in &dataset.news {
        let mut rng = ChaCha8Rng::seed_from_u64(id_seed(seed, &news.id));
        let scores = news
            .raw_sentences
            .iter()
            .map(|sentence| {
                let u: f64 = rng.gen_range(0.0..1.0);
                if !planted {
                    u
                } else if words(sentence).iter().any(|w| w == CONTENT_MARKER) {
                    0.9 + 0.1 * u
                } else {
                    0.1 * u
                }
            })
            .collect();
        oracle.insert(news.id.clone(), scores);
    }
    oracle
}

fn id_seed(seed: u64, id: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for byte in id.bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Serialize, Deserialize)]
struct ScoreRecord {
    news_id: String,
    scores: Vec<f64>,
}

/// Writes scores as JSON-Lines records `{"news_id": ..., "scores": [...]}`.
pub fn write_scores(path: &Path, oracle: &OracleScores) -> Result<(), ExplainError> {
    let mut out = BufWriter::new(File::create(path)?);
    for (news_id, scores) in oracle.iter() {
        let record = ScoreRecord {
            news_id: news_id.to_string(),
            scores: scores.to_vec(),
        };
        serde_json::to_writer(&mut out, &record).expect("score record serializes");
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a JSON-Lines score file as written by [`write_scores`] or exported
/// from an external scorer; blank lines are skipped.
pub fn read_scores(path: &Path) -> Result<OracleScores, ExplainError> {
    let reader = BufReader::new(File::open(path)?);
    let mut oracle = OracleScores::default();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ScoreRecord =
            serde_json::from_str(&line).map_err(|source| ExplainError::Malformed {
                path: path.display().to_string(),
                line: index + 1,
                source,
            })?;
        oracle.insert(record.news_id, record.scores);
    }
    Ok(oracle)
}

/// Renders the explanation report: per news the top-`k` sentences with
/// weights and raw text, then a MAP table over k in {5, 10} and n in 0..=4.
pub fn render_explain_report(
    dataset: &Dataset,
    traces: &[ForwardTrace],
    oracle: &OracleScores,
    k: usize,
) -> Result<String, ExplainError> {
    let mut out = String::new();
    let mut push = |line: String| {
        out.push_str(&line);
        out.push('\n');
    };
    for trace in traces {
        let ranking = rank_sentences(trace, k);
        push(format!("[news {}]", trace.news_id));
        if let Some(news) = dataset.news_by_id(&trace.news_id) {
            push(format!("label = {:?}", news.label).to_lowercase());
        }
        for (rank0, &(index, weight)) in ranking.ranked.iter().enumerate() {
            let text = dataset
                .news_by_id(&trace.news_id)
                .and_then(|news| news.raw_sentences.get(index))
                .map(String::as_str)
                .unwrap_or("");
            push(format!(
                "rank = {} sentence = {index} weight = {weight:.4} text = {text}",
                rank0 + 1
            ));
        }
    }
    let deep_k = 10.max(k);
    let rankings: Vec<SentenceRanking> =
        traces.iter().map(|trace| rank_sentences(trace, deep_k)).collect();
    push("[map]".into());
    for table_k in [5usize, 10] {
        for n in 0..=4usize {
            let value = map_at_k(&rankings, oracle, table_k, n)?;
            push(format!("k = {table_k} n = {n} map = {value:.4}"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticConfig};
    use crate::tensor::DenseMatrix;

    fn trace(news_id: &str, attention: Vec<f64>) -> ForwardTrace {
        ForwardTrace {
            news_id: news_id.to_string(),
            prediction: [0.5, 0.5],
            sentence_attention: attention,
            comment_attention: Vec::new(),
            comment_ids: Vec::new(),
            attended_sentences: Vec::new(),
            attended_comments: Vec::new(),
            conformity: DenseMatrix::from_vec(1, 1, vec![0.0]),
            sentence_map: DenseMatrix::from_vec(1, 1, vec![0.0]),
            comment_map: DenseMatrix::from_vec(1, 1, vec![0.0]),
        }
    }

    fn ranking(news_id: &str, indices: &[usize]) -> SentenceRanking {
        SentenceRanking {
            news_id: news_id.to_string(),
            ranked: indices
                .iter()
                .enumerate()
                .map(|(r, &i)| (i, 1.0 - r as f64 * 0.1))
                .collect(),
        }
    }

    fn oracle_for(news_id: &str, scores: Vec<f64>) -> OracleScores {
        let mut oracle = OracleScores::default();
        oracle.insert(news_id, scores);
        oracle
    }

    #[test]
    fn top_sentences_sort_by_weight() {
        let ranked = rank_sentences(&trace("n", vec![0.7, 0.2, 0.1]), 2);
        assert_eq!(ranked.ranked, vec![(0, 0.7), (1, 0.2)]);
    }

    #[test]
    fn ties_break_toward_the_lower_index() {
        let ranked = rank_sentences(&trace("n", vec![0.25, 0.25, 0.25, 0.25]), 2);
        assert_eq!(ranked.ranked, vec![(0, 0.25), (1, 0.25)]);
    }

    #[test]
    fn k_past_the_sentence_count_returns_all() {
        let ranked = rank_sentences(&trace("n", vec![0.2, 0.5, 0.3]), 10);
        assert_eq!(ranked.ranked, vec![(1, 0.5), (2, 0.3), (0, 0.2)]);
    }

    #[test]
    fn ranking_matches_a_reference_sort_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let len = rng.gen_range(1..12);
            let weights: Vec<f64> = (0..len)
                .map(|_| f64::from(rng.gen_range(0..4)) * 0.25)
                .collect();
            let k = rng.gen_range(1..8);
            let got = rank_sentences(&trace("n", weights.clone()), k);
            let mut expect: Vec<usize> = (0..len).collect();
            expect.sort_by(|&a, &b| {
                weights[b].partial_cmp(&weights[a]).unwrap().then(a.cmp(&b))
            });
            expect.truncate(k);
            let got_indices: Vec<usize> = got.ranked.iter().map(|&(i, _)| i).collect();
            assert_eq!(got_indices, expect);
        }
    }

    #[test]
    fn hand_traced_neighbor_matching() {
        let oracle = oracle_for("n", vec![0.1, 0.2, 0.1, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.8]);
        let predicted = ranking("n", &[2, 7]);
        let map = map_at_k(&[predicted], &oracle, 2, 1).unwrap();
        assert!((map - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perfect_ranking_scores_one_at_any_tolerance() {
        let oracle = oracle_for("n", vec![0.9, 0.1, 0.8, 0.2, 0.3]);
        let predicted = ranking("n", &[0, 2]);
        for n in 0..=4 {
            assert_eq!(map_at_k(&[predicted.clone()], &oracle, 2, n).unwrap(), 1.0);
        }
    }

    #[test]
    fn fully_missed_ranking_scores_zero() {
        let oracle = oracle_for("n", vec![0.9, 0.8, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.2]);
        let predicted = ranking("n", &[7, 8]);
        assert_eq!(map_at_k(&[predicted], &oracle, 2, 1).unwrap(), 0.0);
    }

    #[test]
    fn each_ground_truth_matches_only_once() {
        let mut scores = vec![0.1; 60];
        scores[5] = 0.9;
        scores[50] = 0.8;
        let oracle = oracle_for("n", scores);
        let predicted = ranking("n", &[4, 6]);
        let map = map_at_k(&[predicted], &oracle, 2, 1).unwrap();
        assert!((map - 0.5).abs() < 1e-15);
    }

    #[test]
    fn equidistant_match_prefers_the_smaller_truth_index() {
        let mut scores = vec![0.1; 8];
        scores[2] = 0.9;
        scores[4] = 0.8;
        let oracle = oracle_for("n", scores);
        let predicted = ranking("n", &[3, 4]);
        let map = map_at_k(&[predicted], &oracle, 2, 1).unwrap();
        assert_eq!(map, 1.0);
    }

    #[test]
    fn map_is_monotone_in_the_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let sentences = rng.gen_range(3..15);
            let k = rng.gen_range(1..6);
            let scores: Vec<f64> = (0..sentences).map(|_| rng.gen_range(0.0..1.0)).collect();
            let oracle = oracle_for("n", scores);
            let mut indices: Vec<usize> = (0..sentences).collect();
            for i in (1..indices.len()).rev() {
                indices.swap(i, rng.gen_range(0..=i));
            }
            indices.truncate(k);
            let predicted = ranking("n", &indices);
            let mut previous = -1.0;
            for n in 0..=4 {
                let value = map_at_k(&[predicted.clone()], &oracle, k, n).unwrap();
                assert!(
                    value >= previous - 1e-12,
                    "map fell from {previous} to {value} at n={n}"
                );
                assert!((0.0..=1.0).contains(&value));
                previous = value;
            }
        }
    }

    #[test]
    fn missing_oracle_entry_is_an_error() {
        let oracle = oracle_for("other", vec![0.5]);
        let predicted = ranking("n", &[0]);
        let err = map_at_k(&[predicted], &oracle, 1, 0).unwrap_err();
        assert!(matches!(err, ExplainError::OracleMissing(id) if id == "n"));
    }

    #[test]
    fn marker_sentences_outscore_filler() {
        let dataset = generate(&SyntheticConfig {
            news_count: 20,
            fake_count: 10,
            ..SyntheticConfig::default()
        });
        let oracle = synthetic_oracle(&dataset, 5);
        let mut marked_seen = 0;
        for news in &dataset.news {
            let scores = oracle.get(&news.id).unwrap();
            assert_eq!(scores.len(), news.raw_sentences.len());
            for (sentence, &score) in news.raw_sentences.iter().zip(scores) {
                if words(sentence).iter().any(|w| w == CONTENT_MARKER) {
                    assert!(score >= 0.9);
                    marked_seen += 1;
                } else {
                    assert!(score < 0.1);
                }
            }
        }
        assert!(marked_seen > 0);
    }

    #[test]
    fn oracle_is_deterministic() {
        let dataset = generate(&SyntheticConfig::default());
        assert_eq!(synthetic_oracle(&dataset, 9), synthetic_oracle(&dataset, 9));
        assert_ne!(synthetic_oracle(&dataset, 9), synthetic_oracle(&dataset, 10));
    }

    #[test]
    fn unplanted_corpora_get_full_range_scores() {
        let mut dataset = generate(&SyntheticConfig {
            news_count: 8,
            fake_count: 4,
            ..SyntheticConfig::default()
        });
        for news in &mut dataset.news {
            for sentence in &mut news.raw_sentences {
                *sentence = sentence.replace(CONTENT_MARKER, "ordinary");
            }
        }
        dataset.vocabulary = crate::data::build_vocabulary(
            dataset.news.iter().flat_map(|n| n.raw_sentences.iter().cloned()),
            1,
        );
        let oracle = synthetic_oracle(&dataset, 3);
        let all: Vec<f64> = oracle.iter().flat_map(|(_, s)| s.to_vec()).collect();
        assert!(all.iter().any(|&s| s > 0.5));
        assert!(all.iter().all(|&s| (0.0..1.0).contains(&s)));
    }

    #[test]
    fn score_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        let dataset = generate(&SyntheticConfig {
            news_count: 10,
            fake_count: 5,
            ..SyntheticConfig::default()
        });
        let oracle = synthetic_oracle(&dataset, 7);
        write_scores(&path, &oracle).unwrap();
        assert_eq!(read_scores(&path).unwrap(), oracle);
    }

    #[test]
    fn malformed_score_line_reports_its_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        std::fs::write(&path, "{\"news_id\":\"a\",\"scores\":[0.5]}\nnot json\n").unwrap();
        let err = read_scores(&path).unwrap_err();
        match err {
            ExplainError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn report_lists_top_sentences_and_map_table() {
        let dataset = generate(&SyntheticConfig {
            news_count: 6,
            fake_count: 3,
            ..SyntheticConfig::default()
        });
        let oracle = synthetic_oracle(&dataset, 7);
        let traces: Vec<ForwardTrace> = dataset
            .news
            .iter()
            .map(|news| {
                let count = news.raw_sentences.len();
                let weights: Vec<f64> = (0..count)
                    .map(|i| (count - i) as f64 / (count * (count + 1) / 2) as f64 * 2.0)
                    .collect();
                trace(&news.id, weights)
            })
            .collect();
        let report = render_explain_report(&dataset, &traces, &oracle, 3).unwrap();
        assert!(report.contains(&format!("[news {}]", dataset.news[0].id)));
        assert!(report.contains("rank = 1 sentence = 0"));
        assert!(report.contains(&dataset.news[0].raw_sentences[0]));
        assert!(report.contains("[map]"));
        assert!(report.contains("k = 5 n = 0 map = "));
        assert!(report.contains("k = 10 n = 4 map = "));
    }
}
