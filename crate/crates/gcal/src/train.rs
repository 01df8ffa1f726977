//! Training loop, optimizers, evaluation metrics, and multi-run experiments.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{split_dataset, Dataset, Label};
use crate::encoder::EncoderError;
use crate::graph::{build_graph, HeteroGraph};
use crate::model::{forward_news, ModelConfig, ModelParams};
use crate::parallel;
use crate::tensor::{save_checkpoint, CheckpointError, DenseMatrix, ParamSet, Tape};

/// Parameter magnitude beyond which the next forward pass can overflow.
const DIVERGENCE_LIMIT: f64 = 1e150;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged (non-finite values) during epoch {epoch}")]
    Divergence {
        epoch: usize,
        last_good: Box<ParamSet>,
    },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Hyperparameters for one experiment. The model shape nests under `model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// News per gradient-accumulation batch.
    pub batch_size: usize,
    /// Independent train/evaluate repetitions aggregated by `run_experiment`.
    pub runs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    /// Re-split the data each run instead of only re-seeding the init.
    pub resplit_per_run: bool,
    pub train_fraction: f64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0002,
            epochs: 30,
            seed: 7,
            optimizer: OptimizerKind::Adam,
            batch_size: 8,
            runs: 5,
            patience: 5,
            resplit_per_run: true,
            train_fraction: 0.75,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Preset with the higher learning rate used for gossip-style corpora.
    pub fn gossip() -> Self {
        Self {
            learning_rate: 0.0015,
            ..Self::default()
        }
    }

    pub fn validate(&self) {
        assert!(
            self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            "learning rate must be finite and non-negative"
        );
        assert!(self.epochs >= 1, "need at least one epoch");
        assert!(self.batch_size >= 1, "batch size must be positive");
        assert!(self.runs >= 1, "need at least one run");
        assert!(
            self.train_fraction > 0.0 && self.train_fraction < 1.0,
            "train_fraction must be in (0, 1)"
        );
        self.model.validate();
    }
}

/// Adam state or plain SGD, stepping a [`ParamSet`] from its gradient slots.
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
    first_moment: Vec<DenseMatrix>,
    second_moment: Vec<DenseMatrix>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, set: &ParamSet) -> Self {
        let shapes: Vec<DenseMatrix> = set
            .iter()
            .map(|(_, p)| DenseMatrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: shapes.clone(),
            second_moment: shapes,
        }
    }

    /// Applies one update from the accumulated gradients, leaving them intact.
    pub fn step(&mut self, set: &mut ParamSet) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (_, param) in set.iter_mut() {
                    let lr = self.learning_rate;
                    for (value, grad) in param
                        .value
                        .values_mut()
                        .iter_mut()
                        .zip(param.gradient.values())
                    {
                        *value -= lr * grad;
                    }
                }
            }
            OptimizerKind::Adam => {
                self.step_count += 1;
                let t = self.step_count as i32;
                let bias1 = 1.0 - self.beta1.powi(t);
                let bias2 = 1.0 - self.beta2.powi(t);
                for (index, (_, param)) in set.iter_mut().enumerate() {
                    let m = self.first_moment[index].values_mut();
                    let v = self.second_moment[index].values_mut();
                    for ((value, &grad), (m, v)) in param
                        .value
                        .values_mut()
                        .iter_mut()
                        .zip(param.gradient.values())
                        .zip(m.iter_mut().zip(v.iter_mut()))
                    {
                        *m = self.beta1 * *m + (1.0 - self.beta1) * grad;
                        *v = self.beta2 * *v + (1.0 - self.beta2) * grad * grad;
                        let m_hat = *m / bias1;
                        let v_hat = *v / bias2;
                        *value -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                    }
                }
            }
        }
    }
}

/// Final parameters plus the loss history of one training run.
pub struct TrainOutcome {
    pub set: ParamSet,
    pub model: ModelParams,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub epochs_run: usize,
    pub early_stopped: bool,
}

/// Trains on `train_set`, optionally early-stopping against `val_set` and
/// writing per-epoch checkpoints into `checkpoint_dir`. Fully deterministic
/// for a given config and datasets.
pub fn train(
    config: &TrainConfig,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    config.validate();
    let (mut set, model) = ModelParams::init(
        &config.model,
        train_set.vocabulary.len(),
        config.seed,
    );
    let graph = build_graph(train_set);
    let val_graph = val_set.map(build_graph);
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, &set);

    let mut order: Vec<usize> = (0..train_set.news.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e3779b97f4a7c15));

    let mut last_good = set.clone();
    let mut train_losses = Vec::new();
    let mut val_losses = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut epochs_since_best = 0usize;
    let mut early_stopped = false;

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let sample_seed = config.seed ^ ((epoch as u64) << 32);
            let results = parallel::map_collect(batch.to_vec(), |idx| {
                let news = &train_set.news[idx];
                let mut tape = Tape::new();
                let fwd = forward_news(
                    &mut tape,
                    &set,
                    &model,
                    &config.model,
                    train_set,
                    &graph,
                    sample_seed.wrapping_add(idx as u64),
                    news,
                )?;
                let loss = tape.value(fwd.loss).get(0, 0);
                let grads = tape.backward(fwd.loss).expect("loss is scalar");
                Ok::<_, EncoderError>((loss, grads))
            });
            set.zero_gradients();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for result in results {
                let (loss, grads) = result?;
                batch_loss += loss * scale;
                loss_sum += loss;
                set.accumulate(&grads, scale);
            }
            optimizer.step(&mut set);
            let finite = batch_loss.is_finite()
                && set.iter().all(|(_, p)| {
                    p.value
                        .values()
                        .iter()
                        .all(|v| v.is_finite() && v.abs() < DIVERGENCE_LIMIT)
                });
            if !finite {
                if let Some(dir) = checkpoint_dir {
                    save_checkpoint(&dir.join("final.ckpt"), &last_good)?;
                }
                return Err(TrainError::Divergence {
                    epoch,
                    last_good: Box::new(last_good),
                });
            }
        }
        train_losses.push(loss_sum / train_set.news.len() as f64);
        last_good = set.clone();
        if let Some(dir) = checkpoint_dir {
            save_checkpoint(&dir.join(format!("epoch_{epoch:03}.ckpt")), &set)?;
        }

        if let (Some(val), Some(val_graph)) = (val_set, val_graph.as_ref()) {
            let val_loss = mean_loss(&set, &model, &config.model, val, val_graph, config.seed)?;
            val_losses.push(val_loss);
            if val_loss < best_val {
                best_val = val_loss;
                epochs_since_best = 0;
            } else {
                epochs_since_best += 1;
                if epochs_since_best >= config.patience {
                    early_stopped = true;
                }
            }
        }

        if early_stopped {
            break;
        }
    }

    if let Some(dir) = checkpoint_dir {
        save_checkpoint(&dir.join("final.ckpt"), &set)?;
    }
    Ok(TrainOutcome {
        set,
        model,
        epochs_run: train_losses.len(),
        train_losses,
        val_losses,
        early_stopped,
    })
}

/// Mean forward loss over a dataset, without gradients.
pub fn mean_loss(
    set: &ParamSet,
    model: &ModelParams,
    config: &ModelConfig,
    dataset: &Dataset,
    graph: &HeteroGraph,
    seed: u64,
) -> Result<f64, TrainError> {
    let losses = parallel::map_collect(dataset.news.iter().collect::<Vec<_>>(), |news| {
        let mut tape = Tape::new();
        let fwd = forward_news(&mut tape, set, model, config, dataset, graph, seed, news)?;
        Ok::<_, EncoderError>(tape.value(fwd.loss).get(0, 0))
    });
    let mut sum = 0.0;
    for loss in losses {
        sum += loss?;
    }
    Ok(sum / dataset.news.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

/// Classification quality with fake as the positive class.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub confusion: Confusion,
}

impl std::fmt::Display for Metrics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "acc {:.3} pre {:.3} rec {:.3} f1 {:.3} auc {:.3}",
            self.accuracy, self.precision, self.recall, self.f1, self.auc
        )
    }
}

/// Metrics from per-news labels and fake-class scores. Predicted class is the
/// argmax, i.e. fake when the fake score is at least 0.5.
pub fn metrics_from_scores(labels: &[Label], fake_scores: &[f64]) -> Metrics {
    assert_eq!(labels.len(), fake_scores.len());
    assert!(!labels.is_empty(), "cannot evaluate an empty set");
    let mut confusion = Confusion {
        true_positive: 0,
        false_positive: 0,
        true_negative: 0,
        false_negative: 0,
    };
    for (label, &score) in labels.iter().zip(fake_scores) {
        let predicted_fake = score >= 0.5;
        match (predicted_fake, label) {
            (true, Label::Fake) => confusion.true_positive += 1,
            (true, Label::True) => confusion.false_positive += 1,
            (false, Label::True) => confusion.true_negative += 1,
            (false, Label::Fake) => confusion.false_negative += 1,
        }
    }
    let total = labels.len() as f64;
    let tp = confusion.true_positive as f64;
    let fp = confusion.false_positive as f64;
    let tn = confusion.true_negative as f64;
    let fn_ = confusion.false_negative as f64;
    let accuracy = (tp + tn) / total;
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let auc = rank_sum_auc(labels, fake_scores);
    let metrics = Metrics {
        accuracy,
        precision,
        recall,
        f1,
        auc,
        confusion,
    };
    metrics.assert_consistent(labels.len());
    metrics
}

impl Metrics {
    /// Cross-checks the definitional arithmetic; panics on drift.
    fn assert_consistent(&self, total: usize) {
        let c = &self.confusion;
        assert_eq!(
            c.true_positive + c.false_positive + c.true_negative + c.false_negative,
            total
        );
        let accuracy = (c.true_positive + c.true_negative) as f64 / total as f64;
        assert!((self.accuracy - accuracy).abs() < 1e-12);
        if self.precision + self.recall > 0.0 {
            let harmonic =
                2.0 * self.precision * self.recall / (self.precision + self.recall);
            assert!((self.f1 - harmonic).abs() < 1e-12);
        }
        for value in [self.accuracy, self.precision, self.recall, self.f1, self.auc] {
            assert!((0.0..=1.0).contains(&value));
        }
    }
}

/// Mann-Whitney AUC over the fake-class score, with midranks for ties.
/// Degenerate single-class sets score 0.5.
fn rank_sum_auc(labels: &[Label], fake_scores: &[f64]) -> f64 {
    let positives = labels.iter().filter(|l| **l == Label::Fake).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return 0.5;
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| {
        fake_scores[a]
            .partial_cmp(&fake_scores[b])
            .expect("scores are finite")
    });
    let mut ranks = vec![0.0; labels.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && fake_scores[order[j + 1]] == fake_scores[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    let positive_rank_sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(l, _)| **l == Label::Fake)
        .map(|(_, r)| r)
        .sum();
    let u = positive_rank_sum - (positives * (positives + 1)) as f64 / 2.0;
    u / (positives as f64 * negatives as f64)
}

/// Runs every news item through the model and scores the predictions.
pub fn evaluate(
    set: &ParamSet,
    model: &ModelParams,
    config: &ModelConfig,
    dataset: &Dataset,
    graph: &HeteroGraph,
    seed: u64,
) -> Result<Metrics, TrainError> {
    let scored = parallel::map_collect(dataset.news.iter().collect::<Vec<_>>(), |news| {
        let mut tape = Tape::new();
        let fwd = forward_news(&mut tape, set, model, config, dataset, graph, seed, news)?;
        let prediction = tape.value(fwd.prediction);
        Ok::<_, EncoderError>((news.label, prediction.get(0, 0)))
    });
    let mut labels = Vec::with_capacity(dataset.news.len());
    let mut scores = Vec::with_capacity(dataset.news.len());
    for item in scored {
        let (label, fake_score) = item?;
        labels.push(label);
        scores.push(fake_score);
    }
    Ok(metrics_from_scores(&labels, &scores))
}

/// One train/evaluate repetition inside an experiment.
pub struct RunOutcome {
    pub run: usize,
    pub init_seed: u64,
    pub split_seed: u64,
    pub metrics: Metrics,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub epochs_run: usize,
}

/// Mean and standard deviation of each metric over runs.
pub struct ExperimentOutcome {
    pub runs: Vec<RunOutcome>,
    pub mean: [f64; 5],
    pub stddev: [f64; 5],
}

pub const METRIC_NAMES: [&str; 5] = ["accuracy", "precision", "recall", "f1", "auc"];

fn metric_values(m: &Metrics) -> [f64; 5] {
    [m.accuracy, m.precision, m.recall, m.f1, m.auc]
}

/// Splits, trains, and evaluates `config.runs` times, varying the init seed
/// per run and the split seed too when `resplit_per_run` is set.
pub fn run_experiment(
    config: &TrainConfig,
    dataset: &Dataset,
) -> Result<ExperimentOutcome, TrainError> {
    config.validate();
    let mut runs = Vec::with_capacity(config.runs);
    for run in 0..config.runs {
        let init_seed = config.seed.wrapping_add(run as u64);
        let split_seed = if config.resplit_per_run {
            config.seed.wrapping_add(run as u64)
        } else {
            config.seed
        };
        let (train_split, val_split) = split_dataset(dataset, config.train_fraction, split_seed);
        let run_config = TrainConfig {
            seed: init_seed,
            ..config.clone()
        };
        let outcome = train(&run_config, &train_split, Some(&val_split), None)?;
        let val_graph = build_graph(&val_split);
        let metrics = evaluate(
            &outcome.set,
            &outcome.model,
            &config.model,
            &val_split,
            &val_graph,
            init_seed,
        )?;
        runs.push(RunOutcome {
            run,
            init_seed,
            split_seed,
            metrics,
            train_losses: outcome.train_losses,
            val_losses: outcome.val_losses,
            epochs_run: outcome.epochs_run,
        });
    }

    let n = runs.len() as f64;
    let mut mean = [0.0; 5];
    for run in &runs {
        for (slot, value) in mean.iter_mut().zip(metric_values(&run.metrics)) {
            *slot += value / n;
        }
    }
    let mut stddev = [0.0; 5];
    for run in &runs {
        for ((slot, value), center) in stddev
            .iter_mut()
            .zip(metric_values(&run.metrics))
            .zip(mean)
        {
            *slot += (value - center) * (value - center) / n;
        }
    }
    for slot in &mut stddev {
        *slot = slot.sqrt();
    }
    Ok(ExperimentOutcome { runs, mean, stddev })
}

/// Key-value report for one experiment: config echo, per-run loss curves and
/// metrics, and the aggregate summary. Deterministic for a given outcome.
pub fn render_experiment_report(config: &TrainConfig, outcome: &ExperimentOutcome) -> String {
    let mut out = String::new();
    let mut push = |line: String| {
        out.push_str(&line);
        out.push('\n');
    };
    push("[config]".into());
    push(format!("learning_rate = {}", config.learning_rate));
    push(format!("epochs = {}", config.epochs));
    push(format!("seed = {}", config.seed));
    push(format!("optimizer = {:?}", config.optimizer).to_lowercase());
    push(format!("batch_size = {}", config.batch_size));
    push(format!("runs = {}", config.runs));
    push(format!("patience = {}", config.patience));
    push(format!("resplit_per_run = {}", config.resplit_per_run));
    push(format!("train_fraction = {}", config.train_fraction));
    push(format!("model.d = {}", config.model.d));
    push(format!("model.d_word = {}", config.model.d_word));
    push(format!("model.d_g = {}", config.model.d_g));
    push(format!("model.k_a = {}", config.model.k_a));
    push(format!("model.ablation = {:?}", config.model.ablation).to_lowercase());
    for run in &outcome.runs {
        push(format!("[run {}]", run.run));
        push(format!("init_seed = {}", run.init_seed));
        push(format!("split_seed = {}", run.split_seed));
        push(format!("epochs_run = {}", run.epochs_run));
        push(format!(
            "train_loss = {}",
            join_losses(&run.train_losses)
        ));
        push(format!("val_loss = {}", join_losses(&run.val_losses)));
        for (name, value) in METRIC_NAMES.iter().zip(metric_values(&run.metrics)) {
            push(format!("{name} = {value:.3}"));
        }
        let c = &run.metrics.confusion;
        push(format!(
            "confusion = tp {} fp {} tn {} fn {}",
            c.true_positive, c.false_positive, c.true_negative, c.false_negative
        ));
    }
    push("[aggregate]".into());
    for (i, name) in METRIC_NAMES.iter().enumerate() {
        push(format!("{name}_mean = {:.3}", outcome.mean[i]));
        push(format!("{name}_std = {:.3}", outcome.stddev[i]));
    }
    out
}

fn join_losses(losses: &[f64]) -> String {
    losses
        .iter()
        .map(|l| format!("{l:.6}"))
        .collect::<Vec<_>>()
        .join(", ")
}
