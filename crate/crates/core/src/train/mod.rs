//! Pair-batch SGD training of the joint objective.

mod log;
mod sgd;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_pairs, Clip, Dataset, PairSample, Split};
use crate::error::{Error, Result};
use crate::losses::{overall_loss, LossWeights, PairLoss, VerificationSignal};
use crate::net::SiameseModel;
use crate::tensor::tape::{Gradients, Tape};
use crate::tensor::Tensor;

pub use log::{LogRow, TrainingLog, TRAINING_LOG_HEADER};
pub use sgd::{sgd_step, SgdState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Pairs per iteration.
    pub batch_size: usize,
    pub iterations: usize,
    pub lambda: f64,
    pub pair_loss: PairLoss,
    pub same_ratio: f64,
    pub seed: u64,
    /// Iterations averaged into the logged pair accuracy.
    pub accuracy_window: usize,
    /// Iterations whose pre-update parameters are kept.
    pub snapshot_iterations: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            momentum: 0.9,
            batch_size: 5,
            iterations: 1000,
            lambda: 1.0,
            pair_loss: PairLoss::Verification,
            same_ratio: 0.5,
            seed: 0,
            accuracy_window: 20,
            snapshot_iterations: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.accuracy_window == 0 {
            return Err(Error::Config("accuracy_window must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.same_ratio) {
            return Err(Error::Config(format!("same_ratio {} outside [0, 1]", self.same_ratio)));
        }
        if let PairLoss::Contrastive { margin } = self.pair_loss {
            if !(margin > 0.0 && margin.is_finite()) {
                return Err(Error::Config(format!("contrastive margin must be > 0, got {margin}")));
            }
        }
        LossWeights::new(self.lambda).map(|_| ())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights { lambda: self.lambda }
    }
}

/// Whether the pair term contributes to the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairTerm {
    #[default]
    Weighted,
    /// Computed and reported but left out of the differentiated objective.
    Detached,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub weights: LossWeights,
    pub pair_loss: PairLoss,
    pub pair_term: PairTerm,
}

impl Objective {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Objective {
            weights: cfg.weights(),
            pair_loss: cfg.pair_loss,
            pair_term: PairTerm::Weighted,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PairInput<'a> {
    pub clip_1: &'a Tensor,
    pub label_1: usize,
    pub clip_2: &'a Tensor,
    pub label_2: usize,
}

impl PairInput<'_> {
    pub fn signal(&self) -> VerificationSignal {
        VerificationSignal::from_labels(self.label_1, self.label_2)
    }
}

/// Batch-mean loss components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub ident_1: f64,
    pub ident_2: f64,
    pub pair: f64,
    pub total: f64,
    pub pairs_correct: usize,
    pub pairs: usize,
}

/// Whether a pair is predicted to share a class.
///
/// The verification head decides by argmax. For the contrastive baseline the
/// features must lie closer than half the margin.
pub fn predict_same(
    model: &SiameseModel,
    f1: &Tensor,
    f2: &Tensor,
    pair_loss: PairLoss,
) -> Result<bool> {
    match pair_loss {
        PairLoss::Verification => {
            Ok(model.verify(f1, f2)?.argmax() == VerificationSignal::Same.index())
        }
        PairLoss::Contrastive { margin } => {
            let d2: f64 = f1.data().iter().zip(f2.data()).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok(d2.sqrt() < 0.5 * margin)
        }
    }
}

/// Records the batch on a fresh tape and returns its mean loss together with
/// the gradient of the differentiated objective.
pub fn batch_objective(
    model: &SiameseModel,
    batch: &[PairInput<'_>],
    objective: &Objective,
) -> Result<(BatchLoss, Gradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty pair batch".into()));
    }
    let n = batch.len() as f64;
    let lambda = objective.weights.lambda;
    let mut tape = Tape::new();
    let params = model.register(&mut tape)?;
    let mut terms = Vec::with_capacity(3 * batch.len());
    let (mut s1, mut s2, mut sp) = (0.0, 0.0, 0.0);
    let mut correct = 0;
    for pair in batch {
        let signal = pair.signal();
        let x1 = tape.constant(pair.clip_1.clone())?;
        let x2 = tape.constant(pair.clip_2.clone())?;
        let f1 = model.features_on_tape(&mut tape, &params, x1)?;
        let f2 = model.features_on_tape(&mut tape, &params, x2)?;
        let p1 = model.identify_on_tape(&mut tape, &params, f1)?;
        let p2 = model.identify_on_tape(&mut tape, &params, f2)?;
        let l1 = tape.nll(p1, pair.label_1)?;
        let l2 = tape.nll(p2, pair.label_2)?;
        let lp = match objective.pair_loss {
            PairLoss::Verification => {
                let pv = model.verify_on_tape(&mut tape, &params, f1, f2)?;
                if tape.value(pv).argmax() == signal.index() {
                    correct += 1;
                }
                tape.nll(pv, signal.index())?
            }
            PairLoss::Contrastive { margin } => {
                if predict_same(model, tape.value(f1), tape.value(f2), objective.pair_loss)? == signal.is_same() {
                    correct += 1;
                }
                tape.contrastive(f1, f2, signal.is_same(), margin)?
            }
        };
        s1 += tape.scalar(l1)?;
        s2 += tape.scalar(l2)?;
        sp += tape.scalar(lp)?;
        terms.push((l1, 1.0 / n));
        terms.push((l2, 1.0 / n));
        if objective.pair_term == PairTerm::Weighted {
            terms.push((lp, lambda / n));
        }
    }
    let root = tape.weighted_sum(&terms)?;
    let grads = tape.backward(root)?;
    let (ident_1, ident_2, pair) = (s1 / n, s2 / n, sp / n);
    Ok((
        BatchLoss {
            ident_1,
            ident_2,
            pair,
            total: overall_loss(ident_1, ident_2, pair, objective.weights),
            pairs_correct: correct,
            pairs: batch.len(),
        },
        grads,
    ))
}

/// Loss of a batch without building gradients.
pub fn batch_loss(model: &SiameseModel, batch: &[PairInput<'_>], objective: &Objective) -> Result<BatchLoss> {
    batch_objective(model, batch, objective).map(|(l, _)| l)
}

/// The pairs drawn at `iteration`, indexing into `train_clips`.
pub fn batch_for_iteration(train_clips: &[&Clip], cfg: &TrainConfig, iteration: usize) -> Result<Vec<PairSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(iteration as u64);
    sample_pairs(train_clips, cfg.batch_size, cfg.same_ratio, &mut rng)
}

pub fn pair_inputs<'a>(clips: &[&'a Clip], pairs: &[PairSample]) -> Vec<PairInput<'a>> {
    pairs
        .iter()
        .map(|p| PairInput {
            clip_1: &clips[p.first].tensor,
            label_1: clips[p.first].label,
            clip_2: &clips[p.second].tensor,
            label_2: clips[p.second].label,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: SiameseModel,
    pub log: TrainingLog,
    /// `(iteration, parameters before that iteration's update)`.
    pub snapshots: Vec<(usize, SiameseModel)>,
}

fn check_compatible(model: &SiameseModel, dataset: &Dataset) -> Result<()> {
    let input = model.config().input_shape;
    let n_classes = model.config().n_classes;
    for c in &dataset.clips {
        if c.tensor.shape() != input {
            return Err(Error::Config(format!(
                "clip {} has shape {:?} but the model expects {:?}",
                c.id,
                c.tensor.shape(),
                input
            )));
        }
        if c.label >= n_classes {
            return Err(Error::Config(format!(
                "clip {} label {} exceeds the model's {} classes",
                c.id, c.label, n_classes
            )));
        }
    }
    Ok(())
}

pub fn train(model: SiameseModel, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainingOutcome> {
    train_with(model, dataset, cfg, |_| {})
}

/// As [`train`], calling `observe` after every logged iteration.
pub fn train_with<F: FnMut(&LogRow)>(
    mut model: SiameseModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut observe: F,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    check_compatible(&model, dataset)?;
    let train_clips = dataset.split(Split::Train);
    let objective = Objective::from_config(cfg);
    let mut state = SgdState::zeros_like(model.parameters());
    let mut log = TrainingLog::default();
    let mut snapshots = Vec::new();
    let mut window: std::collections::VecDeque<(usize, usize)> = std::collections::VecDeque::new();
    let (mut win_correct, mut win_total) = (0usize, 0usize);

    for iteration in 0..cfg.iterations {
        if cfg.snapshot_iterations.contains(&iteration) {
            snapshots.push((iteration, model.clone()));
        }
        let pairs = batch_for_iteration(&train_clips, cfg, iteration)?;
        let batch = pair_inputs(&train_clips, &pairs);
        let (loss, grads) = batch_objective(&model, &batch, &objective).map_err(|e| match e {
            Error::NonFinite(detail) => Error::Diverged { iteration, detail },
            other => other,
        })?;
        if !loss.total.is_finite() {
            return Err(Error::Diverged {
                iteration,
                detail: format!(
                    "loss L_I1={} L_I2={} L_V={} L={}",
                    loss.ident_1, loss.ident_2, loss.pair, loss.total
                ),
            });
        }
        let g: Vec<Tensor> = (0..model.parameters().len())
            .map(|id| grads.param(id).expect("every parameter is registered"))
            .collect();
        if let Some(id) = g.iter().position(|t| !t.all_finite()) {
            return Err(Error::Diverged {
                iteration,
                detail: format!("non-finite gradient for {}", model.parameter_names()[id]),
            });
        }
        sgd_step(model.parameters_mut(), &g, &mut state, cfg.learning_rate, cfg.momentum)?;

        window.push_back((loss.pairs_correct, loss.pairs));
        win_correct += loss.pairs_correct;
        win_total += loss.pairs;
        if window.len() > cfg.accuracy_window {
            let (c, t) = window.pop_front().expect("window is non-empty");
            win_correct -= c;
            win_total -= t;
        }
        let row = LogRow {
            iteration,
            ident_1: loss.ident_1,
            ident_2: loss.ident_2,
            pair: loss.pair,
            total: loss.total,
            pair_accuracy: win_correct as f64 / win_total as f64,
        };
        observe(&row);
        log.rows.push(row);
    }
    Ok(TrainingOutcome {
        model,
        log,
        snapshots,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldOutMetrics {
    pub identification_accuracy: f64,
    /// Mean of the same-pair and different-pair accuracies.
    pub pair_accuracy: f64,
    pub same_pair_accuracy: f64,
    pub different_pair_accuracy: f64,
    pub clips: usize,
    pub pairs: usize,
}

/// Identification accuracy over `clips` and verification accuracy over every
/// unordered pair of them.
pub fn held_out_metrics(model: &SiameseModel, clips: &[&Clip], pair_loss: PairLoss) -> Result<HeldOutMetrics> {
    if clips.len() < 2 {
        return Err(Error::InvalidArgument("need at least two held-out clips".into()));
    }
    let mut features = Vec::with_capacity(clips.len());
    let mut hits = 0;
    for c in clips {
        let f = model.forward_features(&c.tensor)?;
        if model.identify(&f)?.argmax() == c.label {
            hits += 1;
        }
        features.push(f);
    }
    let (mut same_ok, mut same_n, mut diff_ok, mut diff_n) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..clips.len() {
        for j in i + 1..clips.len() {
            let truth = clips[i].label == clips[j].label;
            let ok = predict_same(model, &features[i], &features[j], pair_loss)? == truth;
            if truth {
                same_n += 1;
                same_ok += ok as usize;
            } else {
                diff_n += 1;
                diff_ok += ok as usize;
            }
        }
    }
    let rate = |ok: usize, n: usize| if n == 0 { 1.0 } else { ok as f64 / n as f64 };
    let same_pair_accuracy = rate(same_ok, same_n);
    let different_pair_accuracy = rate(diff_ok, diff_n);
    Ok(HeldOutMetrics {
        identification_accuracy: hits as f64 / clips.len() as f64,
        pair_accuracy: 0.5 * (same_pair_accuracy + different_pair_accuracy),
        same_pair_accuracy,
        different_pair_accuracy,
        clips: clips.len(),
        pairs: same_n + diff_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_dataset, SyntheticDatasetSpec};
    use crate::net::NetworkConfig;

    fn small() -> (SiameseModel, Dataset) {
        let spec = SyntheticDatasetSpec {
            clips_per_class: 4,
            background_clips: 4,
            held_out_per_class: 1,
            ..Default::default()
        };
        let ds = generate_synthetic_dataset(&spec).unwrap();
        let model = SiameseModel::build(NetworkConfig::tiny(spec.model_classes()).with_seed(2)).unwrap();
        (model, ds)
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { momentum: 1.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { lambda: -1.0, ..Default::default() },
            TrainConfig { same_ratio: 1.5, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn zero_lambda_leaves_verification_head_unchanged() {
        let (model, ds) = small();
        let cfg = TrainConfig {
            iterations: 5,
            lambda: 0.0,
            learning_rate: 0.01,
            ..Default::default()
        };
        let out = train(model.clone(), &ds, &cfg).unwrap();
        for id in model.verification_head_ids() {
            assert_eq!(out.model.parameters()[id], model.parameters()[id]);
        }
        let [w, _] = model.identification_head_ids();
        assert_ne!(out.model.parameters()[w], model.parameters()[w]);
    }

    #[test]
    fn log_has_one_row_per_iteration() {
        let (model, ds) = small();
        let cfg = TrainConfig {
            iterations: 3,
            snapshot_iterations: vec![0, 2],
            ..Default::default()
        };
        let out = train(model.clone(), &ds, &cfg).unwrap();
        assert_eq!(out.log.rows.len(), 3);
        assert_eq!(out.snapshots.len(), 2);
        assert_eq!(out.snapshots[0].1, model);
        for r in &out.log.rows {
            assert!((r.total - (r.ident_1 + r.ident_2 + r.pair)).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&r.pair_accuracy));
        }
    }

    #[test]
    fn incompatible_dataset_is_a_config_error() {
        let (_, ds) = small();
        let model = SiameseModel::build(NetworkConfig::tiny(3)).unwrap();
        assert!(matches!(train(model, &ds, &TrainConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn nan_parameter_aborts_with_diagnostic() {
        let (mut model, ds) = small();
        let [w, _] = model.identification_head_ids();
        model.parameters_mut()[w].data_mut()[3] = f64::NAN;
        let cfg = TrainConfig {
            iterations: 2,
            ..Default::default()
        };
        match train(model, &ds, &cfg) {
            Err(Error::Diverged { iteration: 0, .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn held_out_metrics_are_rates() {
        let (model, ds) = small();
        let test = ds.split(Split::Test);
        let m = held_out_metrics(&model, &test, PairLoss::Verification).unwrap();
        assert_eq!(m.clips, test.len());
        assert_eq!(m.pairs, test.len() * (test.len() - 1) / 2);
        for v in [m.identification_accuracy, m.pair_accuracy] {
            assert!((0.0..=1.0).contains(&v));
        }
        let c = held_out_metrics(&model, &test, PairLoss::Contrastive { margin: 1.0 }).unwrap();
        assert!((0.0..=1.0).contains(&c.pair_accuracy));
    }
}
