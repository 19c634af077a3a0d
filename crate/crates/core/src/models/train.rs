//! Segment-based minibatch training with Adam, validation tracking and
//! early stopping.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::enhance::{norm_gain, InputSelector};
use crate::corpus::{Manifest, Split};
use crate::error::{Error, Result};
use crate::neural::{adam_step, mse, mse_loss, AdamConfig, AdamState, FcnModel, ModelGrads, SignalTensor};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Samples per training segment.
    pub segment_length: usize,
    pub seed: u64,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    /// Minibatches per epoch. By default an epoch draws as many segment
    /// samples as the training set holds.
    pub steps_per_epoch: Option<usize>,
    /// Score validation on this many fixed random segments instead of
    /// whole utterances.
    pub val_segments: Option<usize>,
    /// Train on a seeded subset of at most this many records.
    pub train_records: Option<usize>,
    /// Validate on a seeded subset of at most this many records.
    pub val_records: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 8,
            max_epochs: 200,
            segment_length: 4096,
            seed: 0,
            patience: 10,
            steps_per_epoch: None,
            val_segments: None,
            train_records: None,
            val_records: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &FcnModel) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("segment_length", self.segment_length),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.steps_per_epoch == Some(0) || self.val_segments == Some(0) {
            return Err(Error::Config("steps_per_epoch and val_segments must be positive when set".into()));
        }
        if self.train_records == Some(0) || self.val_records == Some(0) {
            return Err(Error::Config("record limits must be positive when set".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is not a finite non-negative number", self.lr)));
        }
        if self.segment_length < model.max_kernel() {
            return Err(Error::Config(format!(
                "segment_length {} is shorter than the largest kernel {} of {}",
                self.segment_length,
                model.max_kernel(),
                model.name
            )));
        }
        Ok(())
    }
}

/// One training pair in the normalized domain: every channel and the
/// target are scaled by the channel-0 gain.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: SignalTensor,
    pub target: Vec<f64>,
}

impl Example {
    pub fn new(channels: &[&[f64]], target: &[f64]) -> Result<Self> {
        if channels.is_empty() || channels.iter().any(|c| c.len() != target.len()) {
            return Err(Error::Shape("input channels and target must share one length".into()));
        }
        let g = norm_gain(channels[0]);
        let scaled: Vec<Vec<f64>> = channels.iter().map(|c| c.iter().map(|v| v * g).collect()).collect();
        let refs: Vec<&[f64]> = scaled.iter().map(Vec::as_slice).collect();
        Ok(Self {
            input: SignalTensor::stack(&refs)?,
            target: target.iter().map(|v| v * g).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub examples: Vec<Example>,
}

/// Record indices of `split`, reduced to a seeded subset of `limit` while
/// keeping manifest order.
pub fn select_records(manifest: &Manifest, split: Split, limit: Option<usize>, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..manifest.records.len())
        .filter(|&i| manifest.records[i].split == split)
        .collect();
    if let Some(limit) = limit {
        if limit < idx.len() {
            idx.shuffle(&mut rng::stream(seed, &format!("subset/{}", split.name())));
            idx.truncate(limit);
            idx.sort_unstable();
        }
    }
    idx
}

impl Dataset {
    /// Load `selector` inputs with clean-ACM targets for the chosen records.
    pub fn from_manifest(manifest: &Manifest, records: &[usize], selector: InputSelector) -> Result<Self> {
        let examples = records
            .par_iter()
            .map(|&i| {
                let audio = manifest.load_audio(&manifest.records[i])?;
                Example::new(&selector.select(&audio), &audio.clean.samples)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn total_samples(&self) -> usize {
        self.examples.iter().map(Example::len).sum()
    }

    pub fn min_len(&self) -> usize {
        self.examples.iter().map(Example::len).min().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub model: String,
    /// Validation MSE of the starting parameters.
    pub initial_val_mse: f64,
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept; 0 means the starting parameters.
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,val_mse\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{:?},{:?}\n", e.epoch, e.train_mse, e.val_mse));
        }
        out
    }
}

fn segment(ex: &Example, start: usize, len: usize) -> Result<(SignalTensor, SignalTensor)> {
    Ok((
        ex.input.window(start, len)?,
        SignalTensor::from_signal(&ex.target[start..start + len])?,
    ))
}

/// Fixed validation inputs: whole examples or seeded segments.
fn validation_set(val: &Dataset, cfg: &TrainConfig) -> Result<Vec<(SignalTensor, Vec<f64>)>> {
    match cfg.val_segments {
        None => Ok(val.examples.iter().map(|e| (e.input.clone(), e.target.clone())).collect()),
        Some(n) => {
            let mut r = rng::stream(cfg.seed, "validation-segments");
            (0..n)
                .map(|_| {
                    let ex = &val.examples[r.random_range(0..val.len())];
                    let start = r.random_range(0..=ex.len() - cfg.segment_length);
                    let (x, t) = segment(ex, start, cfg.segment_length)?;
                    Ok((x, t.into_data()))
                })
                .collect()
        }
    }
}

/// Sample-weighted MSE over a validation set.
pub fn validation_mse(model: &FcnModel, set: &[(SignalTensor, Vec<f64>)]) -> Result<f64> {
    let per: Vec<(f64, usize)> = set
        .par_iter()
        .map(|(x, t)| {
            let y = model.forward(x)?;
            Ok((mse(y.data(), t) * t.len() as f64, t.len()))
        })
        .collect::<Result<_>>()?;
    let (err, n) = per.iter().fold((0.0, 0usize), |(e, n), &(a, b)| (e + a, n + b));
    Ok(err / n as f64)
}

pub fn train_on(model: FcnModel, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<(FcnModel, TrainHistory)> {
    train_on_observed(model, train, val, cfg, &mut |_| {})
}

/// As [`train_on`], calling `observer` after every epoch.
pub fn train_on_observed(
    mut model: FcnModel,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochStats),
) -> Result<(FcnModel, TrainHistory)> {
    cfg.validate(&model)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    let shortest = train.min_len().min(val.min_len());
    if cfg.segment_length > shortest {
        return Err(Error::Config(format!(
            "segment_length {} exceeds the shortest utterance ({shortest} samples)",
            cfg.segment_length
        )));
    }
    let channels = train.examples[0].input.channels();
    if channels != model.in_channels() || val.examples.iter().chain(&train.examples).any(|e| e.input.channels() != channels) {
        return Err(Error::Shape(format!("{} expects {} input channels", model.name, model.in_channels())));
    }

    let val_set = validation_set(val, cfg)?;
    let initial = validation_mse(&model, &val_set)?;
    let mut history = TrainHistory {
        model: model.name.clone(),
        initial_val_mse: initial,
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_mse: initial,
        stopped_early: false,
    };
    let mut best = model.clone();
    let mut adam = AdamState::new(
        &model,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let steps = cfg
        .steps_per_epoch
        .unwrap_or_else(|| train.total_samples().div_ceil(cfg.batch_size * cfg.segment_length).max(1));
    let mut r = rng::stream(cfg.seed, "segments");
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        let mut loss_sum = 0.0;
        for _ in 0..steps {
            let mut grads = ModelGrads::zeros_like(&model);
            for _ in 0..cfg.batch_size {
                let ex = &train.examples[r.random_range(0..train.len())];
                let start = r.random_range(0..=ex.len() - cfg.segment_length);
                let (x, t) = segment(ex, start, cfg.segment_length)?;
                let (y, caches) = model.forward_train(&x)?;
                let (loss, g) = mse_loss(&y, &t)?;
                loss_sum += loss;
                model.backward_into(&g, &caches, &mut grads)?;
            }
            grads.scale(1.0 / cfg.batch_size as f64);
            adam_step(&mut model, &grads, &mut adam)?;
        }
        let stats = EpochStats {
            epoch,
            train_mse: loss_sum / (steps * cfg.batch_size) as f64,
            val_mse: validation_mse(&model, &val_set)?,
        };
        history.epochs.push(stats);
        observer(&stats);
        // Strict improvement: an equal loss keeps the earlier epoch.
        if stats.val_mse < history.best_val_mse {
            history.best_val_mse = stats.val_mse;
            history.best_epoch = epoch;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                history.stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    Ok((best, history))
}

/// Train `model` on `selector` inputs of the train split, validating on
/// the validation split.
pub fn train_model(
    model: FcnModel,
    manifest: &Manifest,
    selector: InputSelector,
    cfg: &TrainConfig,
) -> Result<(FcnModel, TrainHistory)> {
    train_model_observed(model, manifest, selector, cfg, &mut |_| {})
}

pub fn train_model_observed(
    model: FcnModel,
    manifest: &Manifest,
    selector: InputSelector,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochStats),
) -> Result<(FcnModel, TrainHistory)> {
    cfg.validate(&model)?;
    if selector.channels() != model.in_channels() {
        return Err(Error::Config(format!(
            "{} takes {} channels but the selector provides {}",
            model.name,
            model.in_channels(),
            selector.channels()
        )));
    }
    let train_idx = select_records(manifest, Split::Train, cfg.train_records, cfg.seed);
    let val_idx = select_records(manifest, Split::Validation, cfg.val_records, cfg.seed);
    if train_idx.is_empty() {
        return Err(Error::Config("the manifest has no training records".into()));
    }
    if val_idx.is_empty() {
        return Err(Error::Config("the manifest has no validation records".into()));
    }
    let train = Dataset::from_manifest(manifest, &train_idx, selector)?;
    let val = Dataset::from_manifest(manifest, &val_idx, selector)?;
    train_on_observed(model, &train, &val, cfg, observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::arch::initialized;
    use crate::neural::Activation;

    fn toy_dataset(seed: u64, n: usize, len: usize) -> Dataset {
        let mut r = rng::stream(seed, "toy");
        let examples = (0..n)
            .map(|_| {
                let clean: Vec<f64> = (0..len).map(|i| 0.5 * (i as f64 * r.random_range(0.05..0.2)).sin()).collect();
                let noisy: Vec<f64> = clean.iter().map(|c| c + r.random_range(-0.2..0.2)).collect();
                Example::new(&[&noisy], &clean).unwrap()
            })
            .collect();
        Dataset { examples }
    }

    fn toy_model() -> FcnModel {
        initialized(
            FcnModel::from_spec("toy", &[(1, 4, 9, Activation::LeakyRelu), (4, 1, 9, Activation::Tanh)]).unwrap(),
            1,
        )
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            lr: 1e-2,
            batch_size: 4,
            max_epochs: 15,
            segment_length: 128,
            seed: 3,
            patience: 100,
            steps_per_epoch: Some(10),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_decreases_and_history_is_complete() {
        let (train, val) = (toy_dataset(1, 6, 600), toy_dataset(2, 2, 600));
        let (_, h) = train_on(toy_model(), &train, &val, &cfg()).unwrap();
        assert_eq!(h.epochs.len(), 15);
        assert!(h.best_val_mse < h.initial_val_mse);
        let min = h.epochs.iter().map(|e| e.val_mse).fold(f64::INFINITY, f64::min);
        assert_eq!(h.best_val_mse, min);
        assert!(h.to_csv().starts_with("epoch,train_mse,val_mse\n1,"));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (train, val) = (toy_dataset(1, 3, 300), toy_dataset(2, 1, 300));
        let start = toy_model();
        let c = TrainConfig { lr: 0.0, max_epochs: 3, ..cfg() };
        let (m, h) = train_on(start.clone(), &train, &val, &c).unwrap();
        assert_eq!(m, start);
        // No epoch improves, so the earliest (initial) parameters win the tie.
        assert_eq!(h.best_epoch, 0);
    }

    #[test]
    fn patience_stops_training() {
        let (train, val) = (toy_dataset(1, 3, 300), toy_dataset(2, 1, 300));
        let c = TrainConfig { lr: 0.0, max_epochs: 50, patience: 2, ..cfg() };
        let (_, h) = train_on(toy_model(), &train, &val, &c).unwrap();
        assert_eq!(h.epochs.len(), 2);
        assert!(h.stopped_early);
    }

    #[test]
    fn training_is_deterministic() {
        let (train, val) = (toy_dataset(1, 3, 300), toy_dataset(2, 1, 300));
        let c = TrainConfig { max_epochs: 3, val_segments: Some(3), ..cfg() };
        let a = train_on(toy_model(), &train, &val, &c).unwrap();
        let b = train_on(toy_model(), &train, &val, &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_errors() {
        let (train, val) = (toy_dataset(1, 2, 300), toy_dataset(2, 1, 300));
        let long = TrainConfig { segment_length: 301, ..cfg() };
        assert!(matches!(train_on(toy_model(), &train, &val, &long), Err(Error::Config(_))));
        let short = TrainConfig { segment_length: 8, ..cfg() };
        assert!(matches!(train_on(toy_model(), &train, &val, &short), Err(Error::Config(_))));
        let zero = TrainConfig { batch_size: 0, ..cfg() };
        assert!(matches!(train_on(toy_model(), &train, &val, &zero), Err(Error::Config(_))));
        assert!(train_on(toy_model(), &Dataset::default(), &val, &cfg()).is_err());
    }

    #[test]
    fn defaults() {
        let d = TrainConfig::default();
        assert_eq!((d.lr, d.batch_size, d.segment_length, d.max_epochs, d.patience), (1e-4, 8, 4096, 200, 10));
    }
}
