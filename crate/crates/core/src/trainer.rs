//! Training and fine-tuning loops.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{prepare_train, AugmentPolicy, Normalization};
use crate::checkpoint::load_backbone;
use crate::corpus::{CorpusManifest, DatasetSplit, VisualizationKind, Vocabulary};
use crate::dataset::{load_crops, CropSample};
use crate::error::{Error, Result};
use crate::evaluator::{check_combinations, evaluate_samples, transfer_matrix, EvalReport, TransferMatrix};
use crate::model::Model;
use crate::nn::{cosine_lr, softmax_cross_entropy, AdamW, AdamWConfig, Architecture, Tensor};
use crate::raster::ImageF32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub optimizer: AdamWConfig,
    pub augment: AugmentPolicy,
    pub normalization: Normalization,
    pub architecture: Architecture,
    /// Backbone weights to start from. Random initialization when absent or
    /// when the file does not exist.
    pub pretrained: Option<PathBuf>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            lr: 1e-3,
            lr_min: 1e-5,
            weight_decay: 1e-5,
            optimizer: AdamWConfig::default(),
            augment: AugmentPolicy::default(),
            normalization: Normalization::default(),
            architecture: Architecture::default(),
            pretrained: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_schedule(self.epochs, self.batch_size)?;
        if !(self.lr > 0.0 && self.lr_min > 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.lr_min > self.lr {
            return Err(Error::Config(format!(
                "lr_min {} exceeds lr {}",
                self.lr_min, self.lr
            )));
        }
        self.augment.validate()?;
        self.normalization.validate()
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        cosine_lr(epoch, self.epochs, self.lr, self.lr_min)
    }
}

/// Continued training without augmentation at a lower learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FineTuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub weight_decay: f64,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            lr_start: 5e-4,
            lr_end: 1e-7,
            weight_decay: 1e-5,
            optimizer: AdamWConfig::default(),
            seed: 0,
        }
    }
}

impl FineTuneConfig {
    pub fn validate(&self) -> Result<()> {
        check_schedule(self.epochs, self.batch_size)?;
        if !(self.lr_end > 0.0 && self.lr_end < self.lr_start) {
            return Err(Error::Config(format!(
                "need 0 < lr_end < lr_start, got {} and {}",
                self.lr_end, self.lr_start
            )));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        cosine_lr(epoch, self.epochs, self.lr_start, self.lr_end)
    }
}

fn check_schedule(epochs: usize, batch_size: usize) -> Result<()> {
    if epochs == 0 || batch_size == 0 {
        return Err(Error::Config("epochs and batch_size must be positive".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    /// Accuracy on the (possibly augmented) batches seen during the epoch.
    pub train_top1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Train,
    FineTune,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub kind: RunKind,
    pub epochs: Vec<EpochStats>,
    /// Eval-mode top-1 on the unaugmented training set after the last epoch.
    pub final_train_top1: f64,
    pub test: Option<EvalSummary>,
    pub wall_clock_secs: f64,
    pub init: String,
    pub config: serde_json::Value,
    pub checkpoint: Option<PathBuf>,
    pub train_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub top1: f64,
    pub top5: f64,
    pub n: usize,
}

impl From<&EvalReport> for EvalSummary {
    fn from(r: &EvalReport) -> Self {
        Self {
            top1: r.top1,
            top5: r.top5,
            n: r.n,
        }
    }
}

impl TrainReport {
    pub fn lr_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.lr).collect()
    }
}

/// Seed for the augmentation stream of one sample in one epoch.
fn sample_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((epoch as u64).to_le_bytes());
    h.update((index as u64).to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

struct Schedule<'a> {
    epochs: usize,
    batch_size: usize,
    seed: u64,
    augment: AugmentPolicy,
    lr: &'a dyn Fn(usize) -> f64,
    optimizer: AdamWConfig,
    weight_decay: f64,
}

fn run_epochs(model: &mut Model, samples: &[CropSample], s: &Schedule<'_>) -> Vec<EpochStats> {
    let mut opt = AdamW::new(s.optimizer, s.weight_decay);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(s.seed);
    let norm = model.normalization;
    let mut stats = Vec::with_capacity(s.epochs);
    for epoch in 0..s.epochs {
        let lr = (s.lr)(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let (seed, augment) = (s.seed, s.augment);
        for batch in order.chunks(s.batch_size) {
            let prepared: Vec<ImageF32> = batch
                .par_iter()
                .map(|&i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, epoch, i));
                    prepare_train(&samples[i].pixels, &augment, &norm, &mut rng)
                })
                .collect();
            let labels: Vec<usize> = batch.iter().map(|&i| samples[i].label).collect();
            let x = Tensor::from_images(&prepared).expect("crops share one size");
            let logits = model.net.forward_train(x);
            let (loss, grad) = softmax_cross_entropy(&logits, &labels);
            for (row, &y) in logits.rows().iter().zip(&labels) {
                if crate::evaluator::top_k_hits(row, y, 1) {
                    correct += 1;
                }
            }
            loss_sum += loss * labels.len() as f64;
            model.net.zero_grad();
            model.net.backward(grad);
            opt.step(&mut model.net, lr);
        }
        let n = samples.len() as f64;
        let e = EpochStats {
            epoch,
            lr,
            loss: loss_sum / n,
            train_top1: correct as f64 / n,
        };
        tracing::info!(epoch, lr, loss = e.loss, train_top1 = e.train_top1, "epoch");
        stats.push(e);
    }
    stats
}

fn check_labels(vocabulary: &Vocabulary, samples: &[CropSample]) -> Result<()> {
    if let Some(s) = samples.iter().find(|s| s.label >= vocabulary.len()) {
        return Err(Error::VocabularyMismatch {
            model: vocabulary.fingerprint(),
            data: format!("label {} of {}", s.label, s.meta.id),
        });
    }
    Ok(())
}

/// Trains a fresh model on prepared crops. `test` (if any) is evaluated after
/// the last epoch.
pub fn train_on_samples(
    vocabulary: &Vocabulary,
    train: &[CropSample],
    test: Option<&[CropSample]>,
    config: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("training set".into()));
    }
    check_labels(vocabulary, train)?;
    let start = Instant::now();
    let mut model = Model::new(
        config.architecture,
        vocabulary.clone(),
        config.normalization,
        config.seed,
    );
    if let Some(path) = &config.pretrained {
        if path.exists() {
            load_backbone(&mut model, path)?;
            model.info.init = format!("pretrained:{}", path.display());
        } else {
            tracing::warn!(path = %path.display(), "pretrained weights not found, using random init");
        }
    }
    model.info.visualization = train.first().map(|s| s.meta.visualization);
    model.info.train_proveniences = train.iter().map(|s| s.meta.provenience.clone()).collect();
    let lr = |e: usize| config.lr_at(e);
    let epochs = run_epochs(
        &mut model,
        train,
        &Schedule {
            epochs: config.epochs,
            batch_size: config.batch_size,
            seed: config.seed,
            augment: config.augment,
            lr: &lr,
            optimizer: config.optimizer,
            weight_decay: config.weight_decay,
        },
    );
    let report = finish(
        &model,
        RunKind::Train,
        epochs,
        train,
        test,
        start,
        serde_json::to_value(config)?,
    )?;
    Ok((model, report))
}

/// Continues training `model` on `train` with augmentation disabled.
pub fn fine_tune_on_samples(
    mut model: Model,
    train: &[CropSample],
    test: Option<&[CropSample]>,
    config: &FineTuneConfig,
) -> Result<(Model, TrainReport)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("fine-tune set".into()));
    }
    check_labels(&model.vocabulary, train)?;
    let start = Instant::now();
    let lr = |e: usize| config.lr_at(e);
    let epochs = run_epochs(
        &mut model,
        train,
        &Schedule {
            epochs: config.epochs,
            batch_size: config.batch_size,
            seed: config.seed,
            augment: AugmentPolicy::disabled(),
            lr: &lr,
            optimizer: config.optimizer,
            weight_decay: config.weight_decay,
        },
    );
    let report = finish(
        &model,
        RunKind::FineTune,
        epochs,
        train,
        test,
        start,
        serde_json::to_value(config)?,
    )?;
    Ok((model, report))
}

fn finish(
    model: &Model,
    kind: RunKind,
    epochs: Vec<EpochStats>,
    train: &[CropSample],
    test: Option<&[CropSample]>,
    start: Instant,
    config: serde_json::Value,
) -> Result<TrainReport> {
    let final_train_top1 = evaluate_samples(model, train)?.top1;
    let test = match test {
        Some(t) if !t.is_empty() => Some(EvalSummary::from(&evaluate_samples(model, t)?)),
        _ => None,
    };
    Ok(TrainReport {
        kind,
        epochs,
        final_train_top1,
        test,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        init: model.info.init.clone(),
        config,
        checkpoint: None,
        train_size: train.len(),
    })
}

/// Loads the split's crops from `manifest` and trains on them.
pub fn train(
    manifest: &CorpusManifest,
    split: &DatasetSplit,
    viz: VisualizationKind,
    config: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    let (train, test) = load_split(manifest, split, viz, None)?;
    train_on_samples(&manifest.vocabulary, &train, Some(&test), config)
}

/// Fine-tunes on the split, optionally restricted to some proveniences.
pub fn fine_tune(
    model: Model,
    manifest: &CorpusManifest,
    split: &DatasetSplit,
    viz: VisualizationKind,
    proveniences: Option<&BTreeSet<String>>,
    config: &FineTuneConfig,
) -> Result<(Model, TrainReport)> {
    if model.vocabulary.fingerprint() != manifest.vocabulary.fingerprint() {
        return Err(Error::VocabularyMismatch {
            model: model.vocabulary.fingerprint(),
            data: manifest.vocabulary.fingerprint(),
        });
    }
    let (train, test) = load_split(manifest, split, viz, proveniences)?;
    fine_tune_on_samples(model, &train, Some(&test), config)
}

/// Trains on the `train` samples whose provenience is in `combination` and
/// reports test top-1 per provenience of `test`.
pub fn transfer_run_on_samples(
    vocabulary: &Vocabulary,
    train: &[CropSample],
    test: &[CropSample],
    combination: &BTreeSet<String>,
    config: &TrainConfig,
) -> Result<(Model, BTreeMap<String, f64>)> {
    let subset: Vec<CropSample> = train
        .iter()
        .filter(|s| combination.contains(&s.meta.provenience))
        .cloned()
        .collect();
    let (model, _) = train_on_samples(vocabulary, &subset, None, config)?;
    let report = evaluate_samples(&model, test)?;
    let per = report
        .per_provenience
        .iter()
        .map(|(p, a)| (p.clone(), a.top1))
        .collect();
    Ok((model, per))
}

/// Transfer matrix over `combinations`, one training run each.
pub fn transfer(
    manifest: &CorpusManifest,
    split: &DatasetSplit,
    viz: VisualizationKind,
    combinations: &[BTreeSet<String>],
    held_out: &BTreeSet<String>,
    config: &TrainConfig,
) -> Result<TransferMatrix> {
    check_combinations(combinations, held_out)?;
    let (train, test) = load_split(manifest, split, viz, None)?;
    transfer_matrix(combinations, held_out, |combo| {
        transfer_run_on_samples(&manifest.vocabulary, &train, &test, combo, config).map(|(_, per)| per)
    })
}

/// Train and test crops of a split, optionally restricted to proveniences.
pub fn load_split(
    manifest: &CorpusManifest,
    split: &DatasetSplit,
    viz: VisualizationKind,
    proveniences: Option<&BTreeSet<String>>,
) -> Result<(Vec<CropSample>, Vec<CropSample>)> {
    let view = crate::corpus::filter(manifest, proveniences, viz)?;
    let train = load_crops(&view.restrict(&split.train_set()), viz)?;
    let test = load_crops(&view.restrict(&split.test_set()), viz)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_published_regime() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.batch_size), (30, 64));
        assert_eq!((c.lr, c.lr_min, c.weight_decay), (1e-3, 1e-5, 1e-5));
        assert!(c.augment.enabled);
        let f = FineTuneConfig::default();
        assert_eq!((f.lr_start, f.lr_end, f.epochs), (5e-4, 1e-7, 10));
        assert_eq!(c.lr_at(0), 1e-3);
        assert!((c.lr_at(29) - 1e-5).abs() <= 1e-8);
        assert_eq!(f.lr_at(0), 5e-4);
        assert!((f.lr_at(9) - 1e-7).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = TrainConfig {
            lr_min: 1e-2,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        c.lr_min = 1e-5;
        c.epochs = 0;
        assert!(c.validate().is_err());
        let f = FineTuneConfig {
            lr_end: 1e-3,
            ..FineTuneConfig::default()
        };
        assert!(f.validate().is_err());
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let v = Vocabulary::new(["A"]);
        let err = train_on_samples(&v, &[], None, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset(_)));
    }

    #[test]
    fn config_round_trips_through_toml_with_defaults() {
        let c: TrainConfig = toml::from_str("epochs = 3\narchitecture = \"compact\"").unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.architecture, Architecture::Compact);
        assert_eq!(c.lr, 1e-3);
        let s = toml::to_string(&c).unwrap();
        let back: TrainConfig = toml::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
