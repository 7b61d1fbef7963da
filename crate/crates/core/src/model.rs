//! Trained classifier handle and the inference interface shared with stubs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::augment::{prepare_eval, Normalization};
use crate::corpus::{Vocabulary, VisualizationKind};
use crate::dataset::CropSample;
use crate::error::{Error, Result};
use crate::geometry::CROP_SIZE;
use crate::nn::{loss::softmax, Architecture, ResNet, Tensor, FEATURE_DIM};
use crate::raster::ImageF32;

/// Samples per forward pass during inference.
pub const INFERENCE_BATCH: usize = 32;

/// Provenance of a model, carried into checkpoints and service metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub visualization: Option<VisualizationKind>,
    pub train_proveniences: BTreeSet<String>,
    /// `"random"` or `"pretrained:<path>"`.
    pub init: String,
}

/// Anything that maps prepared 224×224 batches to class logits.
pub trait Classifier: Send + Sync {
    fn vocabulary(&self) -> &Vocabulary;

    fn normalization(&self) -> Normalization {
        Normalization::default()
    }

    /// Logits for a batch of prepared crops, `[n, n_classes, 1, 1]`.
    fn logits(&self, batch: &Tensor) -> Result<Tensor>;

    fn n_classes(&self) -> usize {
        self.vocabulary().len()
    }

    fn fingerprint(&self) -> String {
        self.vocabulary().fingerprint()
    }

    fn info(&self) -> ModelInfo {
        ModelInfo::default()
    }
}

/// Residual network plus the vocabulary it was trained on.
pub struct Model {
    pub net: ResNet,
    pub vocabulary: Vocabulary,
    pub normalization: Normalization,
    pub info: ModelInfo,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("architecture", &self.net.architecture)
            .field("classes", &self.vocabulary.len())
            .field("info", &self.info)
            .finish_non_exhaustive()
    }
}

impl Model {
    pub fn new(
        architecture: Architecture,
        vocabulary: Vocabulary,
        normalization: Normalization,
        seed: u64,
    ) -> Self {
        let net = ResNet::new(architecture, vocabulary.len(), seed);
        Self {
            net,
            vocabulary,
            normalization,
            info: ModelInfo {
                init: "random".into(),
                ..ModelInfo::default()
            },
        }
    }

    pub fn architecture(&self) -> Architecture {
        self.net.architecture
    }

    /// Logits for prepared crops.
    pub fn predict_logits(&self, batch: &Tensor) -> Result<Tensor> {
        check_batch(batch)?;
        Ok(self.net.logits(batch))
    }

    /// Penultimate activations, one `FEATURE_DIM` row per sample.
    pub fn extract_features(&self, batch: &Tensor) -> Result<Vec<Vec<f32>>> {
        check_batch(batch)?;
        let f = self.net.features(batch);
        debug_assert_eq!(f.c, FEATURE_DIM);
        Ok(f.rows())
    }

    /// Eval-prepares raw crops and returns their feature rows.
    pub fn features_of(&self, crops: &[&ImageF32]) -> Result<Vec<Vec<f32>>> {
        let mut rows = Vec::with_capacity(crops.len());
        for chunk in crops.chunks(INFERENCE_BATCH) {
            let batch = self.prepare(chunk)?;
            rows.extend(self.extract_features(&batch)?);
        }
        Ok(rows)
    }

    fn prepare(&self, crops: &[&ImageF32]) -> Result<Tensor> {
        let prepared: Vec<ImageF32> = crops
            .iter()
            .map(|c| prepare_eval(c, &self.normalization))
            .collect();
        Tensor::from_images(&prepared)
    }
}

impl Classifier for Model {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    fn normalization(&self) -> Normalization {
        self.normalization
    }

    fn logits(&self, batch: &Tensor) -> Result<Tensor> {
        self.predict_logits(batch)
    }

    fn info(&self) -> ModelInfo {
        self.info.clone()
    }
}

fn check_batch(batch: &Tensor) -> Result<()> {
    if batch.c != 3 || batch.h != CROP_SIZE || batch.w != CROP_SIZE {
        return Err(Error::Shape {
            expected: format!("[n, 3, {CROP_SIZE}, {CROP_SIZE}]"),
            actual: format!("{:?}", batch.shape()),
        });
    }
    Ok(())
}

/// Eval-prepares raw crops and runs them through `classifier` in batches.
/// Returns one logit row per crop.
pub fn classify_crops<C: Classifier + ?Sized>(
    classifier: &C,
    crops: &[&ImageF32],
) -> Result<Vec<Vec<f32>>> {
    let norm = classifier.normalization();
    let mut rows = Vec::with_capacity(crops.len());
    for chunk in crops.chunks(INFERENCE_BATCH) {
        let prepared: Vec<ImageF32> = chunk.iter().map(|c| prepare_eval(c, &norm)).collect();
        let batch = Tensor::from_images(&prepared)?;
        rows.extend(classifier.logits(&batch)?.rows());
    }
    Ok(rows)
}

pub fn classify_samples<C: Classifier + ?Sized>(
    classifier: &C,
    samples: &[CropSample],
) -> Result<Vec<Vec<f32>>> {
    let crops: Vec<&ImageF32> = samples.iter().map(|s| &s.pixels).collect();
    classify_crops(classifier, &crops)
}

/// Softmax confidences of one logit row.
pub fn confidences(logits: &[f32]) -> Vec<f64> {
    softmax(logits)
}

/// Constant-logit classifier: every class receives the same score.
pub struct UniformClassifier {
    pub vocabulary: Vocabulary,
}

impl Classifier for UniformClassifier {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    fn logits(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(Tensor::zeros(batch.n, self.vocabulary.len(), 1, 1))
    }
}

/// Classifier returning the same fixed logit row for every input.
pub struct FixedClassifier {
    pub vocabulary: Vocabulary,
    pub row: Vec<f32>,
}

impl Classifier for FixedClassifier {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    fn logits(&self, batch: &Tensor) -> Result<Tensor> {
        let data = (0..batch.n).flat_map(|_| self.row.iter().copied()).collect();
        Tensor::from_vec(batch.n, self.row.len(), 1, 1, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        Model::new(
            Architecture::Compact,
            Vocabulary::new(["A", "B", "C"]),
            Normalization::default(),
            1,
        )
    }

    #[test]
    fn rejects_wrong_crop_size() {
        let m = model();
        let t = Tensor::zeros(1, 3, 100, 100);
        assert!(matches!(m.predict_logits(&t), Err(Error::Shape { .. })));
        assert!(m.extract_features(&t).is_err());
    }

    #[test]
    fn duplicated_rows_give_identical_outputs() {
        let m = model();
        let mut img = ImageF32::zeros(CROP_SIZE, CROP_SIZE);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = ((i * 7919) % 255) as f32 / 255.0;
        }
        let rows = classify_crops(&m, &[&img, &img]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], rows[1]);
        assert_eq!(rows[0].len(), 3);
        let f = m.features_of(&[&img, &img]).unwrap();
        assert_eq!(f[0].len(), FEATURE_DIM);
        assert_eq!(f[0], f[1]);
    }
}
