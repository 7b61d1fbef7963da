//! Experiment specification, its hash, and the output directory layout.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cuneo_core::corpus::{VisualizationKind, DEFAULT_MIN_INSTANCES};
use cuneo_core::evaluator::DEFAULT_BIN_EDGES;
use cuneo_core::features::TsneConfig;
use cuneo_core::trainer::{FineTuneConfig, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferSpec {
    /// Training combinations. Empty means every single provenience plus all
    /// of them together (held-out ones excluded).
    pub combinations: Vec<BTreeSet<String>>,
    pub held_out: BTreeSet<String>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub corpus: PathBuf,
    pub visualization: VisualizationKind,
    /// Restricts the corpus to these proveniences when set.
    pub proveniences: Option<BTreeSet<String>>,
    pub split_seed: u64,
    pub min_instances: usize,
    pub train: TrainConfig,
    pub fine_tune: Option<FineTuneConfig>,
    /// Slice used by the fine-tune stage; the whole split when absent.
    pub fine_tune_proveniences: Option<BTreeSet<String>>,
    pub repeats: usize,
    pub out: PathBuf,
    pub transfer: TransferSpec,
    pub bin_edges: Vec<usize>,
    pub tsne: TsneConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("corpus"),
            visualization: VisualizationKind::SketchA,
            proveniences: None,
            split_seed: 0,
            min_instances: DEFAULT_MIN_INSTANCES,
            train: TrainConfig::default(),
            fine_tune: None,
            fine_tune_proveniences: None,
            repeats: 5,
            out: PathBuf::from("out"),
            transfer: TransferSpec::default(),
            bin_edges: DEFAULT_BIN_EDGES.to_vec(),
            tsne: TsneConfig::default(),
        }
    }
}

impl ExperimentSpec {
    /// Reads a TOML or JSON spec, chosen by extension (`.json` is JSON,
    /// anything else TOML).
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Spec(format!("cannot read {}: {e}", path.display())))?;
        let spec = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))?
        };
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        if let Some(f) = &self.fine_tune {
            f.validate()?;
        }
        if self.repeats == 0 {
            return Err(CliError::Spec("repeats must be at least 1".into()));
        }
        if self.min_instances == 0 {
            return Err(CliError::Spec("min_instances must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, first 16 hex digits.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }
}

/// `out/{split.json, checkpoints/, reports/, plots/}`.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn split(&self) -> PathBuf {
        self.root.join("split.json")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn plots(&self) -> PathBuf {
        self.root.join("plots")
    }

    pub fn model(&self) -> PathBuf {
        self.checkpoints().join("model.ckpt")
    }

    pub fn fine_tuned(&self) -> PathBuf {
        self.checkpoints().join("fine_tuned.ckpt")
    }

    pub fn viz_model(&self, viz: VisualizationKind) -> PathBuf {
        self.checkpoints().join("viz").join(format!("{viz}.ckpt"))
    }

    pub fn create(&self) -> std::io::Result<()> {
        for d in [self.checkpoints(), self.reports(), self.plots()] {
            fs::create_dir_all(d)?;
        }
        Ok(())
    }
}
