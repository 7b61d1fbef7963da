use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised while loading or validating a corpus.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest not found at {0}")]
    MissingManifest(PathBuf),
    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("surface {surface}: image for {viz} missing at {path}")]
    MissingImage {
        surface: String,
        viz: String,
        path: PathBuf,
    },
    #[error("surface {surface}: cannot read image header of {path}: {message}")]
    UnreadableImage {
        surface: String,
        path: PathBuf,
        message: String,
    },
    #[error("surface {surface}: {viz} image is {actual_w}x{actual_h}, manifest declares {expected_w}x{expected_h}")]
    DimensionMismatch {
        surface: String,
        viz: String,
        expected_w: u32,
        expected_h: u32,
        actual_w: u32,
        actual_h: u32,
    },
    #[error("{locus}: unknown visualization tag `{tag}`")]
    UnknownVisualization { locus: String, tag: String },
    #[error("{locus}: unknown side `{side}`")]
    UnknownSide { locus: String, side: String },
    #[error("surface {surface}: provenience `{provenience}` is not declared by the manifest")]
    UndeclaredProvenience { surface: String, provenience: String },
    #[error("surface {0} is listed twice")]
    DuplicateSurface(String),
    #[error("surface {surface}: invalid dimensions {width}x{height}")]
    InvalidDimensions {
        surface: String,
        width: u32,
        height: u32,
    },
    #[error("annotation {0} is listed twice")]
    DuplicateAnnotation(String),
    #[error("annotation {record}: no surface {surface}")]
    UnknownSurface { record: String, surface: String },
    #[error("annotation {record}: malformed polygon: {reason}")]
    MalformedPolygon { record: String, reason: String },
    #[error("visualization {viz} missing for surfaces: {}", surfaces.join(", "))]
    VisualizationUnavailable { viz: String, surfaces: Vec<String> },
}

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has zero extent in both axes")]
    ZeroExtent,
    #[error("non-finite coordinate in polygon")]
    NonFinite,
    #[error("box lies entirely outside the {width}x{height} image")]
    OutsideImage { width: u32, height: u32 },
    #[error("centroid ({u}, {v}) lies outside the unit square")]
    CentroidOutOfRange { u: f64, v: f64 },
    #[error("region contains no pixels")]
    EmptyRegion,
    #[error("average normal has zero length")]
    ZeroNormal,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("unsupported checkpoint format version {0}")]
    Version(u32),
    #[error("vocabulary fingerprint mismatch: checkpoint {checkpoint}, expected {expected}")]
    FingerprintMismatch {
        checkpoint: String,
        expected: String,
    },
}

/// Crate-wide error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("vocabulary mismatch: model {model}, data {data}")]
    VocabularyMismatch { model: String, data: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
