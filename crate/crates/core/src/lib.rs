//! Cuneiform sign classification toolkit.
//!
//! Loads polygon-annotated tablet corpora, turns annotations into square
//! 224×224 crops, trains and fine-tunes residual classifiers, and evaluates
//! them along visualization, provenience, frequency and tablet-position axes.

pub mod augment;
pub mod checkpoint;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod features;
pub mod fixture;
pub mod geometry;
pub mod inference;
pub mod model;
pub mod nn;
pub mod raster;
pub mod trainer;

pub use error::{Error, Result};
