//! PLANE: point-language model with dual prompts for 3D point-cloud anomaly
//! detection.
//!
//! The crate is organized around a small set of subsystems:
//!
//! - [`geom3d`]: point-cloud primitives (neighbor search, sampling, normals,
//!   rotations, normalization) and PLY/XYZ I/O.
//! - [`ano3d`]: pseudo-anomaly generation (bulge, concavity, hole) with
//!   ground-truth masks.
//! - [`dataset`]: synthetic shape corpus, real-dataset ingestion, manifests.
//! - [`autodiff`]: dense f64 tensors with reverse-mode differentiation, Adam,
//!   and a flat checkpoint format.
//! - [`plm`]: frozen toy point-language model (text encoder + point encoder
//!   with intermediate-layer taps).
//! - [`dualprompt`]: static/dynamic dual prompts, DPCM, PCFA adapters, and the
//!   cosine-softmax anomaly score map.
//! - [`train`]: focal/dice losses, two-group Adam wiring, the training loop.
//! - [`evalkit`]: AUROC / AP / F1-max / AU-PRO metrics and report assembly.
//! - [`cli`]: the `plane` command-line entry point.

pub mod ano3d;
pub mod autodiff;
pub mod cli;
pub mod dataset;
pub mod dualprompt;
pub mod evalkit;
pub mod geom3d;
pub mod plm;
pub mod train;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("insufficient points: requested {requested}, cloud has {available}")]
    InsufficientPoints { requested: usize, available: usize },

    #[error("degenerate neighborhood: covariance rank < 2")]
    DegenerateNeighborhood,

    #[error("defect generation failed after {attempts} attempts: {reason}")]
    DefectGeneration { attempts: usize, reason: String },

    #[error("shape mismatch: {left:?} vs {right:?} in {op}")]
    ShapeMismatch {
        op: String,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("parse error in {path}: {reason}")]
    Parse { path: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("no samples found in {0}")]
    NoSamples(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
