//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid NIfTI file {path}: {reason}")]
    Nifti { path: String, reason: String },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("no voxel at or above the skull threshold ({threshold_hu} HU)")]
    EmptySkull { threshold_hu: f64 },

    #[error("mask is empty")]
    EmptyMask,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("transducer element {id} lies outside the simulation grid")]
    ElementOutsideGrid { id: usize },

    #[error("cannot pack {n} elements of diameter {diameter_mm} mm on a cap of radius {roc_mm} mm")]
    InfeasiblePacking { n: usize, roc_mm: f64, diameter_mm: f64 },

    #[error("no active elements: all rays miss the skull or exceed the incidence limit")]
    NoActiveElements,

    #[error("simulation unstable: non-finite pressure at step {step}")]
    Unstable { step: usize },

    #[error("points per wavelength in water is {ppw:.2}, below the hard minimum of 2")]
    PpwTooLow { ppw: f64 },

    #[error("target {0:?} is outside the grid or the brain region")]
    TargetOutside([f64; 3]),

    #[error("field is identically zero")]
    ZeroField,

    #[error("statistics error: {0}")]
    Statistics(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn nifti(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Nifti { path: path.into(), reason: reason.into() }
    }
}
