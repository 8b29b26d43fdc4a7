//! Transcranial focused ultrasound planning and simulation toolkit.
//!
//! The pipeline converts a CT head volume into a patient-specific acoustic
//! model, plans a hemispherical-array sonication (skull metrics, element
//! activation, phase correction), simulates the 3D pressure field with a
//! k-space pseudospectral solver, and quantitatively compares plans and
//! fields produced from two CT volumes (e.g. a real CT against one
//! synthesized from MR).
//!
//! Modules follow the pipeline stages:
//!
//! * [`volume`] — voxel volumes, NIfTI I/O, resampling, skull-mask extraction
//! * [`acoustic_map`] — HU → porosity → sound speed / density / absorption
//! * [`transducer`] — hemispherical array construction, posing, bowl rasterization
//! * [`raymetrics`] — per-element SDR / skull thickness / incidence analysis
//! * [`solver`] — k-space pseudospectral wave solver with PML and RMS recording
//! * [`correction`] — thickness-delay and time-reversal phase corrections
//! * [`metrics`] — focal-spot characterization and paired comparison statistics
//! * [`phantom`] — deterministic synthetic skull phantoms for end-to-end runs

pub mod acoustic_map;
pub mod correction;
pub mod error;
pub mod metrics;
pub mod phantom;
pub mod raymetrics;
pub mod solver;
pub mod transducer;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{Volume, WorldPoint};
