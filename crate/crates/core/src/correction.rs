//! Per-element phase corrections: thickness-derived time delays and
//! time-reversal phase extraction.
//!
//! Sign conventions, fixed here and validated by the "corrections raise
//! target pressure" properties:
//! * delay -> phase is `phi = +2*pi*f0*dt`, so elements with slower
//!   (water-dominated) paths fire with a head start;
//! * time-reversal drive phases negate the recorded arrival phases,
//!   `phi_k = -(psi_k - mean(psi))`.

use crate::acoustic_map::Medium;
use crate::error::{Error, Result};
use crate::solver::{extract_amp_phase, wrap_phase, PointSourceRecording};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMode {
    None,
    Kranion,
    TimeReversal,
}

impl std::fmt::Display for CorrectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CorrectionMode::None => write!(f, "none"),
            CorrectionMode::Kranion => write!(f, "kranion"),
            CorrectionMode::TimeReversal => write!(f, "time_reversal"),
        }
    }
}

/// Per-element correction: delays (kranion mode) and drive phases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectionResult {
    pub mode: CorrectionMode,
    /// Seconds per element; zero for inactive elements and for non-delay
    /// modes.
    pub delays_s: Vec<f64>,
    /// Radians per element, wrapped to (-pi, pi].
    pub phases_rad: Vec<f64>,
    /// Mean skull sound speed used by the delay model, when applicable.
    pub c_skull_mean: Option<f64>,
    /// Elements excluded from the delay offset (ray missed the skull or
    /// incidence too high).
    pub inactive: Vec<bool>,
}

impl CorrectionResult {
    pub fn none(n: usize) -> CorrectionResult {
        CorrectionResult {
            mode: CorrectionMode::None,
            delays_s: vec![0.0; n],
            phases_rad: vec![0.0; n],
            c_skull_mean: None,
            inactive: vec![false; n],
        }
    }
}

/// Thickness-derived time delays:
///
/// ```text
/// t_k  = (R - d_k)/c_water + d_k/c_skull_mean
/// dt_k = t_k - min over active k of t_k
/// ```
///
/// Inactive elements get delay 0 and stay flagged.
pub fn kranion_delays(
    thicknesses_mm: &[f64],
    active: &[bool],
    roc_mm: f64,
    c_water: f64,
    c_skull_mean: f64,
) -> Result<Vec<f64>> {
    if thicknesses_mm.len() != active.len() {
        return Err(Error::InvalidArgument("thickness/active lengths differ".into()));
    }
    if !(c_water > 0.0) || !(c_skull_mean > 0.0) {
        return Err(Error::InvalidArgument("speeds must be positive".into()));
    }
    let roc_m = roc_mm * 1e-3;
    let mut travel = vec![0.0f64; thicknesses_mm.len()];
    let mut t_min = f64::INFINITY;
    for (k, (&d_mm, &act)) in thicknesses_mm.iter().zip(active).enumerate() {
        if !act {
            continue;
        }
        let d = d_mm * 1e-3;
        if !(0.0..roc_m).contains(&d) {
            return Err(Error::InvalidArgument(format!(
                "element {k}: skull thickness {d_mm} mm must satisfy 0 <= d < roc ({roc_mm} mm)"
            )));
        }
        let t = (roc_m - d) / c_water + d / c_skull_mean;
        travel[k] = t;
        t_min = t_min.min(t);
    }
    if !t_min.is_finite() {
        return Err(Error::NoActiveElements);
    }
    let delays = travel
        .iter()
        .zip(active)
        .map(|(&t, &act)| if act { t - t_min } else { 0.0 })
        .collect();
    Ok(delays)
}

/// Delay to drive phase: `phi = 2*pi*f0*dt`, wrapped to (-pi, pi].
pub fn delays_to_phases(delays_s: &[f64], f0: f64) -> Vec<f64> {
    delays_s
        .iter()
        .map(|&d| wrap_phase(2.0 * std::f64::consts::PI * f0 * d))
        .collect()
}

/// Arithmetic mean of the sound speed over skull-mask voxels.
pub fn mean_skull_speed(medium: &Medium) -> Result<f64> {
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (&c, &m) in medium.c.data().iter().zip(medium.skull_mask.data()) {
        if m != 0.0 {
            sum += c as f64;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / count as f64)
}

/// Time-reversal drive phases from virtual-source recordings.
///
/// Per element the phase at every bowl voxel is extracted at `f0`,
/// circular-averaged, and the element phases are re-centered on their
/// circular mean and negated. Amplitudes are untouched.
pub fn time_reversal_phases(recording: &PointSourceRecording, f0: f64) -> Result<Vec<f64>> {
    if recording.element_series.is_empty() {
        return Err(Error::InvalidArgument("recording has no elements".into()));
    }
    let mut element_phases = Vec::with_capacity(recording.element_series.len());
    for (e, series) in recording.element_series.iter().enumerate() {
        if series.is_empty() {
            return Err(Error::InvalidArgument(format!("element {e} has no recorded voxels")));
        }
        let mut sx = 0.0f64;
        let mut sy = 0.0f64;
        for voxel_series in series {
            let (_, phase) = extract_amp_phase(voxel_series, f0, recording.dt)?;
            sx += phase.cos();
            sy += phase.sin();
        }
        element_phases.push(sy.atan2(sx));
    }
    let (mx, my) = element_phases
        .iter()
        .fold((0.0f64, 0.0f64), |(x, y), &p| (x + p.cos(), y + p.sin()));
    let mean = my.atan2(mx);
    Ok(element_phases
        .iter()
        .map(|&psi| wrap_phase(-(psi - mean)))
        .collect())
}
