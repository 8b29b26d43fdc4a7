//! Focal-spot characterization and paired comparison statistics.

use crate::error::{Error, Result};
use crate::solver::PressureField;
use crate::volume::{Volume, WorldPoint};
use serde::{Deserialize, Serialize};

/// Focal quantities of one simulated field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FocalReport {
    /// Maximum intracranial RMS pressure, Pa.
    pub peak_pressure_pa: f64,
    pub peak_location_mm: WorldPoint,
    /// RMS pressure trilinearly sampled at the target, Pa.
    pub target_pressure_pa: f64,
    /// |peak - target| in mm.
    pub focal_shift_mm: f64,
    /// Volume of the -6 dB region connected to the peak, mm^3.
    pub focal_volume_mm3: f64,
    /// Axis-aligned extents of the -6 dB region, mm.
    pub focal_dims_mm: [f64; 3],
}

/// Paired differences between two focal reports (reference first).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldComparison {
    pub peak_diff_pct: f64,
    pub target_diff_pct: f64,
    pub peak_distance_vector_mm: [f64; 3],
    pub peak_distance_mm: f64,
    pub focal_volume_diff_pct: f64,
}

/// Threshold for the focal region as a fraction of peak RMS (-6 dB).
pub const FOCAL_THRESHOLD_FRACTION: f64 = 0.5;

/// Characterize the focal spot of an RMS field.
///
/// The peak is searched within `brain_mask` only; the -6 dB region is the
/// 26-connected component containing the peak among voxels at or above
/// `threshold_fraction * peak`.
pub fn focal_metrics(
    field: &PressureField,
    target: WorldPoint,
    brain_mask: &Volume,
    threshold_fraction: f64,
) -> Result<FocalReport> {
    let rms = &field.rms;
    if !rms.same_grid(brain_mask) {
        return Err(Error::GridMismatch("field and brain mask grids differ".into()));
    }
    if !rms.contains_world(target) {
        return Err(Error::TargetOutside(target.to_array()));
    }
    let mut peak = f64::NEG_INFINITY;
    let mut peak_idx = usize::MAX;
    for (idx, (&v, &m)) in rms.data().iter().zip(brain_mask.data()).enumerate() {
        if m != 0.0 && (v as f64) > peak {
            peak = v as f64;
            peak_idx = idx;
        }
    }
    if peak_idx == usize::MAX {
        return Err(Error::EmptyMask);
    }
    if !(peak > 0.0) {
        return Err(Error::ZeroField);
    }
    let peak_ijk = rms.unravel(peak_idx);
    let peak_location = rms.index_to_world([peak_ijk[0] as f64, peak_ijk[1] as f64, peak_ijk[2] as f64]);
    let target_pressure = rms.sample_trilinear_world(target);

    // flood the 26-connected component of the half-peak region from the peak
    let threshold = (threshold_fraction * peak) as f32;
    let [nx, ny, nz] = rms.dims();
    let mut in_region = vec![false; rms.len()];
    let mut queue = std::collections::VecDeque::new();
    in_region[peak_idx] = true;
    queue.push_back(peak_ijk);
    let mut count = 0usize;
    let mut lo = peak_ijk;
    let mut hi = peak_ijk;
    while let Some([i, j, k]) = queue.pop_front() {
        count += 1;
        for ax in 0..3 {
            lo[ax] = lo[ax].min([i, j, k][ax]);
            hi[ax] = hi[ax].max([i, j, k][ax]);
        }
        for dk in -1isize..=1 {
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    if di == 0 && dj == 0 && dk == 0 {
                        continue;
                    }
                    let (ni, nj, nk) = (i as isize + di, j as isize + dj, k as isize + dk);
                    if ni < 0 || nj < 0 || nk < 0 || ni >= nx as isize || nj >= ny as isize || nk >= nz as isize {
                        continue;
                    }
                    let (ni, nj, nk) = (ni as usize, nj as usize, nk as usize);
                    let idx = rms.index(ni, nj, nk);
                    if !in_region[idx] && rms.data()[idx] >= threshold {
                        in_region[idx] = true;
                        queue.push_back([ni, nj, nk]);
                    }
                }
            }
        }
    }
    let sp = rms.spacing();
    let voxel_volume = sp[0] * sp[1] * sp[2];
    Ok(FocalReport {
        peak_pressure_pa: peak,
        peak_location_mm: peak_location,
        target_pressure_pa: target_pressure,
        focal_shift_mm: peak_location.distance(target),
        focal_volume_mm3: count as f64 * voxel_volume,
        focal_dims_mm: [
            (hi[0] - lo[0] + 1) as f64 * sp[0],
            (hi[1] - lo[1] + 1) as f64 * sp[1],
            (hi[2] - lo[2] + 1) as f64 * sp[2],
        ],
    })
}

/// Paired differences, with `reference` as the denominator.
pub fn compare_fields(reference: &FocalReport, other: &FocalReport) -> Result<FieldComparison> {
    if !(reference.peak_pressure_pa > 0.0) {
        return Err(Error::ZeroField);
    }
    let vec = [
        other.peak_location_mm.x - reference.peak_location_mm.x,
        other.peak_location_mm.y - reference.peak_location_mm.y,
        other.peak_location_mm.z - reference.peak_location_mm.z,
    ];
    Ok(FieldComparison {
        peak_diff_pct: 100.0 * (reference.peak_pressure_pa - other.peak_pressure_pa).abs()
            / reference.peak_pressure_pa,
        target_diff_pct: if reference.target_pressure_pa > 0.0 {
            100.0 * (reference.target_pressure_pa - other.target_pressure_pa).abs()
                / reference.target_pressure_pa
        } else {
            f64::NAN
        },
        peak_distance_vector_mm: vec,
        peak_distance_mm: (vec[0] * vec[0] + vec[1] * vec[1] + vec[2] * vec[2]).sqrt(),
        focal_volume_diff_pct: 100.0 * (reference.focal_volume_mm3 - other.focal_volume_mm3).abs()
            / reference.focal_volume_mm3,
    })
}

/// Pearson product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Statistics("pearson needs two equal-length samples of n >= 2".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Statistics("pearson is undefined for zero variance".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Exact two-sided Wilcoxon signed-rank test by full enumeration of the
/// 2^n sign assignments (mid-ranks for ties). Returns `(W+, p)`.
///
/// Zero differences are dropped first; requires 5..=20 informative pairs.
pub fn wilcoxon_signed_rank(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::Statistics("wilcoxon needs equal-length samples".into()));
    }
    let diffs: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n < 5 {
        return Err(Error::Statistics(format!(
            "wilcoxon needs at least 5 nonzero differences, got {n}"
        )));
    }
    if n > 20 {
        return Err(Error::Statistics(format!(
            "exact wilcoxon enumeration supports at most 20 pairs, got {n}"
        )));
    }
    // mid-ranks of |d|
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diffs[a].abs().partial_cmp(&diffs[b].abs()).unwrap());
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = mid;
        }
        i = j + 1;
    }
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, &r)| r)
        .sum();
    let rank_sum: f64 = ranks.iter().sum();
    let mu = rank_sum / 2.0;
    let observed_dev = (w_plus - mu).abs();

    // enumerate all sign assignments; two-sided p by distance from the mean
    let total = 1u64 << n;
    let mut extreme = 0u64;
    for pattern in 0..total {
        let mut w = 0.0f64;
        for (bit, &r) in ranks.iter().enumerate() {
            if pattern & (1 << bit) != 0 {
                w += r;
            }
        }
        if (w - mu).abs() >= observed_dev - 1e-12 {
            extreme += 1;
        }
    }
    Ok((w_plus, extreme as f64 / total as f64))
}
