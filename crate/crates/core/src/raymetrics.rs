//! Per-element ray analysis through the skull: entry/exit points, thickness,
//! incidence angle, per-ray SDR and the aggregate SDR / ST / NAE metrics.

use crate::error::{Error, Result};
use crate::transducer::ArrayTransducer;
use crate::volume::{Volume, WorldPoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Elements whose ray meets the skull surface at or above this incidence
/// angle are inactive.
pub const ACTIVE_INCIDENCE_LIMIT_DEG: f64 = 20.0;

/// Default ray marching step, about half the simulation voxel.
pub const DEFAULT_RAY_STEP_MM: f64 = 0.25;

/// Planning-software reference speeds (m/s); kept as named constants for
/// reports. The geometric metrics below do not use them.
pub const KRANION_AVERAGE_BONE_SPEED_M_S: f64 = 2705.0;
pub const KRANION_CORTICAL_BONE_SPEED_M_S: f64 = 3103.0;

/// Result of tracing one element's ray toward the focus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElementRecord {
    pub element_id: usize,
    /// First skull crossing along the ray, when the ray hits the skull.
    pub entry: Option<WorldPoint>,
    /// Last skull crossing before the target.
    pub exit: Option<WorldPoint>,
    /// |exit - entry| in mm; 0 when the ray misses.
    pub thickness_mm: f64,
    /// Angle between the ray and the surface normal at entry, degrees.
    pub incidence_deg: Option<f64>,
    /// Middle-tertile mean over profile max, in [0, 1]; None when the ray
    /// misses the skull or the profile is degenerate.
    pub sdr: Option<f64>,
    pub active: bool,
    /// CT samples strictly between entry and exit, position-ordered.
    pub hu_profile: Vec<f64>,
}

/// Aggregate skull metrics over the active elements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkullMetrics {
    pub sdr_mean: f64,
    pub st_mean_mm: f64,
    pub nae: usize,
    pub per_element: Vec<ElementRecord>,
}

/// Shared ray-tracing context: the skull mask, the CT and a Gaussian-smoothed
/// copy of the mask (sigma = 1 voxel) for stable surface normals.
pub struct RayTracer {
    mask: Volume,
    ct: Volume,
    smoothed: Volume,
}

impl RayTracer {
    pub fn new(mask: &Volume, ct: &Volume) -> Result<RayTracer> {
        if !mask.same_grid(ct) {
            return Err(Error::GridMismatch("skull mask and CT grids differ".into()));
        }
        if !mask.is_mask() {
            return Err(Error::InvalidVolume("skull mask must contain only 0 and 1".into()));
        }
        Ok(RayTracer {
            mask: mask.clone(),
            ct: ct.clone(),
            smoothed: gaussian_smooth(mask, 1.0),
        })
    }

    /// March from `origin` toward `target`, sampling the mask trilinearly at
    /// `step_mm`. Entry is the first 0.5-crossing, exit the last crossing
    /// before the target; crossings are refined by linear interpolation
    /// between samples.
    pub fn trace(&self, origin: WorldPoint, target: WorldPoint, step_mm: f64, element_id: usize) -> Result<ElementRecord> {
        let length = origin.distance(target);
        if !(length > 0.0) {
            return Err(Error::InvalidArgument("ray origin and target coincide".into()));
        }
        if !(step_mm > 0.0) {
            return Err(Error::InvalidArgument("ray step must be positive".into()));
        }
        let dir = [
            (target.x - origin.x) / length,
            (target.y - origin.y) / length,
            (target.z - origin.z) / length,
        ];
        let at = |t: f64| {
            WorldPoint::new(origin.x + dir[0] * t, origin.y + dir[1] * t, origin.z + dir[2] * t)
        };
        let n_steps = (length / step_mm).floor() as usize;
        let mut t_entry: Option<f64> = None;
        let mut t_exit: Option<f64> = None;
        let mut prev_v = self.mask.sample_trilinear_world(at(0.0));
        let mut prev_t = 0.0;
        if prev_v >= 0.5 {
            t_entry = Some(0.0);
        }
        for s in 1..=n_steps {
            let t = s as f64 * step_mm;
            let v = self.mask.sample_trilinear_world(at(t));
            if prev_v < 0.5 && v >= 0.5 {
                let tc = prev_t + (0.5 - prev_v) / (v - prev_v) * (t - prev_t);
                if t_entry.is_none() {
                    t_entry = Some(tc);
                }
            } else if prev_v >= 0.5 && v < 0.5 {
                let tc = prev_t + (prev_v - 0.5) / (prev_v - v) * (t - prev_t);
                t_exit = Some(tc);
            }
            prev_v = v;
            prev_t = t;
        }
        let Some(te) = t_entry else {
            return Ok(ElementRecord {
                element_id,
                entry: None,
                exit: None,
                thickness_mm: 0.0,
                incidence_deg: None,
                sdr: None,
                active: false,
                hu_profile: Vec::new(),
            });
        };
        // ray still inside the mask at the target: exit at the target
        let tx = t_exit.filter(|&t| t > te).unwrap_or(length);
        let entry = at(te);
        let exit = at(tx);
        let thickness = tx - te;

        // outward-pointing is -gradient of the smoothed mask; the incidence
        // angle is between the ray direction and the inward normal
        let g = self.smoothed_gradient(entry);
        let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        let incidence = if gn > 1e-12 {
            let cosang = (dir[0] * g[0] + dir[1] * g[1] + dir[2] * g[2]) / gn;
            cosang.clamp(-1.0, 1.0).acos().to_degrees()
        } else {
            90.0
        };

        let mut hu_profile = Vec::new();
        let mut s = (te / step_mm).floor() as usize + 1;
        while (s as f64) * step_mm < tx {
            let t = s as f64 * step_mm;
            if t > te {
                hu_profile.push(self.ct.sample_trilinear_world(at(t)));
            }
            s += 1;
        }
        let sdr = ray_sdr(&hu_profile).ok();
        Ok(ElementRecord {
            element_id,
            entry: Some(entry),
            exit: Some(exit),
            thickness_mm: thickness,
            incidence_deg: Some(incidence),
            sdr,
            active: incidence < ACTIVE_INCIDENCE_LIMIT_DEG,
            hu_profile,
        })
    }

    /// Central-difference gradient of the smoothed mask at a world point,
    /// per-mm components.
    fn smoothed_gradient(&self, p: WorldPoint) -> [f64; 3] {
        let sp = self.smoothed.spacing();
        let mut g = [0.0; 3];
        for ax in 0..3 {
            let h = 0.5 * sp[ax];
            let mut plus = p;
            let mut minus = p;
            match ax {
                0 => {
                    plus.x += h;
                    minus.x -= h;
                }
                1 => {
                    plus.y += h;
                    minus.y -= h;
                }
                _ => {
                    plus.z += h;
                    minus.z -= h;
                }
            }
            g[ax] = (self.smoothed.sample_trilinear_world(plus)
                - self.smoothed.sample_trilinear_world(minus))
                / (2.0 * h);
        }
        g
    }
}

/// Separable Gaussian smoothing with sigma in voxels, kernel radius 3 sigma.
fn gaussian_smooth(vol: &Volume, sigma_voxels: f64) -> Volume {
    let radius = (3.0 * sigma_voxels).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for o in -radius..=radius {
        kernel.push((-0.5 * (o as f64 / sigma_voxels).powi(2)).exp());
    }
    let ksum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= ksum;
    }
    let [nx, ny, nz] = vol.dims();
    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut cur: Vec<f64> = vol.data().iter().map(|&v| v as f64).collect();
    for axis in 0..3 {
        let n_ax = vol.dims()[axis];
        let mut next = vec![0.0f64; cur.len()];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let pos = [i as isize, j as isize, k as isize];
                    let mut acc = 0.0;
                    for (t, &w) in kernel.iter().enumerate() {
                        let o = t as isize - radius;
                        let mut q = pos;
                        q[axis] = (q[axis] + o).clamp(0, n_ax as isize - 1);
                        acc += w * cur[idx(q[0] as usize, q[1] as usize, q[2] as usize)];
                    }
                    next[idx(i, j, k)] = acc;
                }
            }
        }
        cur = next;
    }
    Volume::new(vol.dims(), vol.spacing(), vol.origin(), cur.iter().map(|&v| v as f32).collect())
        .expect("smoothed grid is valid")
}

/// Trace a single ray; builds a fresh context per call. Prefer [`RayTracer`]
/// when tracing many rays on the same grids.
pub fn trace_ray(
    skull_mask: &Volume,
    ct: &Volume,
    origin: WorldPoint,
    target: WorldPoint,
    step_mm: f64,
) -> Result<ElementRecord> {
    RayTracer::new(skull_mask, ct)?.trace(origin, target, step_mm, 0)
}

/// SDR of one HU profile: mean of the middle tertile (position-ordered) over
/// the profile maximum, clamped to [0, 1].
pub fn ray_sdr(hu_profile: &[f64]) -> Result<f64> {
    if hu_profile.is_empty() {
        return Err(Error::InvalidArgument("SDR needs a non-empty HU profile".into()));
    }
    let max = hu_profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::InvalidArgument(format!("SDR needs a positive profile maximum, got {max}")));
    }
    let n = hu_profile.len();
    let lo = n / 3;
    let hi = (2 * n).div_ceil(3);
    let mid = &hu_profile[lo..hi.max(lo + 1).min(n)];
    let mean = mid.iter().sum::<f64>() / mid.len() as f64;
    Ok((mean / max).clamp(0.0, 1.0))
}

/// Per-element ray metrics for a posed array, aggregated over the active
/// elements.
pub fn compute_skull_metrics(
    arr: &ArrayTransducer,
    skull_mask: &Volume,
    ct: &Volume,
    focus: WorldPoint,
    step_mm: f64,
) -> Result<SkullMetrics> {
    let tracer = RayTracer::new(skull_mask, ct)?;
    let per_element: Vec<ElementRecord> = arr
        .elements()
        .par_iter()
        .map(|e| tracer.trace(e.center, focus, step_mm, e.id))
        .collect::<Result<Vec<_>>>()?;
    summarize(per_element)
}

fn summarize(per_element: Vec<ElementRecord>) -> Result<SkullMetrics> {
    let active: Vec<&ElementRecord> = per_element.iter().filter(|r| r.active).collect();
    if active.is_empty() {
        return Err(Error::NoActiveElements);
    }
    let nae = active.len();
    let st_mean = active.iter().map(|r| r.thickness_mm).sum::<f64>() / nae as f64;
    let sdrs: Vec<f64> = active.iter().filter_map(|r| r.sdr).collect();
    let sdr_mean = if sdrs.is_empty() { 0.0 } else { sdrs.iter().sum::<f64>() / sdrs.len() as f64 };
    Ok(SkullMetrics { sdr_mean, st_mean_mm: st_mean, nae, per_element })
}

/// Count active elements for a posed array; used by the pose search.
pub fn count_active(arr: &ArrayTransducer, tracer: &RayTracer, focus: WorldPoint, step_mm: f64) -> usize {
    arr.elements()
        .par_iter()
        .map(|e| {
            tracer
                .trace(e.center, focus, step_mm, e.id)
                .map(|r| usize::from(r.active))
                .unwrap_or(0)
        })
        .sum()
}

/// Fraction of elements whose active flags agree between two plans.
pub fn element_overlap(a: &SkullMetrics, b: &SkullMetrics) -> Result<f64> {
    if a.per_element.len() != b.per_element.len() {
        return Err(Error::InvalidArgument(format!(
            "element count mismatch: {} vs {}",
            a.per_element.len(),
            b.per_element.len()
        )));
    }
    let mut agree = 0usize;
    for (ra, rb) in a.per_element.iter().zip(&b.per_element) {
        if ra.element_id != rb.element_id {
            return Err(Error::InvalidArgument(format!(
                "element id mismatch: {} vs {}",
                ra.element_id, rb.element_id
            )));
        }
        if ra.active == rb.active {
            agree += 1;
        }
    }
    Ok(agree as f64 / a.per_element.len() as f64)
}
