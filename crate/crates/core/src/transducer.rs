//! Hemispherical multi-element array: construction, rigid posing about the
//! focus, bowl rasterization onto the simulation grid and pose optimization.

use crate::error::{Error, Result};
use crate::raymetrics;
use crate::volume::{Volume, WorldPoint};
use serde::{Deserialize, Serialize};

/// Golden angle in radians, `pi * (3 - sqrt(5))`.
const GOLDEN_ANGLE: f64 = 2.399963229728653;

/// One array element: center on the sphere of radius `roc` about the focus,
/// unit normal pointing at the focus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: usize,
    pub center: WorldPoint,
    pub normal: [f64; 3],
}

/// Hemispherical bowl array. All element centers lie at distance `roc_mm`
/// from the geometric focus.
#[derive(Debug, Clone)]
pub struct ArrayTransducer {
    roc_mm: f64,
    elem_diameter_mm: f64,
    focus: WorldPoint,
    elements: Vec<Element>,
}

/// Rigid pose about the focus: roll about the pole axis, then tilt about
/// world x, then tilt about world y; the array focus moves to `focus`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub tilt_x_deg: f64,
    pub tilt_y_deg: f64,
    pub roll_deg: f64,
    pub focus: WorldPoint,
}

impl Pose {
    pub fn identity(focus: WorldPoint) -> Pose {
        Pose { tilt_x_deg: 0.0, tilt_y_deg: 0.0, roll_deg: 0.0, focus }
    }

    pub fn validate(&self, tilt_limit_deg: f64) -> Result<()> {
        if self.tilt_x_deg.abs() > tilt_limit_deg || self.tilt_y_deg.abs() > tilt_limit_deg {
            return Err(Error::InvalidArgument(format!(
                "pose tilt ({}, {}) exceeds the {tilt_limit_deg} degree limit",
                self.tilt_x_deg, self.tilt_y_deg
            )));
        }
        if !(self.roll_deg > -180.0 && self.roll_deg <= 180.0) {
            return Err(Error::InvalidArgument(format!(
                "roll {} must lie in (-180, 180]",
                self.roll_deg
            )));
        }
        if !self.focus.is_finite() {
            return Err(Error::InvalidArgument("pose focus must be finite".into()));
        }
        Ok(())
    }
}

type Mat3 = [[f64; 3]; 3];

fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

fn rot_x(rad: f64) -> Mat3 {
    let (s, c) = rad.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(rad: f64) -> Mat3 {
    let (s, c) = rad.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(rad: f64) -> Mat3 {
    let (s, c) = rad.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Rotation taking unit vector `from` onto unit vector `to` (Rodrigues).
fn rotation_between(from: [f64; 3], to: [f64; 3]) -> Mat3 {
    let cross = [
        from[1] * to[2] - from[2] * to[1],
        from[2] * to[0] - from[0] * to[2],
        from[0] * to[1] - from[1] * to[0],
    ];
    let dot: f64 = from.iter().zip(&to).map(|(a, b)| a * b).sum();
    let s2 = cross.iter().map(|c| c * c).sum::<f64>();
    if s2 < 1e-30 {
        if dot > 0.0 {
            return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        }
        // antiparallel: rotate pi about any perpendicular axis
        let axis = if from[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let mut perp = [
            from[1] * axis[2] - from[2] * axis[1],
            from[2] * axis[0] - from[0] * axis[2],
            from[0] * axis[1] - from[1] * axis[0],
        ];
        let n = perp.iter().map(|p| p * p).sum::<f64>().sqrt();
        perp.iter_mut().for_each(|p| *p /= n);
        let [x, y, z] = perp;
        return [
            [2.0 * x * x - 1.0, 2.0 * x * y, 2.0 * x * z],
            [2.0 * x * y, 2.0 * y * y - 1.0, 2.0 * y * z],
            [2.0 * x * z, 2.0 * y * z, 2.0 * z * z - 1.0],
        ];
    }
    // R = I + [v]x + [v]x^2 * (1 - dot) / |v|^2
    let vx: Mat3 = [
        [0.0, -cross[2], cross[1]],
        [cross[2], 0.0, -cross[0]],
        [-cross[1], cross[0], 0.0],
    ];
    let vx2 = mat_mul(&vx, &vx);
    let k = (1.0 - dot) / s2;
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (if r == c { 1.0 } else { 0.0 }) + vx[r][c] + vx2[r][c] * k;
        }
    }
    out
}

impl ArrayTransducer {
    pub fn roc_mm(&self) -> f64 {
        self.roc_mm
    }

    pub fn elem_diameter_mm(&self) -> f64 {
        self.elem_diameter_mm
    }

    pub fn focus(&self) -> WorldPoint {
        self.focus
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Smallest pairwise center distance, by brute-force scan.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..self.elements.len() {
            for b in (a + 1)..self.elements.len() {
                best = best.min(self.elements[a].center.distance(self.elements[b].center));
            }
        }
        best
    }
}

/// Build the bowl array on a hemispherical cap with a deterministic
/// golden-angle spiral layout, focus at the origin, cap opening toward -z
/// (elements sit above the focus, normals point down at it).
///
/// After laying out the spiral the whole array is rigidly rotated about the
/// focus so the summed element normals align exactly with the pole axis;
/// the correction angle is O(1/n).
pub fn make_hemisphere_array(n: usize, roc_mm: f64, elem_diameter_mm: f64) -> Result<ArrayTransducer> {
    if n < 1 {
        return Err(Error::InvalidArgument("element count must be at least 1".into()));
    }
    if !(roc_mm > 0.0) || !(elem_diameter_mm > 0.0) {
        return Err(Error::InvalidArgument("radius of curvature and element diameter must be positive".into()));
    }
    // spherical-cap area of one element equals pi * (d/2)^2; require the
    // spiral to stay under ~70% packing on the hemisphere
    let hemisphere_area = 2.0 * std::f64::consts::PI * roc_mm * roc_mm;
    let needed = n as f64 * std::f64::consts::PI * (elem_diameter_mm / 2.0).powi(2);
    if needed > 0.7 * hemisphere_area {
        return Err(Error::InfeasiblePacking { n, roc_mm, diameter_mm: elem_diameter_mm });
    }

    let mut elements = Vec::with_capacity(n);
    if n == 1 {
        elements.push(Element {
            id: 0,
            center: WorldPoint::new(0.0, 0.0, roc_mm),
            normal: [0.0, 0.0, -1.0],
        });
    } else {
        for i in 0..n {
            // uniform-area spiral over the cap theta in [0, 90 deg]
            let cos_t = 1.0 - (i as f64 + 0.5) / n as f64;
            let sin_t = (1.0 - cos_t * cos_t).sqrt();
            let phi = i as f64 * GOLDEN_ANGLE;
            let dir = [sin_t * phi.cos(), sin_t * phi.sin(), cos_t];
            elements.push(Element {
                id: i,
                center: WorldPoint::new(roc_mm * dir[0], roc_mm * dir[1], roc_mm * dir[2]),
                normal: [-dir[0], -dir[1], -dir[2]],
            });
        }
        // align the summed normal with the pole axis
        let mut m = [0.0f64; 3];
        for e in &elements {
            for ax in 0..3 {
                m[ax] += e.normal[ax];
            }
        }
        let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
        let m_hat = [m[0] / norm, m[1] / norm, m[2] / norm];
        let rot = rotation_between(m_hat, [0.0, 0.0, -1.0]);
        for e in &mut elements {
            let c = mat_vec(&rot, e.center.to_array());
            e.center = WorldPoint::from_array(c);
            e.normal = mat_vec(&rot, e.normal);
        }
    }

    let arr = ArrayTransducer {
        roc_mm,
        elem_diameter_mm,
        focus: WorldPoint::new(0.0, 0.0, 0.0),
        elements,
    };
    // invariants: centers on the sphere, no element overlap
    for e in arr.elements() {
        let r = e.center.distance(arr.focus);
        if (r - roc_mm).abs() > 1e-6 * roc_mm {
            return Err(Error::InvalidArgument(format!(
                "element {} is off the sphere: |center - focus| = {r}",
                e.id
            )));
        }
    }
    if n > 1 && arr.min_pairwise_distance() <= elem_diameter_mm {
        return Err(Error::InfeasiblePacking { n, roc_mm, diameter_mm: elem_diameter_mm });
    }
    Ok(arr)
}

/// Apply a rigid pose: roll about the pole axis, tilt about world x, tilt
/// about world y (all through the focus), then place the focus at
/// `pose.focus`. Distances to the focus are preserved.
pub fn pose_array(arr: &ArrayTransducer, pose: &Pose) -> ArrayTransducer {
    let d = std::f64::consts::PI / 180.0;
    let rot = mat_mul(
        &rot_y(pose.tilt_y_deg * d),
        &mat_mul(&rot_x(pose.tilt_x_deg * d), &rot_z(pose.roll_deg * d)),
    );
    let old_focus = arr.focus.to_array();
    let new_focus = pose.focus.to_array();
    let elements = arr
        .elements
        .iter()
        .map(|e| {
            let rel = [
                e.center.x - old_focus[0],
                e.center.y - old_focus[1],
                e.center.z - old_focus[2],
            ];
            let r = mat_vec(&rot, rel);
            Element {
                id: e.id,
                center: WorldPoint::new(r[0] + new_focus[0], r[1] + new_focus[1], r[2] + new_focus[2]),
                normal: mat_vec(&rot, e.normal),
            }
        })
        .collect();
    ArrayTransducer {
        roc_mm: arr.roc_mm,
        elem_diameter_mm: arr.elem_diameter_mm,
        focus: pose.focus,
        elements,
    }
}

/// Rasterized bowl sources: per-voxel element labels on a simulation grid.
#[derive(Debug, Clone)]
pub struct SourceGrid {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    /// 0 = no source, otherwise element id + 1.
    labels: Vec<u32>,
    /// Linear voxel indices per element, in ascending order.
    element_voxels: Vec<Vec<usize>>,
}

impl SourceGrid {
    /// Build a source grid directly from per-element voxel lists (used for
    /// point/plane drives in tests and the free-field paths).
    pub fn from_voxel_lists(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        element_voxels: Vec<Vec<usize>>,
    ) -> Result<SourceGrid> {
        let n = dims[0] * dims[1] * dims[2];
        let mut labels = vec![0u32; n];
        for (e, voxels) in element_voxels.iter().enumerate() {
            if voxels.is_empty() {
                return Err(Error::InvalidArgument(format!("element {e} has no voxels")));
            }
            for &v in voxels {
                if v >= n {
                    return Err(Error::InvalidArgument(format!("voxel index {v} outside grid")));
                }
                if labels[v] != 0 {
                    return Err(Error::InvalidArgument(format!("voxel {v} claimed twice")));
                }
                labels[v] = e as u32 + 1;
            }
        }
        Ok(SourceGrid { dims, spacing, origin, labels, element_voxels })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn n_elements(&self) -> usize {
        self.element_voxels.len()
    }

    pub fn element_voxels(&self, id: usize) -> &[usize] {
        &self.element_voxels[id]
    }

    /// Label volume (element id + 1 as f32, 0 = background).
    pub fn label_volume(&self) -> Volume {
        let data = self.labels.iter().map(|&l| l as f32).collect();
        Volume::new(self.dims, self.spacing, self.origin, data).expect("label grid is valid")
    }
}

/// Rasterize each element bowl onto the grid as a one-voxel shell.
///
/// A voxel belongs to an element when its center lies within half a voxel of
/// the cap surface (the sphere of radius `roc` about the focus) and within
/// `elem_diameter/2` of the element center. Overlapping claims resolve to
/// the nearer element center.
pub fn rasterize_bowls(
    arr: &ArrayTransducer,
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
) -> Result<SourceGrid> {
    if (spacing[0] - spacing[1]).abs() > 1e-9 || (spacing[0] - spacing[2]).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "bowl rasterization requires an isotropic grid, got spacing {spacing:?}"
        )));
    }
    let dx = spacing[0];
    let shell = dx / 2.0;
    let half_d = arr.elem_diameter_mm / 2.0;
    let focus = arr.focus;
    let n = dims[0] * dims[1] * dims[2];
    let mut labels = vec![0u32; n];
    let mut best_d2 = vec![f32::INFINITY; n];
    let mut element_voxels = vec![Vec::new(); arr.elements.len()];

    let world_max = [
        origin[0] + (dims[0] - 1) as f64 * spacing[0],
        origin[1] + (dims[1] - 1) as f64 * spacing[1],
        origin[2] + (dims[2] - 1) as f64 * spacing[2],
    ];
    for e in arr.elements() {
        let c = e.center.to_array();
        // the full cap (including shell slack) must fit inside the grid
        for ax in 0..3 {
            if c[ax] - half_d - dx < origin[ax] - 0.5 * dx || c[ax] + half_d + dx > world_max[ax] + 0.5 * dx {
                return Err(Error::ElementOutsideGrid { id: e.id });
            }
        }
        let lo = |ax: usize| (((c[ax] - half_d - dx) - origin[ax]) / spacing[ax]).floor().max(0.0) as usize;
        let hi = |ax: usize| {
            ((((c[ax] + half_d + dx) - origin[ax]) / spacing[ax]).ceil() as usize).min(dims[ax] - 1)
        };
        let (i0, i1) = (lo(0), hi(0));
        let (j0, j1) = (lo(1), hi(1));
        let (k0, k1) = (lo(2), hi(2));
        for k in k0..=k1 {
            let z = origin[2] + k as f64 * spacing[2];
            for j in j0..=j1 {
                let y = origin[1] + j as f64 * spacing[1];
                for i in i0..=i1 {
                    let x = origin[0] + i as f64 * spacing[0];
                    let d_center2 =
                        (x - c[0]).powi(2) + (y - c[1]).powi(2) + (z - c[2]).powi(2);
                    if d_center2 > half_d * half_d {
                        continue;
                    }
                    let r = ((x - focus.x).powi(2) + (y - focus.y).powi(2) + (z - focus.z).powi(2))
                        .sqrt();
                    if (r - arr.roc_mm).abs() > shell {
                        continue;
                    }
                    let idx = i + dims[0] * (j + dims[1] * k);
                    if (d_center2 as f32) < best_d2[idx] {
                        best_d2[idx] = d_center2 as f32;
                        labels[idx] = e.id as u32 + 1;
                    }
                }
            }
        }
    }
    for (idx, &l) in labels.iter().enumerate() {
        if l > 0 {
            element_voxels[(l - 1) as usize].push(idx);
        }
    }
    for (id, voxels) in element_voxels.iter().enumerate() {
        if voxels.is_empty() {
            return Err(Error::ElementOutsideGrid { id });
        }
    }
    Ok(SourceGrid { dims, spacing, origin, labels, element_voxels })
}

/// Grid-search tilt_x, tilt_y in `{-limit..limit}` at `step_deg` (roll fixed
/// at 0), maximizing the number of active elements. Ties break toward the
/// smallest tilt magnitude, then lexicographic (tilt_x, tilt_y).
pub fn optimize_pose(
    arr: &ArrayTransducer,
    skull_mask: &Volume,
    ct: &Volume,
    focus: WorldPoint,
    limit_deg: f64,
    step_deg: f64,
) -> Result<Pose> {
    if limit_deg < 0.0 || step_deg <= 0.0 {
        return Err(Error::InvalidArgument("pose search needs limit >= 0 and step > 0".into()));
    }
    let mut angles = Vec::new();
    let count = (2.0 * limit_deg / step_deg).floor() as i64;
    for i in 0..=count {
        let a = -limit_deg + i as f64 * step_deg;
        if a <= limit_deg + 1e-12 {
            angles.push(a);
        }
    }
    if angles.is_empty() {
        angles.push(0.0);
    }
    let tracer = raymetrics::RayTracer::new(skull_mask, ct)?;
    let mut best: Option<(usize, f64, f64, f64)> = None; // (nae, mag, tx, ty)
    for &tx in &angles {
        for &ty in &angles {
            let pose = Pose { tilt_x_deg: tx, tilt_y_deg: ty, roll_deg: 0.0, focus };
            let posed = pose_array(arr, &pose);
            let nae = raymetrics::count_active(&posed, &tracer, focus, raymetrics::DEFAULT_RAY_STEP_MM);
            let mag = tx * tx + ty * ty;
            let better = match &best {
                None => true,
                Some((bn, bm, btx, bty)) => {
                    nae > *bn
                        || (nae == *bn
                            && (mag < *bm - 1e-12
                                || ((mag - *bm).abs() <= 1e-12 && (tx, ty) < (*btx, *bty))))
                }
            };
            if better {
                best = Some((nae, mag, tx, ty));
            }
        }
    }
    let (_, _, tx, ty) = best.expect("at least one pose evaluated");
    Ok(Pose { tilt_x_deg: tx, tilt_y_deg: ty, roll_deg: 0.0, focus })
}
