//! Voxel-volume data model, file I/O, resampling, skull-mask extraction and
//! masked image-similarity metrics.
//!
//! A [`Volume`] is a dense 3D scalar grid with spacing/origin metadata.
//! Data is stored x-fastest (NIfTI order): `index = i + nx*(j + ny*k)`.
//! World coordinates are in mm; `origin` is the world position of the center
//! of voxel `(0, 0, 0)`.

pub(crate) mod morphology;
mod nifti;

pub use morphology::extract_skull_mask;
pub use nifti::{read_nifti, write_nifti};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A point in world coordinates (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        WorldPoint { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        WorldPoint { x: a[0], y: a[1], z: a[2] }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(self, other: WorldPoint) -> f64 {
        let d = [self.x - other.x, self.y - other.y, self.z - other.z];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }
}

/// Dense 3D scalar grid. Value semantics depend on role: HU, mask in {0,1},
/// m/s, kg/m³, Np/m or Pa.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    data: Vec<f32>,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], data: Vec<f32>) -> Result<Self> {
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| Error::InvalidVolume("dimension product overflows".into()))?;
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidVolume(format!("dims must be positive, got {dims:?}")));
        }
        if data.len() != n {
            return Err(Error::InvalidVolume(format!(
                "data length {} does not match dims {:?} (expected {})",
                data.len(),
                dims,
                n
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidVolume(format!("spacing must be positive, got {spacing:?}")));
        }
        Ok(Volume { dims, spacing, origin, data })
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], value: f32) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        Volume::new(dims, spacing, origin, vec![value; n])
    }

    /// New volume on the same grid as `self`, filled with `value`.
    pub fn same_grid_filled(&self, value: f32) -> Volume {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            origin: self.origin,
            data: vec![value; self.data.len()],
        }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f32) {
        let idx = self.index(i, j, k);
        self.data[idx] = v;
    }

    /// Voxel index `(i, j, k)` of a linear index.
    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    /// World position (mm) of the center of voxel `(i, j, k)`.
    pub fn index_to_world(&self, ijk: [f64; 3]) -> WorldPoint {
        WorldPoint::new(
            self.origin[0] + ijk[0] * self.spacing[0],
            self.origin[1] + ijk[1] * self.spacing[1],
            self.origin[2] + ijk[2] * self.spacing[2],
        )
    }

    /// Continuous voxel coordinates of a world point.
    pub fn world_to_index(&self, p: WorldPoint) -> [f64; 3] {
        [
            (p.x - self.origin[0]) / self.spacing[0],
            (p.y - self.origin[1]) / self.spacing[1],
            (p.z - self.origin[2]) / self.spacing[2],
        ]
    }

    /// True when the world point falls within the voxel-center bounding box.
    pub fn contains_world(&self, p: WorldPoint) -> bool {
        let c = self.world_to_index(p);
        c.iter()
            .zip(self.dims.iter())
            .all(|(&x, &n)| x >= 0.0 && x <= (n - 1) as f64)
    }

    /// Trilinear interpolation at continuous voxel coordinates. Out-of-bounds
    /// coordinates clamp to the nearest edge voxel.
    pub fn sample_trilinear_index(&self, c: [f64; 3]) -> f64 {
        let [nx, ny, nz] = self.dims;
        let clamp = |x: f64, n: usize| x.clamp(0.0, (n - 1) as f64);
        let x = clamp(c[0], nx);
        let y = clamp(c[1], ny);
        let z = clamp(c[2], nz);
        let i0 = x.floor() as usize;
        let j0 = y.floor() as usize;
        let k0 = z.floor() as usize;
        let i1 = (i0 + 1).min(nx - 1);
        let j1 = (j0 + 1).min(ny - 1);
        let k1 = (k0 + 1).min(nz - 1);
        let fx = x - i0 as f64;
        let fy = y - j0 as f64;
        let fz = z - k0 as f64;
        let v = |i: usize, j: usize, k: usize| self.at(i, j, k) as f64;
        let c00 = v(i0, j0, k0) * (1.0 - fx) + v(i1, j0, k0) * fx;
        let c10 = v(i0, j1, k0) * (1.0 - fx) + v(i1, j1, k0) * fx;
        let c01 = v(i0, j0, k1) * (1.0 - fx) + v(i1, j0, k1) * fx;
        let c11 = v(i0, j1, k1) * (1.0 - fx) + v(i1, j1, k1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz
    }

    /// Trilinear interpolation at a world point (mm), edge-clamped.
    pub fn sample_trilinear_world(&self, p: WorldPoint) -> f64 {
        self.sample_trilinear_index(self.world_to_index(p))
    }

    /// True when `other` shares dims, spacing and origin (exact dims,
    /// spacing/origin to 1e-9 mm).
    pub fn same_grid(&self, other: &Volume) -> bool {
        self.dims == other.dims
            && self
                .spacing
                .iter()
                .zip(other.spacing.iter())
                .all(|(a, b)| (a - b).abs() < 1e-9)
            && self
                .origin
                .iter()
                .zip(other.origin.iter())
                .all(|(a, b)| (a - b).abs() < 1e-9)
    }

    /// True when every value is exactly 0 or 1.
    pub fn is_mask(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }
}

/// Trilinear resample onto an isotropic-or-not grid with the given spacing.
///
/// Output dims are `ceil(old_dims * old_spacing / new_spacing)`; each output
/// voxel center maps into input index space as `i_out * new / old` (origin
/// preserved), with out-of-bounds samples clamped to the nearest edge voxel.
pub fn resample_trilinear(vol: &Volume, new_spacing: [f64; 3]) -> Result<Volume> {
    if new_spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "resample spacing must be positive, got {new_spacing:?}"
        )));
    }
    let dims = vol.dims();
    let spacing = vol.spacing();
    let mut out_dims = [0usize; 3];
    for ax in 0..3 {
        let extent = dims[ax] as f64 * spacing[ax];
        out_dims[ax] = ((extent / new_spacing[ax]).ceil() as usize).max(1);
    }
    let ratio = [
        new_spacing[0] / spacing[0],
        new_spacing[1] / spacing[1],
        new_spacing[2] / spacing[2],
    ];
    let mut data = vec![0.0f32; out_dims[0] * out_dims[1] * out_dims[2]];
    for k in 0..out_dims[2] {
        for j in 0..out_dims[1] {
            for i in 0..out_dims[0] {
                let c = [i as f64 * ratio[0], j as f64 * ratio[1], k as f64 * ratio[2]];
                data[i + out_dims[0] * (j + out_dims[1] * k)] =
                    vol.sample_trilinear_index(c) as f32;
            }
        }
    }
    Volume::new(out_dims, new_spacing, vol.origin(), data)
}

/// Elementwise clamp to `[lo, hi]` HU.
pub fn clip_hu(ct: &Volume, lo: f64, hi: f64) -> Result<Volume> {
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("clip range requires lo < hi, got [{lo}, {hi}]")));
    }
    let mut out = ct.clone();
    let (lo, hi) = (lo as f32, hi as f32);
    for v in out.data_mut() {
        *v = v.clamp(lo, hi);
    }
    Ok(out)
}

/// Mean absolute difference of `a` and `b` over voxels where `mask == 1`.
pub fn mae_in_mask(a: &Volume, b: &Volume, mask: &Volume) -> Result<f64> {
    if !a.same_grid(b) || !a.same_grid(mask) {
        return Err(Error::GridMismatch("mae_in_mask requires identical grids".into()));
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for ((&va, &vb), &m) in a.data().iter().zip(b.data()).zip(mask.data()) {
        if m != 0.0 {
            sum += (va as f64 - vb as f64).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ramp_volume(dims: [usize; 3]) -> Volume {
        let mut data = vec![0.0f32; dims[0] * dims[1] * dims[2]];
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data[i + dims[0] * (j + dims[1] * k)] = i as f32;
                }
            }
        }
        Volume::new(dims, [1.0; 3], [0.0; 3], data).unwrap()
    }

    #[test]
    fn new_rejects_bad_shapes() {
        assert!(Volume::new([2, 2, 2], [1.0; 3], [0.0; 3], vec![0.0; 7]).is_err());
        assert!(Volume::new([2, 2, 2], [0.0, 1.0, 1.0], [0.0; 3], vec![0.0; 8]).is_err());
        assert!(Volume::new([0, 2, 2], [1.0; 3], [0.0; 3], vec![]).is_err());
    }

    #[test]
    fn resample_identity_spacing_is_identity() {
        let v = ramp_volume([5, 4, 3]);
        let r = resample_trilinear(&v, [1.0; 3]).unwrap();
        assert_eq!(r.dims(), v.dims());
        assert_eq!(r.data(), v.data());
    }

    #[test]
    fn resample_constant_stays_constant() {
        let v = Volume::filled([6, 5, 4], [0.7, 1.1, 0.9], [0.0; 3], 7.0).unwrap();
        let r = resample_trilinear(&v, [0.4; 3]).unwrap();
        assert!(r.data().iter().all(|&x| (x - 7.0).abs() < 1e-6));
    }

    #[test]
    fn resample_linear_ramp_downsample_exact() {
        // Trilinear interpolation is exact on linear fields away from the
        // clamped far edge. f(i,j,k) = i, downsample 2x: value at output i
        // equals 2*i while 2*i <= nx-1.
        let v = ramp_volume([16, 4, 4]);
        let r = resample_trilinear(&v, [2.0, 1.0, 1.0]).unwrap();
        assert_eq!(r.dims(), [8, 4, 4]);
        for i in 0..8 {
            let expected = (2 * i).min(15) as f64;
            assert_relative_eq!(r.at(i, 1, 1) as f64, expected, epsilon = 1e-6);
        }
    }

    #[test]
    fn resample_output_within_input_range() {
        let v = ramp_volume([9, 5, 5]);
        let r = resample_trilinear(&v, [0.33, 0.75, 1.4]).unwrap();
        let (lo, hi) = (v.min_value(), v.max_value());
        assert!(r.data().iter().all(|&x| x >= lo && x <= hi));
    }

    #[test]
    fn resample_dims_ceil_rule() {
        let v = Volume::filled([10, 10, 10], [1.0; 3], [0.0; 3], 0.0).unwrap();
        let r = resample_trilinear(&v, [0.52; 3]).unwrap();
        // 10 * 1.0 / 0.52 = 19.23 -> 20
        assert_eq!(r.dims(), [20, 20, 20]);
    }

    #[test]
    fn clip_hu_matches_clinical_ranges() {
        let v = Volume::new([3, 1, 1], [1.0; 3], [0.0; 3], vec![3500.0, 100.0, -2000.0]).unwrap();
        let c = clip_hu(&v, -1024.0, 2000.0).unwrap();
        assert_eq!(c.data(), &[2000.0, 100.0, -1024.0]);
        let c2 = clip_hu(&v, -1024.0, 3071.0).unwrap();
        assert_eq!(c2.data(), &[3071.0, 100.0, -1024.0]);
        assert!(clip_hu(&v, 10.0, 10.0).is_err());
    }

    #[test]
    fn mae_basics() {
        let a = Volume::filled([3, 3, 3], [1.0; 3], [0.0; 3], 5.0).unwrap();
        let mut b = a.clone();
        for v in b.data_mut() {
            *v += 10.0;
        }
        let mask = Volume::filled([3, 3, 3], [1.0; 3], [0.0; 3], 1.0).unwrap();
        assert_eq!(mae_in_mask(&a, &a, &mask).unwrap(), 0.0);
        assert_relative_eq!(mae_in_mask(&a, &b, &mask).unwrap(), 10.0);
        let empty = Volume::filled([3, 3, 3], [1.0; 3], [0.0; 3], 0.0).unwrap();
        assert!(matches!(mae_in_mask(&a, &b, &empty), Err(Error::EmptyMask)));
    }

    #[test]
    fn mae_hand_summed_oracle() {
        // Two fixed 3x3x3 volumes; expected value from an independent
        // brute-force sum over the masked voxels.
        let n = 27;
        let a: Vec<f32> = (0..n).map(|i| (i as f32) * 3.0 - 11.0).collect();
        let b: Vec<f32> = (0..n).map(|i| (i as f32 % 7.0) * 5.0).collect();
        let m: Vec<f32> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let mut expected_sum = 0.0f64;
        let mut cnt = 0;
        for i in 0..n {
            if m[i] == 1.0 {
                expected_sum += ((a[i] - b[i]) as f64).abs();
                cnt += 1;
            }
        }
        let va = Volume::new([3, 3, 3], [1.0; 3], [0.0; 3], a).unwrap();
        let vb = Volume::new([3, 3, 3], [1.0; 3], [0.0; 3], b).unwrap();
        let vm = Volume::new([3, 3, 3], [1.0; 3], [0.0; 3], m).unwrap();
        let got = mae_in_mask(&va, &vb, &vm).unwrap();
        assert_relative_eq!(got, expected_sum / cnt as f64, epsilon = 1e-12);
        // symmetry
        assert_relative_eq!(got, mae_in_mask(&vb, &va, &vm).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn trilinear_clamps_at_edges() {
        let v = ramp_volume([4, 4, 4]);
        assert_eq!(v.sample_trilinear_index([-3.0, 1.0, 1.0]), 0.0);
        assert_eq!(v.sample_trilinear_index([10.0, 1.0, 1.0]), 3.0);
    }
}
