//! HU → porosity → acoustic property mapping.
//!
//! A clipped CT and a skull mask become co-registered sound-speed, density
//! and absorption volumes. Skull voxels follow the porosity model
//!
//! ```text
//! phi   = clamp(1 - HU / max(HU), 0, 1)
//! rho   = rho_water * phi + rho_bone * (1 - phi)
//! c     = c_water   * phi + c_bone   * (1 - phi)
//! alpha = alpha_min + (alpha_max - alpha_min) * sqrt(phi)
//! ```
//!
//! with `max(HU)` taken over the skull mask. The intracranial cavity gets
//! constant brain-tissue values and everything else is water.

use crate::error::{Error, Result};
use crate::volume::morphology::interior_by_exterior_flood;
use crate::volume::Volume;
use serde::{Deserialize, Serialize};

/// Material constants; defaults are the values used for all simulations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialConstants {
    pub c_water: f64,
    pub c_brain: f64,
    pub c_bone: f64,
    pub rho_water: f64,
    pub rho_brain: f64,
    pub rho_bone: f64,
    /// dB/(MHz·cm)
    pub alpha_water: f64,
    pub alpha_brain: f64,
    pub alpha_bone_min: f64,
    pub alpha_bone_max: f64,
}

impl Default for MaterialConstants {
    fn default() -> Self {
        MaterialConstants {
            c_water: 1500.0,
            c_brain: 1560.0,
            c_bone: 3100.0,
            rho_water: 1000.0,
            rho_brain: 1030.0,
            rho_bone: 2200.0,
            alpha_water: 0.0,
            alpha_brain: 0.38,
            alpha_bone_min: 0.2,
            alpha_bone_max: 8.0,
        }
    }
}

impl MaterialConstants {
    pub fn validate(&self) -> Result<()> {
        if self.c_water <= 0.0 || self.c_brain <= 0.0 || self.c_bone <= 0.0 {
            return Err(Error::InvalidArgument("sound speeds must be positive".into()));
        }
        if self.rho_water <= 0.0 || self.rho_brain <= 0.0 || self.rho_bone <= 0.0 {
            return Err(Error::InvalidArgument("densities must be positive".into()));
        }
        if !(self.alpha_bone_min < self.alpha_bone_max) {
            return Err(Error::InvalidArgument("alpha_bone_min must be below alpha_bone_max".into()));
        }
        Ok(())
    }
}

/// Bone porosity from HU: `clamp(1 - hu/hu_max, 0, 1)`.
pub fn porosity(hu: f64, hu_max: f64) -> Result<f64> {
    if !(hu_max > 0.0) {
        return Err(Error::InvalidArgument(format!("hu_max must be positive, got {hu_max}")));
    }
    Ok((1.0 - hu / hu_max).clamp(0.0, 1.0))
}

/// Density (kg/m³), sound speed (m/s) and absorption (dB/(MHz·cm)) of a
/// skull voxel at porosity `phi`.
pub fn skull_properties(phi: f64, mat: &MaterialConstants) -> Result<(f64, f64, f64)> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::InvalidArgument(format!("porosity must be in [0, 1], got {phi}")));
    }
    let rho = mat.rho_water * phi + mat.rho_bone * (1.0 - phi);
    let c = mat.c_water * phi + mat.c_bone * (1.0 - phi);
    let alpha = mat.alpha_bone_min + (mat.alpha_bone_max - mat.alpha_bone_min) * phi.sqrt();
    Ok((rho, c, alpha))
}

/// Convert an absorption coefficient in dB/(MHz·cm) to Np/m at frequency `f0`.
pub fn alpha_db_mhz_cm_to_np_per_m(alpha: f64, f0_hz: f64) -> f64 {
    // dB -> Np is /(20/ln 10); cm -> m is *100
    alpha * (f0_hz / 1e6) * 100.0 * std::f64::consts::LN_10 / 20.0
}

/// Co-registered acoustic property volumes.
#[derive(Debug, Clone)]
pub struct Medium {
    /// Sound speed, m/s.
    pub c: Volume,
    /// Density, kg/m³.
    pub rho: Volume,
    /// Absorption at the carrier frequency, Np/m.
    pub alpha_np: Volume,
    /// Maximum sound speed over the grid; the solver's reference speed.
    pub c_ref: f64,
    pub skull_mask: Volume,
    /// Intracranial cavity (excludes the skull). All zeros when no closed
    /// cavity was found.
    pub brain_mask: Volume,
    /// Maximum HU over the skull mask used by the porosity map.
    pub hu_max: f64,
}

impl Medium {
    /// Homogeneous water filling the given grid.
    pub fn water(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], mat: &MaterialConstants) -> Result<Medium> {
        let c = Volume::filled(dims, spacing, origin, mat.c_water as f32)?;
        let rho = Volume::filled(dims, spacing, origin, mat.rho_water as f32)?;
        let alpha = Volume::filled(dims, spacing, origin, 0.0)?;
        let zeros = Volume::filled(dims, spacing, origin, 0.0)?;
        Ok(Medium {
            c_ref: mat.c_water,
            c,
            rho,
            alpha_np: alpha,
            skull_mask: zeros.clone(),
            brain_mask: zeros,
            hu_max: 0.0,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.c.dims()
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.c.spacing()
    }
}

/// Build a heterogeneous medium from a clipped CT and its skull mask.
///
/// Skull voxels get porosity-mapped properties with `hu_max` taken over the
/// mask. The intracranial cavity — voxels not reachable from the grid
/// boundary through non-skull voxels (6-connected) — gets brain values; all
/// remaining voxels are water. An open shell (no cavity) logs a warning and
/// leaves every non-skull voxel as water.
pub fn build_medium(ct: &Volume, skull_mask: &Volume, f0_hz: f64, mat: &MaterialConstants) -> Result<Medium> {
    mat.validate()?;
    if !ct.same_grid(skull_mask) {
        return Err(Error::GridMismatch("CT and skull mask grids differ".into()));
    }
    if !(f0_hz > 0.0) {
        return Err(Error::InvalidArgument("f0 must be positive".into()));
    }
    let in_skull: Vec<bool> = skull_mask.data().iter().map(|&m| m != 0.0).collect();
    if !in_skull.iter().any(|&b| b) {
        return Err(Error::EmptyMask);
    }
    let hu_max = ct
        .data()
        .iter()
        .zip(&in_skull)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(hu_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "maximum HU inside the skull mask is {hu_max}; porosity mapping needs a positive maximum"
        )));
    }

    let interior = interior_by_exterior_flood(ct.dims(), &in_skull);
    let mut has_cavity = false;
    let mut c = ct.same_grid_filled(mat.c_water as f32);
    let mut rho = ct.same_grid_filled(mat.rho_water as f32);
    let mut alpha_np = ct.same_grid_filled(alpha_db_mhz_cm_to_np_per_m(mat.alpha_water, f0_hz) as f32);
    let mut brain = ct.same_grid_filled(0.0);

    let alpha_brain_np = alpha_db_mhz_cm_to_np_per_m(mat.alpha_brain, f0_hz) as f32;
    for idx in 0..ct.len() {
        if in_skull[idx] {
            let phi = porosity(ct.data()[idx] as f64, hu_max)?;
            let (r, cs, a) = skull_properties(phi, mat)?;
            c.data_mut()[idx] = cs as f32;
            rho.data_mut()[idx] = r as f32;
            alpha_np.data_mut()[idx] = alpha_db_mhz_cm_to_np_per_m(a, f0_hz) as f32;
        } else if interior[idx] {
            has_cavity = true;
            c.data_mut()[idx] = mat.c_brain as f32;
            rho.data_mut()[idx] = mat.rho_brain as f32;
            alpha_np.data_mut()[idx] = alpha_brain_np;
            brain.data_mut()[idx] = 1.0;
        }
    }
    if !has_cavity {
        log::warn!("skull mask encloses no cavity (open shell); all non-skull voxels set to water");
    }
    let c_ref = c.max_value() as f64;
    Ok(Medium {
        c,
        rho,
        alpha_np,
        c_ref,
        skull_mask: skull_mask.clone(),
        brain_mask: brain,
        hu_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn porosity_end_members_and_midpoint() {
        assert_eq!(porosity(2000.0, 2000.0).unwrap(), 0.0);
        assert_eq!(porosity(0.0, 2000.0).unwrap(), 1.0);
        assert_relative_eq!(porosity(1000.0, 2000.0).unwrap(), 0.5);
        assert!(porosity(100.0, 0.0).is_err());
        // negative HU clamps to water-like
        assert_eq!(porosity(-500.0, 2000.0).unwrap(), 1.0);
    }

    #[test]
    fn skull_properties_table_rows() {
        let mat = MaterialConstants::default();
        let (rho, c, a) = skull_properties(0.0, &mat).unwrap();
        assert_eq!((rho, c, a), (2200.0, 3100.0, 0.2));
        let (rho, c, a) = skull_properties(1.0, &mat).unwrap();
        assert_eq!((rho, c, a), (1000.0, 1500.0, 8.0));
        // hand-evaluated midpoint: 0.2 + 7.8*sqrt(0.5)
        let (rho, c, a) = skull_properties(0.5, &mat).unwrap();
        assert_relative_eq!(rho, 1600.0, max_relative = 1e-12);
        assert_relative_eq!(c, 2300.0, max_relative = 1e-12);
        assert_relative_eq!(a, 0.2 + 7.8 * 0.5f64.sqrt(), max_relative = 1e-12);
        assert!(skull_properties(1.5, &mat).is_err());
    }

    #[test]
    fn alpha_conversion() {
        // 1 dB/(MHz cm) at 1 MHz = 100 dB/m = 100 * ln10/20 Np/m
        let np = alpha_db_mhz_cm_to_np_per_m(1.0, 1e6);
        assert_relative_eq!(np, 100.0 * std::f64::consts::LN_10 / 20.0, max_relative = 1e-12);
    }

    fn shell_ct(n: usize, hu: f32) -> (Volume, Volume) {
        let mut ct = Volume::filled([n, n, n], [1.0; 3], [0.0; 3], -1000.0).unwrap();
        let c = (n as f64 - 1.0) / 2.0;
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let r = ((i as f64 - c).powi(2) + (j as f64 - c).powi(2) + (k as f64 - c).powi(2))
                        .sqrt();
                    if (5.0..=7.5).contains(&r) {
                        ct.set(i, j, k, hu);
                    } else if r < 5.0 {
                        ct.set(i, j, k, 40.0);
                    }
                }
            }
        }
        let mask = crate::volume::extract_skull_mask(&ct, 400.0, 0.0).unwrap();
        (ct, mask)
    }

    #[test]
    fn build_medium_assigns_water_brain_and_bone() {
        let (ct, mask) = shell_ct(20, 2000.0);
        let med = build_medium(&ct, &mask, 650e3, &MaterialConstants::default()).unwrap();
        // corner: water
        assert_eq!(med.c.at(0, 0, 0), 1500.0);
        assert_eq!(med.rho.at(0, 0, 0), 1000.0);
        assert_eq!(med.alpha_np.at(0, 0, 0), 0.0);
        // center: brain
        let c = 10;
        assert_eq!(med.c.at(c, c, c), 1560.0);
        assert_eq!(med.rho.at(c, c, c), 1030.0);
        let expected_brain_alpha = alpha_db_mhz_cm_to_np_per_m(0.38, 650e3) as f32;
        assert_relative_eq!(med.alpha_np.at(c, c, c), expected_brain_alpha, max_relative = 1e-6);
        assert_eq!(med.brain_mask.at(c, c, c), 1.0);
        // bone voxel at hu_max: phi = 0 end-member
        let (i, j, k) = (c, c, c + 6);
        assert_eq!(med.skull_mask.at(i, j, k), 1.0);
        assert_eq!(med.c.at(i, j, k), 3100.0);
        assert_eq!(med.rho.at(i, j, k), 2200.0);
        assert_eq!(med.c_ref, 3100.0);
        // brain and skull masks are disjoint
        assert!(med
            .brain_mask
            .data()
            .iter()
            .zip(med.skull_mask.data())
            .all(|(&b, &s)| b * s == 0.0));
    }

    #[test]
    fn build_medium_monotone_and_bounded_in_skull() {
        let (mut ct, mask) = shell_ct(20, 2000.0);
        // graded HU within the shell
        let mut hu = 400.0;
        for idx in 0..ct.len() {
            if mask.data()[idx] != 0.0 {
                ct.data_mut()[idx] = hu as f32;
                hu = 400.0 + ((hu - 400.0) + 37.0) % 1600.0;
            }
        }
        let mat = MaterialConstants::default();
        let med = build_medium(&ct, &mask, 650e3, &mat).unwrap();
        let mut pairs: Vec<(f32, f32, f32, f32)> = Vec::new();
        for idx in 0..ct.len() {
            if mask.data()[idx] != 0.0 {
                let a_db = med.alpha_np.data()[idx];
                pairs.push((ct.data()[idx], med.c.data()[idx], med.rho.data()[idx], a_db));
                assert!(med.c.data()[idx] >= 1500.0 && med.c.data()[idx] <= 3100.0);
                assert!(med.rho.data()[idx] >= 1000.0 && med.rho.data()[idx] <= 2200.0);
            }
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pairs.windows(2) {
            assert!(w[1].1 >= w[0].1, "c must be non-decreasing in HU");
            assert!(w[1].2 >= w[0].2, "rho must be non-decreasing in HU");
            assert!(w[1].3 <= w[0].3, "alpha must be non-increasing in HU");
        }
    }

    #[test]
    fn open_shell_leaves_water_everywhere_outside_bone() {
        let n = 16;
        let mut ct = Volume::filled([n, n, n], [1.0; 3], [0.0; 3], -1000.0).unwrap();
        // a flat plate, no enclosed cavity
        for j in 0..n {
            for i in 0..n {
                ct.set(i, j, 8, 1500.0);
            }
        }
        let mask = crate::volume::extract_skull_mask(&ct, 400.0, 0.0).unwrap();
        let med = build_medium(&ct, &mask, 650e3, &MaterialConstants::default()).unwrap();
        assert!(med.brain_mask.data().iter().all(|&v| v == 0.0));
        assert_eq!(med.c.at(8, 8, 2), 1500.0);
    }
}
