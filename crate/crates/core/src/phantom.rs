//! Deterministic synthetic skull phantoms: spherical shells with
//! cortical/trabecular layering, directional thickness modulation and seeded
//! HU noise. Analytic geometry keeps ray and thickness oracles closed-form.

use crate::error::{Error, Result};
use crate::volume::{Volume, WorldPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One directional thickness lobe: a Gaussian bump (in angle) of the local
/// shell thickness.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationLobe {
    pub direction: [f64; 3],
    pub amplitude_mm: f64,
    pub angular_width_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub origin_mm: [f64; 3],
    pub outer_radius_mm: f64,
    pub base_thickness_mm: f64,
    pub cortical_hu: f64,
    pub trabecular_hu: f64,
    /// Fraction of the local thickness occupied by the trabecular layer.
    pub trabecular_fraction: f64,
    pub thickness_modulation: Vec<ModulationLobe>,
    pub noise_sigma_hu: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [96, 96, 96],
            spacing_mm: [0.52; 3],
            origin_mm: [0.0; 3],
            outer_radius_mm: 14.0,
            base_thickness_mm: 3.0,
            cortical_hu: 1800.0,
            trabecular_hu: 700.0,
            trabecular_fraction: 0.4,
            thickness_modulation: Vec::new(),
            noise_sigma_hu: 0.0,
            seed: 0,
        }
    }
}

pub const AIR_HU: f32 = -1000.0;
pub const SOFT_TISSUE_HU: f32 = 40.0;

impl PhantomSpec {
    /// World position of the shell center (the grid center).
    pub fn center(&self) -> WorldPoint {
        WorldPoint::new(
            self.origin_mm[0] + (self.dims[0] - 1) as f64 / 2.0 * self.spacing_mm[0],
            self.origin_mm[1] + (self.dims[1] - 1) as f64 / 2.0 * self.spacing_mm[1],
            self.origin_mm[2] + (self.dims[2] - 1) as f64 / 2.0 * self.spacing_mm[2],
        )
    }

    /// Local shell thickness along unit direction `u`.
    pub fn thickness_along(&self, u: [f64; 3]) -> f64 {
        let mut t = self.base_thickness_mm;
        for lobe in &self.thickness_modulation {
            let norm = lobe.direction.iter().map(|d| d * d).sum::<f64>().sqrt();
            if norm < 1e-12 {
                continue;
            }
            let cosang = (u[0] * lobe.direction[0] + u[1] * lobe.direction[1] + u[2] * lobe.direction[2]) / norm;
            let ang = cosang.clamp(-1.0, 1.0).acos().to_degrees();
            t += lobe.amplitude_mm * (-0.5 * (ang / lobe.angular_width_deg).powi(2)).exp();
        }
        t.max(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.outer_radius_mm > self.base_thickness_mm) || !(self.base_thickness_mm > 0.0) {
            return Err(Error::InvalidArgument(
                "phantom requires outer_radius > base_thickness > 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.trabecular_fraction) {
            return Err(Error::InvalidArgument("trabecular_fraction must be in [0, 1]".into()));
        }
        for hu in [self.cortical_hu, self.trabecular_hu] {
            if !(-1024.0..=2000.0).contains(&hu) {
                return Err(Error::InvalidArgument(format!("phantom HU {hu} outside [-1024, 2000]")));
            }
        }
        let center = self.center();
        let world_min = self.origin_mm;
        let world_max = [
            self.origin_mm[0] + (self.dims[0] - 1) as f64 * self.spacing_mm[0],
            self.origin_mm[1] + (self.dims[1] - 1) as f64 * self.spacing_mm[1],
            self.origin_mm[2] + (self.dims[2] - 1) as f64 * self.spacing_mm[2],
        ];
        let max_amp: f64 = self
            .thickness_modulation
            .iter()
            .map(|l| l.amplitude_mm.abs())
            .fold(0.0, f64::max);
        let reach = self.outer_radius_mm + max_amp;
        for ax in 0..3 {
            let c = [center.x, center.y, center.z][ax];
            if c - reach < world_min[ax] || c + reach > world_max[ax] {
                return Err(Error::InvalidArgument(format!(
                    "shell of radius {reach} mm exceeds the grid on axis {ax}"
                )));
            }
        }
        Ok(())
    }
}

/// Generate the phantom CT volume in HU.
pub fn make_skull_phantom(spec: &PhantomSpec) -> Result<Volume> {
    generate(spec, 1.0, 0.0, spec.seed)
}

/// Regenerate with the shell thickness scaled and extra seeded HU noise on
/// bone voxels; geometry (center, outer radius) is unchanged.
pub fn perturb_phantom(
    spec: &PhantomSpec,
    thickness_scale: f64,
    hu_noise_sigma: f64,
    seed: u64,
) -> Result<Volume> {
    if !(thickness_scale > 0.0) {
        return Err(Error::InvalidArgument("thickness scale must be positive".into()));
    }
    generate(spec, thickness_scale, hu_noise_sigma, seed)
}

fn generate(spec: &PhantomSpec, thickness_scale: f64, extra_sigma: f64, extra_seed: u64) -> Result<Volume> {
    spec.validate()?;
    let center = spec.center();
    let [nx, ny, nz] = spec.dims;
    let sp = spec.spacing_mm;
    let mut data = vec![AIR_HU; nx * ny * nz];
    let mut base_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut extra_rng = ChaCha8Rng::seed_from_u64(extra_seed);
    let cortical_band = (1.0 - spec.trabecular_fraction) / 2.0;
    for k in 0..nz {
        let z = spec.origin_mm[2] + k as f64 * sp[2] - center.z;
        for j in 0..ny {
            let y = spec.origin_mm[1] + j as f64 * sp[1] - center.y;
            for i in 0..nx {
                let x = spec.origin_mm[0] + i as f64 * sp[0] - center.x;
                let r = (x * x + y * y + z * z).sqrt();
                let idx = i + nx * (j + ny * k);
                if r > spec.outer_radius_mm + spec.base_thickness_mm + 6.0 {
                    continue; // stays air; skip the per-voxel thickness math
                }
                let u = if r > 1e-9 { [x / r, y / r, z / r] } else { [0.0, 0.0, 1.0] };
                let t = spec.thickness_along(u) * thickness_scale;
                let inner = spec.outer_radius_mm - t;
                if r > spec.outer_radius_mm {
                    // air
                } else if r < inner {
                    data[idx] = SOFT_TISSUE_HU;
                } else {
                    // depth fraction from the outer surface
                    let s = if t > 1e-12 { (spec.outer_radius_mm - r) / t } else { 0.0 };
                    let mut hu = if s < cortical_band || s > 1.0 - cortical_band {
                        spec.cortical_hu
                    } else {
                        spec.trabecular_hu
                    };
                    if spec.noise_sigma_hu > 0.0 {
                        hu += gaussian(&mut base_rng) * spec.noise_sigma_hu;
                    }
                    if extra_sigma > 0.0 {
                        hu += gaussian(&mut extra_rng) * extra_sigma;
                    }
                    data[idx] = hu.clamp(-1024.0, 2000.0) as f32;
                }
            }
        }
    }
    Volume::new(spec.dims, sp, spec.origin_mm, data)
}

/// Standard normal via Box-Muller; two uniforms per draw keeps the stream
/// independent of call pattern.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
