//! Linear first-order k-space pseudospectral acoustic solver.
//!
//! Integrates the coupled momentum / mass equations with spectral spatial
//! derivatives on staggered grids, a k-space dispersion correction
//! `sinc(c_ref |k| dt / 2)` (exact propagation for homogeneous media), a
//! split-field PML, absorption as a frequency-local damping term matching
//! each voxel's Np/m at the carrier, and additive monochromatic pressure
//! sources on labeled voxels. RMS pressure is recorded per voxel over the
//! final window.

mod amp_phase;
pub(crate) mod spectral;

pub use amp_phase::{extract_amp_phase, wrap_phase};

use crate::acoustic_map::Medium;
use crate::error::{Error, Result};
use crate::transducer::SourceGrid;
use crate::volume::{Volume, WorldPoint};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};
use spectral::{is_nyquist, wavenumbers, Spectral3};

/// Simulation parameters. Defaults follow the reference sonication protocol:
/// 650 kHz carrier, 100-cycle drive, RMS over the final 20 cycles.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Carrier frequency, Hz.
    pub f0: f64,
    /// Drive/run length in carrier cycles.
    pub n_cycles: f64,
    /// CFL number against the maximum sound speed.
    pub cfl: f64,
    /// Report-only points-per-wavelength floor; running below it records a
    /// warning (below 2 is a hard error).
    pub ppw_min: f64,
    /// PML thickness in voxels on every non-singleton axis.
    pub pml_thickness: usize,
    /// PML absorption scale, Np per grid point at the outer edge.
    pub pml_alpha: f64,
    /// RMS recording window, in carrier cycles, ending at the final step.
    pub rms_window_cycles: f64,
    /// Baseline source amplitude, Pa per element.
    pub amplitude: f64,
    /// Shut the source off after this many cycles (None = always on).
    pub source_on_cycles: Option<f64>,
    /// World points whose pressure trace is recorded every step.
    pub probes: Vec<[f64; 3]>,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            f0: 650e3,
            n_cycles: 100.0,
            cfl: 0.3,
            ppw_min: 4.3,
            pml_thickness: 10,
            pml_alpha: 2.0,
            rms_window_cycles: 20.0,
            amplitude: 1.0,
            source_on_cycles: None,
            probes: Vec::new(),
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.f0 > 0.0) {
            return Err(Error::InvalidArgument("f0 must be positive".into()));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::InvalidArgument(format!("cfl must be in (0, 1], got {}", self.cfl)));
        }
        if !(self.n_cycles >= self.rms_window_cycles) || !(self.rms_window_cycles > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "n_cycles ({}) must cover the RMS window ({})",
                self.n_cycles, self.rms_window_cycles
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidArgument("amplitude must be finite".into()));
        }
        Ok(())
    }
}

/// Per-element drive: amplitude in Pa and phase in radians.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceDrive {
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
}

impl SourceDrive {
    pub fn new(amplitudes: Vec<f64>, phases: Vec<f64>) -> Result<SourceDrive> {
        if amplitudes.len() != phases.len() {
            return Err(Error::InvalidArgument("drive amplitude/phase lengths differ".into()));
        }
        if amplitudes.iter().chain(&phases).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("drive values must be finite".into()));
        }
        Ok(SourceDrive { amplitudes, phases })
    }

    /// Same amplitude on every element, zero phase.
    pub fn uniform(n: usize, amplitude: f64) -> SourceDrive {
        SourceDrive { amplitudes: vec![amplitude; n], phases: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }
}

/// RMS pressure field plus run metadata.
#[derive(Debug, Clone)]
pub struct PressureField {
    /// RMS pressure (Pa) over the final window.
    pub rms: Volume,
    pub dt: f64,
    pub steps: usize,
    /// Points per wavelength in the slowest medium.
    pub ppw_water: f64,
    pub c_ref: f64,
    pub params: SimParams,
    /// One pressure trace per configured probe point.
    pub probe_traces: Vec<Vec<f32>>,
    pub warnings: Vec<String>,
}

impl PressureField {
    /// Maximum RMS value and its voxel index.
    pub fn peak(&self) -> (f64, [usize; 3]) {
        let mut best = f64::NEG_INFINITY;
        let mut at = 0usize;
        for (i, &v) in self.rms.data().iter().enumerate() {
            if (v as f64) > best {
                best = v as f64;
                at = i;
            }
        }
        (best, self.rms.unravel(at))
    }
}

/// Pressure time series recorded at every rasterized element voxel while a
/// virtual point source drives the target.
#[derive(Debug, Clone)]
pub struct PointSourceRecording {
    pub dt: f64,
    /// Time of sample 0 relative to the drive time origin.
    pub t_first_sample: f64,
    /// `[element][bowl voxel][step]`.
    pub element_series: Vec<Vec<Vec<f32>>>,
}

/// Grid-refinement comparison of two runs of the same scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementReport {
    pub coarse_spacing_mm: f64,
    pub fine_spacing_mm: f64,
    pub coarse_peak_pa: f64,
    pub fine_peak_pa: f64,
    /// 100 * (fine - coarse) / fine.
    pub peak_underestimate_pct: f64,
    pub coarse_underestimates: bool,
}

impl RefinementReport {
    pub fn from_fields(coarse: &PressureField, fine: &PressureField) -> RefinementReport {
        let (cp, _) = coarse.peak();
        let (fp, _) = fine.peak();
        RefinementReport {
            coarse_spacing_mm: coarse.rms.spacing()[0],
            fine_spacing_mm: fine.rms.spacing()[0],
            coarse_peak_pa: cp,
            fine_peak_pa: fp,
            peak_underestimate_pct: 100.0 * (fp - cp) / fp,
            coarse_underestimates: cp < fp,
        }
    }
}

struct SourcePoint {
    idx: usize,
    /// amplitude * 2*dt/(dx*c), the per-step density-injection coefficient
    amp_coef: f32,
    phase: f64,
}

/// Simulate the pressure field driven by the rasterized bowl sources.
pub fn simulate(
    medium: &Medium,
    sources: &SourceGrid,
    drive: &SourceDrive,
    params: &SimParams,
) -> Result<PressureField> {
    params.validate()?;
    if drive.len() != sources.n_elements() {
        return Err(Error::InvalidArgument(format!(
            "drive has {} entries for {} elements",
            drive.len(),
            sources.n_elements()
        )));
    }
    let mut engine = Engine::new(medium, params)?;
    engine.check_source_interior(sources)?;
    let mut points = Vec::new();
    for e in 0..sources.n_elements() {
        for &idx in sources.element_voxels(e) {
            points.push(SourcePoint {
                idx,
                amp_coef: (drive.amplitudes[e] * engine.injection_coef(idx)) as f32,
                phase: drive.phases[e],
            });
        }
    }
    let out = engine.run(&points, None, true)?;
    Ok(engine.into_pressure_field(out, params))
}

/// Drive a monochromatic point source at the target and record the pressure
/// time series at every element voxel.
pub fn record_point_source(
    medium: &Medium,
    target: WorldPoint,
    elements: &SourceGrid,
    params: &SimParams,
) -> Result<PointSourceRecording> {
    params.validate()?;
    if !medium.c.contains_world(target) {
        return Err(Error::TargetOutside(target.to_array()));
    }
    let brain_nonempty = medium.brain_mask.data().iter().any(|&v| v != 0.0);
    if brain_nonempty && medium.brain_mask.sample_trilinear_world(target) < 0.5 {
        return Err(Error::TargetOutside(target.to_array()));
    }
    let c = medium.c.world_to_index(target);
    let ijk = [
        c[0].round() as usize,
        c[1].round() as usize,
        c[2].round() as usize,
    ];
    let mut engine = Engine::new(medium, params)?;
    engine.check_source_interior(elements)?;

    // band-limit the virtual source over a small Gaussian blob; a bare
    // single-voxel delta carries near-Nyquist content that rings along
    // lattice lines instead of propagating
    const BLOB_RADIUS: isize = 2;
    const BLOB_SIGMA: f64 = 1.0;
    for (ax, &pos) in ijk.iter().enumerate() {
        let n_ax = medium.dims()[ax];
        if n_ax == 1 {
            continue;
        }
        let margin = params.pml_thickness + BLOB_RADIUS as usize;
        if pos < margin || pos + margin > n_ax - 1 {
            return Err(Error::TargetOutside(target.to_array()));
        }
    }
    let dims = medium.dims();
    let mut offsets = Vec::new();
    let mut wsum = 0.0f64;
    for dk in -BLOB_RADIUS..=BLOB_RADIUS {
        for dj in -BLOB_RADIUS..=BLOB_RADIUS {
            for di in -BLOB_RADIUS..=BLOB_RADIUS {
                if (dims[0] == 1 && di != 0) || (dims[1] == 1 && dj != 0) || (dims[2] == 1 && dk != 0) {
                    continue;
                }
                let w = (-((di * di + dj * dj + dk * dk) as f64) / (2.0 * BLOB_SIGMA * BLOB_SIGMA)).exp();
                offsets.push(([di, dj, dk], w));
                wsum += w;
            }
        }
    }
    let points: Vec<SourcePoint> = offsets
        .iter()
        .map(|&([di, dj, dk], w)| {
            let i = (ijk[0] as isize + di) as usize;
            let j = (ijk[1] as isize + dj) as usize;
            let k = (ijk[2] as isize + dk) as usize;
            let idx = medium.c.index(i, j, k);
            SourcePoint {
                idx,
                amp_coef: (params.amplitude * w / wsum * engine.injection_coef(idx)) as f32,
                phase: 0.0,
            }
        })
        .collect();
    let out = engine.run(&points, Some(elements), false)?;
    Ok(PointSourceRecording {
        dt: engine.dt,
        t_first_sample: engine.dt,
        element_series: out.recordings.expect("recording run returns series"),
    })
}

struct RunOutput {
    rms: Option<Vec<f32>>,
    probe_traces: Vec<Vec<f32>>,
    recordings: Option<Vec<Vec<Vec<f32>>>>,
}

struct Engine {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    dt: f64,
    steps: usize,
    omega: f64,
    source_on_steps: usize,
    rms_start: usize,
    ppw: f64,
    c_ref: f64,
    warnings: Vec<String>,
    pml_thickness: usize,
    /// probe positions in continuous voxel coordinates
    probe_coords: Vec<[f64; 3]>,
    // spectral machinery
    sp: Spectral3,
    kappa_over_n: Vec<f32>,
    mult_plus: [Vec<Complex<f32>>; 3],
    mult_minus: [Vec<Complex<f32>>; 3],
    pml: [Vec<f32>; 3],
    pml_sg: [Vec<f32>; 3],
    // per-voxel coefficients
    inv_rho_sg_dt: [Vec<f32>; 3],
    rho0_dt: Vec<f32>,
    damp: Vec<f32>,
    c2: Vec<f32>,
    c_field: Vec<f32>,
    // state
    p: Vec<f32>,
    u: [Vec<f32>; 3],
    rho: [Vec<f32>; 3],
    grad: Vec<f32>,
    spec_a: Vec<Complex<f32>>,
    spec_b: Vec<Complex<f32>>,
    ztmp: Vec<Complex<f32>>,
}

impl Engine {
    fn new(medium: &Medium, params: &SimParams) -> Result<Engine> {
        let dims = medium.dims();
        let spacing = medium.spacing();
        let origin = medium.c.origin();
        let n = dims[0] * dims[1] * dims[2];

        let c_ref = medium.c_ref;
        let c_min = medium.c.min_value() as f64;
        let max_spacing_mm = spacing.iter().cloned().fold(0.0f64, f64::max);
        let min_spacing_mm = spacing.iter().cloned().fold(f64::INFINITY, f64::min);
        // spacing is mm; speeds are m/s
        let ppw = (c_min / params.f0) / (max_spacing_mm * 1e-3);
        if ppw < 2.0 {
            return Err(Error::PpwTooLow { ppw });
        }
        let mut warnings = Vec::new();
        if ppw < params.ppw_min {
            warnings.push(format!(
                "points per wavelength {ppw:.2} is below the configured minimum {}",
                params.ppw_min
            ));
        }
        let dt = params.cfl * (min_spacing_mm * 1e-3) / c_ref;
        let total_t = params.n_cycles / params.f0;
        let steps = (total_t / dt).ceil() as usize;
        let rms_steps = ((params.rms_window_cycles / params.f0) / dt).ceil() as usize;
        let rms_start = steps.saturating_sub(rms_steps);
        let source_on_steps = match params.source_on_cycles {
            Some(cycles) => (((cycles / params.f0) / dt).ceil() as usize).min(steps),
            None => steps,
        };

        let kx = wavenumbers(dims[0], spacing[0] * 1e-3);
        let ky = wavenumbers(dims[1], spacing[1] * 1e-3);
        let kz = wavenumbers(dims[2], spacing[2] * 1e-3);
        let inv_n = 1.0 / n as f64;
        let mut kappa_over_n = vec![0.0f32; n];
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let kk = (kx[i] * kx[i] + ky[j] * ky[j] + kz[k] * kz[k]).sqrt();
                    let x = c_ref * kk * dt / 2.0;
                    let sinc = if x.abs() < 1e-12 { 1.0 } else { x.sin() / x };
                    kappa_over_n[i + dims[0] * (j + dims[1] * k)] = (sinc * inv_n) as f32;
                }
            }
        }
        let make_mult = |ks: &[f64], d_m: f64, sign: f64| -> Vec<Complex<f32>> {
            let nn = ks.len();
            ks.iter()
                .enumerate()
                .map(|(i, &k)| {
                    if is_nyquist(i, nn) {
                        Complex::new(0.0, 0.0)
                    } else {
                        // i*k * exp(sign * i*k*d/2)
                        let shift = sign * k * d_m / 2.0;
                        let (s, c) = shift.sin_cos();
                        Complex::new((-k * s) as f32, (k * c) as f32)
                    }
                })
                .collect()
        };
        let mult_plus = [
            make_mult(&kx, spacing[0] * 1e-3, 1.0),
            make_mult(&ky, spacing[1] * 1e-3, 1.0),
            make_mult(&kz, spacing[2] * 1e-3, 1.0),
        ];
        let mult_minus = [
            make_mult(&kx, spacing[0] * 1e-3, -1.0),
            make_mult(&ky, spacing[1] * 1e-3, -1.0),
            make_mult(&kz, spacing[2] * 1e-3, -1.0),
        ];

        let pml_profile = |n_ax: usize, d_mm: f64, staggered: bool| -> Vec<f32> {
            let thickness = params.pml_thickness;
            (0..n_ax)
                .map(|i| {
                    if n_ax == 1 || thickness == 0 {
                        return 1.0;
                    }
                    let x = i as f64 + if staggered { 0.5 } else { 0.0 };
                    let t = thickness as f64;
                    let depth = if x < t {
                        (t - x) / t
                    } else if x > (n_ax - 1) as f64 - t {
                        (x - ((n_ax - 1) as f64 - t)) / t
                    } else {
                        0.0
                    };
                    let gamma = params.pml_alpha * (c_ref / (d_mm * 1e-3)) * depth.powi(4);
                    (-gamma * dt / 2.0).exp() as f32
                })
                .collect()
        };
        let pml = [
            pml_profile(dims[0], spacing[0], false),
            pml_profile(dims[1], spacing[1], false),
            pml_profile(dims[2], spacing[2], false),
        ];
        let pml_sg = [
            pml_profile(dims[0], spacing[0], true),
            pml_profile(dims[1], spacing[1], true),
            pml_profile(dims[2], spacing[2], true),
        ];

        let rho = medium.rho.data();
        let cvol = medium.c.data();
        let alpha = medium.alpha_np.data();
        // density at staggered points: average with the +axis neighbor,
        // edge-clamped
        let stagger = |axis: usize| -> Vec<f32> {
            let mut out = vec![0.0f32; n];
            let [nx, ny, nz] = dims;
            for k in 0..nz {
                for j in 0..ny {
                    for i in 0..nx {
                        let idx = i + nx * (j + ny * k);
                        let nbr = match axis {
                            0 if i + 1 < nx => idx + 1,
                            1 if j + 1 < ny => idx + nx,
                            2 if k + 1 < nz => idx + nx * ny,
                            _ => idx,
                        };
                        let rho_sg = 0.5 * (rho[idx] as f64 + rho[nbr] as f64);
                        out[idx] = (dt / rho_sg) as f32;
                    }
                }
            }
            out
        };
        let inv_rho_sg_dt = [stagger(0), stagger(1), stagger(2)];
        let rho0_dt: Vec<f32> = rho.iter().map(|&r| (r as f64 * dt) as f32).collect();
        // absorption as symmetric-equivalent damping on the mass equation:
        // gamma = 2*alpha*c gives plane-wave spatial decay exp(-alpha*x)
        let damp: Vec<f32> = alpha
            .iter()
            .zip(cvol)
            .map(|(&a, &c)| (-(2.0 * a as f64 * c as f64) * dt).exp() as f32)
            .collect();
        let c2: Vec<f32> = cvol.iter().map(|&c| ((c as f64) * (c as f64)) as f32).collect();

        let probe_coords = params
            .probes
            .iter()
            .map(|&p| medium.c.world_to_index(WorldPoint::from_array(p)))
            .collect();

        Ok(Engine {
            dims,
            spacing,
            origin,
            dt,
            steps,
            omega: 2.0 * std::f64::consts::PI * params.f0,
            source_on_steps,
            rms_start,
            ppw,
            c_ref,
            warnings,
            pml_thickness: params.pml_thickness,
            probe_coords,
            sp: Spectral3::new(dims),
            kappa_over_n,
            mult_plus,
            mult_minus,
            pml,
            pml_sg,
            inv_rho_sg_dt,
            rho0_dt,
            damp,
            c2,
            c_field: cvol.to_vec(),
            p: vec![0.0; n],
            u: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            rho: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            grad: vec![0.0; n],
            spec_a: vec![Complex::default(); n],
            spec_b: vec![Complex::default(); n],
            ztmp: vec![Complex::default(); n],
        })
    }

    /// Additive-pressure injection coefficient for a source voxel:
    /// converts Pa of drive into the density increment per step so the
    /// radiated amplitude is resolution-consistent.
    fn injection_coef(&self, idx: usize) -> f64 {
        let c = self.c_field[idx] as f64;
        2.0 * self.dt / ((self.spacing[0] * 1e-3) * c)
    }

    fn check_source_interior(&self, sources: &SourceGrid) -> Result<()> {
        let t = self.pml_thickness;
        if sources.dims() != self.dims {
            return Err(Error::GridMismatch("source grid dims differ from medium".into()));
        }
        for ax in 0..3 {
            if (sources.spacing()[ax] - self.spacing[ax]).abs() > 1e-9
                || (sources.origin()[ax] - self.origin[ax]).abs() > 1e-9
            {
                return Err(Error::GridMismatch("source grid geometry differs from medium".into()));
            }
        }
        for e in 0..sources.n_elements() {
            for &idx in sources.element_voxels(e) {
                let [i, j, k] = unravel(idx, self.dims);
                for (ax, &pos) in [i, j, k].iter().enumerate() {
                    let n_ax = self.dims[ax];
                    if n_ax == 1 {
                        continue;
                    }
                    if pos < t || pos + t > n_ax - 1 {
                        return Err(Error::InvalidArgument(format!(
                            "element {e} has voxels inside the PML; grow the grid or move the array"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn run(
        &mut self,
        sources: &[SourcePoint],
        record: Option<&SourceGrid>,
        want_rms: bool,
    ) -> Result<RunOutput> {
        let n = self.p.len();
        let mut rms_acc = if want_rms { vec![0.0f32; n] } else { Vec::new() };
        let mut rms_count = 0usize;
        let probe_coords = self.probe_coords.clone();
        let mut probe_traces: Vec<Vec<f32>> =
            probe_coords.iter().map(|_| Vec::with_capacity(self.steps)).collect();
        let mut recordings: Option<Vec<Vec<Vec<f32>>>> = record.map(|grid| {
            (0..grid.n_elements())
                .map(|e| vec![Vec::with_capacity(self.steps); grid.element_voxels(e).len()])
                .collect()
        });

        for step in 0..self.steps {
            let t = (step as f64 + 1.0) * self.dt;

            // velocity update from the pressure gradient at staggered points
            load_complex(&self.p, &mut self.spec_a);
            self.sp.fft3(&mut self.spec_a, false, &mut self.ztmp);
            for axis in 0..3 {
                if self.dims[axis] == 1 {
                    continue;
                }
                self.spectral_derivative(axis, true);
                update_velocity(
                    &mut self.u[axis],
                    &self.grad,
                    &self.inv_rho_sg_dt[axis],
                    &self.pml_sg[axis],
                    axis,
                    self.dims,
                );
            }

            // density update from the velocity divergence at regular points
            for axis in 0..3 {
                if self.dims[axis] == 1 {
                    continue;
                }
                load_complex(&self.u[axis], &mut self.spec_b);
                self.sp.fft3(&mut self.spec_b, false, &mut self.ztmp);
                self.multiply_in_b(axis, false);
                self.sp.fft3(&mut self.spec_b, true, &mut self.ztmp);
                store_real(&self.spec_b, &mut self.grad);
                update_density(
                    &mut self.rho[axis],
                    &self.grad,
                    &self.rho0_dt,
                    &self.damp,
                    &self.pml[axis],
                    axis,
                    self.dims,
                );
            }

            // additive monochromatic sources enter the mass balance. The
            // radiated pressure of a mass-rate source follows the drive's
            // time derivative, so driving with sin makes the far field carry
            // cos(omega (t - r/c) + phase).
            if step < self.source_on_steps {
                let rho_x = &mut self.rho[0];
                for s in sources {
                    rho_x[s.idx] += s.amp_coef * ((self.omega * t + s.phase).sin() as f32);
                }
            }

            // p = c^2 (rho_x + rho_y + rho_z)
            let record_rms = want_rms && step >= self.rms_start;
            pressure_pass(
                &mut self.p,
                &self.rho,
                &self.c2,
                if record_rms { Some(&mut rms_acc) } else { None },
            );
            if record_rms {
                rms_count += 1;
            }

            if let (Some(recs), Some(grid)) = (recordings.as_mut(), record) {
                for (e, elem_rec) in recs.iter_mut().enumerate() {
                    for (v, &idx) in grid.element_voxels(e).iter().enumerate() {
                        elem_rec[v].push(self.p[idx]);
                    }
                }
            }
            for (trace, c) in probe_traces.iter_mut().zip(&probe_coords) {
                trace.push(sample_trilinear_raw(&self.p, self.dims, *c) as f32);
            }

            if (step % 25 == 24 || step + 1 == self.steps)
                && self.p.iter().any(|v| !v.is_finite())
            {
                return Err(Error::Unstable { step });
            }
        }

        let rms = if want_rms {
            let count = rms_count.max(1) as f32;
            rms_acc.par_iter_mut().for_each(|v| *v = (*v / count).sqrt());
            Some(rms_acc)
        } else {
            None
        };
        Ok(RunOutput { rms, probe_traces, recordings })
    }

    /// grad <- ifft( spec_a * mult[axis] * kappa ) without touching spec_a.
    fn spectral_derivative(&mut self, axis: usize, plus: bool) {
        let [nx, ny, _nz] = self.dims;
        let mult = if plus { &self.mult_plus[axis] } else { &self.mult_minus[axis] };
        let a = &self.spec_a;
        let kappa = &self.kappa_over_n;
        let nxy = nx * ny;
        self.spec_b
            .par_chunks_mut(nxy)
            .enumerate()
            .for_each(|(k, slab)| {
                for j in 0..ny {
                    let base = j * nx;
                    for i in 0..nx {
                        let idx = base + i;
                        let g = k * nxy + idx;
                        let m = match axis {
                            0 => mult[i],
                            1 => mult[j],
                            _ => mult[k],
                        };
                        slab[idx] = a[g] * m * kappa[g];
                    }
                }
            });
        self.sp.fft3(&mut self.spec_b, true, &mut self.ztmp);
        store_real(&self.spec_b, &mut self.grad);
    }

    /// spec_b <- spec_b * mult[axis] * kappa (divergence path).
    fn multiply_in_b(&mut self, axis: usize, plus: bool) {
        let [nx, ny, _nz] = self.dims;
        let mult = if plus { &self.mult_plus[axis] } else { &self.mult_minus[axis] };
        let kappa = &self.kappa_over_n;
        let nxy = nx * ny;
        self.spec_b
            .par_chunks_mut(nxy)
            .enumerate()
            .for_each(|(k, slab)| {
                for j in 0..ny {
                    let base = j * nx;
                    for i in 0..nx {
                        let idx = base + i;
                        let g = k * nxy + idx;
                        let m = match axis {
                            0 => mult[i],
                            1 => mult[j],
                            _ => mult[k],
                        };
                        slab[idx] = slab[idx] * m * kappa[g];
                    }
                }
            });
    }

    fn into_pressure_field(self, out: RunOutput, params: &SimParams) -> PressureField {
        let rms = Volume::new(
            self.dims,
            self.spacing,
            self.origin,
            out.rms.expect("simulate records RMS"),
        )
        .expect("rms grid is valid");
        PressureField {
            rms,
            dt: self.dt,
            steps: self.steps,
            ppw_water: self.ppw,
            c_ref: self.c_ref,
            params: params.clone(),
            probe_traces: out.probe_traces,
            warnings: self.warnings,
        }
    }
}

#[inline]
fn unravel(idx: usize, dims: [usize; 3]) -> [usize; 3] {
    let i = idx % dims[0];
    let j = (idx / dims[0]) % dims[1];
    let k = idx / (dims[0] * dims[1]);
    [i, j, k]
}

fn load_complex(src: &[f32], dst: &mut [Complex<f32>]) {
    dst.par_iter_mut().zip(src.par_iter()).for_each(|(d, &s)| {
        *d = Complex::new(s, 0.0);
    });
}

fn store_real(src: &[Complex<f32>], dst: &mut [f32]) {
    dst.par_iter_mut().zip(src.par_iter()).for_each(|(d, s)| {
        *d = s.re;
    });
}

fn update_velocity(
    u: &mut [f32],
    grad: &[f32],
    inv_rho_dt: &[f32],
    pml_sg: &[f32],
    axis: usize,
    dims: [usize; 3],
) {
    let [nx, ny, _] = dims;
    let nxy = nx * ny;
    u.par_chunks_mut(nxy).enumerate().for_each(|(k, slab)| {
        for j in 0..ny {
            let row_f = match axis {
                1 => pml_sg[j],
                2 => pml_sg[k],
                _ => 1.0,
            };
            let base = j * nx;
            for i in 0..nx {
                let idx = base + i;
                let g = k * nxy + idx;
                let f = if axis == 0 { pml_sg[i] } else { row_f };
                slab[idx] = f * (f * slab[idx] - inv_rho_dt[g] * grad[g]);
            }
        }
    });
}

fn update_density(
    rho: &mut [f32],
    div: &[f32],
    rho0_dt: &[f32],
    damp: &[f32],
    pml: &[f32],
    axis: usize,
    dims: [usize; 3],
) {
    let [nx, ny, _] = dims;
    let nxy = nx * ny;
    rho.par_chunks_mut(nxy).enumerate().for_each(|(k, slab)| {
        for j in 0..ny {
            let row_f = match axis {
                1 => pml[j],
                2 => pml[k],
                _ => 1.0,
            };
            let base = j * nx;
            for i in 0..nx {
                let idx = base + i;
                let g = k * nxy + idx;
                let f = if axis == 0 { pml[i] } else { row_f };
                slab[idx] = damp[g] * (f * (f * slab[idx] - rho0_dt[g] * div[g]));
            }
        }
    });
}

fn pressure_pass(p: &mut [f32], rho: &[Vec<f32>; 3], c2: &[f32], rms_acc: Option<&mut Vec<f32>>) {
    match rms_acc {
        Some(acc) => {
            p.par_iter_mut()
                .zip(acc.par_iter_mut())
                .enumerate()
                .for_each(|(g, (pv, av))| {
                    let v = c2[g] * (rho[0][g] + rho[1][g] + rho[2][g]);
                    *pv = v;
                    *av += v * v;
                });
        }
        None => {
            p.par_iter_mut().enumerate().for_each(|(g, pv)| {
                *pv = c2[g] * (rho[0][g] + rho[1][g] + rho[2][g]);
            });
        }
    }
}

/// Trilinear sample of a raw field on a grid, edge-clamped, continuous voxel
/// coordinates.
pub(crate) fn sample_trilinear_raw(data: &[f32], dims: [usize; 3], c: [f64; 3]) -> f64 {
    let [nx, ny, nz] = dims;
    let x = c[0].clamp(0.0, (nx - 1) as f64);
    let y = c[1].clamp(0.0, (ny - 1) as f64);
    let z = c[2].clamp(0.0, (nz - 1) as f64);
    let i0 = x.floor() as usize;
    let j0 = y.floor() as usize;
    let k0 = z.floor() as usize;
    let i1 = (i0 + 1).min(nx - 1);
    let j1 = (j0 + 1).min(ny - 1);
    let k1 = (k0 + 1).min(nz - 1);
    let (fx, fy, fz) = (x - i0 as f64, y - j0 as f64, z - k0 as f64);
    let at = |i: usize, j: usize, k: usize| data[i + nx * (j + ny * k)] as f64;
    let c00 = at(i0, j0, k0) * (1.0 - fx) + at(i1, j0, k0) * fx;
    let c10 = at(i0, j1, k0) * (1.0 - fx) + at(i1, j1, k0) * fx;
    let c01 = at(i0, j0, k1) * (1.0 - fx) + at(i1, j0, k1) * fx;
    let c11 = at(i0, j1, k1) * (1.0 - fx) + at(i1, j1, k1) * fx;
    let c0 = c00 * (1.0 - fy) + c10 * fy;
    let c1 = c01 * (1.0 - fy) + c11 * fy;
    c0 * (1.0 - fz) + c1 * fz
}
