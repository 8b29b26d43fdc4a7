//! 3D FFT passes over flat x-fastest buffers, parallelized per line batch.
//!
//! The z pass transposes into a z-fastest scratch buffer so every FFT runs
//! on contiguous lines; both transposes are structured as parallel writes to
//! disjoint output chunks with shared read-only input.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use rayon::prelude::*;
use std::sync::Arc;

pub(crate) struct Spectral3 {
    dims: [usize; 3],
    fwd: [Option<Arc<dyn Fft<f32>>>; 3],
    inv: [Option<Arc<dyn Fft<f32>>>; 3],
}

impl Spectral3 {
    pub fn new(dims: [usize; 3]) -> Spectral3 {
        let mut planner = FftPlanner::new();
        let plan = |n: usize, forward: bool, planner: &mut FftPlanner<f32>| {
            if n > 1 {
                Some(if forward { planner.plan_fft_forward(n) } else { planner.plan_fft_inverse(n) })
            } else {
                None
            }
        };
        Spectral3 {
            dims,
            fwd: [
                plan(dims[0], true, &mut planner),
                plan(dims[1], true, &mut planner),
                plan(dims[2], true, &mut planner),
            ],
            inv: [
                plan(dims[0], false, &mut planner),
                plan(dims[1], false, &mut planner),
                plan(dims[2], false, &mut planner),
            ],
        }
    }

    /// In-place 3D FFT. `ztmp` is caller-provided scratch of the same length.
    pub fn fft3(&self, buf: &mut [Complex<f32>], inverse: bool, ztmp: &mut [Complex<f32>]) {
        let [nx, ny, nz] = self.dims;
        let nxy = nx * ny;
        let plans = if inverse { &self.inv } else { &self.fwd };

        if let Some(fx) = &plans[0] {
            buf.par_chunks_mut(nx).for_each(|line| {
                let mut scratch = vec![Complex::default(); fx.get_inplace_scratch_len()];
                fx.process_with_scratch(line, &mut scratch);
            });
        }
        if let Some(fy) = &plans[1] {
            buf.par_chunks_mut(nxy).for_each(|slab| {
                let mut line = vec![Complex::default(); ny];
                let mut scratch = vec![Complex::default(); fy.get_inplace_scratch_len()];
                for i in 0..nx {
                    for j in 0..ny {
                        line[j] = slab[i + j * nx];
                    }
                    fy.process_with_scratch(&mut line, &mut scratch);
                    for j in 0..ny {
                        slab[i + j * nx] = line[j];
                    }
                }
            });
        }
        if let Some(fz) = &plans[2] {
            // gather each xy column into contiguous z lines, FFT, scatter back
            let src: &[Complex<f32>] = buf;
            ztmp.par_chunks_mut(nz).enumerate().for_each(|(c, line)| {
                let mut scratch = vec![Complex::default(); fz.get_inplace_scratch_len()];
                for (k, v) in line.iter_mut().enumerate() {
                    *v = src[c + k * nxy];
                }
                fz.process_with_scratch(line, &mut scratch);
            });
            let zsrc: &[Complex<f32>] = ztmp;
            buf.par_chunks_mut(nxy).enumerate().for_each(|(k, slab)| {
                for (c, v) in slab.iter_mut().enumerate() {
                    *v = zsrc[c * nz + k];
                }
            });
        }
    }
}

/// FFT wavenumbers for axis length `n` and spacing `d`, standard ordering.
pub(crate) fn wavenumbers(n: usize, d: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let m = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            2.0 * std::f64::consts::PI * m / (n as f64 * d)
        })
        .collect()
}

/// True for the Nyquist bin of an even-length axis; its derivative
/// multiplier is zeroed to keep real fields real.
pub(crate) fn is_nyquist(i: usize, n: usize) -> bool {
    n % 2 == 0 && i == n / 2
}
