//! Single-frequency amplitude/phase extraction from recorded time series.

use crate::error::{Error, Result};

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let y = x.rem_euclid(two_pi);
    if y > std::f64::consts::PI {
        y - two_pi
    } else {
        y
    }
}

/// Extract amplitude and phase of the `f0` component of a time series.
///
/// The first third of the series (the transient) is discarded, the remainder
/// truncated to a whole number of carrier periods, Hann-windowed, and the DFT
/// bin nearest `f0` evaluated directly. The returned phase uses the
/// convention `A * cos(2*pi*f0*t + phi)` with `t = 0` at the first sample of
/// the series.
pub fn extract_amp_phase(series: &[f32], f0: f64, dt: f64) -> Result<(f64, f64)> {
    if !(f0 > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidArgument("extract_amp_phase needs positive f0 and dt".into()));
    }
    let total_t = series.len() as f64 * dt;
    if total_t < 3.0 / f0 {
        return Err(Error::InvalidArgument(format!(
            "series too short: {:.3} periods of f0, need at least 3",
            total_t * f0
        )));
    }
    let n0 = series.len() / 3;
    let seg = &series[n0..];
    // truncating to whole periods puts the nearest DFT bin on f0 up to a
    // fraction of a sample, taming Hann scalloping
    let periods = (seg.len() as f64 * dt * f0).floor().max(1.0);
    let n_keep = ((periods / (f0 * dt)).round() as usize).min(seg.len()).max(4);
    let seg = &seg[..n_keep];
    let n = seg.len();

    let bin = (f0 * n as f64 * dt).round().max(1.0) as usize;
    let bin = bin.min(n / 2);
    let mut re = 0.0f64;
    let mut im = 0.0f64;
    let mut wsum = 0.0f64;
    for (m, &s) in seg.iter().enumerate() {
        // periodic Hann: orthogonal to off-bin leakage beyond +-1 bin
        let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * m as f64 / n as f64).cos();
        let ang = -2.0 * std::f64::consts::PI * bin as f64 * m as f64 / n as f64;
        re += s as f64 * w * ang.cos();
        im += s as f64 * w * ang.sin();
        wsum += w;
    }
    let amp = 2.0 * (re * re + im * im).sqrt() / wsum;
    let phase_seg = im.atan2(re);
    let phase = wrap_phase(phase_seg - 2.0 * std::f64::consts::PI * f0 * (n0 as f64 * dt));
    Ok((amp, phase))
}
