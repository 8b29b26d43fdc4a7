//! Solver validation against analytic oracles: homogeneous exactness,
//! Beer-Lambert attenuation, linearity, point-source travel times and phase
//! reciprocity, and PML energy decay.

use skullwave::acoustic_map::{MaterialConstants, Medium};
use skullwave::solver::{
    extract_amp_phase, record_point_source, simulate, wrap_phase, SimParams, SourceDrive,
};
use skullwave::transducer::SourceGrid;
use skullwave::volume::WorldPoint;

const C_WATER: f64 = 1500.0;
const F0: f64 = 650e3;

fn water_medium(dims: [usize; 3], dx_mm: f64) -> Medium {
    Medium::water(dims, [dx_mm; 3], [0.0; 3], &MaterialConstants::default()).unwrap()
}

/// 1D water line with a single-voxel drive plane at `src_i`.
fn line_setup(n: usize, dx_mm: f64, src_i: usize) -> (Medium, SourceGrid) {
    let medium = water_medium([n, 1, 1], dx_mm);
    let sources =
        SourceGrid::from_voxel_lists([n, 1, 1], [dx_mm; 3], [0.0; 3], vec![vec![src_i]]).unwrap();
    (medium, sources)
}

#[test]
fn plane_wave_amplitude_exact_over_fifty_wavelengths() {
    // c == c_ref: the k-space scheme propagates without numerical decay
    let lambda_mm = C_WATER / F0 * 1e3; // 2.3077 mm
    let dx = lambda_mm / 8.0;
    let n = 512;
    let src = 12;
    let (medium, sources) = line_setup(n, dx, src);
    let near = src as f64 + 5.0 * 8.0; // 5 wavelengths from the source
    let far = near + 50.0 * 8.0; // 50 wavelengths further
    let params = SimParams {
        f0: F0,
        n_cycles: 90.0,
        rms_window_cycles: 20.0,
        probes: vec![[near * dx, 0.0, 0.0], [far * dx, 0.0, 0.0]],
        ..SimParams::default()
    };
    let field = simulate(&medium, &sources, &SourceDrive::uniform(1, 1.0), &params).unwrap();
    let (a_near, _) = extract_amp_phase(&field.probe_traces[0], F0, field.dt).unwrap();
    let (a_far, _) = extract_amp_phase(&field.probe_traces[1], F0, field.dt).unwrap();
    let ratio = a_far / a_near;
    assert!(
        (ratio - 1.0).abs() < 0.005,
        "amplitude ratio over 50 wavelengths: {ratio} (near {a_near}, far {a_far})"
    );
}

#[test]
fn lossy_medium_matches_beer_lambert() {
    let lambda_mm = C_WATER / F0 * 1e3;
    let dx = lambda_mm / 8.0;
    let n = 512;
    let src = 12;
    let (mut medium, sources) = line_setup(n, dx, src);
    let alpha_np = 20.0; // Np/m
    for v in medium.alpha_np.data_mut() {
        *v = alpha_np as f32;
    }
    let near = src as f64 + 5.0 * 8.0;
    let far = near + 50.0 * 8.0;
    let params = SimParams {
        f0: F0,
        n_cycles: 90.0,
        rms_window_cycles: 20.0,
        probes: vec![[near * dx, 0.0, 0.0], [far * dx, 0.0, 0.0]],
        ..SimParams::default()
    };
    let field = simulate(&medium, &sources, &SourceDrive::uniform(1, 1.0), &params).unwrap();
    let (a_near, _) = extract_amp_phase(&field.probe_traces[0], F0, field.dt).unwrap();
    let (a_far, _) = extract_amp_phase(&field.probe_traces[1], F0, field.dt).unwrap();
    let distance_m = (far - near) * dx * 1e-3;
    let expected = (-alpha_np * distance_m).exp();
    let ratio = a_far / a_near;
    assert!(
        ((ratio - expected) / expected).abs() < 0.02,
        "attenuation ratio {ratio} vs Beer-Lambert {expected}"
    );
}

#[test]
fn drive_scaling_is_exactly_linear() {
    let dims = [48, 48, 48];
    let dx = 0.52;
    let medium = water_medium(dims, dx);
    let mid = |i: usize, j: usize, k: usize| i + dims[0] * (j + dims[1] * k);
    let sources = SourceGrid::from_voxel_lists(
        dims,
        [dx; 3],
        [0.0; 3],
        vec![vec![mid(24, 24, 14), mid(25, 24, 14), mid(24, 25, 14)]],
    )
    .unwrap();
    let params = SimParams { f0: F0, n_cycles: 12.0, rms_window_cycles: 4.0, ..SimParams::default() };
    let f1 = simulate(&medium, &sources, &SourceDrive::uniform(1, 1.0), &params).unwrap();
    let f2 = simulate(&medium, &sources, &SourceDrive::uniform(1, 2.0), &params).unwrap();
    // scaling by a power of two is exact in floating point
    for (a, b) in f1.rms.data().iter().zip(f2.rms.data()) {
        assert_eq!(*a * 2.0, *b);
    }
}

#[test]
fn point_source_arrival_time_and_phase_reciprocity() {
    let dims = [96, 96, 96];
    let dx = 0.52;
    let medium = water_medium(dims, dx);
    let center = [47.0 * dx, 47.0 * dx, 47.0 * dx];
    // single-voxel "elements" at assorted ranges/directions
    let recv: Vec<[usize; 3]> = vec![
        [47, 47, 82],
        [47, 82, 47],
        [82, 47, 47],
        [47, 47, 12],
        [70, 70, 70],
        [30, 60, 75],
    ];
    let idx = |p: [usize; 3]| p[0] + dims[0] * (p[1] + dims[1] * p[2]);
    let sources = SourceGrid::from_voxel_lists(
        dims,
        [dx; 3],
        [0.0; 3],
        recv.iter().map(|&p| vec![idx(p)]).collect(),
    )
    .unwrap();
    let params = SimParams { f0: F0, n_cycles: 40.0, rms_window_cycles: 10.0, ..SimParams::default() };
    let rec = record_point_source(&medium, WorldPoint::from_array(center), &sources, &params).unwrap();

    let omega = 2.0 * std::f64::consts::PI * F0;
    for (e, p) in recv.iter().enumerate() {
        let series = &rec.element_series[e][0];
        let d_mm = ((p[0] as f64 * dx - center[0]).powi(2)
            + (p[1] as f64 * dx - center[1]).powi(2)
            + (p[2] as f64 * dx - center[2]).powi(2))
        .sqrt();
        let d_m = d_mm * 1e-3;

        // arrival time from the first sustained rise of |p|
        let peak = series.iter().fold(0.0f32, |m, &v| m.max(v.abs()));
        let arrive_idx = series.iter().position(|&v| v.abs() > 0.1 * peak).unwrap();
        let t_arrive = rec.t_first_sample + arrive_idx as f64 * rec.dt;
        let t_expected = d_m / C_WATER;
        assert!(
            (t_arrive - t_expected).abs() < 1.5 / F0,
            "element {e}: arrival {t_arrive:.3e} vs {t_expected:.3e}"
        );

        // steady-state phase equals -omega * d / c
        let (_, phase_series) = extract_amp_phase(series, F0, rec.dt).unwrap();
        let phase_abs = wrap_phase(phase_series - omega * rec.t_first_sample);
        let expected = wrap_phase(-omega * d_m / C_WATER);
        let err = wrap_phase(phase_abs - expected).abs();
        assert!(
            err < 0.05,
            "element {e} at {d_mm:.2} mm: phase {phase_abs:.4} vs {expected:.4} (err {err:.4})"
        );
    }

    // two equidistant elements agree to much tighter tolerance
    let (_, p1) = extract_amp_phase(&rec.element_series[0][0], F0, rec.dt).unwrap();
    let (_, p2) = extract_amp_phase(&rec.element_series[1][0], F0, rec.dt).unwrap();
    assert!(
        wrap_phase(p1 - p2).abs() < 1e-3,
        "equidistant voxels disagree: {p1} vs {p2}"
    );
}

#[test]
fn energy_decays_after_source_shutoff() {
    let dims = [64, 64, 64];
    let dx = 0.52;
    let medium = water_medium(dims, dx);
    let mid = 32 * (1 + dims[0] * (1 + dims[1]));
    let sources = SourceGrid::from_voxel_lists(dims, [dx; 3], [0.0; 3], vec![vec![mid]]).unwrap();
    let params = SimParams {
        f0: F0,
        n_cycles: 40.0,
        rms_window_cycles: 5.0,
        source_on_cycles: Some(6.0),
        probes: vec![[32.0 * dx, 32.0 * dx, 32.0 * dx]],
        ..SimParams::default()
    };
    // proxy for total field energy: RMS of the probe trace is not enough;
    // measure the whole-grid pressure energy by re-running with probes on a
    // grid of sample points is overkill. Instead assert the probe envelope
    // decays monotonically after shutoff plus transit.
    let field = simulate(&medium, &sources, &SourceDrive::uniform(1, 1.0), &params).unwrap();
    let trace = &field.probe_traces[0];
    let steps_per_cycle = (1.0 / F0 / field.dt).round() as usize;
    // cycle-RMS envelope starting after shutoff
    let start = 8 * steps_per_cycle;
    let mut env = Vec::new();
    let mut i = start;
    while i + steps_per_cycle <= trace.len() {
        let e: f64 = trace[i..i + steps_per_cycle].iter().map(|&v| (v as f64) * (v as f64)).sum();
        env.push(e);
        i += steps_per_cycle;
    }
    for w in env.windows(2) {
        assert!(
            w[1] <= w[0] * (1.0 + 1e-6) + 1e-30,
            "envelope grew after shutoff: {:?}",
            env
        );
    }
    // and it decays to a tiny fraction of its post-shutoff start
    assert!(env.last().unwrap() < &(env[0] * 1e-3 + 1e-30), "{env:?}");
}

#[test]
fn ppw_guards() {
    // below 2 PPW in water is a hard error
    let medium = water_medium([64, 8, 8], 1.3);
    let sources =
        SourceGrid::from_voxel_lists([64, 8, 8], [1.3; 3], [0.0; 3], vec![vec![32]]).unwrap();
    let params = SimParams { f0: F0, ..SimParams::default() };
    let err = simulate(&medium, &sources, &SourceDrive::uniform(1, 1.0), &params);
    assert!(err.is_err());

    // between 2 and 4.3: runs with a warning recorded
    let medium = water_medium([64, 24, 24], 0.7);
    let srcs = SourceGrid::from_voxel_lists(
        [64, 24, 24],
        [0.7; 3],
        [0.0; 3],
        vec![vec![32 + 64 * (12 + 24 * 12)]],
    )
    .unwrap();
    let params = SimParams { f0: F0, n_cycles: 6.0, rms_window_cycles: 2.0, ..SimParams::default() };
    let field = simulate(&medium, &srcs, &SourceDrive::uniform(1, 1.0), &params).unwrap();
    assert!(!field.warnings.is_empty());
    assert!(field.ppw_water < 4.3 && field.ppw_water >= 2.0);
}
