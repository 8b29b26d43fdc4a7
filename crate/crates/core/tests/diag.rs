// temporary diagnostic
use skullwave::acoustic_map::{MaterialConstants, Medium};
use skullwave::solver::{simulate, SimParams, SourceDrive};
use skullwave::transducer::SourceGrid;

#[test]
#[ignore]
fn diag_1d() {
    let n = 256;
    let dx = 0.2885;
    let medium = Medium::water([n, 1, 1], [dx; 3], [0.0; 3], &MaterialConstants::default()).unwrap();
    let sources =
        SourceGrid::from_voxel_lists([n, 1, 1], [dx; 3], [0.0; 3], vec![vec![20]]).unwrap();
    for cycles in [2.0f32, 4.0, 8.0, 16.0] {
        let params = SimParams {
            f0: 650e3,
            n_cycles: cycles as f64,
            rms_window_cycles: 1.0,
            ..SimParams::default()
        };
        let f = simulate(&medium, &sources, &SourceDrive::uniform(1, 1.0), &params).unwrap();
        let data = f.rms.data();
        let peak = data.iter().cloned().fold(0.0f32, f32::max);
        let front = data.iter().rposition(|&v| v > 0.01 * peak).unwrap_or(0);
        println!(
            "cycles {cycles}: dt={:.3e} steps={} peak={:.4e} front at voxel {} (expected ~{} for c=1500)",
            f.dt,
            f.steps,
            peak,
            front,
            20.0 + 1500.0 * (cycles as f64 / 650e3) / (dx * 1e-3)
        );
        let slice: Vec<String> = (15..40).map(|i| format!("{:.2e}", data[i])).collect();
        println!("  near-source rms: {}", slice.join(" "));
    }
}
