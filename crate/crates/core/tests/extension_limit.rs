//! A harmonic extension of an eigenfunction across a small hole sees the
//! trace `2 ∇u · y` of a Neumann-like obstacle, so each per-hole energy ratio
//! tends to `4π` as the hole is resolved, and the aggregate ratio tends to 4π
//! times the fraction of the square covered by interior cells.

use std::f64::consts::PI;

use steklov_lab::problems::{run_extension_sweep, ExtensionSweepParams};

#[test]
fn per_hole_ratio_approaches_four_pi() {
    let mut params = ExtensionSweepParams::new(1.0, vec![1.0 / 16.0], 1);
    let mut previous = 0.0;
    for (n, rings) in [(4, 4), (8, 6), (12, 10)] {
        params.nodes_per_cell_edge = n;
        params.hole_rings = rings;
        let (reports, _) = run_extension_sweep(&params).unwrap();
        let r = &reports[0];
        let max = r.per_hole.iter().cloned().fold(0.0, f64::max);
        assert!(max > previous && max < 4.0 * PI, "{n}/{rings}: {max}");
        previous = max;
        let interior = (15.0f64 / 16.0).powi(2);
        assert!(r.aggregate < 4.0 * PI * interior * 1.02, "{}", r.aggregate);
    }
    assert!((previous - 4.0 * PI).abs() < 0.04 * 4.0 * PI, "{previous}");
}
