use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use steklov_lab::analytic::{annulus_mode_eigenvalues, bessel_j};
use steklov_lab::eigen::{clusters, dense_pencil_eigenvalues, solve_pencil_smallest, SolverOptions};
use steklov_lab::fem::{assemble_mass, assemble_stiffness_with, element_mass, element_stiffness};
use steklov_lab::mesh::{build_rectangle_grid, hole_radius, RegionFilter};
use steklov_lab::par::Exec;
use steklov_lab::report::{csv_string, fit_slope, parse_csv, OutputHeader, SweepReport};
use steklov_lab::sparse::SymmetricSparseMatrix;

fn triangle() -> impl Strategy<Value = [[f64; 2]; 3]> {
    prop::array::uniform3(prop::array::uniform2(-2.0f64..2.0))
        .prop_filter("non-degenerate", |p| {
            let a = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            a.abs() > 1e-2
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn element_matrices_are_consistent(p in triangle()) {
        let k = element_stiffness(p);
        let m = element_mass(p);
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs();
        let mut total = 0.0;
        for i in 0..3 {
            prop_assert!(k[i].iter().sum::<f64>().abs() < 1e-10);
            for j in 0..3 {
                prop_assert!((k[i][j] - k[j][i]).abs() < 1e-12);
                prop_assert!((m[i][j] - m[j][i]).abs() < 1e-15);
                total += m[i][j];
            }
        }
        prop_assert!((total - area).abs() < 1e-12 * area.max(1.0));
        // energy of the linear function x equals the area
        let x = [p[0][0], p[1][0], p[2][0]];
        let e: f64 = (0..3).map(|i| (0..3).map(|j| x[i] * k[i][j] * x[j]).sum::<f64>()).sum();
        prop_assert!((e - area).abs() < 1e-9 * area.max(1.0));
    }

    #[test]
    fn grid_assembly_invariants(w in 0.2f64..3.0, h in 0.2f64..3.0, nx in 1usize..9, ny in 1usize..9) {
        let mesh = build_rectangle_grid(w, h, nx, ny).unwrap();
        let k = assemble_stiffness_with(&mesh, RegionFilter::All, Exec::Sequential);
        let kp = assemble_stiffness_with(&mesh, RegionFilter::All, Exec::Parallel);
        prop_assert_eq!(k.to_dense(), kp.to_dense());
        prop_assert!(k.asymmetry() == 0.0);
        let m = assemble_mass(&mesh, RegionFilter::All);
        let ones = vec![1.0; mesh.n_dofs()];
        prop_assert!(k.matvec(&ones).iter().all(|v| v.abs() < 1e-11));
        prop_assert!((m.quad_form(&ones) - w * h).abs() < 1e-12 * w * h);
        let y: Vec<f64> = mesh.vertices().iter().map(|p| p[1]).collect();
        prop_assert!((k.quad_form(&y) - w * h).abs() < 1e-10 * w * h);
    }

    #[test]
    fn bessel_three_term_recurrence(ell in 1usize..20, x in 0.1f64..100.0) {
        let a = bessel_j(ell - 1, x).unwrap();
        let b = bessel_j(ell, x).unwrap();
        let c = bessel_j(ell + 1, x).unwrap();
        let scale = a.abs().max(c.abs()).max(b.abs() * 2.0 * ell as f64 / x).max(1e-300);
        prop_assert!((a + c - 2.0 * ell as f64 / x * b).abs() <= 1e-10 * scale.max(1e-3));
    }

    #[test]
    fn slope_of_power_laws(p in -3.0f64..3.0, c in 0.01f64..100.0) {
        let x: Vec<f64> = (1..=6).map(|i| 2f64.powi(-i)).collect();
        let y: Vec<f64> = x.iter().map(|v| c * v.powf(p)).collect();
        let fit = fit_slope(&x, &y).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-10);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e12f64..1e12, 3), 0..20)) {
        let report = SweepReport {
            title: "values".into(),
            columns: vec!["a".into(), "b".into(), "c".into()],
            rows: rows.clone(),
            ..SweepReport::default()
        };
        let (cols, back) = parse_csv(&csv_string(&report, &OutputHeader::new("k = 1"))).unwrap();
        prop_assert_eq!(cols, report.columns);
        prop_assert_eq!(back, rows);
    }

    #[test]
    fn hole_radius_is_admissible_exactly_below_half_the_cell(eps in 0.01f64..1.0, beta in 0.0f64..20.0) {
        let r = beta * eps * eps;
        match hole_radius(eps, beta, 2) {
            Ok(v) => { prop_assert!(r < eps / 2.0); prop_assert!((v - r).abs() <= 1e-14 * r); }
            Err(_) => prop_assert!(r >= eps / 2.0),
        }
    }

    #[test]
    fn annulus_eigenvalues_scale_inversely(ell in 0usize..8, r in 0.05f64..0.9, s in 0.1f64..10.0) {
        let a = annulus_mode_eigenvalues(ell, r, 1.0).unwrap();
        let b = annulus_mode_eigenvalues(ell, r * s, s).unwrap();
        for i in 0..2 {
            prop_assert!((a[i] - s * b[i]).abs() <= 1e-9 * a[i].abs().max(1e-12));
        }
    }

    #[test]
    fn clusters_partition_sorted_values(mut v in prop::collection::vec(0.0f64..10.0, 1..30)) {
        v.sort_by(f64::total_cmp);
        let cl = clusters(&v, 1e-4);
        let mut next = 0;
        for r in &cl {
            prop_assert_eq!(r.start, next);
            prop_assert!(r.end > r.start);
            next = r.end;
        }
        prop_assert_eq!(next, v.len());
    }

    #[test]
    fn subspace_iteration_matches_dense(seed in 0u64..1000, n in 4usize..12) {
        // random path-like stiffness with a positive definite diagonal mass
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trip = Vec::new();
        for i in 0..n - 1 {
            let w: f64 = rng.random_range(0.5..2.0);
            trip.extend([(i, i, w), (i + 1, i + 1, w), (i, i + 1, -w)]);
        }
        let k = SymmetricSparseMatrix::from_triplets(n, &trip, true);
        let c = SymmetricSparseMatrix::from_triplets(
            n,
            &(0..n).map(|i| (i, i, rng.random_range(0.5..2.0))).collect::<Vec<_>>(),
            true,
        );
        let dense = dense_pencil_eigenvalues(&k, &c).unwrap();
        let s = solve_pencil_smallest(&k, &c, 3, &SolverOptions::default()).unwrap();
        for i in 0..4 {
            prop_assert!((s.eigenvalues[i] - dense[i]).abs() < 1e-8 * dense[n - 1]);
        }
    }
}

#[test]
fn noisy_linear_data_gives_unit_slope() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<f64> = (0..40).map(|i| 1.0 + i as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| v * (1.0 + 0.01 * rng.random_range(-1.0..1.0))).collect();
    let s = fit_slope(&x, &y).unwrap().slope;
    assert!((0.95..=1.05).contains(&s), "{s}");
}
