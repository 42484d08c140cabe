use inert_core::analysis::{k_moment_tests, ks_uniformity, Verdict};
use inert_core::coefficients::{CoefficientSet, Gamma};
use inert_core::geometry::Domain;
use inert_core::simulate::{run_ensemble, BoundaryScheme, Dynamics, SimConfig, TrajectoryBatch};
use inert_core::skorokhod::{solve_skorokhod, DrivingPath};
use inert_core::stationary::{bump_basis, sample_stationary, stationarity_residual, StationaryMeasure};
use inert_core::{Matrix, Point};

fn disc(gamma: Matrix<2>) -> CoefficientSet<2> {
    CoefficientSet::new(Domain::<2>::ball(Point::<2>::zeros(), 1.0).unwrap(), Gamma::new(gamma).unwrap())
}

#[test]
fn exact_samples_pass_the_battery() {
    let cs = disc(Matrix::<2>::new(2.0, 0.0, 0.0, 1.0));
    let sm = StationaryMeasure::reflected(&cs).unwrap();
    let batch = TrajectoryBatch::from_samples(&sample_stationary(&sm, 20_000, 5).unwrap());
    assert_eq!(ks_uniformity(&batch, &sm, 0).unwrap().verdict, Verdict::Pass);
    let m = k_moment_tests(&batch, &sm).unwrap();
    assert!(m.passed(), "{:?}", m.checks);
}

#[test]
fn reflected_measure_is_annihilated_by_the_generator() {
    let cs = disc(Matrix::<2>::new(1.5, -0.2, -0.2, 1.0));
    let sm = StationaryMeasure::reflected(&cs).unwrap();
    for f in bump_basis(cs.domain()) {
        let r = stationarity_residual(&sm, &f).unwrap();
        assert!(r.value.abs() < 1e-4, "{}", r.value);
    }
}

#[test]
fn short_runs_stay_in_the_closure() {
    let cs = disc(Matrix::<2>::identity());
    for scheme in [BoundaryScheme::Projection, BoundaryScheme::Mirror] {
        let mut cfg = SimConfig::<2>::new(1e-2, 5.0, 4, 3);
        cfg.boundary = scheme;
        let batch = run_ensemble(&cs, &Dynamics::Reflected, &cfg).unwrap();
        assert_eq!(batch.len(), 4 * cfg.snapshots_per_path());
        assert!(batch.snapshots().all(|s| cs.domain().in_closure(&s.x) && s.ell >= 0.0));
        assert_eq!(batch.diagnostics.boundary_overflow, 0);
    }
}

#[test]
fn skorokhod_on_a_disc_keeps_straight_inward_paths() {
    let d = Domain::<2>::ball(Point::<2>::zeros(), 1.0).unwrap();
    let f = DrivingPath::from_fn(0.0, 1.0, 100, |t| Point::<2>::new(0.5 * t, 0.0)).unwrap();
    let sol = solve_skorokhod(&d, &f).unwrap();
    assert!(sol.ell.iter().all(|&l| l == 0.0));
    assert!((sol.g.last().unwrap()[0] - 0.5).abs() < 1e-15);
}
