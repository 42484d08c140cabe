//! Acceptance suite: eight criteria, one PASS/FAIL line each. Exits nonzero
//! when any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use inert_core::analysis::{
    correlation_with_se, k_moment_tests, ks_uniformity, mean_with_se, sector_uniformity, weak_convergence_sweep, SweepConfig,
};
use inert_core::coefficients::{CoefficientSet, Gamma, Potential};
use inert_core::geometry::{Domain, RegularizedDistance};
use inert_core::simulate::{run_ensemble_with, Dynamics, InitialCondition, Sequential, SimConfig, TrajectoryBatch};
use inert_core::skorokhod::{solve_skorokhod, DrivingPath};
use inert_core::stationary::{bump_basis, stationarity_residual, StationaryMeasure};
use inert_core::{Matrix, Point};
use inert_sim::Rayon;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

fn interval() -> CoefficientSet<1> {
    CoefficientSet::new(Domain::<1>::interval(0.0, 1.0).unwrap(), Gamma::identity())
}

fn stationarity_1d() -> (Outcome, TrajectoryBatch<1>) {
    let cs = interval();
    let sm = StationaryMeasure::reflected(&cs).unwrap();
    let mut cfg = SimConfig::<1>::new(1e-4, 50.0, 200, 1);
    cfg.burn_in = 10.0;
    cfg.snapshot_stride = 100;
    let batch = run_ensemble_with(&Rayon, &cs, &Dynamics::Reflected, &cfg).unwrap();
    let ks = ks_uniformity(&batch, &sm, 0).unwrap();
    let var_k = variance(&batch.k_coordinate(0));
    let (corr, _) = correlation_with_se(&batch.x_coordinate(0), &batch.k_coordinate(0));
    let pass = ks.passed() && (var_k - 0.5).abs() <= 0.05 && corr.abs() <= 0.02;
    let detail = format!(
        "KS D = {:.5} (threshold {:.5}, ESS {:.0}, {}), Var(K) = {var_k:.4}, corr(X, K) = {corr:.4}",
        ks.statistic, ks.threshold, ks.sample_size, ks.notes
    );
    (outcome(pass, detail), batch)
}

fn anisotropic_disc() -> Outcome {
    let gamma = Gamma::new(Matrix::<2>::new(2.0, 0.0, 0.0, 1.0)).unwrap();
    let cs = CoefficientSet::new(Domain::<2>::ball(Point::<2>::zeros(), 1.0).unwrap(), gamma);
    let sm = StationaryMeasure::reflected(&cs).unwrap();
    let mut cfg = SimConfig::<2>::new(1e-4, 50.0, 200, 2);
    cfg.burn_in = 10.0;
    cfg.snapshot_stride = 100;
    let batch = run_ensemble_with(&Rayon, &cs, &Dynamics::Reflected, &cfg).unwrap();
    let moments = k_moment_tests(&batch, &sm).unwrap();
    let cov: Vec<_> = moments.checks.iter().filter(|c| c.label.starts_with("cov_")).collect();
    let sectors = sector_uniformity(&batch, &sm, 8).unwrap();
    let pass = cov.iter().all(|c| c.passed()) && sectors.passed();
    let cov_text: Vec<String> =
        cov.iter().map(|c| format!("{} = {:.4} +- {:.4} (target {})", c.label, c.estimate, c.standard_error, c.expected)).collect();
    outcome(pass, format!("{}; sector chi2 = {:.2} ({})", cov_text.join(", "), sectors.statistic, sectors.notes))
}

fn worst_residuals<const D: usize>(sm: &StationaryMeasure<D>) -> (usize, f64, f64) {
    let basis = bump_basis(sm.coefficients().domain());
    let pert = sm.perturbed(1.1).unwrap();
    let worst = basis.iter().map(|f| stationarity_residual(sm, f).unwrap().value.abs()).fold(0.0, f64::max);
    let sens = basis.iter().map(|f| stationarity_residual(&pert, f).unwrap().value.abs()).fold(0.0, f64::max);
    (basis.len(), worst, sens)
}

fn generator_orthogonality() -> Outcome {
    let cs1 = interval();
    let p1 = Potential::regularized(2, RegularizedDistance::new(cs1.domain())).unwrap();
    let (n1, r1, s1) = worst_residuals(&StationaryMeasure::gradient(&cs1, &p1).unwrap());
    let gamma = Gamma::new(Matrix::<2>::new(2.0, 0.3, 0.3, 1.0)).unwrap();
    let cs2 = CoefficientSet::new(Domain::<2>::ball(Point::<2>::zeros(), 1.0).unwrap(), gamma);
    let p2 = Potential::regularized(2, RegularizedDistance::new(cs2.domain())).unwrap();
    let (n2, r2, s2) = worst_residuals(&StationaryMeasure::gradient(&cs2, &p2).unwrap());
    let pass = n1 >= 5 && n2 >= 5 && r1 <= 1e-5 && r2 <= 1e-4 && s1 > 1e-4 && s2 > 1e-3;
    outcome(
        pass,
        format!("d=1: max |residual| {r1:.2e} over {n1} functions, perturbed {s1:.2e}; d=2: {r2:.2e} over {n2}, perturbed {s2:.2e}"),
    )
}

fn spiral(t: f64) -> Point<2> {
    let r = 0.3 + 1.2 * t;
    Point::<2>::new(r * (3.0 * t).cos(), r * (3.0 * t).sin())
}

fn skorokhod_oracle() -> Outcome {
    let half_line = Domain::<1>::interval(0.0, 1e4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let knots = rng.random_range(20..300);
        let mut v = rng.random_range(0.0..2.0);
        let mut values = vec![Point::<1>::new(v)];
        for _ in 1..knots {
            v += rng.random_range(-1.0..1.0);
            values.push(Point::<1>::new(v));
        }
        let times = (0..knots).map(|i| i as f64 * 0.01).collect();
        let f = DrivingPath::new(times, values.clone()).unwrap();
        let sol = solve_skorokhod(&half_line, &f).unwrap();
        let mut sup: f64 = 0.0;
        for (i, x) in values.iter().enumerate() {
            sup = sup.max(-x[0]);
            worst = worst.max((sol.ell[i] - sup).abs()).max((sol.g[i][0] - (x[0] + sup)).abs());
        }
    }
    let disc = Domain::<2>::ball(Point::<2>::zeros(), 1.0).unwrap();
    let end = |steps| {
        let f = DrivingPath::from_fn(0.0, 1.0, steps, spiral).unwrap();
        let sol = solve_skorokhod(&disc, &f).unwrap();
        (*sol.g.last().unwrap(), *sol.ell.last().unwrap())
    };
    let (g_ref, l_ref) = end(1 << 15);
    let errs: Vec<f64> = [256, 512, 1024, 2048]
        .iter()
        .map(|&n| {
            let (g, l) = end(n);
            (g - g_ref).norm() + (l - l_ref).abs()
        })
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        worst <= 1e-12 && min_order >= 0.9,
        format!("half-line max error {worst:.1e} over 100 paths; disc refinement orders {orders:.3?}"),
    )
}

fn girsanov() -> Outcome {
    let cs = interval();
    let mut cfg = SimConfig::<1>::new(1e-3, 0.5, 20_000, 5);
    cfg.burn_in = 0.5 - 0.5e-3;
    cfg.init = InitialCondition::Fixed { x: Point::<1>::new(0.3), k: Point::<1>::new(1.0) };
    let direct = run_ensemble_with(&Rayon, &cs, &Dynamics::Reflected, &cfg).unwrap();
    cfg.seed = 6;
    let driftless = run_ensemble_with(&Rayon, &cs, &Dynamics::DriftlessReflected, &cfg).unwrap();
    let finals = direct.finals();
    let weighted: Vec<(f64, f64, f64)> = driftless
        .ok_records()
        .map(|r| {
            let s = r.snapshots.last().unwrap();
            (s.x[0], s.k[0], r.log_weights.as_ref().unwrap().last().unwrap().exp())
        })
        .collect();
    let fs: [(&str, fn(f64, f64) -> f64); 3] =
        [("cos(pi x)", |x, _| (PI * x).cos()), ("tanh(k)", |_, k| k.tanh()), ("sin(x k)", |x, k| (x * k).sin())];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, f) in fs {
        let a: Vec<f64> = finals.iter().map(|s| f(s.x[0], s.k[0])).collect();
        let b: Vec<f64> = weighted.iter().map(|(x, k, w)| w * f(*x, *k)).collect();
        let (ma, sa) = mean_with_se(&a);
        let (mb, sb) = mean_with_se(&b);
        let z = (ma - mb) / (sa * sa + sb * sb).sqrt();
        pass &= z.abs() <= 3.0;
        parts.push(format!("{name}: {ma:.4} vs {mb:.4} (z = {z:.2})"));
    }
    let w: Vec<f64> = weighted.iter().map(|t| t.2).collect();
    let (mw, sw) = mean_with_se(&w);
    let zw = (mw - 1.0) / sw;
    pass &= zw.abs() <= 3.0 && driftless.diagnostics.weight_overflow == 0;
    parts.push(format!("mean weight {mw:.4} +- {sw:.4}"));
    outcome(pass, parts.join("; "))
}

fn weak_convergence() -> Outcome {
    let mut sim = SimConfig::<1>::new(1e-3, 50.0, 200, 7);
    sim.burn_in = 5.0;
    sim.snapshot_stride = 100;
    let cfg = SweepConfig { n_list: vec![1, 2, 4, 8], sim, margin: 0.0 };
    let r = weak_convergence_sweep(&Rayon, &interval(), &cfg).unwrap();
    outcome(
        r.report.passed(),
        format!("W1 {:.4?}, noise floor {:.4}, masses {:.4?}", r.distances, r.noise_floor, r.masses),
    )
}

fn non_explosion(batch: &TrajectoryBatch<1>) -> Outcome {
    let (half, full) = batch.max_k();
    let ratio = full / half;
    let overflow = batch.diagnostics.boundary_overflow;
    outcome(
        overflow == 0 && full.is_finite() && ratio <= 4.0,
        format!("boundary overflow {overflow}, max|K| {half:.3} at t_end/2 and {full:.3} at t_end (ratio {ratio:.3})"),
    )
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();

    // Regularized distances and V_n: gradient against central differences,
    // and the declared sandwich constants.
    let domains = [
        Domain::<2>::ball(Point::<2>::new(0.2, -0.1), 1.5).unwrap(),
        Domain::<2>::cuboid(Point::<2>::new(0.0, 0.0), Point::<2>::new(1.0, 2.0)).unwrap(),
        Domain::<2>::ellipsoid(Point::<2>::zeros(), Point::<2>::new(2.0, 1.0)).unwrap(),
    ];
    let mut grad_worst: f64 = 0.0;
    let mut sandwich_bad = 0;
    for dom in &domains {
        let rd = RegularizedDistance::new(dom);
        let (c1, c2) = rd.sandwich();
        let p = Potential::regularized(3, rd.clone()).unwrap();
        let (lo, hi) = dom.bounding_box();
        let mut tried = 0;
        while tried < 300 {
            let x = Point::<2>::new(rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1]));
            let dd = dom.signed_distance(&x).unwrap();
            if dd <= 1e-2 {
                continue;
            }
            tried += 1;
            let delta = rd.value(&x).unwrap();
            if delta < c1 * dd * (1.0 - 1e-12) || delta > c2 * dd * (1.0 + 1e-12) {
                sandwich_bad += 1;
            }
            let fd = |g: &dyn Fn(&Point<2>) -> f64, h: f64| {
                Point::<2>::from_fn(|i, _| {
                    let mut a = x;
                    let mut b = x;
                    a[i] += h;
                    b[i] -= h;
                    (g(&a) - g(&b)) / (2.0 * h)
                })
            };
            let g = rd.value_grad(&x).unwrap().1;
            let e = (g - fd(&|y| rd.value(y).unwrap(), 1e-5 * dd)).norm() / g.norm().max(1e-3);
            grad_worst = grad_worst.max(e);
            let gv = p.gradient(&x).unwrap();
            let h = 1e-4 * delta * (3.0 * delta).min(1.0);
            let e = (gv - fd(&|y| p.value(y), h)).norm() / gv.norm().max(1e-6);
            grad_worst = grad_worst.max(e);
        }
    }
    if grad_worst > 1e-6 {
        failures.push(format!("gradient relative error {grad_worst:.1e}"));
    }
    if sandwich_bad > 0 {
        failures.push(format!("{sandwich_bad} sandwich violations"));
    }

    // Skorokhod solutions on random disc paths: monotone local time, flat
    // off the boundary, exact reconstruction.
    let disc = Domain::<2>::ball(Point::<2>::zeros(), 1.0).unwrap();
    let mut sk_bad = 0;
    for _ in 0..50 {
        let mut v = Point::<2>::zeros();
        let mut values = vec![v];
        for _ in 0..200 {
            v += Point::<2>::new(rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15));
            values.push(v);
        }
        let f = DrivingPath::new((0..values.len()).map(|i| i as f64).collect(), values).unwrap();
        let sol = solve_skorokhod(&disc, &f).unwrap();
        if sol.ell.windows(2).any(|w| w[1] < w[0])
            || !sol.flat_off_boundary_violations(&disc, 1e-9).is_empty()
            || sol.reconstruction_error(&f) > 1e-10
        {
            sk_bad += 1;
        }
    }
    if sk_bad > 0 {
        failures.push(format!("{sk_bad} Skorokhod paths violate monotonicity, flatness or reconstruction"));
    }

    // Simulated paths: ell nondecreasing, k moves only with ell, x in the
    // closure; identical seeds give identical batches across executors.
    let cs = CoefficientSet::new(disc.clone(), Gamma::identity());
    let mut cfg = SimConfig::<2>::new(1e-3, 2.0, 8, 9);
    cfg.burn_in = 0.0;
    let a = run_ensemble_with(&Sequential, &cs, &Dynamics::Reflected, &cfg).unwrap();
    let b = run_ensemble_with(&Rayon, &cs, &Dynamics::Reflected, &cfg).unwrap();
    if a != b {
        failures.push("batches differ between runs with one seed".into());
    }
    for r in &a.records {
        for w in r.snapshots.windows(2) {
            if w[1].ell < w[0].ell || (w[1].ell == w[0].ell && w[1].k != w[0].k) || !disc.in_closure(&w[1].x) {
                failures.push(format!("path {} breaks a state invariant at t = {}", r.path_id, w[1].t));
                break;
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("max gradient relative error {grad_worst:.1e}; sandwich, Skorokhod, state and determinism checks clean")
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

fn report(index: usize, name: &str, start: Instant, o: &Outcome) {
    println!(
        "{} criterion {index} {name} [{:.1} s]: {}",
        if o.pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        o.detail
    );
}

fn main() {
    let mut all = true;
    let mut step = |index: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        report(index, name, start, &o);
        all &= o.pass;
    };
    let mut c1_batch = None;
    step(1, "product-form stationarity 1D", &mut || {
        let (o, batch) = stationarity_1d();
        c1_batch = Some(batch);
        o
    });
    step(2, "anisotropic Gamma on the disc", &mut anisotropic_disc);
    step(3, "generator orthogonality", &mut generator_orthogonality);
    step(4, "Skorokhod oracle", &mut skorokhod_oracle);
    step(5, "Girsanov cross-check", &mut girsanov);
    step(6, "weak-convergence sweep", &mut weak_convergence);
    let batch = c1_batch.take().expect("criterion 1 ran");
    step(7, "non-explosion proxy", &mut || non_explosion(&batch));
    step(8, "property suites", &mut property_suites);
    if !all {
        std::process::exit(1);
    }
}
