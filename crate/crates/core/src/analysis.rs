//! Statistical checks of simulated ensembles against the stationary
//! measure, and the weak-convergence sweep over the potentials `V_n`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::coefficients::{CoefficientSet, Potential};
use crate::error::{Error, Result};
use crate::geometry::RegularizedDistance;
use crate::linalg::Point;
use crate::simulate::{run_ensemble_with, Dynamics, EnsembleExecutor, InitialCondition, SimConfig, TrajectoryBatch};
use crate::stationary::{potential_mass, sample_stationary, MarginalCdf, Resolution, StationaryMeasure};
#[allow(unused_imports)]
use num_traits::Float;

/// Number of batches for batch-means autocorrelation estimates.
pub const N_BATCHES: usize = 50;
/// Significance level of the KS and chi-square tests.
pub const LEVEL: f64 = 0.01;
/// Effective sample size below which a test is inconclusive.
pub const MIN_ESS: f64 = 100.0;
/// Random projections for sliced Wasserstein distances.
pub const PROJECTIONS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Inconclusive => "inconclusive",
        }
    }
}

/// One estimate compared with its expected value.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub estimate: f64,
    pub expected: f64,
    pub standard_error: f64,
    /// Allowed deviation in standard errors.
    pub allowed_se: f64,
}

impl Check {
    pub fn z(&self) -> f64 {
        (self.estimate - self.expected) / self.standard_error
    }

    pub fn passed(&self) -> bool {
        (self.estimate - self.expected).abs() <= self.allowed_se * self.standard_error
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    /// Effective sample size.
    pub sample_size: f64,
    pub verdict: Verdict,
    pub standard_error: Option<f64>,
    pub checks: Vec<Check>,
    pub notes: String,
}

impl TestReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    fn inconclusive(name: &str, ess: f64) -> Self {
        Self {
            name: name.to_string(),
            statistic: f64::NAN,
            threshold: f64::NAN,
            sample_size: ess,
            verdict: Verdict::Inconclusive,
            standard_error: None,
            checks: Vec::new(),
            notes: format!("effective sample size {ess:.1} below {MIN_ESS}"),
        }
    }

    /// Report whose verdict is the conjunction of `checks`; the statistic is
    /// the largest `|z| / allowed`.
    fn from_checks(name: &str, ess: f64, checks: Vec<Check>) -> Self {
        let statistic = checks.iter().map(|c| c.z().abs() / c.allowed_se).fold(0.0, f64::max);
        let verdict = if checks.iter().all(Check::passed) { Verdict::Pass } else { Verdict::Fail };
        Self {
            name: name.to_string(),
            statistic,
            threshold: 1.0,
            sample_size: ess,
            verdict,
            standard_error: None,
            checks,
            notes: String::new(),
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    crate::quadrature::sum(v.iter().copied()) / v.len() as f64
}

fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    crate::quadrature::sum(v.iter().map(|x| (x - m) * (x - m))) / v.len() as f64
}

/// Integrated autocorrelation time by batch means over [`N_BATCHES`]
/// contiguous batches, clamped below at 1.
pub fn batch_means_tau(series: &[f64]) -> f64 {
    let n = series.len();
    let b = n / N_BATCHES;
    if b < 2 {
        return 1.0;
    }
    let var = variance(&series[..b * N_BATCHES]);
    if !(var > 0.0) {
        return 1.0;
    }
    let means: Vec<f64> = series.chunks_exact(b).take(N_BATCHES).map(mean).collect();
    (b as f64 * variance(&means) / var).max(1.0)
}

/// Mean and its batch-means standard error.
pub fn mean_with_se(series: &[f64]) -> (f64, f64) {
    let tau = batch_means_tau(series);
    (mean(series), (variance(series) * tau / series.len() as f64).sqrt())
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let c = (2.0 * PI).sqrt() / lambda;
        let s: f64 = (1..=20)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (-(j * j) * PI * PI / (8.0 * lambda * lambda)).exp()
            })
            .sum();
        return (1.0 - c * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let kf = k as f64;
            sign * (-2.0 * kf * kf * lambda * lambda).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// `lambda` with `kolmogorov_sf(lambda) = alpha`.
pub fn kolmogorov_critical(alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.2, 5.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_sf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let lead = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut s = term;
        let mut ap = a;
        for _ in 0..1000 {
            ap += 1.0;
            term *= x / ap;
            s += term;
            if term.abs() < s.abs() * 1e-16 {
                break;
            }
        }
        (1.0 - s * lead.exp()).clamp(0.0, 1.0)
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (lead.exp() * h).clamp(0.0, 1.0)
    }
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(df: f64, x: f64) -> f64 {
    gamma_q(0.5 * df, 0.5 * x)
}

/// One-sample KS test of `series` (in time order, for the ESS) against `cdf`.
pub fn ks_test(name: &str, series: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestReport> {
    if series.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let u: Vec<f64> = series.iter().map(|&x| cdf(x)).collect();
    let tau = batch_means_tau(&u);
    let n = series.len() as f64;
    let ess = n / tau;
    if ess < MIN_ESS {
        return Ok(TestReport::inconclusive(name, ess));
    }
    let mut sorted = u;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let mut d: f64 = 0.0;
    for (i, &f) in sorted.iter().enumerate() {
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    let root = ess.sqrt();
    let scale = root + 0.12 + 0.11 / root;
    let p = kolmogorov_sf(scale * d);
    let threshold = kolmogorov_critical(LEVEL) / scale;
    Ok(TestReport {
        name: name.to_string(),
        statistic: d,
        threshold,
        sample_size: ess,
        verdict: if p >= LEVEL { Verdict::Pass } else { Verdict::Fail },
        standard_error: None,
        checks: Vec::new(),
        notes: format!("p = {p:.4}, tau = {tau:.2}"),
    })
}

/// KS test of coordinate `axis` of `X` against the measure's marginal.
pub fn ks_uniformity<const D: usize>(batch: &TrajectoryBatch<D>, sm: &StationaryMeasure<D>, axis: usize) -> Result<TestReport> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let marginal = sm.x_marginal(axis)?;
    ks_against_marginal(&batch.x_coordinate(axis), &marginal, axis)
}

pub fn ks_against_marginal(series: &[f64], marginal: &MarginalCdf, axis: usize) -> Result<TestReport> {
    ks_test(&format!("ks_x{}", axis + 1), series, |t| marginal.cdf(t))
}

/// Mean of `K` near 0, covariance near `Gamma / 2` (3 SE each), fourth
/// moment of each standardized coordinate near 3 (4 SE).
pub fn k_moment_tests<const D: usize>(batch: &TrajectoryBatch<D>, sm: &StationaryMeasure<D>) -> Result<TestReport> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let cov = sm.y_covariance();
    let ks: Vec<Vec<f64>> = (0..D).map(|j| batch.k_coordinate(j)).collect();
    let n = ks[0].len() as f64;
    let mut checks = Vec::new();
    let mut ess: f64 = f64::INFINITY;
    let means: Vec<f64> = ks.iter().map(|v| mean(v)).collect();
    for j in 0..D {
        let (m, se) = mean_with_se(&ks[j]);
        ess = ess.min(n / batch_means_tau(&ks[j]));
        checks.push(Check { label: format!("mean_k{}", j + 1), estimate: m, expected: 0.0, standard_error: se, allowed_se: 3.0 });
    }
    for i in 0..D {
        for j in i..D {
            let prod: Vec<f64> = ks[i].iter().zip(&ks[j]).map(|(a, b)| (a - means[i]) * (b - means[j])).collect();
            let (m, se) = mean_with_se(&prod);
            checks.push(Check {
                label: format!("cov_k{}k{}", i + 1, j + 1),
                estimate: m,
                expected: cov[(i, j)],
                standard_error: se,
                allowed_se: 3.0,
            });
        }
    }
    for j in 0..D {
        let s2 = cov[(j, j)];
        let z4: Vec<f64> = ks[j].iter().map(|k| k.powi(4) / (s2 * s2)).collect();
        let (m, se) = mean_with_se(&z4);
        checks.push(Check { label: format!("kurtosis_k{}", j + 1), estimate: m, expected: 3.0, standard_error: se, allowed_se: 4.0 });
    }
    if ess < MIN_ESS {
        return Ok(TestReport::inconclusive("k_moments", ess));
    }
    Ok(TestReport::from_checks("k_moments", ess, checks))
}

/// Sample correlation of two series and its batch-means standard error.
pub fn correlation_with_se(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (ma, mb) = (mean(a), mean(b));
    let (sa, sb) = (variance(a).sqrt(), variance(b).sqrt());
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb) / (sa * sb)).collect();
    mean_with_se(&prod)
}

/// Quartile bin index of each value.
fn quartile_bins(v: &[f64]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let q = |p: f64| s[((p * s.len() as f64) as usize).min(s.len() - 1)];
    let cuts = [q(0.25), q(0.5), q(0.75)];
    v.iter().map(|x| cuts.iter().filter(|c| x >= c).count()).collect()
}

/// `corr(X_i, K_j)` within 3 SE of 0 for all pairs, and a 4x4 chi-square
/// test of `(X_1, K_1)` on quartile bins at level 0.01 (statistic divided
/// by the larger autocorrelation time).
pub fn independence_test<const D: usize>(batch: &TrajectoryBatch<D>) -> Result<TestReport> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let xs: Vec<Vec<f64>> = (0..D).map(|i| batch.x_coordinate(i)).collect();
    let ks: Vec<Vec<f64>> = (0..D).map(|j| batch.k_coordinate(j)).collect();
    let n = xs[0].len();
    let mut checks = Vec::new();
    for i in 0..D {
        for j in 0..D {
            let (r, se) = correlation_with_se(&xs[i], &ks[j]);
            checks.push(Check { label: format!("corr_x{}k{}", i + 1, j + 1), estimate: r, expected: 0.0, standard_error: se, allowed_se: 3.0 });
        }
    }
    let bx = quartile_bins(&xs[0]);
    let bk = quartile_bins(&ks[0]);
    let tau = batch_means_tau(&xs[0]).max(batch_means_tau(&ks[0]));
    let ess = n as f64 / tau;
    if ess < MIN_ESS {
        return Ok(TestReport::inconclusive("independence", ess));
    }
    let mut table = [[0f64; 4]; 4];
    for (a, b) in bx.iter().zip(&bk) {
        table[*a][*b] += 1.0;
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..4).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let mut chi2 = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            let e = rows[a] * cols[b] / n as f64;
            if e > 0.0 {
                chi2 += (table[a][b] - e).powi(2) / e;
            }
        }
    }
    let chi2 = chi2 / tau;
    let p = chi_square_sf(9.0, chi2);
    let mut report = TestReport::from_checks("independence", ess, checks);
    report.notes = format!("chi2/tau = {chi2:.3} (df 9), p = {p:.4}");
    if p < LEVEL {
        report.verdict = Verdict::Fail;
    }
    Ok(report)
}

/// Chi-square test of the angular distribution of `x - centroid` over
/// `sectors` equal sectors in the `(x_1, x_2)` plane, with expected
/// probabilities from the measure.
pub fn sector_uniformity<const D: usize>(
    batch: &TrajectoryBatch<D>,
    sm: &StationaryMeasure<D>,
    sectors: usize,
) -> Result<TestReport> {
    if D < 2 {
        return Err(Error::InvalidArgument("sector test needs d >= 2".into()));
    }
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let c = sm.coefficients().domain().centroid();
    let sector = |x: &Point<D>| {
        let mut a = (x[1] - c[1]).atan2(x[0] - c[0]);
        if a < 0.0 {
            a += 2.0 * PI;
        }
        ((a / (2.0 * PI) * sectors as f64) as usize).min(sectors - 1)
    };
    let rule = sm.x_rule();
    let mut expected = alloc::vec![0.0; sectors];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        expected[sector(p)] += w * sm.x_density(p);
    }
    let total: f64 = expected.iter().sum();
    let ids: Vec<usize> = batch.snapshots().map(|s| sector(&s.x)).collect();
    let n = ids.len() as f64;
    let mut tau: f64 = 1.0;
    let mut counts = alloc::vec![0.0; sectors];
    for (s, c) in counts.iter_mut().enumerate() {
        let ind: Vec<f64> = ids.iter().map(|&i| if i == s { 1.0 } else { 0.0 }).collect();
        tau = tau.max(batch_means_tau(&ind));
        *c = ind.iter().sum();
    }
    let ess = n / tau;
    if ess < MIN_ESS {
        return Ok(TestReport::inconclusive("sector_uniformity", ess));
    }
    let chi2: f64 = counts
        .iter()
        .zip(&expected)
        .map(|(o, e)| {
            let e = n * e / total;
            (o - e).powi(2) / e
        })
        .sum::<f64>()
        / tau;
    let df = (sectors - 1) as f64;
    let p = chi_square_sf(df, chi2);
    Ok(TestReport {
        name: "sector_uniformity".into(),
        statistic: chi2,
        threshold: chi_square_critical(df, LEVEL),
        sample_size: ess,
        verdict: if p >= LEVEL { Verdict::Pass } else { Verdict::Fail },
        standard_error: None,
        checks: Vec::new(),
        notes: format!("p = {p:.4}, tau = {tau:.2}"),
    })
}

/// `x` with `chi_square_sf(df, x) = alpha`.
pub fn chi_square_critical(df: f64, alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 10.0 * df + 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_square_sf(df, mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// 1-Wasserstein distance between two empirical laws on the line.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let sort = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
        s
    };
    let (a, b) = (sort(a), sort(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    // Integrate |F_a - F_b| over the merged jump points.
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = a[0].min(b[0]);
    let mut acc = crate::quadrature::KahanSum::default();
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        acc.add((i as f64 / na - j as f64 / nb).abs() * (next - prev));
        while i < a.len() && a[i] <= next {
            i += 1;
        }
        while j < b.len() && b[j] <= next {
            j += 1;
        }
        prev = next;
    }
    Ok(acc.value())
}

/// Mean 1-Wasserstein distance over [`PROJECTIONS`] random directions drawn
/// from `seed`; the exact 1D distance when `d = 1`.
pub fn sliced_wasserstein<const D: usize>(a: &[Point<D>], b: &[Point<D>], seed: u64) -> Result<f64> {
    if D == 1 {
        let pa: Vec<f64> = a.iter().map(|p| p[0]).collect();
        let pb: Vec<f64> = b.iter().map(|p| p[0]).collect();
        return wasserstein_1d(&pa, &pb);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..PROJECTIONS {
        let dir = Point::<D>::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
        let pa: Vec<f64> = a.iter().map(|p| p.dot(&dir)).collect();
        let pb: Vec<f64> = b.iter().map(|p| p.dot(&dir)).collect();
        total += wasserstein_1d(&pa, &pb)?;
    }
    Ok(total / PROJECTIONS as f64)
}

/// Settings of the weak-convergence sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig<const D: usize> {
    pub n_list: Vec<u32>,
    /// Time stepping, ensemble size and seed; `init` is replaced by draws
    /// from each run's stationary law.
    pub sim: SimConfig<D>,
    /// Extra margin on top of the measured noise floor.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub n_list: Vec<u32>,
    pub distances: Vec<f64>,
    /// `int_D e^{-V_n} dx`.
    pub masses: Vec<f64>,
    /// Distance between two reflected ensembles with split seeds.
    pub noise_floor: f64,
    pub report: TestReport,
}

fn snapshot_points<const D: usize>(batch: &TrajectoryBatch<D>) -> Vec<Point<D>> {
    batch.snapshots().map(|s| s.x).collect()
}

fn stationary_start<const D: usize>(sm: &StationaryMeasure<D>, cfg: &SimConfig<D>, seed: u64) -> Result<SimConfig<D>> {
    let mut c = cfg.clone();
    let init = sample_stationary(sm, cfg.n_paths, seed)?;
    c.init = InitialCondition::PerPath(alloc::sync::Arc::new(init));
    Ok(c)
}

/// For each `n`, simulates the gradient system with `V_n` started in its
/// stationary law and measures the (sliced) 1-Wasserstein distance of its
/// `X` snapshots to those of the reflected system. Passes when the first
/// distance exceeds the last by more than the noise floor plus `margin`
/// and the masses `int e^{-V_n}` increase.
pub fn weak_convergence_sweep<const D: usize, E: EnsembleExecutor>(
    exec: &E,
    cs: &CoefficientSet<D>,
    cfg: &SweepConfig<D>,
) -> Result<SweepReport> {
    if cfg.n_list.len() < 2 || cfg.n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("n_list must be increasing with at least two entries".into()));
    }
    let seed = cfg.sim.seed;
    let reflected = StationaryMeasure::reflected(cs)?;
    let mut ref_cfg = stationary_start(&reflected, &cfg.sim, seed ^ 0xa5a5)?;
    let reference = snapshot_points(&run_ensemble_with(exec, cs, &Dynamics::Reflected, &ref_cfg)?);
    ref_cfg = stationary_start(&reflected, &cfg.sim, seed ^ 0x5a5a)?;
    ref_cfg.seed = seed.wrapping_add(0x9e37_79b9);
    let twin = snapshot_points(&run_ensemble_with(exec, cs, &Dynamics::Reflected, &ref_cfg)?);
    let noise_floor = sliced_wasserstein(&reference, &twin, seed)?;

    let mut distances = Vec::new();
    let mut masses = Vec::new();
    for (idx, &n) in cfg.n_list.iter().enumerate() {
        let p = Potential::regularized(n, RegularizedDistance::new(cs.domain()))?;
        masses.push(potential_mass(&p, &Resolution::default()));
        let sm = StationaryMeasure::gradient(cs, &p)?;
        let mut c = stationary_start(&sm, &cfg.sim, seed.wrapping_add(1 + idx as u64))?;
        c.seed = seed.wrapping_add(1000 + idx as u64);
        let batch = run_ensemble_with(exec, cs, &Dynamics::Gradient(p), &c)?;
        distances.push(sliced_wasserstein(&snapshot_points(&batch), &reference, seed)?);
    }
    let drop = distances[0] - distances[distances.len() - 1];
    let needed = noise_floor + cfg.margin;
    let masses_increase = masses.windows(2).all(|w| w[1] > w[0]);
    let verdict = if drop > needed && masses_increase {
        Verdict::Pass
    } else if noise_floor + cfg.margin >= distances[0] {
        Verdict::Inconclusive
    } else {
        Verdict::Fail
    };
    let mut notes = format!("distances {distances:?}, noise floor {noise_floor:.5}, masses {masses:?}");
    if verdict == Verdict::Inconclusive {
        notes.push_str("; Monte Carlo noise exceeds the margin, raise n_paths");
    }
    let report = TestReport {
        name: "weak_convergence".into(),
        statistic: drop,
        threshold: needed,
        sample_size: reference.len() as f64,
        verdict,
        standard_error: Some(noise_floor),
        checks: Vec::new(),
        notes,
    };
    Ok(SweepReport { n_list: cfg.n_list.clone(), distances, masses, noise_floor, report })
}
