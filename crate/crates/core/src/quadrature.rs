//! Gauss-Legendre rules, composite panels and compensated summation.

use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = alloc::vec![0.0; n];
    let mut weights = alloc::vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `P_n(z)` and `P_n'(z)` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (z * p1 - p0) / (z * z - 1.0))
}

/// A one-dimensional quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1D {
    /// `order`-point Gauss-Legendre on `panels` equal panels of each segment
    /// of `[a, b]` split at the `breaks` lying strictly inside.
    pub fn composite(a: f64, b: f64, breaks: &[f64], panels: usize, order: usize) -> Self {
        let (gx, gw) = gauss_legendre(order);
        let mut cuts = alloc::vec![a];
        let mut inner: Vec<f64> = breaks.iter().copied().filter(|&c| c > a && c < b).collect();
        inner.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
        cuts.extend(inner);
        cuts.push(b);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for seg in cuts.windows(2) {
            let h = (seg[1] - seg[0]) / panels as f64;
            for p in 0..panels {
                let lo = seg[0] + h * p as f64;
                for (x, w) in gx.iter().zip(&gw) {
                    nodes.push(lo + 0.5 * h * (x + 1.0));
                    weights.push(0.5 * h * w);
                }
            }
        }
        Self { nodes, weights }
    }

    /// Periodic trapezoid rule with `n` nodes on `[a, a + period)`.
    pub fn periodic(a: f64, period: f64, n: usize) -> Self {
        let h = period / n as f64;
        Self { nodes: (0..n).map(|i| a + h * i as f64).collect(), weights: alloc::vec![h; n] }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut s = KahanSum::default();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s.add(w * f(*x));
        }
        s.value()
    }
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of a slice.
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = KahanSum::default();
    for v in values {
        s.add(v);
    }
    s.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn five_point_rule() {
        let (x, w) = gauss_legendre(5);
        assert_relative_eq!(x[4], (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0, epsilon = 1e-14);
        assert_relative_eq!(w[2], 128.0 / 225.0, epsilon = 1e-14);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn exact_for_polynomials() {
        for n in [3usize, 8, 16, 33] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((q - exact).abs() <= 1e-13, "n {n} deg {deg}");
            }
        }
    }

    #[test]
    fn composite_integrates_smooth_function() {
        let r = Rule1D::composite(0.0, 2.0, &[1.0], 4, 8);
        assert_eq!(r.len(), 64);
        assert_relative_eq!(r.integrate(|x| x.exp()), 2.0f64.exp() - 1.0, epsilon = 1e-13);
        assert_relative_eq!(r.integrate(|x| (x - 1.0).abs()), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn periodic_rule_is_spectral() {
        let r = Rule1D::periodic(0.0, 2.0 * PI, 32);
        assert_relative_eq!(r.integrate(|t| t.cos().powi(2)), PI, epsilon = 1e-13);
    }

    #[test]
    fn compensated_sum() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(sum(v), 2.0);
    }
}
