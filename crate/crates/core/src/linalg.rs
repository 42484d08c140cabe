//! Fixed-dimension vector and matrix aliases plus the few dense routines the
//! steppers need (symmetric square root, SPD checks).

use nalgebra::{SMatrix, SVector};
#[allow(unused_imports)]
use num_traits::Float;

/// A point or vector in `R^D`.
pub type Point<const D: usize> = SVector<f64, D>;
/// A `D x D` matrix.
pub type Matrix<const D: usize> = SMatrix<f64, D, D>;

/// Largest relative asymmetry tolerated when a matrix is declared symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub(crate) fn is_symmetric<const D: usize>(m: &Matrix<D>) -> bool {
    let scale = m.amax().max(1.0);
    for i in 0..D {
        for j in (i + 1)..D {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return false;
            }
        }
    }
    true
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix: returns the
/// eigenvalues and a matrix whose columns are the eigenvectors.
pub(crate) fn sym_eigen<const D: usize>(m: &Matrix<D>) -> (Point<D>, Matrix<D>) {
    let mut a = *m;
    let mut v = Matrix::<D>::identity();
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..D {
            for q in (p + 1)..D {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off <= 1e-30 * a.norm_squared().max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..D {
            for q in (p + 1)..D {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..D {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..D {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..D {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (a.diagonal(), v)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub(crate) fn sym_eigenvalues<const D: usize>(m: &Matrix<D>) -> [f64; D] {
    let (vals, _) = sym_eigen(m);
    let mut out = [0.0; D];
    for (o, v) in out.iter_mut().zip(vals.iter()) {
        *o = *v;
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    out
}

/// Positive symmetric square root of an SPD matrix. Returns `None` when an
/// eigenvalue is not strictly positive.
pub(crate) fn sym_sqrt<const D: usize>(m: &Matrix<D>) -> Option<Matrix<D>> {
    if D == 1 {
        let v = m[(0, 0)];
        return (v > 0.0).then(|| Matrix::<D>::from_element(v.sqrt()));
    }
    let (vals, vecs) = sym_eigen(m);
    if vals.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let roots = vals.map(|l| l.sqrt());
    let s = vecs * Matrix::<D>::from_diagonal(&roots) * vecs.transpose();
    Some((s + s.transpose()) * 0.5)
}

pub(crate) fn all_finite<const D: usize>(p: &Point<D>) -> bool {
    p.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sqrt_of_diagonal() {
        let a = Matrix::<2>::new(4.0, 0.0, 0.0, 9.0);
        let s = sym_sqrt(&a).unwrap();
        assert_relative_eq!(s, Matrix::<2>::new(2.0, 0.0, 0.0, 3.0), epsilon = 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let a = Matrix::<3>::new(2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0);
        let s = sym_sqrt(&a).unwrap();
        assert_relative_eq!(s * s, a, epsilon = 1e-12);
        assert!(is_symmetric(&s));
    }

    #[test]
    fn indefinite_has_no_sqrt() {
        let a = Matrix::<2>::new(1.0, 2.0, 2.0, 1.0);
        assert!(sym_sqrt(&a).is_none());
        let e = sym_eigenvalues(&a);
        assert_relative_eq!(e[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(e[1], 3.0, epsilon = 1e-14);
    }
}
