//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition estimate above which a matrix is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Dimension above which the spectral radius falls back to power iteration.
pub const DENSE_EIGEN_LIMIT: usize = 300;

/// Iteration cap handed to the SVD and Schur routines, which otherwise
/// loop until convergence.
const MAX_DECOMPOSITION_ITERS: usize = 10_000;

/// 2-norm condition number from the singular values, or the 1-norm
/// estimate `‖m‖₁‖m⁻¹‖₁` if the SVD does not converge. Infinity for an
/// exactly singular matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    match m
        .clone()
        .try_svd(false, false, f64::EPSILON, MAX_DECOMPOSITION_ITERS)
    {
        Some(svd) => {
            let sv = &svd.singular_values;
            let max = sv.iter().cloned().fold(0.0_f64, f64::max);
            let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            if min == 0.0 || !min.is_finite() {
                f64::INFINITY
            } else {
                max / min
            }
        }
        None => match m.clone().lu().try_inverse() {
            Some(inv) => one_norm(m) * one_norm(&inv),
            None => f64::INFINITY,
        },
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverts `m`, failing when the factorization breaks down or the condition
/// estimate exceeds [`SINGULAR_CONDITION`].
pub fn checked_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let condition = condition_number(m);
    if !(condition <= SINGULAR_CONDITION) {
        return Err(Error::Singular {
            what: what.to_string(),
            condition,
        });
    }
    m.clone().lu().try_inverse().ok_or_else(|| Error::Singular {
        what: what.to_string(),
        condition,
    })
}

/// Solves `m x = rhs` by LU with the same singularity policy as
/// [`checked_inverse`].
pub fn checked_solve(m: &DMatrix<f64>, rhs: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let condition = condition_number(m);
    if !(condition <= SINGULAR_CONDITION) {
        return Err(Error::Singular {
            what: what.to_string(),
            condition,
        });
    }
    m.clone().lu().solve(rhs).ok_or_else(|| Error::Singular {
        what: what.to_string(),
        condition,
    })
}

/// Spectral radius. Dense eigenvalues up to [`DENSE_EIGEN_LIMIT`], power
/// iteration beyond it.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() <= DENSE_EIGEN_LIMIT {
        match nalgebra::Schur::try_new(m.clone(), f64::EPSILON, MAX_DECOMPOSITION_ITERS) {
            Some(schur) => nan_max(schur.complex_eigenvalues().iter().map(|z| z.norm())),
            None => power_iteration_radius(m, 1e-9, 100_000),
        }
    } else {
        power_iteration_radius(m, 1e-6, 10_000)
    }
}

/// Gelfand-style estimate `‖Mᵏx‖^(1/k)`, robust to complex dominant pairs.
pub fn power_iteration_radius(m: &DMatrix<f64>, tol: f64, max_iters: usize) -> f64 {
    let n = m.nrows();
    // deterministic start with no special alignment to any eigenvector
    let mut x = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618_033_988_75).fract());
    x /= x.norm();
    let mut log_growth = 0.0;
    let mut previous = f64::INFINITY;
    for k in 1..=max_iters {
        let y = m * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        log_growth += norm.ln();
        x = y / norm;
        let estimate = (log_growth / k as f64).exp();
        if k > 50 && (estimate - previous).abs() <= tol {
            return estimate;
        }
        previous = estimate;
    }
    previous
}

/// `max |vᵢ|`, NaN if any entry is NaN.
pub fn inf_norm(v: &DVector<f64>) -> f64 {
    nan_max(v.iter().map(|x| x.abs()))
}

/// `max |aᵢ − bᵢ|`, NaN if any difference is NaN.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    nan_max(a.iter().zip(b).map(|(x, y)| (x - y).abs()))
}

fn nan_max(values: impl Iterator<Item = f64>) -> f64 {
    let mut m = 0.0_f64;
    for v in values {
        if v.is_nan() {
            return f64::NAN;
        }
        m = m.max(v);
    }
    m
}

/// Symmetry residual `max |mᵢⱼ − mⱼᵢ|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (&(m - m.transpose())).amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_radius_of_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.9]);
        assert!((spectral_radius(&m) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn spectral_radius_of_rotation_pair() {
        // eigenvalues 0.3 ± 0.4i, modulus 0.5
        let m = DMatrix::from_row_slice(2, 2, &[0.3, -0.4, 0.4, 0.3]);
        assert!((spectral_radius(&m) - 0.5).abs() < 1e-12);
        assert!((power_iteration_radius(&m, 1e-9, 10_000) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            checked_inverse(&m, "test"),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn norms_propagate_nan() {
        assert!(max_abs_diff(&[1.0, f64::NAN], &[0.0, 0.0]).is_nan());
        assert!(inf_norm(&DVector::from_vec(vec![f64::NAN, 3.0])).is_nan());
        assert_eq!(max_abs_diff(&[1.0, -4.0], &[0.0, 0.0]), 4.0);
    }

    #[test]
    fn zero_matrix_has_zero_radius() {
        assert_eq!(spectral_radius(&DMatrix::zeros(3, 3)), 0.0);
    }
}
