//! Lawson–Hanson active-set solver for min ‖Ax − b‖₂ subject to x ≥ 0.

use nalgebra::{DMatrix, DVector};

/// Stop when no inactive dual component exceeds this.
pub const DUAL_TOLERANCE: f64 = 1e-10;
/// Outer iterations allowed per column.
pub const ITERATIONS_PER_COLUMN: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    /// Outer iterations performed.
    pub iterations: usize,
    /// False if the iteration cap was hit before the dual test passed.
    pub converged: bool,
}

/// ‖Ax − b‖₂².
pub fn objective(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    (a * x - b).norm_squared()
}

/// Unconstrained least squares on the columns listed in `cols`; the result
/// is scattered back into a length-p vector.
pub fn least_squares_on(a: &DMatrix<f64>, b: &DVector<f64>, cols: &[usize]) -> DVector<f64> {
    let mut full = DVector::zeros(a.ncols());
    if cols.is_empty() {
        return full;
    }
    let sub = a.select_columns(cols);
    let eps = f64::EPSILON * sub.nrows().max(sub.ncols()) as f64 * sub.norm().max(1.0);
    let sol = sub
        .svd(true, true)
        .solve(b, eps)
        .expect("SVD computed with both U and V");
    for (k, &j) in cols.iter().enumerate() {
        full[j] = sol[k];
    }
    full
}

pub fn lawson_hanson(a: &DMatrix<f64>, b: &DVector<f64>) -> NnlsSolution {
    assert_eq!(a.nrows(), b.len(), "row count of A must match length of b");
    let p = a.ncols();
    let mut x = DVector::zeros(p);
    let mut passive = vec![false; p];
    let max_iter = ITERATIONS_PER_COLUMN * p.max(1);
    let mut iterations = 0;

    loop {
        let w = a.tr_mul(&(b - a * &x));
        let mut pick: Option<usize> = None;
        for j in (0..p).filter(|&j| !passive[j]) {
            if w[j] > DUAL_TOLERANCE && pick.is_none_or(|k| w[j] > w[k]) {
                pick = Some(j);
            }
        }
        let Some(j) = pick else {
            return NnlsSolution { x, iterations, converged: true };
        };
        if iterations == max_iter {
            return NnlsSolution { x, iterations, converged: false };
        }
        iterations += 1;
        passive[j] = true;

        let mut first = true;
        loop {
            let cols: Vec<usize> = (0..p).filter(|&i| passive[i]).collect();
            let z = least_squares_on(a, b, &cols);
            if first && z[j] <= 0.0 {
                // rounding made the chosen column useless; accept the current point
                passive[j] = false;
                return NnlsSolution { x, iterations, converged: true };
            }
            first = false;
            if cols.iter().all(|&i| z[i] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for &i in &cols {
                if z[i] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - z[i]));
                }
            }
            for &i in &cols {
                x[i] += alpha * (z[i] - x[i]);
                if x[i] <= f64::EPSILON * (1.0 + z[i].abs()) {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&f| f) {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_clips_negative_component() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![3.0, -1.0]);
        let s = lawson_hanson(&a, &b);
        assert!(s.converged);
        assert_eq!(s.x.as_slice(), &[3.0, 0.0]);
    }

    #[test]
    fn unconstrained_optimum_is_returned_when_feasible() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 2.0, 1.0]);
        let truth = DVector::from_vec(vec![0.5, 2.0]);
        let b = &a * &truth;
        let s = lawson_hanson(&a, &b);
        assert!((s.x - truth).amax() < 1e-12);
    }

    #[test]
    fn all_negative_correlation_gives_zero() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 1.0, 3.0, 3.0]);
        let b = DVector::from_vec(vec![-1.0, -1.0, -2.0]);
        let s = lawson_hanson(&a, &b);
        assert_eq!(s.x.as_slice(), &[0.0, 0.0]);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn kkt_holds_on_a_mixed_problem() {
        let a = DMatrix::from_row_slice(
            5,
            3,
            &[1.0, 0.2, -0.3, 0.4, 1.0, 0.1, -0.5, 0.3, 1.0, 0.9, -0.2, 0.4, 0.1, 0.7, -0.8],
        );
        let b = DVector::from_vec(vec![1.0, -0.5, 0.2, 0.9, -0.3]);
        let s = lawson_hanson(&a, &b);
        let g = a.tr_mul(&(&a * &s.x - &b));
        for j in 0..3 {
            assert!(s.x[j] >= 0.0);
            if s.x[j] > 0.0 {
                assert!(g[j].abs() < 1e-8, "active gradient {}", g[j]);
            } else {
                assert!(g[j] >= -1e-8, "inactive gradient {}", g[j]);
            }
        }
    }
}
