//! First-order optimality residuals from analytic gradients.

use crate::oracle::{EvalFailure, Problem};
use nalgebra::{DMatrix, DVector};

/// Default activity tolerance: constraints with `f_i >= -1e-4` are active.
pub const DEFAULT_TOL_ACTIVE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct KktResidual {
    /// `|| grad f_0 + sum_i lambda_i grad f_i ||`.
    pub stationarity: f64,
    /// `max_i |lambda_i f_i|`.
    pub complementarity: f64,
    /// Multipliers for `i = 1..=m`; zero for inactive constraints.
    pub lambda: Vec<f64>,
}

/// `values` and `gradients` cover `i = 0..=m`.
pub fn kkt_residual(values: &[f64], gradients: &[Vec<f64>], tol_active: f64) -> KktResidual {
    assert_eq!(values.len(), gradients.len());
    let d = gradients[0].len();
    let m = values.len() - 1;
    let active: Vec<usize> = (1..=m).filter(|&i| values[i] >= -tol_active).collect();
    let a = DMatrix::from_fn(d, active.len(), |r, c| gradients[active[c]][r]);
    let b = -DVector::from_column_slice(&gradients[0]);
    let mu = nnls(&a, &b);

    let mut lambda = vec![0.0; m];
    for (c, &i) in active.iter().enumerate() {
        lambda[i - 1] = mu[c];
    }
    let residual = &a * &mu - &b;
    let complementarity = lambda
        .iter()
        .zip(&values[1..])
        .map(|(l, f)| (l * f).abs())
        .fold(0.0, f64::max);
    KktResidual {
        stationarity: residual.norm(),
        complementarity,
        lambda,
    }
}

/// Residual at `x` for a problem with analytic gradients; `None` when the
/// problem exposes none.
pub fn problem_kkt_residual(
    problem: &dyn Problem,
    x: &[f64],
    tol_active: f64,
) -> Result<Option<KktResidual>, EvalFailure> {
    let Some(gradients) = problem.gradients(x) else {
        return Ok(None);
    };
    let values = problem.evaluate(x)?;
    Ok(Some(kkt_residual(&values, &gradients, tol_active)))
}

/// Lawson-Hanson active-set solution of `min ||A x - b||` with `x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    if n == 0 {
        return x;
    }
    let tol = 1e-12 * (1.0 + a.norm() * b.norm());
    let mut passive = vec![false; n];
    for _ in 0..3 * n + 10 {
        let w = a.transpose() * (b - a * &x);
        let Some(j) = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&p, &q| w[p].total_cmp(&w[q]))
        else {
            break;
        };
        passive[j] = true;
        loop {
            let z = restricted_least_squares(a, b, &passive);
            if (0..n).all(|i| !passive[i] || z[i] > 0.0) {
                x = z;
                break;
            }
            let mut step = f64::INFINITY;
            for i in 0..n {
                if passive[i] && z[i] <= 0.0 {
                    step = step.min(x[i] / (x[i] - z[i]));
                }
            }
            x += (z - &x) * step;
            for i in 0..n {
                if passive[i] && x[i] <= tol {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    x
}

fn restricted_least_squares(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..a.ncols()).filter(|&j| passive[j]).collect();
    let sub = a.select_columns(&cols);
    let sol = sub
        .svd(true, true)
        .solve(b, 1e-14)
        .expect("svd computed with both factors");
    let mut z = DVector::zeros(a.ncols());
    for (k, &j) in cols.iter().enumerate() {
        z[j] = sol[k];
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interior_stationary_point() {
        let r = kkt_residual(&[1.0, -3.0], &[vec![0.0, 0.0], vec![1.0, 1.0]], 1e-4);
        assert_eq!(r.stationarity, 0.0);
        assert_eq!(r.complementarity, 0.0);
        assert_eq!(r.lambda, vec![0.0]);
    }

    #[test]
    fn one_d_boundary() {
        let r = kkt_residual(&[-1.0, 0.0], &[vec![1.0], vec![-1.0]], 1e-4);
        assert!((r.lambda[0] - 1.0).abs() < 1e-12);
        assert!(r.stationarity < 1e-12);
        assert_eq!(r.complementarity, 0.0);
    }

    #[test]
    fn corner_qp() {
        let r = kkt_residual(
            &[2.0, 0.0, 0.0],
            &[vec![-2.0, -2.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            1e-4,
        );
        assert!((r.lambda[0] - 2.0).abs() < 1e-12);
        assert!((r.lambda[1] - 2.0).abs() < 1e-12);
        assert!(r.stationarity < 1e-12);
    }

    #[test]
    fn wrong_sign_gradient_leaves_residual() {
        // Objective pushes into the interior; the multiplier cannot help.
        let r = kkt_residual(&[0.0, 0.0], &[vec![-1.0], vec![-1.0]], 1e-4);
        assert_eq!(r.lambda, vec![0.0]);
        assert!((r.stationarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inactive_constraints_get_zero_multiplier() {
        let r = kkt_residual(&[0.0, -0.5], &[vec![1.0], vec![-1.0]], 1e-4);
        assert_eq!(r.lambda, vec![0.0]);
        assert!((r.stationarity - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn nnls_satisfies_optimality(
            entries in prop::collection::vec(-2.0..2.0f64, 12),
            rhs in prop::collection::vec(-2.0..2.0f64, 4),
        ) {
            let a = DMatrix::from_column_slice(4, 3, &entries);
            let b = DVector::from_column_slice(&rhs);
            let x = nnls(&a, &b);
            let w = a.transpose() * (&b - &a * &x);
            for j in 0..3 {
                prop_assert!(x[j] >= 0.0);
                prop_assert!(w[j] <= 1e-8);
                if x[j] > 1e-10 {
                    prop_assert!(w[j].abs() <= 1e-8);
                }
            }
        }
    }
}
