//! Forward finite-difference gradients and the step-size schedules that keep
//! every probe feasible while bounding the estimation error.

use crate::oracle::{OracleError, Purpose, Sampler};
use thiserror::Error;

/// Smallest finite-difference step accepted before declaring the safety
/// margin degenerate.
pub const NU_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradientError {
    #[error("finite-difference step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("safety margin {margin:e} forces step {nu:e} below the floor {NU_FLOOR:e}")]
    DegenerateMargin { margin: f64, nu: f64 },
    #[error("point is not strictly feasible; no safety margin exists")]
    NotStrictlyFeasible,
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Gradients of all `m + 1` functions at `x` from one probe sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub x: Vec<f64>,
    pub nu: f64,
    /// `f_i(x)` for `i = 0..=m`, read during the sweep.
    pub center: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl GradientEstimate {
    /// Builds an estimate from known gradients (used to inject exact
    /// gradients in tests and verification).
    pub fn from_parts(x: Vec<f64>, nu: f64, center: Vec<f64>, rows: Vec<Vec<f64>>) -> Self {
        assert_eq!(center.len(), rows.len());
        GradientEstimate {
            x,
            nu,
            center,
            rows,
        }
    }

    pub fn gradient(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn objective_gradient(&self) -> &[f64] {
        &self.rows[0]
    }

    /// Rounding part of the error of gradient `i`, from [`rounding_bound`]
    /// with the magnitude of the differenced values as scale.
    pub fn rounding_error(&self, i: usize) -> f64 {
        let reach = self.rows[i].iter().fold(0.0_f64, |a, v| a.max(v.abs())) * self.nu;
        rounding_bound(self.x.len(), self.center[i].abs() + reach, self.nu)
    }

    pub fn num_functions(&self) -> usize {
        self.rows.len()
    }
}

/// Forward differences `(f_i(x + nu e_j) - f_i(x)) / nu` for every function.
/// Evaluates exactly `d + 1` points: the center and one probe per coordinate.
pub fn estimate_gradients(
    sampler: &mut Sampler<'_>,
    x: &[f64],
    nu: f64,
) -> Result<GradientEstimate, GradientError> {
    if !(nu > 0.0) {
        return Err(GradientError::NonPositiveStep(nu));
    }
    let d = x.len();
    let mut points = Vec::with_capacity(d + 1);
    points.push(x.to_vec());
    for j in 0..d {
        let mut p = x.to_vec();
        p[j] += nu;
        points.push(p);
    }
    let mut values = sampler.evaluate_batch(&points, Purpose::Probe)?.into_iter();
    let center = values.next().expect("center evaluated");
    let probes: Vec<Vec<f64>> = values.collect();
    let rows = (0..center.len())
        .map(|i| {
            probes
                .iter()
                .map(|fp| (fp[i] - center[i]) / nu)
                .collect()
        })
        .collect();
    Ok(GradientEstimate {
        x: x.to_vec(),
        nu,
        center,
        rows,
    })
}

/// Step `2 eps / (sqrt(d) M_max)` guaranteeing gradient error at most `eps`.
pub fn nu_of_eps(eps: f64, dim: usize, m_max: f64) -> f64 {
    2.0 * eps / ((dim as f64).sqrt() * m_max)
}

/// `min_i -f_i(x) / L_max` over the constraints; `+inf` when there are none.
pub fn safety_margin(values: &[f64], l_max: f64) -> Result<f64, GradientError> {
    let mut margin = f64::INFINITY;
    for &v in &values[1..] {
        if !(v < 0.0) {
            return Err(GradientError::NotStrictlyFeasible);
        }
        margin = margin.min(-v / l_max);
    }
    Ok(margin)
}

/// `min(l* / sqrt(d), nu(eps))`: every probe stays feasible and the error
/// stays below `eps`.
pub fn nu_star(eps: f64, margin: f64, dim: usize, m_max: f64) -> Result<f64, GradientError> {
    let nu = (margin / (dim as f64).sqrt()).min(nu_of_eps(eps, dim, m_max));
    if nu < NU_FLOOR {
        return Err(GradientError::DegenerateMargin { margin, nu });
    }
    Ok(nu)
}

/// Relative evaluation error assumed for every function value, in units of
/// machine epsilon.
pub const ROUNDING_ULPS: f64 = 64.0;

/// Bound `2 sqrt(d) eta / nu` on the part of the forward-difference error
/// caused by evaluation rounding, with `eta = ROUNDING_ULPS * eps_mach *
/// max(1, scale)` and `scale` the magnitude of the values being differenced.
pub fn rounding_bound(dim: usize, scale: f64, nu: f64) -> f64 {
    let eta = ROUNDING_ULPS * f64::EPSILON * scale.max(1.0);
    2.0 * (dim as f64).sqrt() * eta / nu
}

/// Worst-case error `sqrt(d) M nu / 2` of a forward-difference gradient.
pub fn error_bound(dim: usize, curvature: f64, nu: f64) -> f64 {
    (dim as f64).sqrt() * curvature * nu / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_bound_formula() {
        let want = 2.0 * 2.0 * ROUNDING_ULPS * f64::EPSILON * 3.0 / 1e-6;
        assert!((rounding_bound(4, 3.0, 1e-6) - want).abs() < 1e-24);
        assert_eq!(rounding_bound(1, 0.25, 1.0), rounding_bound(1, 1.0, 1.0));
    }
    use crate::oracle::Smoothness;
    use crate::problems::AnalyticProblem;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn affine_gradient_is_exact() {
        let p = AnalyticProblem::new(3, Smoothness::uniform(0, 1.0, 1.0).unwrap(), |x| {
            vec![2.0 * x[0] - 3.0 * x[1] + 0.5 * x[2] + 1.0]
        });
        let mut s = Sampler::new(&p);
        for nu in [1e-3, 0.1, 2.0] {
            let g = estimate_gradients(&mut s, &[0.2, -0.4, 1.0], nu).unwrap();
            let want = [2.0, -3.0, 0.5];
            for j in 0..3 {
                assert!(close(g.gradient(0)[j], want[j], 1e-9));
            }
        }
    }

    #[test]
    fn square_gradient_meets_bound_with_equality() {
        let p = AnalyticProblem::new(1, Smoothness::uniform(0, 1.0, 2.0).unwrap(), |x| {
            vec![x[0] * x[0]]
        });
        let mut s = Sampler::new(&p);
        let g = estimate_gradients(&mut s, &[1.0], 0.1).unwrap();
        assert!(close(g.gradient(0)[0], 2.1, 1e-12));
        assert!(close(g.gradient(0)[0] - 2.0, error_bound(1, 2.0, 0.1), 1e-12));
    }

    #[test]
    fn bilinear_components_are_one() {
        let p = AnalyticProblem::new(2, Smoothness::uniform(0, 1.0, 1.0).unwrap(), |x| {
            vec![x[0] * x[1]]
        });
        let mut s = Sampler::new(&p);
        let g = estimate_gradients(&mut s, &[1.0, 1.0], 0.01).unwrap();
        assert!(close(g.gradient(0)[0], 1.0, 1e-12));
        assert!(close(g.gradient(0)[1], 1.0, 1e-12));
    }

    #[test]
    fn sweep_costs_d_plus_one_samples() {
        let p = AnalyticProblem::new(4, Smoothness::uniform(2, 1.0, 1.0).unwrap(), |x| {
            vec![x.iter().sum(), x[0] - 5.0, x[1] - 5.0]
        });
        let mut s = Sampler::new(&p);
        let g = estimate_gradients(&mut s, &[0.0; 4], 0.1).unwrap();
        assert_eq!(s.ledger().len(), 5);
        assert_eq!(g.num_functions(), 3);
        assert_eq!(g.center, vec![0.0, -5.0, -5.0]);
    }

    #[test]
    fn nonpositive_step_is_rejected() {
        let p = AnalyticProblem::new(1, Smoothness::uniform(0, 1.0, 1.0).unwrap(), |x| {
            vec![x[0]]
        });
        let mut s = Sampler::new(&p);
        assert_eq!(
            estimate_gradients(&mut s, &[0.0], 0.0),
            Err(GradientError::NonPositiveStep(0.0))
        );
        assert!(s.ledger().is_empty());
    }

    #[test]
    fn nu_schedule_values() {
        // 2 * 0.05 / (sqrt(11) * 0.13)
        assert!(close(nu_of_eps(0.05, 11, 0.13), 0.231_931_8, 1e-7));
        let d = 7;
        let eps = 0.13 * (d as f64).sqrt() / 2.0;
        assert!(close(nu_of_eps(eps, d, 0.13), 1.0, 1e-12));
        assert!(close(
            nu_of_eps(0.1, 5, 0.3),
            2.0 * nu_of_eps(0.05, 5, 0.3),
            1e-15
        ));
    }

    #[test]
    fn margin_values() {
        assert!(close(safety_margin(&[9.0, -0.2, -0.1], 0.5).unwrap(), 0.2, 1e-15));
        assert!(close(safety_margin(&[0.0, -1.0], 1.0).unwrap(), 1.0, 1e-15));
        assert_eq!(safety_margin(&[0.0], 1.0).unwrap(), f64::INFINITY);
        assert_eq!(
            safety_margin(&[0.0, 0.0], 1.0),
            Err(GradientError::NotStrictlyFeasible)
        );
    }

    #[test]
    fn nu_star_branches() {
        assert!(close(nu_star(100.0, 0.2, 4, 0.13).unwrap(), 0.1, 1e-15));
        assert!(close(nu_star(0.05, 1e9, 11, 0.13).unwrap(), 0.231_931_8, 1e-7));
        let tie = nu_of_eps(0.05, 4, 0.13) * 2.0;
        assert_eq!(nu_star(0.05, tie, 4, 0.13).unwrap(), nu_of_eps(0.05, 4, 0.13));
        assert!(matches!(
            nu_star(0.05, 1e-14, 4, 0.13),
            Err(GradientError::DegenerateMargin { .. })
        ));
    }
}
