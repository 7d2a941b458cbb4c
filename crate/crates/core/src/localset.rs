//! Quadratic-proxy local feasible sets and the largest safe step along a ray.
//!
//! The set around a strictly feasible center `x_k` is
//!
//! ```text
//! S = { x : f_i(x_k) + g_i'(x - x_k) + 2 M_i ||x - x_k||^2 <= 0,  i = 1..m }
//! ```
//!
//! where `g_i` are finite-difference gradients taken with a step that keeps
//! the gradient error below the tightening constant. Sets built from an
//! estimate add `rho_i ||x - x_k||` to each proxy, where `rho_i` bounds the
//! rounding error of the difference quotient; it only matters when the probe
//! step is tiny, i.e. when `x_k` is within about `1e-8` of a constraint.

use crate::gradient::{estimate_gradients, nu_star, safety_margin, GradientError, GradientEstimate};
use crate::oracle::{is_strictly_feasible, Sampler};

/// Bisection tolerance for the fidelity fallback of [`LocalFeasibleSet::max_step_bisection`].
pub const BISECTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalFeasibleSet {
    center: Vec<f64>,
    /// `f_i(x_k)` for `i = 1..=m`.
    values: Vec<f64>,
    gradients: Vec<Vec<f64>>,
    curvature: Vec<f64>,
    /// Rounding allowance `rho_i` on each gradient.
    rounding: Vec<f64>,
}

impl LocalFeasibleSet {
    /// Assembles a set from a gradient estimate taken at its center.
    /// `curvature` holds `M_i` for `i = 0..=m`; index 0 is ignored.
    pub fn from_estimate(estimate: &GradientEstimate, curvature: &[f64]) -> Self {
        let m = estimate.num_functions() - 1;
        assert_eq!(curvature.len(), m + 1);
        assert!(
            is_strictly_feasible(&estimate.center),
            "local set center must be strictly feasible"
        );
        LocalFeasibleSet {
            center: estimate.x.clone(),
            values: estimate.center[1..].to_vec(),
            gradients: (1..=m).map(|i| estimate.gradient(i).to_vec()).collect(),
            curvature: curvature[1..].to_vec(),
            rounding: (1..=m).map(|i| estimate.rounding_error(i)).collect(),
        }
    }

    /// Direct construction from exact constraint data (no objective entry,
    /// no rounding allowance).
    pub fn from_parts(
        center: Vec<f64>,
        values: Vec<f64>,
        gradients: Vec<Vec<f64>>,
        curvature: Vec<f64>,
    ) -> Self {
        assert_eq!(values.len(), gradients.len());
        assert_eq!(values.len(), curvature.len());
        assert!(values.iter().all(|&v| v < 0.0));
        let rounding = vec![0.0; values.len()];
        LocalFeasibleSet {
            center,
            values,
            gradients,
            curvature,
            rounding,
        }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn num_constraints(&self) -> usize {
        self.values.len()
    }

    /// Proxy value of constraint `i` (0-based over the constraints) at `x`.
    pub fn proxy(&self, i: usize, x: &[f64]) -> f64 {
        let mut lin = 0.0;
        let mut sq = 0.0;
        for ((xj, cj), gj) in x.iter().zip(&self.center).zip(&self.gradients[i]) {
            let dx = xj - cj;
            lin += gj * dx;
            sq += dx * dx;
        }
        self.values[i] + lin + self.rounding[i] * sq.sqrt() + 2.0 * self.curvature[i] * sq
    }

    /// Rounding allowance of constraint `i` (0-based over the constraints).
    pub fn rounding(&self, i: usize) -> f64 {
        self.rounding[i]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.values.len()).all(|i| self.proxy(i, x) <= 0.0)
    }

    /// Largest `beta >= 0` with `center + beta * s` in the set, from the
    /// positive root of each constraint's quadratic along the ray. Returns
    /// `+inf` when the set has no constraints.
    pub fn max_step(&self, s: &[f64]) -> f64 {
        let s_sq: f64 = s.iter().map(|v| v * v).sum();
        assert!(s_sq > 0.0, "direction must be nonzero");
        let s_norm = s_sq.sqrt();
        let mut beta = f64::INFINITY;
        for i in 0..self.values.len() {
            let a = 2.0 * self.curvature[i] * s_sq;
            let b = dot(&self.gradients[i], s) + self.rounding[i] * s_norm;
            let c = self.values[i];
            beta = beta.min(positive_root(a, b, c));
        }
        beta
    }

    /// Same contract as [`max_step`](Self::max_step), by bisection on
    /// membership over `[0, 2 * beta_closed]`.
    pub fn max_step_bisection(&self, s: &[f64]) -> f64 {
        let closed = self.max_step(s);
        if !closed.is_finite() {
            return closed;
        }
        let point = |beta: f64| -> Vec<f64> {
            self.center
                .iter()
                .zip(s)
                .map(|(c, sj)| c + beta * sj)
                .collect()
        };
        let (mut lo, mut hi) = (0.0, 2.0 * closed);
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if self.contains(&point(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Probes the constraints around `x` with `nu*(eps)` and builds the set.
/// `values` are the known `f_i(x)` used to size the probe step.
pub fn build_local_set(
    sampler: &mut Sampler<'_>,
    x: &[f64],
    values: &[f64],
    eps: f64,
) -> Result<LocalFeasibleSet, GradientError> {
    let smoothness = sampler.problem().smoothness().clone();
    let profile = smoothness.profile();
    let margin = safety_margin(values, profile.l_max)?;
    let nu = nu_star(eps, margin, x.len(), profile.m_max)?;
    let estimate = estimate_gradients(sampler, x, nu)?;
    Ok(LocalFeasibleSet::from_estimate(
        &estimate,
        smoothness.curvatures(),
    ))
}

/// Positive root of `a t^2 + b t + c` with `a > 0`, `c < 0`. Uses the
/// cancellation-free form when `b > 0`.
fn positive_root(a: f64, b: f64, c: f64) -> f64 {
    let disc = (b * b - 4.0 * a * c).sqrt();
    if b > 0.0 {
        -2.0 * c / (b + disc)
    } else {
        (-b + disc) / (2.0 * a)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
