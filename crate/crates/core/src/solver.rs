//! The main loop. Each iteration tries, in order:
//!
//! 1. a probe at `2 eps`: if the subproblem promises descent of `4 eps`, double `eps`;
//! 2. the subproblem at `eps`: if it promises descent of `2 eps`, take a step;
//! 3. otherwise halve `eps`.
//!
//! Steps before `k_switch` pick the better of the local-set boundary step and
//! the guaranteed-decrease step `gamma(eps)`; later steps always use `gamma(eps)`.

use crate::error::SolverError;
use crate::localset::LocalFeasibleSet;
use crate::gradient::GradientError;
use crate::lp::{lp_query, near_active, LpQuery};
use crate::oracle::{is_strictly_feasible, max_constraint, Problem, Purpose, SampleLedger, Sampler};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::time::Instant;

/// `eps / (4 (M_max + L_max))`.
pub fn gamma(eps: f64, m_max: f64, l_max: f64) -> f64 {
    eps / (4.0 * (m_max + l_max))
}

/// Guaranteed decrease `eps^2 / (8 (M_max + L_max))` of a `gamma(eps)` step.
pub fn descent_bound(eps: f64, m_max: f64, l_max: f64) -> f64 {
    eps * eps / (8.0 * (m_max + l_max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// Exact positive root of each proxy quadratic along the ray.
    #[default]
    ClosedForm,
    /// Bisection on local-set membership.
    Bisection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub eps0: f64,
    pub eps_min: f64,
    pub k_switch: usize,
    pub max_iterations: usize,
    pub step_rule: StepRule,
    pub lp_debug: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eps0: 0.05,
            eps_min: 1e-6,
            k_switch: 200,
            max_iterations: 10_000,
            step_rule: StepRule::ClosedForm,
            lp_debug: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.eps0 > 0.0 && self.eps0.is_finite()) {
            return Err(SolverError::Config(format!("eps0 must be positive, got {}", self.eps0)));
        }
        if !(self.eps_min >= 0.0) {
            return Err(SolverError::Config(format!(
                "eps_min must be non-negative, got {}",
                self.eps_min
            )));
        }
        if self.eps_min >= self.eps0 {
            return Err(SolverError::Config(format!(
                "eps_min ({}) must be below eps0 ({})",
                self.eps_min, self.eps0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Doubled,
    SteppedArgmin,
    SteppedGamma,
    Halved,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Doubled => "doubled",
            Action::SteppedArgmin => "stepped-argmin",
            Action::SteppedGamma => "stepped-gamma",
            Action::Halved => "halved",
        }
    }

    pub fn is_step(self) -> bool {
        matches!(self, Action::SteppedArgmin | Action::SteppedGamma)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row per loop pass. `eps` is the value the pass ran with; `f0` and
/// `max_fi` describe the iterate the pass ended on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub k: usize,
    pub eps: f64,
    pub action: Action,
    pub f0: f64,
    pub max_fi: f64,
    pub n_active: usize,
    pub pred_descent: Option<f64>,
    pub alpha: Option<f64>,
    pub samples: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub k: usize,
    pub x: Vec<f64>,
    pub eps: f64,
    /// `f_i(x_k)` for `i = 0..=m`.
    pub values: Vec<f64>,
    pub best_f0: f64,
    pub last_action: Option<Action>,
}

impl SolverState {
    pub fn f0(&self) -> f64 {
        self.values[0]
    }
}

/// A `gamma`-candidate whose decrease fell short of [`descent_bound`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentViolation {
    pub k: usize,
    pub eps: f64,
    pub decrease: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EpsMin,
    MaxIters,
    Error,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::EpsMin => "eps_min",
            Termination::MaxIters => "max_iters",
            Termination::Error => "error",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub state: SolverState,
    pub termination: Termination,
    pub error: Option<SolverError>,
    pub trace: Vec<IterationTrace>,
    pub ledger: SampleLedger,
    pub descent_violations: Vec<DescentViolation>,
    /// Candidates evaluated but rejected for not being strictly feasible.
    pub rejected_candidates: usize,
    /// Subproblems skipped because no safe probe step existed.
    pub degenerate_queries: usize,
    /// Largest near-active set seen by any subproblem.
    pub max_active: usize,
    pub seconds: f64,
}

impl RunReport {
    pub fn x(&self) -> &[f64] {
        &self.state.x
    }

    pub fn f0(&self) -> f64 {
        self.state.f0()
    }

    pub fn samples(&self) -> usize {
        self.ledger.len()
    }
}

pub struct Solver<'p> {
    config: SolverConfig,
    sampler: Sampler<'p>,
    state: SolverState,
    trace: Vec<IterationTrace>,
    violations: Vec<DescentViolation>,
    rejected: usize,
    degenerate: usize,
    max_active: usize,
    started: Instant,
    lp_dump: Option<Box<dyn Write + Send + 'p>>,
}

impl<'p> Solver<'p> {
    /// Validates the configuration and checks `x0` with one oracle call.
    pub fn new(problem: &'p dyn Problem, x0: &[f64], config: SolverConfig) -> Result<Self, SolverError> {
        config.validate()?;
        let started = Instant::now();
        let mut sampler = Sampler::new(problem);
        let values = sampler.evaluate(x0, Purpose::Start)?;
        if !is_strictly_feasible(&values) {
            return Err(SolverError::InfeasibleStart {
                max_constraint: max_constraint(&values),
            });
        }
        let state = SolverState {
            k: 0,
            x: x0.to_vec(),
            eps: config.eps0,
            best_f0: values[0],
            values,
            last_action: None,
        };
        Ok(Solver {
            config,
            sampler,
            state,
            trace: Vec::new(),
            violations: Vec::new(),
            rejected: 0,
            degenerate: 0,
            max_active: 0,
            started,
            lp_dump: None,
        })
    }

    /// Writes a plain-text tableau for every subproblem to `sink`.
    pub fn with_lp_dump(mut self, sink: Box<dyn Write + Send + 'p>) -> Self {
        self.config.lp_debug = true;
        self.lp_dump = Some(sink);
        self
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn trace(&self) -> &[IterationTrace] {
        &self.trace
    }

    pub fn ledger(&self) -> &SampleLedger {
        self.sampler.ledger()
    }

    pub fn descent_violations(&self) -> &[DescentViolation] {
        &self.violations
    }

    /// `Some` once the loop condition fails.
    pub fn finished(&self) -> Option<Termination> {
        if self.state.eps <= self.config.eps_min {
            Some(Termination::EpsMin)
        } else if self.state.k >= self.config.max_iterations {
            Some(Termination::MaxIters)
        } else {
            None
        }
    }

    /// `None` when the iterate is so close to a constraint that no safe probe
    /// step exists; the pass then counts as finding no descent.
    fn query(&mut self, eps: f64, label: &str) -> Result<Option<LpQuery>, SolverError> {
        let q = match lp_query(
            &mut self.sampler,
            &self.state.x,
            &self.state.values,
            eps,
            self.config.lp_debug,
        ) {
            Ok(q) => q,
            Err(SolverError::Gradient(GradientError::DegenerateMargin { .. })) => {
                self.degenerate += 1;
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        self.max_active = self.max_active.max(q.active.len());
        if let (Some(sink), Some(text)) = (self.lp_dump.as_mut(), q.dump.as_ref()) {
            let _ = writeln!(sink, "# k={} {label}", self.state.k);
            let _ = sink.write_all(text.as_bytes());
        }
        Ok(Some(q))
    }

    fn active_count(&self, q: Option<&LpQuery>, eps: f64) -> usize {
        q.map_or_else(|| near_active(&self.state.values, eps).len(), |q| q.active.len())
    }

    /// One loop pass. On error the state is left at the last good iterate.
    pub fn step(&mut self) -> Result<&IterationTrace, SolverError> {
        let k = self.state.k;
        let eps = self.state.eps;
        let profile = self.sampler.problem().smoothness().profile();
        self.sampler.set_iteration(k);

        let probe = self.query(2.0 * eps, "probe")?;
        let mut n_active = self.active_count(probe.as_ref(), 2.0 * eps);
        let mut pred = probe.as_ref().and_then(LpQuery::predicted_descent);
        let mut alpha = None;

        let action = if pred.is_some_and(|v| v <= -4.0 * eps) {
            self.state.eps = 2.0 * eps;
            Action::Doubled
        } else {
            let q = self.query(eps, "descent")?;
            n_active = self.active_count(q.as_ref(), eps);
            pred = q.as_ref().and_then(LpQuery::predicted_descent);
            let step = q.as_ref().and_then(|q| q.direction.step().map(|s| (q, s)));
            match step {
                Some((q, s)) if pred.is_some_and(|v| v <= -2.0 * eps) => {
                    match self.take_step(q, s, eps, profile.m_max, profile.l_max)? {
                        Some((a, step)) => {
                            alpha = Some(step);
                            a
                        }
                        None => {
                            self.state.eps = eps / 2.0;
                            Action::Halved
                        }
                    }
                }
                _ => {
                    self.state.eps = eps / 2.0;
                    Action::Halved
                }
            }
        };

        self.state.k += 1;
        self.state.last_action = Some(action);
        self.state.best_f0 = self.state.best_f0.min(self.state.values[0]);
        self.trace.push(IterationTrace {
            k,
            eps,
            action,
            f0: self.state.values[0],
            max_fi: max_constraint(&self.state.values),
            n_active,
            pred_descent: pred,
            alpha,
            samples: self.sampler.ledger().len(),
            seconds: self.started.elapsed().as_secs_f64(),
        });
        Ok(self.trace.last().expect("trace row just pushed"))
    }

    /// Evaluates the step candidates and moves to the chosen one. Returns
    /// `None` when every candidate was rejected as not strictly feasible.
    fn take_step(
        &mut self,
        q: &LpQuery,
        s: &[f64],
        eps: f64,
        m_max: f64,
        l_max: f64,
    ) -> Result<Option<(Action, f64)>, SolverError> {
        let x = self.state.x.clone();
        let f0 = self.state.values[0];
        let g = gamma(eps, m_max, l_max);
        let along = |t: f64| -> Vec<f64> { x.iter().zip(s).map(|(xi, si)| xi + t * si).collect() };

        let mut candidates: Vec<(Action, f64, Vec<f64>, Vec<f64>)> = Vec::with_capacity(2);
        if self.state.k < self.config.k_switch {
            let curvature = self.sampler.problem().smoothness().curvatures().to_vec();
            let set = LocalFeasibleSet::from_estimate(&q.estimate, &curvature);
            let beta = match self.config.step_rule {
                StepRule::ClosedForm => set.max_step(s),
                StepRule::Bisection => set.max_step_bisection(s),
            };
            if beta.is_finite() {
                let xb = along(beta);
                let vb = self.sampler.evaluate(&xb, Purpose::Candidate)?;
                candidates.push((Action::SteppedArgmin, beta, xb, vb));
            }
        }
        let xg = along(g);
        let vg = self.sampler.evaluate(&xg, Purpose::LineSearch)?;
        let decrease = vg[0] - f0;
        let bound = descent_bound(eps, m_max, l_max);
        if !(decrease < -bound) {
            self.violations.push(DescentViolation {
                k: self.state.k,
                eps,
                decrease,
                bound,
            });
        }
        let gamma_action = if candidates.is_empty() {
            Action::SteppedGamma
        } else {
            Action::SteppedArgmin
        };
        candidates.push((gamma_action, g, xg, vg));

        let before = candidates.len();
        candidates.retain(|c| is_strictly_feasible(&c.3));
        self.rejected += before - candidates.len();
        // Earlier candidates win ties.
        let best = candidates
            .into_iter()
            .reduce(|a, b| if b.3[0] < a.3[0] { b } else { a });
        Ok(best.map(|(action, step, xn, vn)| {
            self.state.x = xn;
            self.state.values = vn;
            (action, step)
        }))
    }

    pub fn run(mut self) -> RunReport {
        let mut error = None;
        let termination = loop {
            if let Some(t) = self.finished() {
                break t;
            }
            if let Err(e) = self.step() {
                error = Some(e);
                break Termination::Error;
            }
        };
        self.into_report(termination, error)
    }

    fn into_report(self, termination: Termination, error: Option<SolverError>) -> RunReport {
        let seconds = self.started.elapsed().as_secs_f64();
        RunReport {
            state: self.state,
            termination,
            error,
            trace: self.trace,
            ledger: self.sampler.into_ledger(),
            descent_violations: self.violations,
            rejected_candidates: self.rejected,
            degenerate_queries: self.degenerate,
            max_active: self.max_active,
            seconds,
        }
    }
}

/// Runs the loop from `x0` to termination. Fails only when the run cannot
/// start; errors mid-run are reported through [`RunReport::error`].
pub fn run(problem: &dyn Problem, x0: &[f64], config: SolverConfig) -> Result<RunReport, SolverError> {
    Ok(Solver::new(problem, x0, config)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Smoothness;
    use crate::problems::{by_name, AnalyticProblem};

    #[test]
    fn gamma_values() {
        assert!((gamma(0.05, 0.13, 0.5) - 0.019_841_27).abs() < 1e-8);
        assert_eq!(gamma(0.1, 0.13, 0.5), 2.0 * gamma(0.05, 0.13, 0.5));
        assert_eq!(gamma(1.0, 0.1, 0.15), 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            eps0: -1.0,
            ..SolverConfig::default()
        };
        assert!(matches!(bad.validate(), Err(SolverError::Config(_))));
        let inverted = SolverConfig {
            eps0: 1e-6,
            eps_min: 1e-3,
            ..SolverConfig::default()
        };
        assert!(inverted.validate().is_err());
    }

    #[test]
    fn zero_iterations_returns_start() {
        let named = by_name("qp-corner").unwrap();
        let config = SolverConfig {
            max_iterations: 0,
            ..SolverConfig::default()
        };
        let report = run(&*named.problem, &named.start, config).unwrap();
        assert_eq!(report.x(), &named.start[..]);
        assert!(report.trace.is_empty());
        assert_eq!(report.termination, Termination::MaxIters);
        assert_eq!(report.samples(), 1);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let named = by_name("one-d").unwrap();
        let err = run(&*named.problem, &[-2.0], SolverConfig::default()).unwrap_err();
        assert!(matches!(err, SolverError::InfeasibleStart { .. }));
        let boundary = run(&*named.problem, &[-1.0], SolverConfig::default()).unwrap_err();
        assert!(matches!(boundary, SolverError::InfeasibleStart { .. }));
    }

    #[test]
    fn stationary_interior_point_only_halves() {
        let p = AnalyticProblem::new(2, Smoothness::uniform(1, 1.0, 1.0).unwrap(), |x| {
            vec![3.0, x[0] - 10.0]
        });
        let config = SolverConfig {
            eps0: 0.01,
            eps_min: 1e-4,
            ..SolverConfig::default()
        };
        let report = run(&p, &[0.0, 0.0], config).unwrap();
        assert_eq!(report.termination, Termination::EpsMin);
        assert!(report.trace.iter().all(|t| t.action == Action::Halved));
        assert_eq!(report.x(), &[0.0, 0.0]);
    }

    #[test]
    fn one_d_converges_to_boundary() {
        let named = by_name("one-d").unwrap();
        let report = run(&*named.problem, &named.start, SolverConfig::default()).unwrap();
        assert_eq!(report.termination, Termination::EpsMin);
        assert!((report.x()[0] + 1.0).abs() < 1e-2);
        assert_eq!(report.ledger.infeasible_count(), 0);
        assert!(report.descent_violations.is_empty());
    }

    #[test]
    fn trace_reconciles_with_ledger() {
        let named = by_name("qp-corner").unwrap();
        let config = SolverConfig {
            max_iterations: 60,
            ..SolverConfig::default()
        };
        let mut solver = Solver::new(&*named.problem, &named.start, config).unwrap();
        let d = named.start.len();
        let mut expected = 1;
        while solver.finished().is_none() {
            let row = solver.step().unwrap().clone();
            expected += match row.action {
                Action::Doubled => d + 1,
                Action::Halved => 2 * (d + 1) + solver_candidates(&row),
                _ => 2 * (d + 1) + solver_candidates(&row),
            };
            assert_eq!(row.samples, solver.ledger().len());
            assert_eq!(row.samples, expected);
        }
    }

    // Step candidates are charged only on passes that reach the step rule.
    fn solver_candidates(row: &IterationTrace) -> usize {
        match (row.action, row.k < 200) {
            (Action::Halved, _) => 0,
            (_, true) => 2,
            (_, false) => 1,
        }
    }

    #[test]
    fn eps_stays_dyadic() {
        let named = by_name("disk-linear").unwrap();
        let config = SolverConfig {
            eps_min: 1e-4,
            ..SolverConfig::default()
        };
        let report = run(&*named.problem, &named.start, config).unwrap();
        for row in &report.trace {
            let ratio = (row.eps / 0.05).log2();
            assert!((ratio - ratio.round()).abs() < 1e-9);
        }
    }
}
