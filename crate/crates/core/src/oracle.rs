//! Black-box problem abstraction and the sample ledger.
//!
//! Every query the solver makes goes through [`Sampler::evaluate`] (or its
//! batched sibling), so the ledger sees each point exactly once. One sample is
//! one point: all `m + 1` function values are read together.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Failure reported by a problem's evaluator (e.g. a diverged power flow).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct EvalFailure(pub String);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("evaluation failed at {x:?}: {reason}")]
    Failed { x: Vec<f64>, reason: String },
    #[error("point has dimension {got}, problem expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("evaluator returned {got} values, expected {expected}")]
    Arity { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmoothnessError {
    #[error("expected {expected} smoothness constants, got {got}")]
    Length { expected: usize, got: usize },
    #[error("smoothness constant {name}[{index}] = {value} must be finite and positive")]
    NonPositive {
        name: &'static str,
        index: usize,
        value: f64,
    },
}

/// Lipschitz constants `L_i` and gradient-Lipschitz constants `M_i` for
/// `i = 0..=m` (index 0 is the objective).
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothness {
    lipschitz: Vec<f64>,
    curvature: Vec<f64>,
}

impl Smoothness {
    pub fn new(lipschitz: Vec<f64>, curvature: Vec<f64>) -> Result<Self, SmoothnessError> {
        if lipschitz.len() != curvature.len() {
            return Err(SmoothnessError::Length {
                expected: lipschitz.len(),
                got: curvature.len(),
            });
        }
        for (name, values) in [("L", &lipschitz), ("M", &curvature)] {
            if let Some((index, &value)) = values
                .iter()
                .enumerate()
                .find(|(_, v)| !(v.is_finite() && **v > 0.0))
            {
                return Err(SmoothnessError::NonPositive { name, index, value });
            }
        }
        Ok(Smoothness {
            lipschitz,
            curvature,
        })
    }

    /// Same `(L, M)` for the objective and all `m` constraints.
    pub fn uniform(m: usize, lipschitz: f64, curvature: f64) -> Result<Self, SmoothnessError> {
        Self::new(vec![lipschitz; m + 1], vec![curvature; m + 1])
    }

    pub fn lipschitz(&self, i: usize) -> f64 {
        self.lipschitz[i]
    }

    pub fn curvature(&self, i: usize) -> f64 {
        self.curvature[i]
    }

    pub fn curvatures(&self) -> &[f64] {
        &self.curvature
    }

    /// Number of functions covered, `m + 1`.
    pub fn len(&self) -> usize {
        self.lipschitz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lipschitz.is_empty()
    }

    /// `L_max` and `M_max` over the constraints. With no constraints the
    /// objective's constants are used so step rules stay well defined.
    pub fn profile(&self) -> SmoothnessProfile {
        let range = if self.lipschitz.len() > 1 { 1.. } else { 0.. };
        let max = |v: &[f64]| v.iter().copied().fold(f64::MIN, f64::max);
        SmoothnessProfile {
            l_max: max(&self.lipschitz[range.clone()]),
            m_max: max(&self.curvature[range]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessProfile {
    pub l_max: f64,
    pub m_max: f64,
}

/// A black-box constrained problem: minimize `f_0(x)` subject to
/// `f_i(x) <= 0` for `i = 1..=m`.
pub trait Problem: Sync {
    fn dimension(&self) -> usize;

    fn num_constraints(&self) -> usize;

    fn smoothness(&self) -> &Smoothness;

    /// Returns `(f_0(x), f_1(x), ..., f_m(x))`. Must be deterministic.
    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, EvalFailure>;

    /// Exact gradients `[grad f_0, ..., grad f_m]`, for test problems only.
    fn gradients(&self, _x: &[f64]) -> Option<Vec<Vec<f64>>> {
        None
    }

    /// Whether `evaluate` may be called from several threads at once.
    fn reentrant(&self) -> bool {
        false
    }
}

impl<P: Problem + ?Sized> Problem for &P {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn num_constraints(&self) -> usize {
        (**self).num_constraints()
    }
    fn smoothness(&self) -> &Smoothness {
        (**self).smoothness()
    }
    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, EvalFailure> {
        (**self).evaluate(x)
    }
    fn gradients(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        (**self).gradients(x)
    }
    fn reentrant(&self) -> bool {
        (**self).reentrant()
    }
}

impl<P: Problem + ?Sized> Problem for Box<P> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn num_constraints(&self) -> usize {
        (**self).num_constraints()
    }
    fn smoothness(&self) -> &Smoothness {
        (**self).smoothness()
    }
    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, EvalFailure> {
        (**self).evaluate(x)
    }
    fn gradients(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        (**self).gradients(x)
    }
    fn reentrant(&self) -> bool {
        (**self).reentrant()
    }
}

/// Wraps a problem and replaces its smoothness constants.
pub struct WithSmoothness<P> {
    inner: P,
    smoothness: Smoothness,
}

impl<P: Problem> WithSmoothness<P> {
    pub fn new(inner: P, smoothness: Smoothness) -> Result<Self, SmoothnessError> {
        let expected = inner.num_constraints() + 1;
        if smoothness.len() != expected {
            return Err(SmoothnessError::Length {
                expected,
                got: smoothness.len(),
            });
        }
        Ok(WithSmoothness { inner, smoothness })
    }
}

impl<P: Problem> Problem for WithSmoothness<P> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn num_constraints(&self) -> usize {
        self.inner.num_constraints()
    }
    fn smoothness(&self) -> &Smoothness {
        &self.smoothness
    }
    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, EvalFailure> {
        self.inner.evaluate(x)
    }
    fn gradients(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        self.inner.gradients(x)
    }
    fn reentrant(&self) -> bool {
        self.inner.reentrant()
    }
}

/// True iff every constraint value `values[1..]` is strictly negative.
pub fn is_strictly_feasible(values: &[f64]) -> bool {
    values.iter().skip(1).all(|&v| v < 0.0)
}

/// Largest constraint value, or `-inf` when there are no constraints.
pub fn max_constraint(values: &[f64]) -> f64 {
    values
        .iter()
        .skip(1)
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Purpose {
    /// Initial feasibility check of the start point.
    Start,
    /// Center or coordinate probe of a finite-difference sweep.
    Probe,
    /// Step-length candidate `x + beta * s`.
    Candidate,
    /// The guaranteed-decrease candidate `x + gamma * s`.
    LineSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub iteration: usize,
    pub purpose: Purpose,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampleRecord {
    pub fn is_feasible(&self) -> bool {
        self.values.iter().skip(1).all(|&v| v <= 0.0)
    }
}

/// Append-only record of every oracle query.
#[derive(Debug, Clone, Default)]
pub struct SampleLedger {
    records: Vec<SampleRecord>,
    max_constraint: f64,
    infeasible: usize,
}

impl SampleLedger {
    pub fn new() -> Self {
        SampleLedger {
            records: Vec::new(),
            max_constraint: f64::NEG_INFINITY,
            infeasible: 0,
        }
    }

    pub fn push(&mut self, record: SampleRecord) {
        self.max_constraint = self.max_constraint.max(max_constraint(&record.values));
        if !record.is_feasible() {
            self.infeasible += 1;
        }
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    /// Running maximum of `max_i f_i` over all samples.
    pub fn max_constraint(&self) -> f64 {
        self.max_constraint
    }

    /// Number of samples with some `f_i > 0`.
    pub fn infeasible_count(&self) -> usize {
        self.infeasible
    }

    pub fn infeasible_records(&self) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(|r| !r.is_feasible())
    }
}

/// The single chokepoint between a solver and a [`Problem`].
pub struct Sampler<'p> {
    problem: &'p dyn Problem,
    ledger: SampleLedger,
    iteration: usize,
}

impl<'p> Sampler<'p> {
    pub fn new(problem: &'p dyn Problem) -> Self {
        Sampler {
            problem,
            ledger: SampleLedger::new(),
            iteration: 0,
        }
    }

    pub fn problem(&self) -> &'p dyn Problem {
        self.problem
    }

    pub fn ledger(&self) -> &SampleLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> SampleLedger {
        self.ledger
    }

    pub fn set_iteration(&mut self, k: usize) {
        self.iteration = k;
    }

    pub fn evaluate(&mut self, x: &[f64], purpose: Purpose) -> Result<Vec<f64>, OracleError> {
        let values = checked_eval(self.problem, x)?;
        self.record(x, &values, purpose);
        Ok(values)
    }

    /// Evaluates a batch of points. Points run concurrently when the problem
    /// is reentrant; records are appended in input order either way and the
    /// first failure (in input order) is returned.
    pub fn evaluate_batch(
        &mut self,
        points: &[Vec<f64>],
        purpose: Purpose,
    ) -> Result<Vec<Vec<f64>>, OracleError> {
        let problem = self.problem;
        let results: Vec<Result<Vec<f64>, OracleError>> = if problem.reentrant() && points.len() > 1
        {
            use rayon::prelude::*;
            points.par_iter().map(|x| checked_eval(problem, x)).collect()
        } else {
            points.iter().map(|x| checked_eval(problem, x)).collect()
        };
        let mut out = Vec::with_capacity(points.len());
        for (x, result) in points.iter().zip(results) {
            let values = result?;
            self.record(x, &values, purpose);
            out.push(values);
        }
        Ok(out)
    }

    fn record(&mut self, x: &[f64], values: &[f64], purpose: Purpose) {
        self.ledger.push(SampleRecord {
            iteration: self.iteration,
            purpose,
            x: x.to_vec(),
            values: values.to_vec(),
        });
    }
}

fn checked_eval(problem: &dyn Problem, x: &[f64]) -> Result<Vec<f64>, OracleError> {
    let d = problem.dimension();
    if x.len() != d {
        return Err(OracleError::Dimension {
            expected: d,
            got: x.len(),
        });
    }
    let values = problem.evaluate(x).map_err(|e| OracleError::Failed {
        x: x.to_vec(),
        reason: e.0,
    })?;
    let expected = problem.num_constraints() + 1;
    if values.len() != expected {
        return Err(OracleError::Arity {
            expected,
            got: values.len(),
        });
    }
    Ok(values)
}
