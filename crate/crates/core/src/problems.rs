//! Analytic test problems and the name registry used by the CLI.

use crate::oracle::{EvalFailure, Problem, Smoothness};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type ValueFn = dyn Fn(&[f64]) -> Result<Vec<f64>, EvalFailure> + Send + Sync;
type GradientFn = dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync;

/// A problem defined by closures; `m` is taken from the smoothness profile.
pub struct AnalyticProblem {
    dim: usize,
    smoothness: Smoothness,
    values: Box<ValueFn>,
    gradients: Option<Box<GradientFn>>,
}

impl AnalyticProblem {
    pub fn new<F>(dim: usize, smoothness: Smoothness, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::fallible(dim, smoothness, move |x| Ok(f(x)))
    }

    pub fn fallible<F>(dim: usize, smoothness: Smoothness, f: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<f64>, EvalFailure> + Send + Sync + 'static,
    {
        assert!(dim >= 1, "problem dimension must be positive");
        assert!(!smoothness.is_empty());
        AnalyticProblem {
            dim,
            smoothness,
            values: Box::new(f),
            gradients: None,
        }
    }

    pub fn with_gradients<G>(mut self, g: G) -> Self
    where
        G: Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync + 'static,
    {
        self.gradients = Some(Box::new(g));
        self
    }
}

impl Problem for AnalyticProblem {
    fn dimension(&self) -> usize {
        self.dim
    }
    fn num_constraints(&self) -> usize {
        self.smoothness.len() - 1
    }
    fn smoothness(&self) -> &Smoothness {
        &self.smoothness
    }
    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, EvalFailure> {
        (self.values)(x)
    }
    fn gradients(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        self.gradients.as_ref().map(|g| g(x))
    }
    fn reentrant(&self) -> bool {
        true
    }
}

/// `q(x) = 0.5 x'Hx + c'x + r` with symmetric `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl Quadratic {
    pub fn affine(linear: Vec<f64>, constant: f64) -> Self {
        let d = linear.len();
        Quadratic {
            hessian: DMatrix::zeros(d, d),
            linear: DVector::from_vec(linear),
            constant,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.hessian * &x)) + self.linear.dot(&x) + self.constant
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        (&self.hessian * x + &self.linear).as_slice().to_vec()
    }

    /// Spectral norm of the Hessian: the gradient-Lipschitz constant.
    pub fn curvature(&self) -> f64 {
        if self.hessian.nrows() == 0 {
            return 0.0;
        }
        self.hessian
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Lipschitz constant of the value over the ball `||x|| <= radius`.
    pub fn lipschitz_on_ball(&self, radius: f64) -> f64 {
        self.curvature() * radius + self.linear.norm()
    }
}

/// Objective plus inequality constraints, all quadratic, with exact gradients.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    pub objective: Quadratic,
    pub constraints: Vec<Quadratic>,
    smoothness: Smoothness,
}

impl QuadraticProblem {
    pub fn new(objective: Quadratic, constraints: Vec<Quadratic>, smoothness: Smoothness) -> Self {
        assert_eq!(smoothness.len(), constraints.len() + 1);
        QuadraticProblem {
            objective,
            constraints,
            smoothness,
        }
    }
}

impl Problem for QuadraticProblem {
    fn dimension(&self) -> usize {
        self.objective.linear.len()
    }
    fn num_constraints(&self) -> usize {
        self.constraints.len()
    }
    fn smoothness(&self) -> &Smoothness {
        &self.smoothness
    }
    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, EvalFailure> {
        Ok(std::iter::once(&self.objective)
            .chain(&self.constraints)
            .map(|q| q.value(x))
            .collect())
    }
    fn gradients(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        Some(
            std::iter::once(&self.objective)
                .chain(&self.constraints)
                .map(|q| q.gradient(x))
                .collect(),
        )
    }
    fn reentrant(&self) -> bool {
        true
    }
}

/// A registered problem with its strictly feasible start and known optimum.
pub struct NamedProblem {
    pub name: &'static str,
    pub problem: Box<dyn Problem>,
    pub start: Vec<f64>,
    pub optimum: Option<Vec<f64>>,
}

/// `min x  s.t.  -1 - x <= 0`; optimum `x = -1` with multiplier 1.
pub fn one_dimensional() -> NamedProblem {
    let smoothness = Smoothness::new(vec![1.0, 1.0], vec![0.1, 0.1]).unwrap();
    let problem = AnalyticProblem::new(1, smoothness, |x| vec![x[0], -1.0 - x[0]])
        .with_gradients(|_| vec![vec![1.0], vec![-1.0]]);
    NamedProblem {
        name: "one-d",
        problem: Box::new(problem),
        start: vec![0.0],
        optimum: Some(vec![-1.0]),
    }
}

/// `min ||x - (2, 2)||^2  s.t.  x_1 <= 1, x_2 <= 1`; optimum at the corner
/// `(1, 1)` with multipliers `(2, 2)`.
pub fn qp_corner() -> NamedProblem {
    // M_max must dominate the objective's curvature (2) for the sufficient
    // decrease bound; any positive M is valid for the linear constraints.
    let smoothness = Smoothness::new(vec![6.0, 1.0, 1.0], vec![2.0, 2.0, 2.0]).unwrap();
    let objective = Quadratic {
        hessian: DMatrix::identity(2, 2) * 2.0,
        linear: DVector::from_vec(vec![-4.0, -4.0]),
        constant: 8.0,
    };
    let constraints = vec![
        Quadratic::affine(vec![1.0, 0.0], -1.0),
        Quadratic::affine(vec![0.0, 1.0], -1.0),
    ];
    NamedProblem {
        name: "qp-corner",
        problem: Box::new(QuadraticProblem::new(objective, constraints, smoothness)),
        start: vec![0.0, 0.0],
        optimum: Some(vec![1.0, 1.0]),
    }
}

/// `min x_1 + x_2  s.t.  ||x||^2 <= 1`; optimum `-(1, 1)/sqrt(2)`.
pub fn disk_linear() -> NamedProblem {
    let smoothness = Smoothness::new(vec![2.0, 3.0], vec![2.0, 2.0]).unwrap();
    let objective = Quadratic::affine(vec![1.0, 1.0], 0.0);
    let ball = Quadratic {
        hessian: DMatrix::identity(2, 2) * 2.0,
        linear: DVector::zeros(2),
        constant: -1.0,
    };
    let h = -std::f64::consts::FRAC_1_SQRT_2;
    NamedProblem {
        name: "disk-linear",
        problem: Box::new(QuadraticProblem::new(objective, vec![ball], smoothness)),
        start: vec![0.0, 0.0],
        optimum: Some(vec![h, h]),
    }
}

pub const PROBLEM_NAMES: &[&str] = &["one-d", "qp-corner", "disk-linear"];

pub fn by_name(name: &str) -> Option<NamedProblem> {
    match name {
        "one-d" => Some(one_dimensional()),
        "qp-corner" => Some(qp_corner()),
        "disk-linear" => Some(disk_linear()),
        _ => None,
    }
}

/// Random convex QP: PSD objective, a mix of linear and convex quadratic
/// constraints, and a bounding ball `||x||^2 <= R^2` so that valid Lipschitz
/// constants exist. The origin is strictly feasible. Constants are computed
/// over the ball of radius `R + 1` and inflated slightly so they strictly
/// exceed the tightest values.
pub fn random_convex_qp<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    num_constraints: usize,
) -> (QuadraticProblem, Vec<f64>) {
    assert!(num_constraints >= 1, "need at least the bounding ball");
    let radius: f64 = rng.gen_range(1.5..3.0);
    let psd = |rng: &mut R, scale: f64| {
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        (&a * a.transpose()) * (scale / dim as f64)
    };
    let vector = |rng: &mut R, scale: f64| DVector::from_fn(dim, |_, _| rng.gen_range(-scale..scale));

    let objective = Quadratic {
        hessian: psd(rng, 1.0),
        linear: vector(rng, 2.0),
        constant: 0.0,
    };
    let mut constraints = vec![Quadratic {
        hessian: DMatrix::identity(dim, dim) * 2.0,
        linear: DVector::zeros(dim),
        constant: -radius * radius,
    }];
    for _ in 1..num_constraints {
        let linear = vector(rng, 1.0);
        let offset: f64 = rng.gen_range(0.3..1.5);
        if rng.gen_bool(0.5) {
            constraints.push(Quadratic {
                hessian: DMatrix::zeros(dim, dim),
                linear,
                constant: -offset,
            });
        } else {
            constraints.push(Quadratic {
                hessian: psd(rng, 0.5),
                linear,
                constant: -offset,
            });
        }
    }

    let reach = radius + 1.0;
    let inflate = |v: f64| v * 1.01 + 1e-3;
    let m0 = objective.curvature();
    let mut lipschitz = vec![inflate(objective.lipschitz_on_ball(reach))];
    let mut curvature = vec![inflate(m0)];
    for q in &constraints {
        lipschitz.push(inflate(q.lipschitz_on_ball(reach)));
        curvature.push(inflate(q.curvature()));
    }
    // The ball's curvature bound is raised to cover the objective so that
    // M_max bounds every function, as the step-length analysis needs.
    curvature[1] = curvature[1].max(curvature[0]);
    let smoothness = Smoothness::new(lipschitz, curvature).unwrap();
    (
        QuadraticProblem::new(objective, constraints, smoothness),
        vec![0.0; dim],
    )
}

/// Random quadratic `0.5 x'Hx + c'x` with symmetric (possibly indefinite) `H`.
pub fn random_quadratic<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Quadratic {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-2.0..2.0));
    Quadratic {
        hessian: (&a + a.transpose()) * 0.5,
        linear: DVector::from_fn(dim, |_, _| rng.gen_range(-3.0..3.0)),
        constant: rng.gen_range(-1.0..1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::is_strictly_feasible;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn registry_starts_are_strictly_feasible() {
        for name in PROBLEM_NAMES {
            let p = by_name(name).unwrap();
            let v = p.problem.evaluate(&p.start).unwrap();
            assert!(is_strictly_feasible(&v), "{name}");
        }
        assert!(by_name("nope").is_none());
    }

    #[test]
    fn quadratic_gradient_matches_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_quadratic(&mut rng, 3);
        let x = [0.3, -0.2, 0.5];
        let g = q.gradient(&x);
        let h = 1e-6;
        for j in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fd = (q.value(&xp) - q.value(&xm)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn random_qp_origin_is_strictly_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let d = rng.gen_range(1..=10);
            let m = rng.gen_range(1..=20);
            let (p, x0) = random_convex_qp(&mut rng, d, m);
            assert_eq!(p.num_constraints(), m);
            assert!(is_strictly_feasible(&p.evaluate(&x0).unwrap()));
            let prof = p.smoothness().profile();
            assert!(prof.m_max >= p.smoothness().curvature(0));
        }
    }
}
