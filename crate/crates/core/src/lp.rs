//! Descent-direction subproblem:
//!
//! ```text
//! min  g_0's   s.t.  ||s||_1 <= 1,   g_i's + 2 eps <= 0  for i in A(x, eps)
//! ```
//!
//! solved with a dense two-phase primal simplex using Bland's rule. The
//! direction is split as `s = u - v` with `u, v >= 0`, so the l1 ball becomes
//! the single row `sum(u) + sum(v) + t = 1`.

use crate::error::SolverError;
use crate::gradient::{estimate_gradients, nu_star, safety_margin, GradientEstimate};
use crate::oracle::Sampler;
use std::fmt::Write as _;
use thiserror::Error;

/// Phase-1 objective above this means the subproblem is infeasible.
pub const INFEASIBILITY_TOL: f64 = 1e-9;
/// A selected pivot smaller than this is a numerical breakdown.
pub const PIVOT_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-12;
const MAX_PIVOTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("simplex pivot {pivot:e} below tolerance {PIVOT_TOL:e}")]
    NumericalBreakdown { pivot: f64 },
    #[error("simplex exceeded {MAX_PIVOTS} pivots")]
    PivotLimit,
    #[error("subproblem reported unbounded on a bounded region")]
    Unbounded,
}

/// Constraint indices `i >= 1` with `f_i(x) >= -2 eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct NearActiveSet {
    pub eps: f64,
    pub indices: Vec<usize>,
}

impl NearActiveSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `values` is the full vector `(f_0, ..., f_m)`.
pub fn near_active(values: &[f64], eps: f64) -> NearActiveSet {
    assert!(eps > 0.0, "tightening constant must be positive");
    let indices = values
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &v)| v >= -2.0 * eps)
        .map(|(i, _)| i)
        .collect();
    NearActiveSet { eps, indices }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Direction {
    Solved { s: Vec<f64>, value: f64 },
    Infeasible,
}

impl Direction {
    pub fn value(&self) -> Option<f64> {
        match self {
            Direction::Solved { value, .. } => Some(*value),
            Direction::Infeasible => None,
        }
    }

    pub fn step(&self) -> Option<&[f64]> {
        match self {
            Direction::Solved { s, .. } => Some(s),
            Direction::Infeasible => None,
        }
    }
}

/// Solves the subproblem for objective gradient `g0` and the gradients of the
/// near-active constraints.
pub fn solve_direction(g0: &[f64], constraints: &[&[f64]], eps: f64) -> Result<Direction, LpError> {
    solve_inner(g0, constraints, eps, None)
}

/// Like [`solve_direction`], also rendering the initial and final tableaux.
pub fn solve_direction_traced(
    g0: &[f64],
    constraints: &[&[f64]],
    eps: f64,
) -> (Result<Direction, LpError>, String) {
    let mut dump = String::new();
    let result = solve_inner(g0, constraints, eps, Some(&mut dump));
    (result, dump)
}

fn solve_inner(
    g0: &[f64],
    constraints: &[&[f64]],
    eps: f64,
    mut dump: Option<&mut String>,
) -> Result<Direction, LpError> {
    assert!(eps > 0.0);
    let d = g0.len();
    let r = constraints.len();
    // Columns: u_0 v_0 u_1 v_1 ... | t | w (r) | artificial (r). Interleaving
    // makes Bland's rule break ties toward the lowest coordinate.
    let t_col = 2 * d;
    let w0 = t_col + 1;
    let a0 = w0 + r;
    let ncols = a0 + r;
    let mut tab = Tableau::new(r + 1, ncols);

    for j in 0..2 * d {
        tab.a[0][j] = 1.0;
    }
    tab.a[0][t_col] = 1.0;
    tab.rhs[0] = 1.0;
    tab.basis[0] = t_col;
    // g'(u - v) + w = -2 eps, negated so the right-hand side is positive.
    for (k, g) in constraints.iter().enumerate() {
        assert_eq!(g.len(), d);
        let row = &mut tab.a[k + 1];
        for j in 0..d {
            row[2 * j] = -g[j];
            row[2 * j + 1] = g[j];
        }
        row[w0 + k] = -1.0;
        row[a0 + k] = 1.0;
        tab.rhs[k + 1] = 2.0 * eps;
        tab.basis[k + 1] = a0 + k;
    }

    let names = column_names(d, r);
    if let Some(out) = dump.as_deref_mut() {
        let _ = writeln!(out, "# lp instance: d={d} rows={} eps={eps:e}", r + 1);
        tab.render(out, &names, "initial");
    }

    if r > 0 {
        let mut phase1 = vec![0.0; ncols];
        for c in &mut phase1[a0..] {
            *c = 1.0;
        }
        tab.optimize(&phase1, ncols)?;
        let infeas: f64 = (0..=r)
            .filter(|&i| tab.basis[i] >= a0)
            .map(|i| tab.rhs[i])
            .sum();
        if infeas > INFEASIBILITY_TOL {
            if let Some(out) = dump.as_deref_mut() {
                tab.render(out, &names, "phase-1 end (infeasible)");
            }
            return Ok(Direction::Infeasible);
        }
        tab.evict_artificials(a0)?;
    }

    let mut cost = vec![0.0; ncols];
    for j in 0..d {
        cost[2 * j] = g0[j];
        cost[2 * j + 1] = -g0[j];
    }
    tab.optimize(&cost, a0)?;
    if let Some(out) = dump {
        tab.render(out, &names, "optimal");
    }

    let mut s = vec![0.0; d];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < 2 * d {
            let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
            s[b / 2] += sign * tab.rhs[i];
        }
    }
    let value = g0.iter().zip(&s).map(|(g, sj)| g * sj).sum();
    Ok(Direction::Solved { s, value })
}

struct Tableau {
    a: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(rows: usize, cols: usize) -> Self {
        Tableau {
            a: vec![vec![0.0; cols]; rows],
            rhs: vec![0.0; rows],
            basis: vec![0; rows],
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.a[row][col];
        for v in &mut self.a[row] {
            *v /= p;
        }
        self.rhs[row] /= p;
        self.a[row][col] = 1.0;
        let pivot_row = self.a[row].clone();
        let pivot_rhs = self.rhs[row];
        for i in 0..self.a.len() {
            if i == row {
                continue;
            }
            let factor = self.a[i][col];
            if factor == 0.0 {
                continue;
            }
            for (v, pv) in self.a[i].iter_mut().zip(&pivot_row) {
                *v -= factor * pv;
            }
            self.a[i][col] = 0.0;
            self.rhs[i] -= factor * pivot_rhs;
            if self.rhs[i] < 0.0 && self.rhs[i] > -1e-13 {
                self.rhs[i] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Minimizes `cost` over columns `< allowed` with Bland's rule: lowest
    /// index entering column, ratio ties to the lowest basic index.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<(), LpError> {
        for _ in 0..MAX_PIVOTS {
            let Some(col) = (0..allowed).find(|&j| {
                !self.basis.contains(&j) && self.reduced_cost(cost, j) < -COST_TOL
            }) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.a.len() {
                let aij = self.a[i][col];
                if aij <= f64::EPSILON * 16.0 {
                    continue;
                }
                let ratio = self.rhs[i] / aij;
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                        if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            let Some((row, _)) = best else {
                return Err(LpError::Unbounded);
            };
            let pivot = self.a[row][col];
            if pivot.abs() < PIVOT_TOL {
                return Err(LpError::NumericalBreakdown { pivot });
            }
            self.pivot(row, col);
        }
        Err(LpError::PivotLimit)
    }

    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        cost[j]
            - self
                .basis
                .iter()
                .enumerate()
                .map(|(i, &b)| cost[b] * self.a[i][j])
                .sum::<f64>()
    }

    /// Pivots zero-level artificials out of the basis where possible; rows
    /// with no usable entry are redundant and keep their artificial at zero.
    fn evict_artificials(&mut self, first_artificial: usize) -> Result<(), LpError> {
        for row in 0..self.a.len() {
            if self.basis[row] < first_artificial {
                continue;
            }
            let col = (0..first_artificial)
                .filter(|j| !self.basis.contains(j))
                .find(|&j| self.a[row][j].abs() > INFEASIBILITY_TOL);
            if let Some(col) = col {
                self.pivot(row, col);
            }
        }
        Ok(())
    }

    fn render(&self, out: &mut String, names: &[String], label: &str) {
        let _ = writeln!(out, "## {label}");
        let _ = write!(out, "{:>6}", "basis");
        for n in names {
            let _ = write!(out, " {n:>10}");
        }
        let _ = writeln!(out, " {:>12}", "rhs");
        for (i, row) in self.a.iter().enumerate() {
            let _ = write!(out, "{:>6}", names[self.basis[i]]);
            for v in row {
                let _ = write!(out, " {v:>10.4e}");
            }
            let _ = writeln!(out, " {:>12.6e}", self.rhs[i]);
        }
    }
}

fn column_names(d: usize, r: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(2 * d + 1 + 2 * r);
    for j in 0..d {
        names.push(format!("u{j}"));
        names.push(format!("v{j}"));
    }
    names.push("t".to_string());
    names.extend((0..r).map(|k| format!("w{k}")));
    names.extend((0..r).map(|k| format!("a{k}")));
    names
}

/// Outcome of one subproblem query at `x` with tightening `eps`.
#[derive(Debug, Clone)]
pub struct LpQuery {
    pub direction: Direction,
    pub nu: f64,
    pub active: NearActiveSet,
    pub estimate: GradientEstimate,
    /// Whether the rounding error of every gradient in the subproblem is
    /// within `eps`. Fails only when the probe step is tiny.
    pub reliable: bool,
    pub dump: Option<String>,
}

impl LpQuery {
    /// `g_0' s`, the predicted descent, when the subproblem was feasible and
    /// its gradients reliable.
    pub fn predicted_descent(&self) -> Option<f64> {
        self.direction.value().filter(|_| self.reliable)
    }
}

/// Estimates gradients at `x` with `nu*(eps)` (one probe sweep) and solves
/// the subproblem over the near-active constraints. `values` are the known
/// `f_i(x)`, which size the probe step.
pub fn lp_query(
    sampler: &mut Sampler<'_>,
    x: &[f64],
    values: &[f64],
    eps: f64,
    debug: bool,
) -> Result<LpQuery, SolverError> {
    let profile = sampler.problem().smoothness().profile();
    let margin = safety_margin(values, profile.l_max)?;
    let nu = nu_star(eps, margin, x.len(), profile.m_max)?;
    let estimate = estimate_gradients(sampler, x, nu)?;
    let active = near_active(&estimate.center, eps);
    let rows: Vec<&[f64]> = active.indices.iter().map(|&i| estimate.gradient(i)).collect();
    let reliable = std::iter::once(0)
        .chain(active.indices.iter().copied())
        .all(|i| estimate.rounding_error(i) <= eps);
    let (direction, dump) = if debug {
        let (d, text) = solve_direction_traced(estimate.objective_gradient(), &rows, eps);
        (d?, Some(text))
    } else {
        (solve_direction(estimate.objective_gradient(), &rows, eps)?, None)
    };
    Ok(LpQuery {
        direction,
        nu,
        active,
        estimate,
        reliable,
        dump,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solved(d: Direction) -> (Vec<f64>, f64) {
        match d {
            Direction::Solved { s, value } => (s, value),
            Direction::Infeasible => panic!("expected a solution"),
        }
    }

    #[test]
    fn tiny_probe_step_is_unreliable() {
        use crate::oracle::Smoothness;
        use crate::problems::AnalyticProblem;
        let p = AnalyticProblem::new(1, Smoothness::uniform(1, 1.0, 1e-3).unwrap(), |x| {
            vec![x[0] + 100.0, x[0] - 1.0]
        });
        let far = [0.0];
        let mut sampler = Sampler::new(&p);
        let q = lp_query(&mut sampler, &far, &[100.0, -1.0], 1e-4, false).unwrap();
        assert!(q.reliable);
        assert!(q.predicted_descent().is_some());

        let near = [1.0 - 1e-11];
        let values = [101.0 - 1e-11, -1e-11];
        let q = lp_query(&mut sampler, &near, &values, 1e-4, false).unwrap();
        assert!(!q.reliable);
        assert_eq!(q.predicted_descent(), None);
        assert!(q.direction.value().is_some());
    }

    #[test]
    fn near_active_examples() {
        let f = [0.0, -0.01, -0.5];
        assert_eq!(near_active(&f, 0.05).indices, vec![1]);
        assert!(near_active(&[0.0, -0.5, -0.6], 0.05).is_empty());
        assert_eq!(near_active(&[0.0, -0.5, -0.6], 0.3).indices, vec![1, 2]);
        assert_eq!(near_active(&[0.0, -0.1], 0.05).indices, vec![1]);
    }

    #[test]
    fn unconstrained_picks_largest_coordinate() {
        let (s, v) = solved(solve_direction(&[3.0, -4.0], &[], 0.05).unwrap());
        assert_eq!(s, vec![0.0, 1.0]);
        assert_eq!(v, -4.0);
    }

    #[test]
    fn tie_in_largest_coordinate_goes_to_lowest_index() {
        let (s, v) = solved(solve_direction(&[2.0, -2.0], &[], 0.1).unwrap());
        assert_eq!(s, vec![-1.0, 0.0]);
        assert_eq!(v, -2.0);
    }

    #[test]
    fn zero_constraint_gradient_is_infeasible() {
        let g1 = [0.0, 0.0];
        assert_eq!(
            solve_direction(&[1.0, 1.0], &[&g1], 0.05).unwrap(),
            Direction::Infeasible
        );
    }

    #[test]
    fn half_plane_example() {
        let g1 = [1.0, 0.0];
        let (s, v) = solved(solve_direction(&[1.0, 0.0], &[&g1], 0.1).unwrap());
        assert!((s[0] + 1.0).abs() < 1e-12 && s[1].abs() < 1e-12);
        assert!((v + 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_cases() {
        // min s over |s| <= 1
        let (s, v) = solved(solve_direction(&[1.0], &[], 0.01).unwrap());
        assert_eq!((s[0], v), (-1.0, -1.0));
        // near-active -1 - x: -s + 2 eps <= 0 forces s >= 2 eps
        let eps = 0.05;
        let g1 = [-1.0];
        let (s, v) = solved(solve_direction(&[1.0], &[&g1], eps).unwrap());
        assert!((s[0] - 2.0 * eps).abs() < 1e-12);
        assert!((v - 2.0 * eps).abs() < 1e-12);
    }

    #[test]
    fn zero_objective_is_deterministic() {
        let g1 = [1.0, 1.0];
        let a = solve_direction(&[0.0, 0.0], &[&g1], 0.1).unwrap();
        let b = solve_direction(&[0.0, 0.0], &[&g1], 0.1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.value(), Some(0.0));
    }

    #[test]
    fn solution_respects_constraints() {
        let g1 = [0.3, -1.2, 0.5];
        let g2 = [-0.7, 0.1, 0.9];
        let eps = 0.04;
        let (s, _) = solved(solve_direction(&[1.0, 2.0, -0.5], &[&g1, &g2], eps).unwrap());
        assert!(s.iter().map(|v| v.abs()).sum::<f64>() <= 1.0 + 1e-9);
        for g in [g1, g2] {
            let lhs: f64 = g.iter().zip(&s).map(|(a, b)| a * b).sum();
            assert!(lhs + 2.0 * eps <= 1e-9);
        }
    }

    #[test]
    fn traced_dump_lists_basis() {
        let g1 = [1.0, 0.0];
        let (res, text) = solve_direction_traced(&[1.0, 0.0], &[&g1], 0.1);
        assert!(res.is_ok());
        assert!(text.contains("## initial"));
        assert!(text.contains("## optimal"));
        assert!(text.contains("rhs"));
    }
}
