//! Invariant suites run by `szolp check` and by the acceptance tests. Each
//! returns a [`Check`] with a one-line verdict.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::time::Instant;
use szolp::gradient::{error_bound, estimate_gradients};
use szolp::kkt::{problem_kkt_residual, DEFAULT_TOL_ACTIVE};
use szolp::localset::build_local_set;
use szolp::lp::{near_active, solve_direction, Direction};
use szolp::oracle::{is_strictly_feasible, Problem, Sampler, Smoothness};
use szolp::problems::{by_name, random_convex_qp, random_quadratic, AnalyticProblem};
use szolp::solver::{run, SolverConfig};
use szolp::verify::enumerate_direction;
use szolp_powerflow::synthetic::{case_model, jacobian_fd_error, random_grid, random_state};
use szolp_powerflow::{parse_case, solve_power_flow, Dispatch, Network, OpfProblem, PowerFlowOptions, CASE30, TWO_BUS};

/// Generation cost reported for the 30-bus experiment.
pub const OPF_REFERENCE_COST: f64 = 800.14;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {}: {}", self.name, self.detail)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Random LP instances with `d <= 4` and at most three tightened rows. A
/// third of them use small integer data so that ties and degenerate
/// vertices occur.
pub fn random_lp_instance<R: Rng>(rng: &mut R) -> (Vec<f64>, Vec<Vec<f64>>, f64) {
    let d = rng.gen_range(1..=4);
    let r = rng.gen_range(0..=3);
    let integer = rng.gen_bool(1.0 / 3.0);
    let entry = |rng: &mut R| {
        if integer {
            rng.gen_range(-2..=2) as f64
        } else {
            rng.gen_range(-1.0..1.0)
        }
    };
    let g0 = (0..d).map(|_| entry(rng)).collect();
    let rows = (0..r).map(|_| (0..d).map(|_| entry(rng)).collect()).collect();
    (g0, rows, rng.gen_range(0.005..0.3))
}

/// Simplex optimum against brute-force vertex enumeration.
pub fn lp_equivalence(seed: u64, instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut feasible, mut worst, mut failures) = (0, 0.0_f64, Vec::new());
    for n in 0..instances {
        let (g0, rows, eps) = random_lp_instance(&mut rng);
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let simplex = solve_direction(&g0, &refs, eps);
        let brute = enumerate_direction(&g0, &refs, eps);
        match (simplex, brute) {
            (Ok(Direction::Solved { value, .. }), Some((_, v))) => {
                feasible += 1;
                worst = worst.max((value - v).abs());
                if (value - v).abs() > 1e-8 {
                    failures.push(n);
                }
            }
            (Ok(Direction::Infeasible), None) => {}
            _ => failures.push(n),
        }
    }
    Check::new(
        "lp",
        failures.is_empty(),
        format!(
            "{instances} instances ({feasible} feasible), max value gap {worst:.2e}, {} mismatches",
            failures.len()
        ),
    )
}

/// Forward-difference error against `sqrt(d) M nu / 2` on random quadratics
/// whose curvature is known exactly. Floating-point rounding of the
/// difference quotient, about `|f| * 1e-16 / nu`, is allowed on top.
pub fn gradient_bound(seed: u64, instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut failures, mut worst_ratio) = (0, 0.0_f64);
    for _ in 0..instances {
        let dim = rng.gen_range(1..=10);
        let q = random_quadratic(&mut rng, dim);
        let m = q.curvature().max(1e-12);
        let qc = q.clone();
        let problem = AnalyticProblem::new(dim, Smoothness::uniform(0, 1.0, m).unwrap(), move |x| vec![qc.value(x)]);
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let nu = 10f64.powf(rng.gen_range(-5.0..0.0));
        let mut sampler = Sampler::new(&problem);
        let est = estimate_gradients(&mut sampler, &x, nu).expect("analytic problem evaluates");
        let err = distance(est.gradient(0), &q.gradient(&x));
        let bound = error_bound(dim, m, nu);
        let rounding = 1e-13 * (1.0 + q.value(&x).abs()) / nu;
        worst_ratio = worst_ratio.max(err / bound);
        if err > bound + rounding || sampler.ledger().len() != dim + 1 {
            failures += 1;
        }
    }
    Check::new(
        "gradient",
        failures == 0,
        format!("{instances} quadratics, max error/bound {worst_ratio:.3}, {failures} violations"),
    )
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QpRunStats {
    pub runs: usize,
    pub samples: usize,
    pub infeasible_samples: usize,
    pub non_monotone: usize,
    pub descent_violations: usize,
    pub steps: usize,
    pub errors: usize,
    pub seconds: f64,
}

/// Solver runs on random convex QPs with `d <= 10`, `m <= 20`. Every step
/// evaluates the `gamma` candidate against the guaranteed decrease.
pub fn random_qp_runs(seed: u64, runs: usize) -> QpRunStats {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = QpRunStats {
        runs,
        ..QpRunStats::default()
    };
    let config = SolverConfig {
        max_iterations: 5000,
        ..SolverConfig::default()
    };
    for _ in 0..runs {
        let d = rng.gen_range(1..=10);
        let m = rng.gen_range(1..=20);
        let (problem, start) = random_convex_qp(&mut rng, d, m);
        let report = match run(&problem, &start, config.clone()) {
            Ok(r) => r,
            Err(_) => {
                stats.errors += 1;
                continue;
            }
        };
        stats.errors += usize::from(report.error.is_some());
        stats.samples += report.samples();
        stats.infeasible_samples += report
            .ledger
            .records()
            .iter()
            .filter(|r| !is_strictly_feasible(&r.values))
            .count();
        stats.descent_violations += report.descent_violations.len();
        let mut last = report.ledger.records()[0].values[0];
        for row in &report.trace {
            if row.f0 > last || (row.action.is_step() && row.f0 >= last) {
                stats.non_monotone += 1;
            }
            if row.action.is_step() {
                stats.steps += 1;
            }
            last = row.f0;
        }
    }
    stats.seconds = started.elapsed().as_secs_f64();
    stats
}

pub fn safety_check(stats: &QpRunStats) -> Check {
    Check::new(
        "safety",
        stats.infeasible_samples == 0 && stats.errors == 0 && stats.seconds < 60.0,
        format!(
            "{} runs, {} samples, {} not strictly feasible, {} errors, {:.1}s",
            stats.runs, stats.samples, stats.infeasible_samples, stats.errors, stats.seconds
        ),
    )
}

pub fn descent_check(stats: &QpRunStats) -> Check {
    Check::new(
        "descent",
        stats.non_monotone == 0 && stats.descent_violations == 0 && stats.steps > 0,
        format!(
            "{} steps, {} non-monotone rows, {} gamma candidates missed the decrease bound",
            stats.steps, stats.non_monotone, stats.descent_violations
        ),
    )
}

/// A strictly feasible point of a random QP, placed a random fraction of the
/// way from the origin to the boundary along a random ray.
fn interior_point<R: Rng>(rng: &mut R, problem: &dyn Problem, start: &[f64]) -> Vec<f64> {
    let d = start.len();
    let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let at = |t: f64| -> Vec<f64> { start.iter().zip(&dir).map(|(s, v)| s + t * v).collect() };
    let feasible = |t: f64| problem.evaluate(&at(t)).map(|v| is_strictly_feasible(&v)).unwrap_or(false);
    let (mut lo, mut hi) = (0.0, 1.0);
    while feasible(hi) {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo * rng.gen_range(0.5..0.999))
}

/// Points sampled inside local feasible sets must satisfy every true
/// constraint, and the probes that build the sets must be feasible.
pub fn localset_safety(seed: u64, sets: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut points, mut violations, mut probe_violations) = (0, 0, 0);
    for _ in 0..sets {
        let d = rng.gen_range(1..=10);
        let m = rng.gen_range(1..=20);
        let (problem, start) = random_convex_qp(&mut rng, d, m);
        let x = interior_point(&mut rng, &problem, &start);
        let values = problem.evaluate(&x).unwrap();
        let eps = 10f64.powf(rng.gen_range(-3.0..-1.0));
        let mut sampler = Sampler::new(&problem);
        let Ok(set) = build_local_set(&mut sampler, &x, &values, eps) else {
            continue;
        };
        probe_violations += sampler.ledger().infeasible_count();
        for _ in 0..20 {
            let s: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let beta = set.max_step(&s);
            if !beta.is_finite() {
                continue;
            }
            let t = beta * rng.gen_range(0.0..=1.0);
            let y: Vec<f64> = x.iter().zip(&s).map(|(xi, si)| xi + t * si).collect();
            points += 1;
            if !problem.evaluate(&y).unwrap().iter().skip(1).all(|&f| f <= 0.0) {
                violations += 1;
            }
        }
    }
    Check::new(
        "localset",
        violations == 0 && probe_violations == 0 && points > 0,
        format!("{sets} sets, {points} points, {violations} outside the feasible set, {probe_violations} infeasible probes"),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktRow {
    pub problem: &'static str,
    pub stationarity: f64,
    pub complementarity: f64,
    pub distance: f64,
    pub iterations: usize,
    pub seconds: f64,
}

/// Final KKT residuals of the analytic problems at `eps_min = 1e-6`.
pub fn kkt_table() -> Vec<KktRow> {
    ["one-d", "qp-corner", "disk-linear"]
        .into_iter()
        .map(|name| {
            let named = by_name(name).expect("registered");
            let report = run(&*named.problem, &named.start, SolverConfig::default()).expect("start is feasible");
            let kkt = problem_kkt_residual(&*named.problem, report.x(), DEFAULT_TOL_ACTIVE)
                .expect("evaluates")
                .expect("analytic gradients");
            KktRow {
                problem: named.name,
                stationarity: kkt.stationarity,
                complementarity: kkt.complementarity,
                distance: distance(report.x(), named.optimum.as_deref().expect("known optimum")),
                iterations: report.state.k,
                seconds: report.seconds,
            }
        })
        .collect()
}

pub fn kkt_check(rows: &[KktRow], names: &[&str]) -> Check {
    let selected: Vec<&KktRow> = rows.iter().filter(|r| names.contains(&r.problem)).collect();
    let passed = !selected.is_empty()
        && selected
            .iter()
            .all(|r| r.stationarity <= 1e-2 && r.complementarity <= 1e-2 && r.distance <= 1e-2 && r.seconds < 5.0);
    let detail = selected
        .iter()
        .map(|r| {
            format!(
                "{} (stat {:.1e}, comp {:.1e}, dist {:.1e}, {:.2}s)",
                r.problem, r.stationarity, r.complementarity, r.distance, r.seconds
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Check::new("kkt", passed, detail)
}

/// With exact gradients, a descent test that passes at `eps` must pass at
/// `eps / 4, ..., eps / 64`.
pub fn proposition1(seed: u64, points: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut tested, mut passing, mut counterexamples) = (0, 0, 0);
    let passes = |values: &[f64], grads: &[Vec<f64>], eps: f64| -> bool {
        let active = near_active(values, eps);
        let rows: Vec<&[f64]> = active.indices.iter().map(|&i| grads[i].as_slice()).collect();
        solve_direction(&grads[0], &rows, eps)
            .ok()
            .and_then(|d| d.value())
            .is_some_and(|v| v <= -2.0 * eps)
    };
    for _ in 0..points {
        let d = rng.gen_range(1..=10);
        let m = rng.gen_range(1..=20);
        let (problem, start) = random_convex_qp(&mut rng, d, m);
        let x = interior_point(&mut rng, &problem, &start);
        let values = problem.evaluate(&x).unwrap();
        let grads = problem.gradients(&x).expect("analytic gradients");
        for j in 1..=6 {
            let eps = f64::powi(0.5, j);
            tested += 1;
            if passes(&values, &grads, eps) {
                passing += 1;
                if !(2..7).all(|level| passes(&values, &grads, eps / f64::powi(2.0, level))) {
                    counterexamples += 1;
                }
            }
        }
    }
    Check::new(
        "prop1",
        counterexamples == 0 && passing > 0,
        format!("{points} points, {tested} levels tested, {passing} passing, {counterexamples} counterexamples"),
    )
}

/// Two-bus closed form, Jacobian against central differences on 20 random
/// grids, and the 30-bus case from a flat start.
pub fn powerflow_checks(seed: u64) -> Check {
    let mut notes = Vec::new();
    let mut passed = true;

    let case = parse_case(TWO_BUS).expect("bundled case parses");
    let net = Network::new(&case);
    match solve_power_flow(&case, &net, &Dispatch::from_case(&case), &PowerFlowOptions::default()) {
        Ok(sol) => {
            // P = U2 sin(-d) / x = 0.5 and Q2 = 0 give U2 = cos d, sin 2d = -0.1.
            let delta = -0.5 * 0.1_f64.asin();
            let err = (sol.va[1] - delta)
                .abs()
                .max((sol.vm[1] - delta.cos()).abs())
                .max((sol.flows[0].p_from - 0.5).abs());
            passed &= err <= 1e-8;
            notes.push(format!("two-bus error {err:.1e}"));
        }
        Err(e) => {
            passed = false;
            notes.push(format!("two-bus failed: {e}"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for trial in 0..20 {
        let case = random_grid(&mut rng, 3 + trial % 6);
        let net = Network::new(&case);
        let model = case_model(&case, &net).expect("dispatch matches generators");
        let x = random_state(&mut rng, &model);
        worst = worst.max(jacobian_fd_error(&model, &x, 1e-6));
    }
    passed &= worst <= 1e-6;
    notes.push(format!("jacobian max rel error {worst:.1e} on 20 grids"));

    let case = parse_case(CASE30).expect("bundled case parses");
    let net = Network::new(&case);
    match solve_power_flow(&case, &net, &Dispatch::from_case(&case), &PowerFlowOptions::default()) {
        Ok(sol) => {
            passed &= sol.iterations <= 10;
            notes.push(format!("30-bus {} Newton iterations", sol.iterations));
        }
        Err(e) => {
            passed = false;
            notes.push(format!("30-bus failed: {e}"));
        }
    }
    Check::new("powerflow", passed, notes.join(", "))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpfOutcome {
    pub termination: &'static str,
    pub iterations: usize,
    pub cost: f64,
    pub relative_gap: f64,
    pub worst_iterate: f64,
    pub infeasible_samples: usize,
    pub max_active: usize,
    /// Largest near-active set among passes after the first step.
    pub max_active_after_first_step: usize,
    pub seconds: f64,
    pub error: Option<String>,
}

/// The 30-bus OPF with the experiment's configuration.
pub fn opf_experiment() -> OpfOutcome {
    let problem = OpfProblem::new(parse_case(CASE30).expect("bundled case parses"), 0.5, 0.13).expect("valid constants");
    let report = run(&problem, &problem.start(), SolverConfig::default()).expect("start is feasible");
    let worst_iterate = report.trace.iter().map(|t| t.max_fi).fold(f64::NEG_INFINITY, f64::max);
    let first_step = report.trace.iter().position(|t| t.action.is_step()).unwrap_or(report.trace.len());
    OpfOutcome {
        termination: report.termination.as_str(),
        iterations: report.state.k,
        cost: report.f0(),
        relative_gap: (report.f0() - OPF_REFERENCE_COST).abs() / OPF_REFERENCE_COST,
        worst_iterate,
        infeasible_samples: report.ledger.infeasible_count(),
        max_active: report.max_active,
        max_active_after_first_step: report.trace[first_step..].iter().map(|t| t.n_active).max().unwrap_or(0),
        seconds: report.seconds,
        error: report.error.map(|e| e.to_string()),
    }
}

pub fn opf_cost_check(o: &OpfOutcome) -> Check {
    Check::new(
        "opf",
        o.relative_gap <= 5e-3 && o.worst_iterate < 0.0 && o.infeasible_samples == 0 && o.seconds < 300.0 && o.error.is_none(),
        format!(
            "cost {:.4} ({:.3}% from {OPF_REFERENCE_COST}), worst iterate constraint {:.2e}, {} infeasible samples, {} iterations ({}), {:.1}s",
            o.cost,
            100.0 * o.relative_gap,
            o.worst_iterate,
            o.infeasible_samples,
            o.iterations,
            o.termination,
            o.seconds
        ),
    )
}

pub fn opf_active_check(o: &OpfOutcome) -> Check {
    Check::new(
        "near-active",
        o.max_active <= 4,
        format!(
            "max |A| over all subproblems {}, after the first step {}",
            o.max_active, o.max_active_after_first_step
        ),
    )
}
