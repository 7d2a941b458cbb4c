//! The optimal power flow problem as a black box: decisions in, generation
//! cost and operating-limit violations out, with the power flow solved
//! implicitly at every query.

use crate::case::GridCase;
use crate::flow::{Dispatch, Network, PowerFlowError, PowerFlowModel, PowerFlowOptions, PowerFlowSolution};
use std::io::Write;
use szolp::oracle::{EvalFailure, Problem, Smoothness, SmoothnessError};

/// Decision voltages are expressed in percent of nominal.
pub const DEFAULT_VOLTAGE_SCALE: f64 = 100.0;

/// Decisions are `P_G2..P_GnG` in MW followed by `U_1..U_nG` scaled by
/// `voltage_scale`. Constraints, all in p.u.:
///
/// - slack active power lower / upper bound;
/// - lower / upper active power bound of every other generator;
/// - lower / upper voltage bound of every bus;
/// - current limit at both ends of every rated branch;
/// - reactive lower / upper bound of every generator that has them.
#[derive(Debug, Clone)]
pub struct OpfProblem {
    case: GridCase,
    network: Network,
    smoothness: Smoothness,
    labels: Vec<String>,
    options: PowerFlowOptions,
    voltage_scale: f64,
}

impl OpfProblem {
    /// Uses the same `(L, M)` for every function.
    pub fn new(case: GridCase, lipschitz: f64, curvature: f64) -> Result<Self, SmoothnessError> {
        let labels = constraint_labels(&case);
        let smoothness = Smoothness::uniform(labels.len(), lipschitz, curvature)?;
        Ok(Self::with_smoothness(case, smoothness))
    }

    pub fn with_smoothness(case: GridCase, smoothness: Smoothness) -> Self {
        let labels = constraint_labels(&case);
        assert_eq!(smoothness.len(), labels.len() + 1, "one constant pair per function");
        OpfProblem {
            network: Network::new(&case),
            case,
            smoothness,
            labels,
            options: PowerFlowOptions::default(),
            voltage_scale: DEFAULT_VOLTAGE_SCALE,
        }
    }

    pub fn with_voltage_scale(mut self, scale: f64) -> Self {
        assert!(scale > 0.0);
        self.voltage_scale = scale;
        self
    }

    pub fn with_options(mut self, options: PowerFlowOptions) -> Self {
        self.options = options;
        self
    }

    pub fn case(&self) -> &GridCase {
        &self.case
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn constraint_labels(&self) -> &[String] {
        &self.labels
    }

    /// The case file's generator setpoints as a decision vector.
    pub fn start(&self) -> Vec<f64> {
        self.decision(&Dispatch::from_case(&self.case))
    }

    pub fn decision(&self, dispatch: &Dispatch) -> Vec<f64> {
        let mut x: Vec<f64> = dispatch.pg_mw[1..].to_vec();
        x.extend(dispatch.vm.iter().map(|v| v * self.voltage_scale));
        x
    }

    pub fn dispatch(&self, x: &[f64]) -> Dispatch {
        let ng = self.case.generators.len();
        assert_eq!(x.len(), 2 * ng - 1);
        let mut pg_mw = vec![0.0];
        pg_mw.extend_from_slice(&x[..ng - 1]);
        Dispatch {
            pg_mw,
            vm: x[ng - 1..].iter().map(|u| u / self.voltage_scale).collect(),
        }
    }

    pub fn solve(&self, x: &[f64]) -> Result<PowerFlowSolution, PowerFlowError> {
        PowerFlowModel::new(&self.case, &self.network, &self.dispatch(x))?.solve(&self.options)
    }

    /// Generation cost with every generator's output, the slack's taken from
    /// the solved state.
    pub fn cost(&self, solution: &PowerFlowSolution) -> f64 {
        let base = self.case.base_mva;
        solution
            .generation(&self.case)
            .iter()
            .zip(&self.case.generators)
            .map(|(s, g)| g.cost_of(s.re * base))
            .sum()
    }

    /// `(f_0, f_1..f_m)` for a solved state.
    pub fn values(&self, solution: &PowerFlowSolution) -> Vec<f64> {
        let case = &self.case;
        let base = case.base_mva;
        let gen = solution.generation(case);
        let mut f = Vec::with_capacity(self.labels.len() + 1);
        f.push(self.cost(solution));
        let slack = &case.generators[0];
        f.push((slack.pmin - gen[0].re * base) / base);
        f.push((gen[0].re * base - slack.pmax) / base);
        for (g, s) in case.generators.iter().zip(&gen).skip(1) {
            f.push((g.pmin - s.re * base) / base);
            f.push((s.re * base - g.pmax) / base);
        }
        for (bus, vm) in case.buses.iter().zip(&solution.vm) {
            f.push(bus.vmin - vm);
            f.push(vm - bus.vmax);
        }
        for (br, flow) in case.branches.iter().zip(&solution.flows) {
            if let Some(limit) = br.current_limit(base) {
                f.push(flow.i_from - limit);
                f.push(flow.i_to - limit);
            }
        }
        for (g, s) in case.generators.iter().zip(&gen) {
            if g.has_reactive_limits() {
                f.push((g.qmin - s.im * base) / base);
                f.push((s.im * base - g.qmax) / base);
            }
        }
        f
    }
}

impl Problem for OpfProblem {
    fn dimension(&self) -> usize {
        2 * self.case.generators.len() - 1
    }

    fn num_constraints(&self) -> usize {
        self.labels.len()
    }

    fn smoothness(&self) -> &Smoothness {
        &self.smoothness
    }

    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, EvalFailure> {
        let solution = self.solve(x).map_err(|e| EvalFailure(e.to_string()))?;
        Ok(self.values(&solution))
    }

    fn reentrant(&self) -> bool {
        true
    }
}

/// Names of the constraints in evaluation order, using file bus numbers.
pub fn constraint_labels(case: &GridCase) -> Vec<String> {
    let id = |i: usize| case.buses[i].id;
    let mut labels = Vec::new();
    for g in &case.generators {
        labels.push(format!("pg_min[{}]", id(g.bus)));
        labels.push(format!("pg_max[{}]", id(g.bus)));
    }
    for bus in &case.buses {
        labels.push(format!("vm_min[{}]", bus.id));
        labels.push(format!("vm_max[{}]", bus.id));
    }
    for br in &case.branches {
        if br.current_limit(case.base_mva).is_some() {
            labels.push(format!("i_from[{}-{}]", id(br.from), id(br.to)));
            labels.push(format!("i_to[{}-{}]", id(br.from), id(br.to)));
        }
    }
    for g in &case.generators {
        if g.has_reactive_limits() {
            labels.push(format!("qg_min[{}]", id(g.bus)));
            labels.push(format!("qg_max[{}]", id(g.bus)));
        }
    }
    labels
}

/// Per-bus voltages and per-branch flows of a solved state as CSV.
pub fn write_state_csv<W: Write>(case: &GridCase, solution: &PowerFlowSolution, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "id", "from", "to", "vm", "va_deg", "p", "q", "i"])?;
    for (i, bus) in case.buses.iter().enumerate() {
        let s = solution.injections[i];
        w.write_record([
            "bus".to_string(),
            bus.id.to_string(),
            String::new(),
            String::new(),
            solution.vm[i].to_string(),
            solution.va[i].to_degrees().to_string(),
            s.re.to_string(),
            s.im.to_string(),
            String::new(),
        ])?;
    }
    for (k, (br, flow)) in case.branches.iter().zip(&solution.flows).enumerate() {
        w.write_record([
            "branch".to_string(),
            (k + 1).to_string(),
            case.buses[br.from].id.to_string(),
            case.buses[br.to].id.to_string(),
            String::new(),
            String::new(),
            flow.p_from.to_string(),
            flow.q_from.to_string(),
            flow.i_from.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
