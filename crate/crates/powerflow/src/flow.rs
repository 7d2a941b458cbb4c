//! Bus admittance matrix and Newton-Raphson power flow in polar form.

use crate::case::GridCase;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerFlowError {
    #[error("power flow did not converge in {iterations} iterations (mismatch {mismatch:e})")]
    Diverged { iterations: usize, mismatch: f64 },
    #[error("singular Jacobian at iteration {0}")]
    SingularJacobian(usize),
    #[error("dispatch has {got} entries, expected {expected}")]
    Dispatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    /// Infinity-norm mismatch tolerance in p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

/// Two-port admittances of a branch: `I_f = yff V_f + yft V_t`,
/// `I_t = ytf V_f + ytt V_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub from: usize,
    pub to: usize,
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub ybus: DMatrix<Complex64>,
    pub branches: Vec<BranchAdmittance>,
}

impl Network {
    /// Pi-model branches with off-nominal taps and phase shifts, plus bus shunts.
    pub fn new(case: &GridCase) -> Self {
        let n = case.num_buses();
        let mut ybus = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        let mut branches = Vec::with_capacity(case.branches.len());
        for br in &case.branches {
            let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
            let charging = Complex64::new(0.0, br.b / 2.0);
            let tap = Complex64::from_polar(br.tap, br.shift.to_radians());
            let ytt = ys + charging;
            let adm = BranchAdmittance {
                from: br.from,
                to: br.to,
                yff: ytt / (tap * tap.conj()),
                yft: -ys / tap.conj(),
                ytf: -ys / tap,
                ytt,
            };
            ybus[(br.from, br.from)] += adm.yff;
            ybus[(br.from, br.to)] += adm.yft;
            ybus[(br.to, br.from)] += adm.ytf;
            ybus[(br.to, br.to)] += adm.ytt;
            branches.push(adm);
        }
        for (i, bus) in case.buses.iter().enumerate() {
            ybus[(i, i)] += Complex64::new(bus.gs, bus.bs) / case.base_mva;
        }
        Network { ybus, branches }
    }

    /// Complex power injections `V .* conj(Y V)`.
    pub fn injections(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = v.len();
        (0..n)
            .map(|i| {
                let current: Complex64 = (0..n).map(|k| self.ybus[(i, k)] * v[k]).sum();
                v[i] * current.conj()
            })
            .collect()
    }
}

/// Branch flows seen from both terminals, in p.u.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchFlow {
    pub p_from: f64,
    pub q_from: f64,
    pub i_from: f64,
    pub p_to: f64,
    pub q_to: f64,
    pub i_to: f64,
}

impl BranchFlow {
    pub fn losses(&self) -> f64 {
        self.p_from + self.p_to
    }
}

pub fn branch_flows(v: &[Complex64], adm: &BranchAdmittance) -> BranchFlow {
    let (vf, vt) = (v[adm.from], v[adm.to]);
    let i_from = adm.yff * vf + adm.yft * vt;
    let i_to = adm.ytf * vf + adm.ytt * vt;
    let s_from = vf * i_from.conj();
    let s_to = vt * i_to.conj();
    BranchFlow {
        p_from: s_from.re,
        q_from: s_from.im,
        i_from: i_from.norm(),
        p_to: s_to.re,
        q_to: s_to.im,
        i_to: i_to.norm(),
    }
}

/// Generator active powers in MW (slack entry ignored) and voltage setpoints
/// in p.u., both in the case's generator order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dispatch {
    pub pg_mw: Vec<f64>,
    pub vm: Vec<f64>,
}

impl Dispatch {
    /// The setpoints written in the case file.
    pub fn from_case(case: &GridCase) -> Self {
        Dispatch {
            pg_mw: case.generators.iter().map(|g| g.pg).collect(),
            vm: case.generators.iter().map(|g| g.vg).collect(),
        }
    }
}

/// Mismatch equations for one dispatch. The unknowns are the angles of all
/// non-slack buses followed by the magnitudes of load buses.
#[derive(Debug, Clone)]
pub struct PowerFlowModel<'n> {
    network: &'n Network,
    pvpq: Vec<usize>,
    pq: Vec<usize>,
    p_spec: Vec<f64>,
    q_spec: Vec<f64>,
    vm_fixed: Vec<f64>,
}

impl<'n> PowerFlowModel<'n> {
    pub fn new(case: &GridCase, network: &'n Network, dispatch: &Dispatch) -> Result<Self, PowerFlowError> {
        let ng = case.generators.len();
        for len in [dispatch.pg_mw.len(), dispatch.vm.len()] {
            if len != ng {
                return Err(PowerFlowError::Dispatch { expected: ng, got: len });
            }
        }
        let n = case.num_buses();
        let base = case.base_mva;
        let mut p_spec: Vec<f64> = case.buses.iter().map(|b| -b.pd / base).collect();
        let q_spec: Vec<f64> = case.buses.iter().map(|b| -b.qd / base).collect();
        let mut vm_fixed = vec![1.0; n];
        let mut is_gen = vec![false; n];
        for (g, gen) in case.generators.iter().enumerate() {
            is_gen[gen.bus] = true;
            vm_fixed[gen.bus] = dispatch.vm[g];
            if gen.bus != case.slack {
                p_spec[gen.bus] += dispatch.pg_mw[g] / base;
            }
        }
        let pvpq = (0..n).filter(|&i| i != case.slack).collect();
        let pq = (0..n).filter(|&i| !is_gen[i]).collect();
        Ok(PowerFlowModel {
            network,
            pvpq,
            pq,
            p_spec,
            q_spec,
            vm_fixed,
        })
    }

    pub fn num_unknowns(&self) -> usize {
        self.pvpq.len() + self.pq.len()
    }

    pub fn flat_start(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.pvpq.len()];
        x.extend(self.pq.iter().map(|_| 1.0));
        x
    }

    pub fn voltages(&self, x: &[f64]) -> Vec<Complex64> {
        let mut vm = self.vm_fixed.clone();
        let mut va = vec![0.0; vm.len()];
        for (k, &i) in self.pvpq.iter().enumerate() {
            va[i] = x[k];
        }
        for (k, &i) in self.pq.iter().enumerate() {
            vm[i] = x[self.pvpq.len() + k];
        }
        vm.iter().zip(&va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect()
    }

    pub fn mismatch(&self, x: &[f64]) -> Vec<f64> {
        let s = self.network.injections(&self.voltages(x));
        let mut f: Vec<f64> = self.pvpq.iter().map(|&i| s[i].re - self.p_spec[i]).collect();
        f.extend(self.pq.iter().map(|&i| s[i].im - self.q_spec[i]));
        f
    }

    /// Analytic Jacobian of [`mismatch`](Self::mismatch).
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let v = self.voltages(x);
        let y = &self.network.ybus;
        let n = v.len();
        let current: Vec<Complex64> = (0..n).map(|i| (0..n).map(|k| y[(i, k)] * v[k]).sum()).collect();
        let unit: Vec<Complex64> = v.iter().map(|vi| vi / vi.norm()).collect();
        let j = Complex64::new(0.0, 1.0);
        // dS_i / d(theta_k) and dS_i / d|V_k|
        let ds_dva = |i: usize, k: usize| -> Complex64 {
            if i == k {
                j * v[i] * (current[i] - y[(i, i)] * v[i]).conj()
            } else {
                -j * v[i] * (y[(i, k)] * v[k]).conj()
            }
        };
        let ds_dvm = |i: usize, k: usize| -> Complex64 {
            let base = v[i] * (y[(i, k)] * unit[k]).conj();
            if i == k {
                base + current[i].conj() * unit[i]
            } else {
                base
            }
        };
        let (na, nm) = (self.pvpq.len(), self.pq.len());
        let mut jac = DMatrix::zeros(na + nm, na + nm);
        for (r, &i) in self.pvpq.iter().enumerate() {
            for (c, &k) in self.pvpq.iter().enumerate() {
                jac[(r, c)] = ds_dva(i, k).re;
            }
            for (c, &k) in self.pq.iter().enumerate() {
                jac[(r, na + c)] = ds_dvm(i, k).re;
            }
        }
        for (r, &i) in self.pq.iter().enumerate() {
            for (c, &k) in self.pvpq.iter().enumerate() {
                jac[(na + r, c)] = ds_dva(i, k).im;
            }
            for (c, &k) in self.pq.iter().enumerate() {
                jac[(na + r, na + c)] = ds_dvm(i, k).im;
            }
        }
        jac
    }

    /// Newton-Raphson from the flat start.
    pub fn solve(&self, options: &PowerFlowOptions) -> Result<PowerFlowSolution, PowerFlowError> {
        let mut x = self.flat_start();
        let mut iterations = 0;
        loop {
            let f = self.mismatch(&x);
            let norm = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if norm <= options.tolerance {
                return Ok(self.solution(&x, iterations, norm));
            }
            if iterations >= options.max_iterations || !norm.is_finite() {
                return Err(PowerFlowError::Diverged {
                    iterations,
                    mismatch: norm,
                });
            }
            let step = self
                .jacobian(&x)
                .lu()
                .solve(&DVector::from_vec(f))
                .ok_or(PowerFlowError::SingularJacobian(iterations))?;
            for (xi, di) in x.iter_mut().zip(step.iter()) {
                *xi -= di;
            }
            iterations += 1;
        }
    }

    fn solution(&self, x: &[f64], iterations: usize, mismatch: f64) -> PowerFlowSolution {
        let v = self.voltages(x);
        let injections = self.network.injections(&v);
        let flows = self.network.branches.iter().map(|b| branch_flows(&v, b)).collect();
        PowerFlowSolution {
            vm: v.iter().map(|c| c.norm()).collect(),
            va: v.iter().map(|c| c.arg()).collect(),
            voltages: v,
            injections,
            flows,
            iterations,
            mismatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub vm: Vec<f64>,
    /// Angles in radians; the slack angle is exactly zero.
    pub va: Vec<f64>,
    pub voltages: Vec<Complex64>,
    /// Net complex injection per bus in p.u.
    pub injections: Vec<Complex64>,
    pub flows: Vec<BranchFlow>,
    pub iterations: usize,
    pub mismatch: f64,
}

impl PowerFlowSolution {
    /// Generator output in p.u. (injection plus local load), in generator order.
    pub fn generation(&self, case: &GridCase) -> Vec<Complex64> {
        case.generators
            .iter()
            .map(|g| {
                let bus = &case.buses[g.bus];
                self.injections[g.bus] + Complex64::new(bus.pd, bus.qd) / case.base_mva
            })
            .collect()
    }

    pub fn total_losses(&self) -> f64 {
        self.flows.iter().map(BranchFlow::losses).sum()
    }
}

pub fn solve_power_flow(
    case: &GridCase,
    network: &Network,
    dispatch: &Dispatch,
    options: &PowerFlowOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    PowerFlowModel::new(case, network, dispatch)?.solve(options)
}
