//! Randomly generated small grids and a finite-difference Jacobian check.

use crate::case::{Branch, Bus, BusType, Generator, GridCase, UNLIMITED};
use crate::flow::{Dispatch, Network, PowerFlowError, PowerFlowModel};
use rand::Rng;

/// A connected grid with `n` buses: a random spanning tree plus a few extra
/// branches, some with off-nominal taps and phase shifts. Bus 0 is the slack
/// and carries the first generator.
pub fn random_grid<R: Rng + ?Sized>(rng: &mut R, n: usize) -> GridCase {
    assert!(n >= 2);
    let num_gens = rng.gen_range(1..=n.min(3));
    let buses = (0..n)
        .map(|i| Bus {
            id: i as i64 + 1,
            kind: if i == 0 {
                BusType::Slack
            } else if i < num_gens {
                BusType::Pv
            } else {
                BusType::Pq
            },
            pd: if i == 0 { 0.0 } else { rng.gen_range(0.0..40.0) },
            qd: if i == 0 { 0.0 } else { rng.gen_range(-5.0..15.0) },
            gs: if rng.gen_bool(0.2) { rng.gen_range(0.0..3.0) } else { 0.0 },
            bs: if rng.gen_bool(0.2) { rng.gen_range(-5.0..10.0) } else { 0.0 },
            base_kv: 135.0,
            vmax: 1.1,
            vmin: 0.9,
        })
        .collect();
    let random_branch = |rng: &mut R, from: usize, to: usize| {
        let transformer = rng.gen_bool(0.3);
        Branch {
            from,
            to,
            r: rng.gen_range(0.005..0.08),
            x: rng.gen_range(0.03..0.3),
            b: if transformer { 0.0 } else { rng.gen_range(0.0..0.05) },
            rate_a: rng.gen_range(50.0..150.0),
            tap: if transformer { rng.gen_range(0.95..1.05) } else { 1.0 },
            shift: if transformer { rng.gen_range(-5.0..5.0) } else { 0.0 },
        }
    };
    let mut branches: Vec<Branch> = (1..n)
        .map(|to| {
            let from = rng.gen_range(0..to);
            random_branch(rng, from, to)
        })
        .collect();
    for _ in 0..rng.gen_range(0..=n / 2) {
        let from = rng.gen_range(0..n);
        let to = rng.gen_range(0..n);
        if from != to {
            branches.push(random_branch(rng, from, to));
        }
    }
    let generators = (0..num_gens)
        .map(|bus| Generator {
            bus,
            pg: if bus == 0 { 0.0 } else { rng.gen_range(5.0..30.0) },
            qg: 0.0,
            qmax: UNLIMITED,
            qmin: -UNLIMITED,
            vg: rng.gen_range(0.98..1.05),
            pmax: 200.0,
            pmin: 0.0,
            cost: [0.01, 2.0, 0.0],
        })
        .collect();
    GridCase {
        base_mva: 100.0,
        buses,
        branches,
        generators,
        slack: 0,
    }
}

/// A random operating point around the flat start: angles within ±0.3 rad,
/// load-bus magnitudes in [0.9, 1.1].
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, model: &PowerFlowModel<'_>) -> Vec<f64> {
    model
        .flat_start()
        .iter()
        .map(|&x0| if x0 == 0.0 { rng.gen_range(-0.3..0.3) } else { rng.gen_range(0.9..1.1) })
        .collect()
}

/// Largest entrywise discrepancy between the analytic Jacobian and central
/// differences of the mismatch with step `h`, relative to `max(1, |J_ij|)`.
pub fn jacobian_fd_error(model: &PowerFlowModel<'_>, x: &[f64], h: f64) -> f64 {
    let analytic = model.jacobian(x);
    let mut worst = 0.0_f64;
    let mut xp = x.to_vec();
    for c in 0..x.len() {
        xp[c] = x[c] + h;
        let fp = model.mismatch(&xp);
        xp[c] = x[c] - h;
        let fm = model.mismatch(&xp);
        xp[c] = x[c];
        for r in 0..fp.len() {
            let fd = (fp[r] - fm[r]) / (2.0 * h);
            let exact = analytic[(r, c)];
            worst = worst.max((fd - exact).abs() / exact.abs().max(1.0));
        }
    }
    worst
}

/// Builds the power flow model of a grid at its case setpoints.
pub fn case_model<'n>(case: &GridCase, network: &'n Network) -> Result<PowerFlowModel<'n>, PowerFlowError> {
    PowerFlowModel::new(case, network, &Dispatch::from_case(case))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grids_are_connected_and_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..8 {
            let case = random_grid(&mut rng, n);
            assert_eq!(case.buses.len(), n);
            assert!(case.branches.len() >= n - 1);
            assert_eq!(case.generators[0].bus, case.slack);
        }
    }

    #[test]
    fn fd_check_detects_a_wrong_jacobian_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let case = random_grid(&mut rng, 4);
        let network = Network::new(&case);
        let model = case_model(&case, &network).unwrap();
        let x = random_state(&mut rng, &model);
        assert!(jacobian_fd_error(&model, &x, 1e-6) < 1e-6);
        // A step far too large for the curvature no longer agrees.
        assert!(jacobian_fd_error(&model, &x, 0.5) > 1e-6);
    }
}
