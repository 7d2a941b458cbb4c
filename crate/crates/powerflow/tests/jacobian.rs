use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use szolp_powerflow::synthetic::{case_model, jacobian_fd_error, random_grid, random_state};
use szolp_powerflow::{Network, PowerFlowOptions};

#[test]
fn analytic_matches_central_differences_on_twenty_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..20 {
        let n = 3 + trial % 6;
        let case = random_grid(&mut rng, n);
        let network = Network::new(&case);
        let model = case_model(&case, &network).unwrap();
        for _ in 0..3 {
            let x = random_state(&mut rng, &model);
            let err = jacobian_fd_error(&model, &x, 1e-6);
            assert!(err <= 1e-6, "grid {trial}: relative error {err:e}");
        }
    }
}

#[test]
fn newton_converges_on_lightly_loaded_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut converged = 0;
    for _ in 0..20 {
        let case = random_grid(&mut rng, 5);
        let network = Network::new(&case);
        let model = case_model(&case, &network).unwrap();
        if let Ok(sol) = model.solve(&PowerFlowOptions::default()) {
            converged += 1;
            assert!(sol.mismatch <= 1e-8);
        }
    }
    assert!(converged >= 15, "{converged} of 20 converged");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jacobian_agrees_for_any_grid(seed in any::<u64>(), n in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_grid(&mut rng, n);
        let network = Network::new(&case);
        let model = case_model(&case, &network).unwrap();
        let x = random_state(&mut rng, &model);
        prop_assert!(jacobian_fd_error(&model, &x, 1e-6) <= 1e-6);
    }
}
