use proptest::prelude::*;
use szolp::lp::{solve_direction, Direction};
use szolp::verify::enumerate_direction;

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, f64)> {
    (1usize..=4, 0usize..=3).prop_flat_map(|(d, r)| {
        (
            prop::collection::vec(-1.0..1.0f64, d),
            prop::collection::vec(prop::collection::vec(-1.0..1.0f64, d), r),
            0.005..0.3f64,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn simplex_matches_vertex_enumeration((g0, rows, eps) in instance()) {
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let simplex = solve_direction(&g0, &refs, eps).unwrap();
        let brute = enumerate_direction(&g0, &refs, eps);
        match (&simplex, brute) {
            (Direction::Solved { value, .. }, Some((_, v))) => prop_assert!((value - v).abs() <= 1e-8),
            (Direction::Infeasible, None) => {}
            (s, b) => prop_assert!(false, "verdicts differ: {s:?} vs {b:?}"),
        }
    }

    #[test]
    fn solution_is_feasible((g0, rows, eps) in instance()) {
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        if let Direction::Solved { s, value } = solve_direction(&g0, &refs, eps).unwrap() {
            prop_assert!(s.iter().map(|v| v.abs()).sum::<f64>() <= 1.0 + 1e-9);
            for g in &rows {
                let lhs: f64 = g.iter().zip(&s).map(|(a, b)| a * b).sum();
                prop_assert!(lhs + 2.0 * eps <= 1e-9);
            }
            let v: f64 = g0.iter().zip(&s).map(|(a, b)| a * b).sum();
            prop_assert_eq!(v, value);
        }
    }

    #[test]
    fn solve_is_deterministic((g0, rows, eps) in instance()) {
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let a = solve_direction(&g0, &refs, eps).unwrap();
        let b = solve_direction(&g0, &refs, eps).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn descent_survives_smaller_tightening((g0, rows, eps) in instance()) {
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let passes = |e: f64| {
            solve_direction(&g0, &refs, e).unwrap().value().is_some_and(|v| v <= -2.0 * e)
        };
        if passes(eps) {
            for level in 2..7 {
                let smaller = eps / f64::powi(2.0, level);
                prop_assert!(passes(smaller), "fails at eps / 2^{level}");
            }
        }
    }
}
