//! Brute-force reference for the descent subproblem, independent of the
//! simplex: enumerate every vertex of the feasible polytope and keep the best.

use crate::lp::INFEASIBILITY_TOL;
use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

/// Optimal value and a minimizing vertex, or `None` when the polytope is empty.
pub fn enumerate_direction(g0: &[f64], constraints: &[&[f64]], eps: f64) -> Option<(Vec<f64>, f64)> {
    let d = g0.len();
    // Half-spaces a's <= b: the l1 ball as 2^d sign rows, then the tightened rows.
    let mut rows: Vec<(Vec<f64>, f64)> = (0..1usize << d)
        .map(|mask| {
            let a = (0..d)
                .map(|j| if mask >> j & 1 == 1 { -1.0 } else { 1.0 })
                .collect();
            (a, 1.0)
        })
        .collect();
    rows.extend(constraints.iter().map(|g| (g.to_vec(), -2.0 * eps)));

    let mut best: Option<(Vec<f64>, f64)> = None;
    for basis in (0..rows.len()).combinations(d) {
        let a = DMatrix::from_fn(d, d, |r, c| rows[basis[r]].0[c]);
        let b = DVector::from_iterator(d, basis.iter().map(|&r| rows[r].1));
        let lu = a.lu();
        if lu.determinant().abs() < 1e-12 {
            continue;
        }
        let Some(v) = lu.solve(&b) else { continue };
        let feasible = rows.iter().all(|(a, b)| {
            let lhs: f64 = a.iter().zip(v.iter()).map(|(x, y)| x * y).sum();
            lhs <= b + INFEASIBILITY_TOL
        });
        if !feasible {
            continue;
        }
        let value: f64 = g0.iter().zip(v.iter()).map(|(x, y)| x * y).sum();
        if best.as_ref().map_or(true, |(_, bv)| value < *bv) {
            best = Some((v.iter().copied().collect(), value));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_is_negative_sup_norm() {
        let (_, v) = enumerate_direction(&[3.0, -4.0], &[], 0.05).unwrap();
        assert_eq!(v, -4.0);
    }

    #[test]
    fn empty_polytope() {
        let g1 = [0.0, 0.0];
        assert!(enumerate_direction(&[1.0, 0.0], &[&g1], 0.05).is_none());
        // s1 <= -0.2 and -s1 <= -0.2 cannot both hold
        let a = [1.0, 0.0];
        let b = [-1.0, 0.0];
        assert!(enumerate_direction(&[1.0, 0.0], &[&a, &b], 0.1).is_none());
    }

    #[test]
    fn half_plane_example() {
        let g1 = [1.0, 0.0];
        let (s, v) = enumerate_direction(&[1.0, 0.0], &[&g1], 0.1).unwrap();
        assert_eq!(v, -1.0);
        assert_eq!(s, vec![-1.0, 0.0]);
    }

    #[test]
    fn cut_vertex() {
        // min s2 with s1 >= 0.5: optimum at (0.5, -0.5)
        let g1 = [-1.0, 0.0];
        let (s, v) = enumerate_direction(&[0.0, 1.0], &[&g1], 0.25).unwrap();
        assert!((v + 0.5).abs() < 1e-12);
        assert!((s[0] - 0.5).abs() < 1e-12);
    }
}
