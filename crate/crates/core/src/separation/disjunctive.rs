//! Cut-generating LP for a union of polyhedra inside the gain box.
//!
//! Each disjunct is `{x ∈ [0,1]ⁿ : A x = 1, G_d x ≤ h_d}` where `A` holds the
//! balance rows. An inequality `π x ≤ π₀` is valid for disjunct `d` iff there
//! are multipliers `u ≥ 0` (for `G_d`), `y` free (for `A`), `μ ≥ 0` (for
//! `x ≤ 1`) and `ν ≥ 0` (for `x ≥ 0`) with `π = G_dᵀu + Aᵀy + μ − ν` and
//! `π₀ ≥ h_dᵀu + 1ᵀy + 1ᵀμ`. The LP maximizes `π x̃ − π₀` subject to
//! `‖π‖₁ + |π₀| ≤ 1`.

use crate::error::{Error, Result};
use crate::lp::{solve_lp_robust, Backend, LinearProgram, LpStatus, Relation, Sense};

/// Rows `g·x ≤ h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Disjunct {
    pub rows: Vec<(Vec<(usize, f64)>, f64)>,
}

/// `π x ≤ π₀`, violated at the reference point by `violation`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisjunctiveCut {
    pub pi: Vec<f64>,
    pub pi0: f64,
    pub violation: f64,
}

/// Most violated valid inequality for the union of `disjuncts` at `point`, or
/// `None` when the violation does not exceed `tol` (the point lies in the
/// closed convex hull). If every disjunct is empty the infeasible inequality
/// `0 ≤ −1` is returned.
pub fn build_disjunctive_cut(
    point: &[f64],
    balance: &[Vec<usize>],
    disjuncts: &[Disjunct],
    tol: f64,
) -> Result<Option<DisjunctiveCut>> {
    let n = point.len();
    let mut nonempty = Vec::new();
    for d in disjuncts {
        if !is_empty(n, balance, d)? {
            nonempty.push(d);
        }
    }
    if nonempty.is_empty() {
        return Ok(Some(DisjunctiveCut {
            pi: vec![0.0; n],
            pi0: -1.0,
            violation: 1.0,
        }));
    }

    let mut lp = LinearProgram::new(Sense::Maximize);
    let pi_plus: Vec<usize> = (0..n).map(|v| lp.add_var(0.0, f64::INFINITY, point[v])).collect();
    let pi_minus: Vec<usize> = (0..n).map(|v| lp.add_var(0.0, f64::INFINITY, -point[v])).collect();
    let pi0_plus = lp.add_var(0.0, f64::INFINITY, -1.0);
    let pi0_minus = lp.add_var(0.0, f64::INFINITY, 1.0);
    let mut norm: Vec<(usize, f64)> = pi_plus.iter().chain(&pi_minus).map(|&v| (v, 1.0)).collect();
    norm.push((pi0_plus, 1.0));
    norm.push((pi0_minus, 1.0));
    lp.add_constraint(norm, Relation::Le, 1.0);

    for d in nonempty {
        let u: Vec<usize> = d
            .rows
            .iter()
            .map(|_| lp.add_var(0.0, f64::INFINITY, 0.0))
            .collect();
        let y: Vec<usize> = balance
            .iter()
            .map(|_| lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0))
            .collect();
        let mu: Vec<usize> = (0..n).map(|_| lp.add_var(0.0, f64::INFINITY, 0.0)).collect();
        let nu: Vec<usize> = (0..n).map(|_| lp.add_var(0.0, f64::INFINITY, 0.0)).collect();

        let mut columns: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|v| vec![(pi_plus[v], 1.0), (pi_minus[v], -1.0), (mu[v], -1.0), (nu[v], 1.0)])
            .collect();
        for (k, (g, _)) in d.rows.iter().enumerate() {
            for &(v, c) in g {
                columns[v].push((u[k], -c));
            }
        }
        for (r, row) in balance.iter().enumerate() {
            for &v in row {
                columns[v].push((y[r], -1.0));
            }
        }
        for coeffs in columns {
            lp.add_constraint(coeffs, Relation::Eq, 0.0);
        }

        let mut rhs_row = vec![(pi0_plus, 1.0), (pi0_minus, -1.0)];
        for (k, (_, h)) in d.rows.iter().enumerate() {
            rhs_row.push((u[k], -h));
        }
        for &yr in &y {
            rhs_row.push((yr, -1.0));
        }
        for &m in &mu {
            rhs_row.push((m, -1.0));
        }
        lp.add_constraint(rhs_row, Relation::Ge, 0.0);
    }

    let result = solve_lp_robust(&lp, Backend::Auto)?;
    if result.status != LpStatus::Optimal {
        return Err(Error::Lp(format!(
            "cut-generating LP ended with status {:?}",
            result.status
        )));
    }
    let pi: Vec<f64> = (0..n)
        .map(|v| result.x[pi_plus[v]] - result.x[pi_minus[v]])
        .collect();
    let pi0 = result.x[pi0_plus] - result.x[pi0_minus];
    let violation = pi.iter().zip(point).map(|(p, x)| p * x).sum::<f64>() - pi0;
    if violation <= tol {
        return Ok(None);
    }
    Ok(Some(DisjunctiveCut { pi, pi0, violation }))
}

fn is_empty(n: usize, balance: &[Vec<usize>], d: &Disjunct) -> Result<bool> {
    let mut lp = LinearProgram::new(Sense::Minimize);
    for _ in 0..n {
        lp.add_var(0.0, 1.0, 0.0);
    }
    for row in balance {
        lp.add_constraint(row.iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, 1.0);
    }
    for (g, h) in &d.rows {
        lp.add_constraint(g.clone(), Relation::Le, *h);
    }
    let result = solve_lp_robust(&lp, Backend::Auto)?;
    match result.status {
        LpStatus::Optimal => Ok(false),
        LpStatus::Infeasible => Ok(true),
        status => Err(Error::Lp(format!("disjunct feasibility LP ended with {status:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn le(coeffs: &[(usize, f64)], h: f64) -> Disjunct {
        Disjunct {
            rows: vec![(coeffs.to_vec(), h)],
        }
    }

    #[test]
    fn point_inside_hull_gives_no_cut() {
        let disjuncts = [le(&[(0, 1.0)], 0.3), le(&[(0, -1.0)], -0.7)];
        let cut = build_disjunctive_cut(&[0.5], &[], &disjuncts, 1e-6).unwrap();
        assert!(cut.is_none());
    }

    #[test]
    fn single_disjunct_recovers_its_face() {
        let disjuncts = [le(&[(0, 1.0)], 0.3)];
        let cut = build_disjunctive_cut(&[0.5], &[], &disjuncts, 1e-6)
            .unwrap()
            .unwrap();
        // Normalized x ≤ 0.3.
        assert!(cut.pi[0] > 0.0);
        assert!((cut.pi0 / cut.pi[0] - 0.3).abs() < 1e-9);
        assert!((cut.violation - 0.2 / 1.3).abs() < 1e-9);
    }

    #[test]
    fn all_empty_disjuncts_cut_everything() {
        let disjuncts = [le(&[(0, 1.0)], -1.0)];
        let cut = build_disjunctive_cut(&[0.5], &[], &disjuncts, 1e-6)
            .unwrap()
            .unwrap();
        assert_eq!(cut.pi, vec![0.0]);
        assert!(cut.pi0 < 0.0);
    }

    #[test]
    fn two_variable_hull_facet() {
        // D1 = {x₁ + x₂ ≤ 0.5}, D2 = {x₁ ≥ 0.9} in the unit square. The hull
        // has vertices (0,0), (1,0), (1,1), (0.9,1), (0,0.5); the only facet
        // cutting off (0.3, 0.9) joins (0, 0.5) and (0.9, 1):
        // -5/9 x₁ + x₂ ≤ 0.5.
        let disjuncts = [le(&[(0, 1.0), (1, 1.0)], 0.5), le(&[(0, -1.0)], -0.9)];
        let point = [0.3, 0.9];
        let cut = build_disjunctive_cut(&point, &[], &disjuncts, 1e-6)
            .unwrap()
            .unwrap();
        let scale = cut.pi[1];
        assert!(scale > 0.0);
        assert!((cut.pi[0] / scale + 5.0 / 9.0).abs() < 1e-7);
        assert!((cut.pi0 / scale - 0.5).abs() < 1e-7);
        let vertices = [
            [0.0, 0.0],
            [0.5, 0.0],
            [0.0, 0.5],
            [0.9, 0.0],
            [1.0, 0.0],
            [0.9, 1.0],
            [1.0, 1.0],
        ];
        for v in vertices {
            let lhs = cut.pi[0] * v[0] + cut.pi[1] * v[1];
            assert!(lhs <= cut.pi0 + 1e-9, "vertex {v:?} cut off");
        }
    }

    #[test]
    fn balance_rows_restrict_the_box() {
        // With x₁ + x₂ = 1 the disjunct {x₁ ≤ 0.2} is the segment from
        // (0, 1) to (0.2, 0.8); (0.5, 0.5) is separated.
        let disjuncts = [le(&[(0, 1.0)], 0.2)];
        let cut = build_disjunctive_cut(&[0.5, 0.5], &[vec![0, 1]], &disjuncts, 1e-6)
            .unwrap()
            .unwrap();
        for v in [[0.0, 1.0], [0.2, 0.8]] {
            assert!(cut.pi[0] * v[0] + cut.pi[1] * v[1] <= cut.pi0 + 1e-9);
        }
        assert!(cut.violation > 1e-3);
    }
}
