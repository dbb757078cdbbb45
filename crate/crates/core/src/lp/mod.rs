//! Small LP contract shared by the master problem and the separation oracles.
//!
//! Rows are stored as `lower ≤ a·x ≤ upper`, which covers `≤`, `≥`, `=` and
//! ranged rows. Every optimal answer is re-checked against the model before
//! it is returned, whichever backend produced it.

mod dense;
#[cfg(feature = "highs")]
mod highs;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dense::solve_dense;

/// Relative primal residual accepted from any backend.
pub const RESIDUAL_TOL: f64 = 1e-7;

/// Above this tableau size (rows × columns) [`Backend::Auto`] prefers the
/// sparse backend when it is compiled in.
const DENSE_LIMIT: usize = 500_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub lower: f64,
    pub upper: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> Self {
        let (lower, upper) = match relation {
            Relation::Le => (f64::NEG_INFINITY, rhs),
            Relation::Ge => (rhs, f64::INFINITY),
            Relation::Eq => (rhs, rhs),
        };
        Self {
            coeffs: merge_duplicates(coeffs),
            lower,
            upper,
        }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// The backend claimed success but its answer failed the residual check,
    /// or it gave up for numerical reasons.
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LpResult {
    pub(crate) fn without_solution(status: LpStatus) -> Self {
        Self {
            status,
            x: Vec::new(),
            objective: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Auto,
    Dense,
    Highs,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            objective: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            constraints: Vec::new(),
        }
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint::new(coeffs, relation, rhs));
    }

    pub fn add_range(&mut self, coeffs: Vec<(usize, f64)>, lower: f64, upper: f64) {
        self.constraints.push(Constraint {
            coeffs: merge_duplicates(coeffs),
            lower,
            upper,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: self.lower.len().min(self.upper.len()),
            });
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Lp("non-finite objective coefficient".into()));
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::Lp(format!("variable {j} has invalid bounds [{l}, {u}]")));
            }
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if row.lower.is_nan()
                || row.upper.is_nan()
                || row.lower == f64::INFINITY
                || row.upper == f64::NEG_INFINITY
            {
                return Err(Error::Lp(format!("row {i} has invalid bounds")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(Error::Dimension {
                        expected: n,
                        got: j + 1,
                    });
                }
                if !a.is_finite() {
                    return Err(Error::Lp(format!("row {i}: non-finite coefficient")));
                }
            }
        }
        Ok(())
    }

    /// Largest bound or row violation of `x`, each scaled by
    /// `max(1, |bound|)`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let scaled = |v: f64, bound: f64| v / bound.abs().max(1.0);
        let mut worst: f64 = 0.0;
        for ((&v, &l), &u) in x.iter().zip(&self.lower).zip(&self.upper) {
            if !v.is_finite() {
                return f64::INFINITY;
            }
            worst = worst.max(scaled(l - v, l)).max(scaled(v - u, u));
        }
        for row in &self.constraints {
            let a = row.activity(x);
            worst = worst
                .max(scaled(row.lower - a, row.lower))
                .max(scaled(a - row.upper, row.upper));
        }
        worst
    }
}

/// Solves `lp`, choosing the backend by size.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpResult> {
    solve_lp_with(lp, Backend::Auto)
}

pub fn solve_lp_with(lp: &LinearProgram, backend: Backend) -> Result<LpResult> {
    lp.validate()?;
    let result = match resolve(lp, backend) {
        Backend::Highs => solve_sparse(lp)?,
        _ => dense::solve_dense(lp),
    };
    Ok(verify(lp, result))
}

/// Solves with the chosen backend and, on numerical failure, once more with
/// the other one.
pub fn solve_lp_robust(lp: &LinearProgram, backend: Backend) -> Result<LpResult> {
    let first = resolve(lp, backend);
    let result = solve_lp_with(lp, first)?;
    if result.status != LpStatus::NumericalFailure || !cfg!(feature = "highs") {
        return Ok(result);
    }
    let second = if first == Backend::Highs {
        Backend::Dense
    } else {
        Backend::Highs
    };
    log::warn!("LP backend {first:?} failed numerically; retrying with {second:?}");
    solve_lp_with(lp, second)
}

fn resolve(lp: &LinearProgram, backend: Backend) -> Backend {
    match backend {
        Backend::Auto => {
            let columns = lp.num_vars() + lp.num_constraints();
            if cfg!(feature = "highs") && lp.num_constraints() * columns > DENSE_LIMIT {
                Backend::Highs
            } else {
                Backend::Dense
            }
        }
        Backend::Highs if !cfg!(feature = "highs") => Backend::Dense,
        other => other,
    }
}

#[cfg(feature = "highs")]
fn solve_sparse(lp: &LinearProgram) -> Result<LpResult> {
    Ok(highs::solve_highs(lp))
}

#[cfg(not(feature = "highs"))]
fn solve_sparse(lp: &LinearProgram) -> Result<LpResult> {
    Ok(dense::solve_dense(lp))
}

fn verify(lp: &LinearProgram, mut result: LpResult) -> LpResult {
    if result.status != LpStatus::Optimal {
        return result;
    }
    let residual = lp.residual(&result.x);
    if !(residual <= RESIDUAL_TOL) {
        log::warn!("LP answer rejected: residual {residual:e}");
        return LpResult::without_solution(LpStatus::NumericalFailure);
    }
    result.objective = lp.objective_value(&result.x);
    result
}

/// Sorts row entries by column and sums repeated columns; zero sums are kept
/// out of the row.
fn merge_duplicates(mut coeffs: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    coeffs.sort_by_key(|&(j, _)| j);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
    for (j, a) in coeffs {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += a,
            _ => out.push((j, a)),
        }
    }
    out.retain(|&(_, a)| a != 0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_columns_are_merged() {
        let row = merge_duplicates(vec![(3, 1.0), (1, 2.0), (3, -1.0), (1, 0.5), (0, 4.0)]);
        assert_eq!(row, vec![(0, 4.0), (1, 2.5)]);
    }

    fn backends() -> Vec<Backend> {
        if cfg!(feature = "highs") {
            vec![Backend::Dense, Backend::Highs]
        } else {
            vec![Backend::Dense]
        }
    }

    #[test]
    fn maximize_single_bound() {
        for b in backends() {
            let mut lp = LinearProgram::new(Sense::Maximize);
            let x = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
            lp.add_constraint(vec![(x, 1.0)], Relation::Le, 3.0);
            let r = solve_lp_with(&lp, b).unwrap();
            assert_eq!(r.status, LpStatus::Optimal);
            assert!((r.x[0] - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn detects_infeasibility() {
        for b in backends() {
            let mut lp = LinearProgram::new(Sense::Maximize);
            let x = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
            lp.add_constraint(vec![(x, 1.0)], Relation::Ge, 1.0);
            lp.add_constraint(vec![(x, 1.0)], Relation::Le, 0.0);
            assert_eq!(solve_lp_with(&lp, b).unwrap().status, LpStatus::Infeasible);
        }
    }

    #[test]
    fn degenerate_optimum() {
        for b in backends() {
            let mut lp = LinearProgram::new(Sense::Maximize);
            let x = lp.add_var(0.0, f64::INFINITY, 1.0);
            let y = lp.add_var(0.0, f64::INFINITY, 1.0);
            lp.add_constraint(vec![(x, 1.0), (y, 1.0)], Relation::Le, 1.0);
            let r = solve_lp_with(&lp, b).unwrap();
            assert_eq!(r.status, LpStatus::Optimal);
            assert!((r.objective - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn detects_unboundedness() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var(0.0, f64::INFINITY, 1.0);
        let y = lp.add_var(0.0, f64::INFINITY, 0.0);
        lp.add_constraint(vec![(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
        assert_eq!(
            solve_lp_with(&lp, Backend::Dense).unwrap().status,
            LpStatus::Unbounded
        );
    }

    #[test]
    fn rejects_bad_index() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        lp.add_var(0.0, 1.0, 1.0);
        lp.add_constraint(vec![(3, 1.0)], Relation::Le, 1.0);
        assert!(solve_lp(&lp).is_err());
    }

    #[test]
    fn residual_flags_violations() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var(0.0, 10.0, 1.0);
        lp.add_constraint(vec![(x, 1.0)], Relation::Ge, 200.0);
        assert!((lp.residual(&[5.0]) - 195.0 / 200.0).abs() < 1e-12);
        assert_eq!(lp.residual(&[200.0]), 190.0 / 10.0);
    }

    #[test]
    fn resolving_is_deterministic() {
        let lp = transport();
        for b in backends() {
            let first = solve_lp_with(&lp, b).unwrap();
            let second = solve_lp_with(&lp, b).unwrap();
            assert!((first.objective - second.objective).abs() <= 1e-9);
        }
    }

    /// Two plants, three markets; optimum 153.675 (hand-checked by
    /// enumerating the basic solutions of the balanced instance).
    fn transport() -> LinearProgram {
        let supply = [350.0, 600.0];
        let demand = [325.0, 300.0, 275.0];
        let cost = [[2.5, 1.7, 1.8], [2.5, 1.8, 1.4]];
        let mut lp = LinearProgram::new(Sense::Minimize);
        let mut v = [[0usize; 3]; 2];
        for i in 0..2 {
            for j in 0..3 {
                v[i][j] = lp.add_var(0.0, f64::INFINITY, cost[i][j] * 90.0 / 1000.0);
            }
        }
        for i in 0..2 {
            lp.add_constraint((0..3).map(|j| (v[i][j], 1.0)).collect(), Relation::Le, supply[i]);
        }
        for j in 0..3 {
            lp.add_constraint((0..2).map(|i| (v[i][j], 1.0)).collect(), Relation::Ge, demand[j]);
        }
        lp
    }

    #[test]
    fn transport_problem() {
        for b in backends() {
            let r = solve_lp_with(&transport(), b).unwrap();
            assert_eq!(r.status, LpStatus::Optimal);
            assert!((r.objective - 153.675).abs() < 1e-6, "{b:?}: {}", r.objective);
        }
    }

    #[test]
    fn backends_agree_on_ranged_rows() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var(-5.0, 5.0, 1.0);
        let y = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, -2.0);
        lp.add_range(vec![(x, 1.0), (y, 1.0)], -1.0, 2.0);
        lp.add_range(vec![(x, 1.0), (y, -1.0)], -3.0, 3.0);
        let values: Vec<f64> = backends()
            .into_iter()
            .map(|b| solve_lp_with(&lp, b).unwrap().objective)
            .collect();
        // y = 2.5, x = -0.5 gives -5.5.
        for v in values {
            assert!((v + 5.5).abs() < 1e-9);
        }
    }
}
