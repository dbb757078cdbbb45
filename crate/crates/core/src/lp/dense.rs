//! Bounded-variable primal simplex on a dense tableau.
//!
//! Every row `l ≤ a·x ≤ u` becomes `a·x - s = 0` with a logical `s ∈ [l, u]`.
//! Nonbasic structurals start at a finite bound (zero when free); rows whose
//! logical would start outside its bounds get an artificial, and phase one
//! drives those to zero. Pricing is Dantzig with a switch to Bland's rule
//! after a run of degenerate pivots. The ratio test is a two-pass Harris test
//! with bound flips. Basic values are recomputed from an LU factorization of
//! the final basis.

use nalgebra::DMatrix;

use super::{LinearProgram, LpResult, LpStatus, Sense};

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 30;

pub fn solve_dense(lp: &LinearProgram) -> LpResult {
    let n = lp.num_vars();
    let m = lp.num_constraints();
    if m == 0 {
        return solve_bounds_only(lp);
    }
    let mut tab = Tableau::new(lp);
    let art_scale = 1.0
        + lp
            .constraints
            .iter()
            .flat_map(|r| [r.lower, r.upper])
            .chain(lp.lower.iter().copied())
            .chain(lp.upper.iter().copied())
            .filter(|v| v.is_finite())
            .fold(0.0f64, |a, v| a.max(v.abs()));

    if tab.first_art < tab.ncols {
        let mut cost = vec![0.0; tab.ncols];
        for c in cost.iter_mut().skip(tab.first_art) {
            *c = 1.0;
        }
        tab.set_cost(cost);
        match tab.run() {
            Outcome::Optimal => {}
            Outcome::Unbounded | Outcome::Stuck => {
                return LpResult::without_solution(LpStatus::NumericalFailure)
            }
        }
        let infeasibility: f64 = (tab.first_art..tab.ncols).map(|j| tab.x[j].abs()).sum();
        if infeasibility > 1e-7 * art_scale {
            return LpResult::without_solution(LpStatus::Infeasible);
        }
        for j in tab.first_art..tab.ncols {
            tab.lo[j] = 0.0;
            tab.hi[j] = 0.0;
            if tab.row_of[j].is_none() {
                tab.x[j] = 0.0;
            }
        }
        if !tab.reinvert() {
            return LpResult::without_solution(LpStatus::NumericalFailure);
        }
    }

    let flip = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
    let mut cost = vec![0.0; tab.ncols];
    for (c, &o) in cost.iter_mut().zip(&lp.objective) {
        *c = flip * o;
    }
    tab.set_cost(cost);
    match tab.run() {
        Outcome::Optimal => {}
        Outcome::Unbounded => return LpResult::without_solution(LpStatus::Unbounded),
        Outcome::Stuck => return LpResult::without_solution(LpStatus::NumericalFailure),
    }
    let x = tab.x[..n].to_vec();
    let objective = lp.objective_value(&x);
    LpResult {
        status: LpStatus::Optimal,
        x,
        objective,
    }
}

fn solve_bounds_only(lp: &LinearProgram) -> LpResult {
    let flip = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
    let mut x = Vec::with_capacity(lp.num_vars());
    for ((&c, &l), &u) in lp.objective.iter().zip(&lp.lower).zip(&lp.upper) {
        if l > u {
            return LpResult::without_solution(LpStatus::Infeasible);
        }
        let c = flip * c;
        let v = if c > 0.0 {
            l
        } else if c < 0.0 {
            u
        } else if l.is_finite() {
            l
        } else if u.is_finite() {
            u
        } else {
            0.0
        };
        if !v.is_finite() {
            return LpResult::without_solution(LpStatus::Unbounded);
        }
        x.push(v);
    }
    let objective = lp.objective_value(&x);
    LpResult {
        status: LpStatus::Optimal,
        x,
        objective,
    }
}

enum Outcome {
    Optimal,
    Unbounded,
    Stuck,
}

struct Tableau {
    m: usize,
    ncols: usize,
    first_art: usize,
    /// Original columns `[A | -I | artificials]`, sparse.
    columns: Vec<Vec<(usize, f64)>>,
    /// `B⁻¹ [A | -I | artificials]`, row-major.
    t: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<Option<usize>>,
    x: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    d: Vec<f64>,
    pivots_since_inversion: usize,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.num_constraints();
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + m];
        for (i, row) in lp.constraints.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                if a == 0.0 {
                    continue;
                }
                match columns[j].last_mut() {
                    Some((r, v)) if *r == i => *v += a,
                    _ => columns[j].push((i, a)),
                }
            }
            columns[n + i].push((i, -1.0));
        }
        let mut lo: Vec<f64> = lp.lower.clone();
        let mut hi: Vec<f64> = lp.upper.clone();
        let mut x: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(&l, &u)| {
                if l.is_finite() {
                    l
                } else if u.is_finite() {
                    u
                } else {
                    0.0
                }
            })
            .collect();
        for row in &lp.constraints {
            lo.push(row.lower);
            hi.push(row.upper);
        }

        // Row activities at the starting point decide which rows need an
        // artificial.
        let mut activity = vec![0.0; m];
        for (j, col) in columns.iter().enumerate().take(n) {
            if x[j] != 0.0 {
                for &(i, a) in col {
                    activity[i] += a * x[j];
                }
            }
        }
        let mut basis = vec![0; m];
        let mut art_sign = Vec::new();
        let mut slack_values = vec![0.0; m];
        for i in 0..m {
            let r = activity[i];
            let (l, u) = (lo[n + i], hi[n + i]);
            if r >= l - FEAS_TOL && r <= u + FEAS_TOL {
                basis[i] = n + i;
                slack_values[i] = r;
            } else {
                let s = r.clamp(l, u);
                slack_values[i] = s;
                art_sign.push((i, if s > r { 1.0 } else { -1.0 }, (s - r).abs()));
            }
        }
        x.extend_from_slice(&slack_values);
        let first_art = n + m;
        for &(i, sign, value) in &art_sign {
            basis[i] = columns.len();
            columns.push(vec![(i, sign)]);
            lo.push(0.0);
            hi.push(f64::INFINITY);
            x.push(value);
        }
        let ncols = columns.len();
        let mut row_of = vec![None; ncols];
        for (i, &b) in basis.iter().enumerate() {
            row_of[b] = Some(i);
        }

        // The starting basis is diagonal, so the tableau is each row scaled
        // by its basic coefficient.
        let mut t = vec![0.0; m * ncols];
        for (j, col) in columns.iter().enumerate() {
            for &(i, a) in col {
                t[i * ncols + j] += a;
            }
        }
        for i in 0..m {
            let pivot = t[i * ncols + basis[i]];
            for v in &mut t[i * ncols..(i + 1) * ncols] {
                *v /= pivot;
            }
        }

        Self {
            m,
            ncols,
            first_art,
            columns,
            t,
            basis,
            row_of,
            x,
            lo,
            hi,
            cost: vec![0.0; ncols],
            d: vec![0.0; ncols],
            pivots_since_inversion: 0,
        }
    }

    fn set_cost(&mut self, cost: Vec<f64>) {
        self.cost = cost;
        self.price_all();
    }

    fn price_all(&mut self) {
        let ncols = self.ncols;
        self.d.copy_from_slice(&self.cost);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = self.cost[b];
            if cb != 0.0 {
                let row = &self.t[i * ncols..(i + 1) * ncols];
                for (d, &v) in self.d.iter_mut().zip(row) {
                    *d -= cb * v;
                }
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    /// Rebuilds the tableau, basic values and reduced costs from the basis.
    fn reinvert(&mut self) -> bool {
        let (m, ncols) = (self.m, self.ncols);
        let mut bmat = DMatrix::<f64>::zeros(m, m);
        for (k, &b) in self.basis.iter().enumerate() {
            for &(i, a) in &self.columns[b] {
                bmat[(i, k)] = a;
            }
        }
        let lu = bmat.lu();
        let mut full = DMatrix::<f64>::zeros(m, ncols);
        for (j, col) in self.columns.iter().enumerate() {
            for &(i, a) in col {
                full[(i, j)] = a;
            }
        }
        let Some(solved) = lu.solve(&full) else {
            return false;
        };
        let mut rhs = nalgebra::DVector::<f64>::zeros(m);
        for (j, col) in self.columns.iter().enumerate() {
            if self.row_of[j].is_none() && self.x[j] != 0.0 {
                for &(i, a) in col {
                    rhs[i] -= a * self.x[j];
                }
            }
        }
        let Some(xb) = lu.solve(&rhs) else {
            return false;
        };
        if solved.iter().chain(xb.iter()).any(|v| !v.is_finite()) {
            return false;
        }
        for i in 0..m {
            for j in 0..ncols {
                self.t[i * ncols + j] = solved[(i, j)];
            }
            self.x[self.basis[i]] = xb[i];
        }
        self.pivots_since_inversion = 0;
        self.price_all();
        true
    }

    fn eligible(&self, j: usize, tol: f64) -> Option<f64> {
        if self.row_of[j].is_some() || self.lo[j] == self.hi[j] {
            return None;
        }
        let d = self.d[j];
        if d < -tol && self.x[j] < self.hi[j] {
            Some(1.0)
        } else if d > tol && self.x[j] > self.lo[j] {
            Some(-1.0)
        } else {
            None
        }
    }

    fn run(&mut self) -> Outcome {
        let limit = 50 * (self.m + self.ncols) + 10_000;
        let cost_scale = 1.0 + self.cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let tol = DUAL_TOL * cost_scale;
        let mut degenerate = 0usize;
        let mut verified = false;
        for _ in 0..limit {
            let bland = degenerate > DEGENERATE_RUN;
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.ncols {
                if let Some(dir) = self.eligible(j, tol) {
                    if bland {
                        entering = Some((j, dir));
                        break;
                    }
                    if self.d[j].abs() > best {
                        best = self.d[j].abs();
                        entering = Some((j, dir));
                    }
                }
            }
            let Some((j, dir)) = entering else {
                // Confirm optimality on a freshly factorized basis.
                if verified {
                    return Outcome::Optimal;
                }
                if !self.reinvert() {
                    return Outcome::Stuck;
                }
                verified = true;
                continue;
            };
            verified = false;

            match self.ratio_test(j, dir, bland) {
                Step::Unbounded => return Outcome::Unbounded,
                Step::Flip(theta) => {
                    self.move_entering(j, dir, theta);
                    self.x[j] = if dir > 0.0 { self.hi[j] } else { self.lo[j] };
                    degenerate = 0;
                }
                Step::Pivot { row, theta, to_upper } => {
                    self.move_entering(j, dir, theta);
                    let leaving = self.basis[row];
                    self.x[leaving] = if to_upper {
                        self.hi[leaving]
                    } else {
                        self.lo[leaving]
                    };
                    self.pivot(row, j);
                    if theta <= 1e-12 {
                        degenerate += 1;
                    } else {
                        degenerate = 0;
                    }
                }
            }
            if self.pivots_since_inversion > 2 * self.m.max(50) && !self.reinvert() {
                return Outcome::Stuck;
            }
        }
        Outcome::Stuck
    }

    fn move_entering(&mut self, j: usize, dir: f64, theta: f64) {
        if theta == 0.0 {
            return;
        }
        let ncols = self.ncols;
        self.x[j] += dir * theta;
        for i in 0..self.m {
            let a = self.t[i * ncols + j];
            if a != 0.0 {
                self.x[self.basis[i]] -= dir * theta * a;
            }
        }
    }

    fn ratio_test(&self, j: usize, dir: f64, bland: bool) -> Step {
        let ncols = self.ncols;
        let flip = self.hi[j] - self.lo[j];
        // First pass: largest step with bounds relaxed by the tolerance.
        let mut relaxed = flip;
        for i in 0..self.m {
            let a = self.t[i * ncols + j];
            if a.abs() < PIVOT_TOL {
                continue;
            }
            let b = self.basis[i];
            let rate = -dir * a;
            let bound = if rate < 0.0 {
                (self.x[b] - self.lo[b] + FEAS_TOL) / -rate
            } else {
                (self.hi[b] + FEAS_TOL - self.x[b]) / rate
            };
            relaxed = relaxed.min(bound.max(0.0));
        }
        if relaxed == f64::INFINITY {
            return Step::Unbounded;
        }
        // Second pass: among rows blocking within the relaxed step, take the
        // largest pivot (or the lowest basic index under Bland's rule).
        let mut chosen: Option<(usize, f64, bool, f64)> = None;
        for i in 0..self.m {
            let a = self.t[i * ncols + j];
            if a.abs() < PIVOT_TOL {
                continue;
            }
            let b = self.basis[i];
            let rate = -dir * a;
            let (exact, to_upper) = if rate < 0.0 {
                ((self.x[b] - self.lo[b]) / -rate, false)
            } else {
                ((self.hi[b] - self.x[b]) / rate, true)
            };
            if !exact.is_finite() || exact > relaxed {
                continue;
            }
            let better = match chosen {
                None => true,
                Some((ci, _, _, ca)) => {
                    if bland {
                        b < self.basis[ci]
                    } else {
                        a.abs() > ca
                    }
                }
            };
            if better {
                chosen = Some((i, exact.max(0.0), to_upper, a.abs()));
            }
        }
        match chosen {
            Some((row, theta, to_upper, _)) if theta <= flip => Step::Pivot {
                row,
                theta,
                to_upper,
            },
            _ => Step::Flip(flip),
        }
    }

    fn pivot(&mut self, row: usize, j: usize) {
        let ncols = self.ncols;
        let p = self.t[row * ncols + j];
        {
            let r = &mut self.t[row * ncols..(row + 1) * ncols];
            for v in r.iter_mut() {
                *v /= p;
            }
            r[j] = 1.0;
        }
        let pivot_row: Vec<f64> = self.t[row * ncols..(row + 1) * ncols].to_vec();
        let nonzero: Vec<usize> = (0..ncols).filter(|&k| pivot_row[k] != 0.0).collect();
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let f = self.t[i * ncols + j];
            if f == 0.0 {
                continue;
            }
            let r = &mut self.t[i * ncols..(i + 1) * ncols];
            for &k in &nonzero {
                r[k] -= f * pivot_row[k];
            }
            r[j] = 0.0;
        }
        let f = self.d[j];
        if f != 0.0 {
            for &k in &nonzero {
                self.d[k] -= f * pivot_row[k];
            }
        }
        self.d[j] = 0.0;
        let leaving = self.basis[row];
        self.row_of[leaving] = None;
        self.row_of[j] = Some(row);
        self.basis[row] = j;
        self.pivots_since_inversion += 1;
    }
}

enum Step {
    Unbounded,
    Flip(f64),
    Pivot { row: usize, theta: f64, to_upper: bool },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{LinearProgram, Relation};
    use proptest::prelude::*;

    #[test]
    fn bounds_only() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        lp.add_var(0.0, 4.0, 2.0);
        lp.add_var(-1.0, 3.0, -1.0);
        let r = solve_dense(&lp);
        assert_eq!(r.x, vec![4.0, -1.0]);
        assert_eq!(r.objective, 9.0);
    }

    #[test]
    fn equality_rows_need_phase_one() {
        // x + y = 10, x - y = 2 gives x = 6, y = 4.
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var(0.0, f64::INFINITY, 1.0);
        let y = lp.add_var(0.0, f64::INFINITY, 1.0);
        lp.add_constraint(vec![(x, 1.0), (y, 1.0)], Relation::Eq, 10.0);
        lp.add_constraint(vec![(x, 1.0), (y, -1.0)], Relation::Eq, 2.0);
        let r = solve_dense(&lp);
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.x[0] - 6.0).abs() < 1e-12 && (r.x[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_bounds_only() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        lp.add_var(1.0, 0.0, 1.0);
        assert_eq!(solve_dense(&lp).status, LpStatus::Infeasible);
    }

    /// Brute-force optimum of a two-variable box-constrained LP by checking
    /// all pairwise intersections of constraint lines.
    fn brute_force(c: [f64; 2], rows: &[([f64; 2], f64)], bound: f64) -> Option<f64> {
        let mut lines: Vec<([f64; 2], f64)> = rows.to_vec();
        lines.push(([1.0, 0.0], bound));
        lines.push(([-1.0, 0.0], bound));
        lines.push(([0.0, 1.0], bound));
        lines.push(([0.0, -1.0], bound));
        let mut best: Option<f64> = None;
        for a in 0..lines.len() {
            for b in a + 1..lines.len() {
                let (p, q) = (lines[a], lines[b]);
                let det = p.0[0] * q.0[1] - p.0[1] * q.0[0];
                if det.abs() < 1e-9 {
                    continue;
                }
                let x = (p.1 * q.0[1] - p.0[1] * q.1) / det;
                let y = (p.0[0] * q.1 - p.1 * q.0[0]) / det;
                if lines
                    .iter()
                    .all(|(r, h)| r[0] * x + r[1] * y <= h + 1e-7)
                {
                    let v = c[0] * x + c[1] * y;
                    best = Some(best.map_or(v, |b: f64| b.max(v)));
                }
            }
        }
        best
    }

    proptest! {
        #[test]
        fn matches_vertex_enumeration(
            c in proptest::array::uniform2(-5.0f64..5.0),
            rows in proptest::collection::vec(
                (proptest::array::uniform2(-3.0f64..3.0), -2.0f64..6.0), 0..5),
        ) {
            let mut lp = LinearProgram::new(Sense::Maximize);
            let x = lp.add_var(-10.0, 10.0, c[0]);
            let y = lp.add_var(-10.0, 10.0, c[1]);
            for (a, h) in &rows {
                lp.add_constraint(vec![(x, a[0]), (y, a[1])], Relation::Le, *h);
            }
            let r = solve_dense(&lp);
            match brute_force(c, &rows, 10.0) {
                Some(best) => {
                    prop_assert_eq!(r.status, LpStatus::Optimal);
                    prop_assert!((r.objective - best).abs() <= 1e-6 * (1.0 + best.abs()));
                    prop_assert!(lp.residual(&r.x) <= 1e-7);
                }
                None => prop_assert_eq!(r.status, LpStatus::Infeasible),
            }
        }
    }
}
