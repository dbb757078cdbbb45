//! DC power flow: reduced susceptance matrix, angle solves and shift factors.
//!
//! Angles are referenced to the slack bus (its angle is zero), which also
//! fixes the shift-factor convention: the slack column of every row is zero.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::case_io::GridCase;
use crate::error::{Error, Result};

/// Net injections must sum to zero within this many p.u.
pub const BALANCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct DCNetwork {
    bus_ids: Vec<usize>,
    slack: usize,
    /// `(from, to, susceptance)` with bus indices.
    branches: Vec<(usize, usize, f64)>,
    /// Position in the reduced system, `None` for the slack.
    reduced: Vec<Option<usize>>,
    matrix: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
}

/// Branch flow sensitivities to injections at a chosen set of buses.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftFactorMatrix {
    buses: Vec<usize>,
    column_of: Vec<Option<usize>>,
    /// Row-major, `branches × buses`.
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NominalFlows {
    pub flows_mw: Vec<f64>,
    /// Branches whose flow exceeds the limit.
    pub overloaded: Vec<usize>,
}

impl DCNetwork {
    pub fn build(case: &GridCase) -> Result<Self> {
        let lookup = case.bus_lookup();
        let n = case.buses.len();
        let slack = case.slack_index();
        let branches: Vec<(usize, usize, f64)> = case
            .branches
            .iter()
            .map(|br| (lookup[&br.from_bus], lookup[&br.to_bus], br.susceptance))
            .collect();

        // Connectivity from the slack.
        let mut adjacency = vec![Vec::new(); n];
        for &(f, t, _) in &branches {
            adjacency[f].push(t);
            adjacency[t].push(f);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![slack];
        seen[slack] = true;
        while let Some(k) = stack.pop() {
            for &m in &adjacency[k] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::Network(format!(
                "network is disconnected: bus {} is isolated from the slack",
                case.buses[k].id
            )));
        }

        let mut reduced = vec![None; n];
        let mut next = 0;
        for (k, r) in reduced.iter_mut().enumerate() {
            if k != slack {
                *r = Some(next);
                next += 1;
            }
        }
        let mut matrix = DMatrix::<f64>::zeros(n - 1, n - 1);
        for &(f, t, b) in &branches {
            if let Some(i) = reduced[f] {
                matrix[(i, i)] += b;
            }
            if let Some(j) = reduced[t] {
                matrix[(j, j)] += b;
            }
            if let (Some(i), Some(j)) = (reduced[f], reduced[t]) {
                matrix[(i, j)] -= b;
                matrix[(j, i)] -= b;
            }
        }
        let factor = Cholesky::new(matrix.clone()).ok_or_else(|| {
            Error::Network("reduced susceptance matrix is not positive definite".into())
        })?;
        Ok(Self {
            bus_ids: case.buses.iter().map(|b| b.id).collect(),
            slack,
            branches,
            reduced,
            matrix,
            factor,
        })
    }

    pub fn num_buses(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn slack_index(&self) -> usize {
        self.slack
    }

    pub fn bus_ids(&self) -> &[usize] {
        &self.bus_ids
    }

    /// `(from, to, susceptance)` per branch, with bus indices.
    pub fn branch_ends(&self) -> &[(usize, usize, f64)] {
        &self.branches
    }

    /// Reduced susceptance matrix (slack row and column removed), p.u.
    pub fn reduced_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Angles (radians, slack zero) for per-bus injections in p.u. The slack
    /// absorbs any imbalance.
    pub fn solve_angles(&self, injections: &[f64]) -> Vec<f64> {
        let mut rhs = DVector::<f64>::zeros(self.num_buses() - 1);
        for (k, &p) in injections.iter().enumerate() {
            if let Some(i) = self.reduced[k] {
                rhs[i] = p;
            }
        }
        let theta = self.factor.solve(&rhs);
        self.reduced
            .iter()
            .map(|r| r.map_or(0.0, |i| theta[i]))
            .collect()
    }

    /// Branch flows (p.u., from → to) for the given angles.
    pub fn branch_flows(&self, theta: &[f64]) -> Vec<f64> {
        self.branches
            .iter()
            .map(|&(f, t, b)| b * (theta[f] - theta[t]))
            .collect()
    }

    /// Branch flows (p.u.) for a balanced injection vector.
    pub fn flows(&self, injections: &[f64]) -> Result<Vec<f64>> {
        if injections.len() != self.num_buses() {
            return Err(Error::Dimension {
                expected: self.num_buses(),
                got: injections.len(),
            });
        }
        let imbalance: f64 = injections.iter().sum();
        if imbalance.abs() > BALANCE_TOL {
            return Err(Error::Network(format!(
                "injections unbalanced by {imbalance:e} p.u."
            )));
        }
        Ok(self.branch_flows(&self.solve_angles(injections)))
    }

    /// Shift factors for every bus.
    pub fn compute_shift_factors(&self) -> ShiftFactorMatrix {
        let all: Vec<usize> = (0..self.num_buses()).collect();
        self.compute_shift_factors_at(&all)
    }

    /// Shift factors restricted to the columns of `buses` (bus indices).
    pub fn compute_shift_factors_at(&self, buses: &[usize]) -> ShiftFactorMatrix {
        let mut column_of = vec![None; self.num_buses()];
        let mut cols: Vec<usize> = Vec::new();
        for &b in buses {
            if column_of[b].is_none() {
                column_of[b] = Some(cols.len());
                cols.push(b);
            }
        }
        let width = cols.len();
        let mut rhs = DMatrix::<f64>::zeros(self.num_buses() - 1, width);
        for (c, &b) in cols.iter().enumerate() {
            if let Some(i) = self.reduced[b] {
                rhs[(i, c)] = 1.0;
            }
        }
        let x = self.factor.solve(&rhs);
        let angle = |bus: usize, c: usize| self.reduced[bus].map_or(0.0, |i| x[(i, c)]);
        let mut values = vec![0.0; self.num_branches() * width];
        for (l, &(f, t, b)) in self.branches.iter().enumerate() {
            for c in 0..width {
                values[l * width + c] = b * (angle(f, c) - angle(t, c));
            }
        }
        ShiftFactorMatrix {
            buses: cols,
            column_of,
            values,
        }
    }

    /// Flows (MW) for the case's nominal injections in period `t`, given
    /// generator output per bus in MW.
    pub fn nominal_flows(&self, case: &GridCase, pg_mw: &[f64], t: usize) -> Result<NominalFlows> {
        let pu = case.per_unit();
        if pg_mw.len() != self.num_buses() {
            return Err(Error::Dimension {
                expected: self.num_buses(),
                got: pg_mw.len(),
            });
        }
        let mut injections: Vec<f64> = pg_mw
            .iter()
            .zip(&case.loads[t])
            .map(|(&p, &d)| pu.to_pu(p) - d)
            .collect();
        let lookup = case.bus_lookup();
        for r in &case.renewables {
            injections[lookup[&r.bus]] += r.forecast[t];
        }
        let flows_mw: Vec<f64> = self
            .flows(&injections)?
            .into_iter()
            .map(|f| pu.to_mw(f))
            .collect();
        let overloaded = case
            .branches
            .iter()
            .zip(&flows_mw)
            .enumerate()
            .filter(|(_, (br, f))| {
                br.limit
                    .is_some_and(|l| f.abs() > pu.to_mw(l) + 1e-6)
            })
            .map(|(k, _)| k)
            .collect();
        Ok(NominalFlows {
            flows_mw,
            overloaded,
        })
    }
}

impl ShiftFactorMatrix {
    pub fn buses(&self) -> &[usize] {
        &self.buses
    }

    /// Column for bus index `bus`, if it was requested.
    pub fn column(&self, bus: usize) -> Option<usize> {
        self.column_of.get(bus).copied().flatten()
    }

    pub fn row(&self, branch: usize) -> &[f64] {
        let w = self.buses.len();
        &self.values[branch * w..(branch + 1) * w]
    }

    /// Shift factor of `branch` with respect to bus index `bus`.
    ///
    /// Panics when `bus` is not one of the computed columns.
    pub fn get(&self, branch: usize, bus: usize) -> f64 {
        let c = self.column(bus).expect("shift factor column was not computed");
        self.row(branch)[c]
    }

    /// Flow on `branch` for injections given as `(bus index, p.u.)` pairs.
    pub fn flow(&self, branch: usize, injections: &[(usize, f64)]) -> f64 {
        injections.iter().map(|&(b, p)| self.get(branch, b) * p).sum()
    }
}
