//! Separation oracles: given a master candidate, search the uncertainty set
//! for a deviation that breaks a line limit or a battery constraint and turn
//! each such witness into a cut.
//!
//! Every oracle maximizes a linear function of `w` over one orthant of `W`
//! (a polytope, since `K⁺, K⁻ ≥ 0`), so all subproblems are small LPs.

mod battery;
mod disjunctive;
mod line;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::case_io::GridCase;
use crate::control::{active_coordinates, ControlLayout};
use crate::error::{Error, Result};
use crate::lp::{solve_lp_robust, Backend, LinearProgram, LpStatus, Relation, Sense};
use crate::master::{CandidateSolution, ConstraintKind, Cut};
use crate::network::{DCNetwork, ShiftFactorMatrix};
use crate::uncertainty::{ConcentrationModel, Sign};

pub use disjunctive::{build_disjunctive_cut, Disjunct, DisjunctiveCut};

/// Default violation tolerance, MW or MWh.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default number of cuts returned per call.
pub const DEFAULT_MAX_CUTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationOptions {
    pub tol: f64,
    pub max_cuts: usize,
}

impl Default for SeparationOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_cuts: DEFAULT_MAX_CUTS,
        }
    }
}

/// One constraint broken by the candidate at a witness deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub constraint: ConstraintKind,
    pub period: usize,
    /// Branch index for line findings, battery index otherwise.
    pub element: usize,
    /// MW, period-major.
    pub witness: Vec<f64>,
    pub violation: f64,
    /// `None` when no valid linear cut separates the candidate.
    pub cut: Option<Cut>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeparationCertificate {
    pub findings: Vec<Finding>,
    /// Cuts selected for the master, most violated first.
    pub cuts: Vec<Cut>,
}

impl SeparationCertificate {
    /// No constraint is broken anywhere in the uncertainty set.
    pub fn is_feasible(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Data shared by all oracles for one case.
#[derive(Debug, Clone)]
pub struct SeparationContext<'a> {
    pub(crate) case: &'a GridCase,
    pub(crate) net: &'a DCNetwork,
    pub(crate) layout: ControlLayout,
    pub(crate) shift: ShiftFactorMatrix,
    /// `(max w⁻, max w⁺)` per coordinate.
    pub(crate) bounds: Vec<(f64, f64)>,
    /// Balance rows as lists of layout variables, with their period.
    pub(crate) balance: Vec<(usize, Vec<usize>)>,
    pub(crate) gen_bus: Vec<usize>,
    pub(crate) ren_bus: Vec<usize>,
    pub(crate) bat_bus: Vec<usize>,
    pub(crate) options: SeparationOptions,
}

impl<'a> SeparationContext<'a> {
    pub fn new(case: &'a GridCase, net: &'a DCNetwork, options: SeparationOptions) -> Self {
        let lookup = case.bus_lookup();
        let gen_bus: Vec<usize> = case.generators.iter().map(|g| lookup[&g.bus]).collect();
        let ren_bus: Vec<usize> = case.renewables.iter().map(|r| lookup[&r.bus]).collect();
        let bat_bus: Vec<usize> = case
            .batteries
            .iter()
            .map(|b| lookup[&b.spec.bus])
            .collect();
        let columns: Vec<usize> = gen_bus
            .iter()
            .chain(&ren_bus)
            .chain(&bat_bus)
            .copied()
            .collect();
        let layout = ControlLayout::new(case);
        let active = active_coordinates(case);
        let balance = layout.balance_rows(|t, j| active[t][j]);
        Self {
            case,
            net,
            shift: net.compute_shift_factors_at(&columns),
            bounds: case.uncertainty.coordinate_bounds(),
            balance,
            layout,
            gen_bus,
            ren_bus,
            bat_bus,
            options,
        }
    }

    pub fn options(&self) -> SeparationOptions {
        self.options
    }

    pub fn layout(&self) -> &ControlLayout {
        &self.layout
    }

    fn renewables(&self) -> usize {
        self.case.renewables.len()
    }

    /// Largest magnitude of coordinate `c` with sign `s`.
    fn reach(&self, c: usize, s: Sign) -> f64 {
        match s {
            Sign::Neg => self.bounds[c].0,
            Sign::Pos => self.bounds[c].1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Task {
    Line { branch: usize, period: usize },
    Battery { battery: usize, period: usize },
}

/// Runs every oracle on `candidate` and selects up to `max_cuts` cuts.
pub fn separate_all(
    ctx: &SeparationContext<'_>,
    candidate: &CandidateSolution,
) -> Result<SeparationCertificate> {
    let case = ctx.case;
    let periods = case.periods();
    let flows = line::nominal_flows(ctx, candidate)?;

    let mut tasks = Vec::new();
    for period in 0..periods {
        for branch in 0..case.branches.len() {
            if case.branches[branch].limit.is_some() {
                tasks.push(Task::Line { branch, period });
            }
        }
    }
    for battery in 0..case.batteries.len() {
        for period in 0..periods {
            tasks.push(Task::Battery { battery, period });
        }
    }

    let found: Vec<Vec<Finding>> = tasks
        .par_iter()
        .map(|task| match *task {
            Task::Line { branch, period } => {
                line::separate_line(ctx, candidate, branch, period, flows[period][branch])
            }
            Task::Battery { battery, period } => {
                battery::separate_battery(ctx, candidate, battery, period)
            }
        })
        .collect::<Result<_>>()?;
    let findings: Vec<Finding> = found.into_iter().flatten().collect();

    let tol = ctx.options.tol;
    let mut ranked: Vec<&Finding> = findings
        .iter()
        .filter(|f| {
            f.cut
                .as_ref()
                .is_some_and(|c| c.violation(&candidate.pg_mw, &candidate.policy) > tol)
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.violation
            .total_cmp(&a.violation)
            .then(a.constraint.cmp(&b.constraint))
            .then(a.period.cmp(&b.period))
            .then(a.element.cmp(&b.element))
    });
    let cuts = ranked
        .into_iter()
        .take(ctx.options.max_cuts)
        .filter_map(|f| f.cut.clone())
        .collect();
    Ok(SeparationCertificate { findings, cuts })
}

/// Raw oracle values, for checking the LPs against enumeration.
pub mod oracle {
    use super::{battery, line, SeparationContext};
    use crate::error::Result;
    use crate::master::CandidateSolution;
    use crate::uncertainty::Sign;

    /// Largest `direction · flow` (MW) on `branch` in period `t` over `W`,
    /// with a maximizing deviation.
    pub fn line_value(
        ctx: &SeparationContext<'_>,
        candidate: &CandidateSolution,
        branch: usize,
        t: usize,
        direction: Sign,
    ) -> Result<(f64, Vec<f64>)> {
        let flows = line::nominal_flows(ctx, candidate)?;
        line::line_value(ctx, candidate, branch, t, direction, flows[t][branch])
    }

    /// Largest `σ Σ_{h=t}^{end} e_h` (MWh) for battery `i` over deviations of
    /// sign `σ` in those periods. With `prefix = (ρ, lo, hi)` earlier periods
    /// have sign `ρ` and summed input in `[lo, hi]`; otherwise they are zero.
    /// `None` when that set is empty.
    #[allow(clippy::too_many_arguments)]
    pub fn battery_value(
        ctx: &SeparationContext<'_>,
        candidate: &CandidateSolution,
        i: usize,
        t: usize,
        end: usize,
        sigma: Sign,
        prefix: Option<(Sign, f64, f64)>,
    ) -> Result<Option<(f64, Vec<f64>)>> {
        battery::battery_value(ctx, candidate, i, t, end, sigma, prefix)
    }
}

/// Linear function of `w` (coordinate, coefficient) with bounds.
pub(crate) struct DeviationRow {
    pub coeffs: Vec<(usize, f64)>,
    pub lower: f64,
    pub upper: f64,
}

/// Maximizes `Σ c_k w_k` over the orthant of `W` given by `signs` intersected
/// with `rows`. Returns the optimum and a witness inside `W`, or `None` when
/// the restricted set is empty.
pub(crate) fn maximize_over_orthant(
    model: &ConcentrationModel,
    signs: &[Option<Sign>],
    objective: &[(usize, f64)],
    rows: &[DeviationRow],
) -> Result<Option<(f64, Vec<f64>)>> {
    let poly = model.orthant(signs)?;
    let mut var_of = vec![usize::MAX; model.dim()];
    for (k, &c) in poly.coords.iter().enumerate() {
        var_of[c] = k;
    }
    let mut lp = LinearProgram::new(Sense::Maximize);
    for &u in &poly.upper {
        lp.add_var(0.0, u, 0.0);
    }
    let to_u = |coeffs: &[(usize, f64)]| -> Vec<(usize, f64)> {
        coeffs
            .iter()
            .filter(|(c, _)| var_of[*c] != usize::MAX)
            .map(|&(c, v)| (var_of[c], v * poly.signs[var_of[c]].value()))
            .collect()
    };
    for (k, v) in to_u(objective) {
        lp.objective[k] += v;
    }
    for (entries, rhs) in &poly.rows {
        lp.add_constraint(entries.clone(), Relation::Le, *rhs);
    }
    for row in rows {
        lp.add_range(to_u(&row.coeffs), row.lower, row.upper);
    }
    let result = solve_lp_robust(&lp, Backend::Auto)?;
    match result.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Ok(None),
        LpStatus::Unbounded => {
            return Err(Error::Lp(
                "separation LP is unbounded; the uncertainty set must be bounded".into(),
            ))
        }
        LpStatus::NumericalFailure => {
            return Err(Error::Lp("separation LP failed numerically".into()))
        }
    }
    let w = pull_inside(model, poly.deviation(model.dim(), &result.x))?;
    let value = objective.iter().map(|&(c, v)| v * w[c]).sum();
    Ok(Some((value, w)))
}

/// Shrinks a vertex found by the LP so that it passes the exact membership
/// test; by down-closure the scaled point stays in `W`.
fn pull_inside(model: &ConcentrationModel, mut w: Vec<f64>) -> Result<Vec<f64>> {
    for row in model.rows() {
        let activity: f64 = row.plus.iter().map(|&(c, v)| v * w[c].max(0.0)).sum::<f64>()
            + row.minus.iter().map(|&(c, v)| v * (-w[c]).max(0.0)).sum::<f64>();
        if activity <= row.rhs {
            continue;
        }
        if row.rhs <= 0.0 {
            for &(c, _) in &row.plus {
                if w[c] > 0.0 {
                    w[c] = 0.0;
                }
            }
            for &(c, _) in &row.minus {
                if w[c] < 0.0 {
                    w[c] = 0.0;
                }
            }
        } else {
            let scale = row.rhs / activity;
            w.iter_mut().for_each(|v| *v *= scale);
        }
    }
    if !model.contains(&w) {
        return Err(Error::Lp("separation witness left the uncertainty set".into()));
    }
    Ok(w)
}
