//! Master LP: generator schedules and battery gains subject to the nominal
//! network constraints, the balance rows `Σ_i λ^t_{ij} = 1` and the cuts
//! accumulated so far.

use serde::{Deserialize, Serialize};

use crate::case_io::{CostModel, GridCase};
use crate::control::{active_coordinates, ControlLayout, ControlPolicy};
use crate::error::{Error, Result};
use crate::lp::{solve_lp_robust, Backend, LinearProgram, LpStatus, Relation, Sense};
use crate::network::DCNetwork;

/// Two cuts whose normalized coefficients differ by less than this are the
/// same cut.
const DUPLICATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutFamily {
    Line,
    Speed,
    Charge,
    Disjunctive,
}

/// Which constraint a witness broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Line,
    Speed,
    Power,
    ChargeRange,
    RunBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutProvenance {
    pub family: CutFamily,
    pub constraint: ConstraintKind,
    pub period: usize,
    /// Branch index for line cuts, battery index otherwise.
    pub element: usize,
    /// Deviation (MW, period-major) the cut was derived from.
    pub witness: Vec<f64>,
    /// How far the candidate broke the constraint at the witness (MW or MWh).
    pub violation: f64,
}

/// States that `Σ α·P^g` equals `scale · (f − f_fixed)`, where `f` is the
/// nominal flow (MW) on `branch` in `period` and `f_fixed` the part of it
/// driven by loads and forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowForm {
    pub branch: usize,
    pub period: usize,
    pub scale: f64,
}

/// `Σ α·P^g + Σ β·λ ≥ rhs`, with `P^g` in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    /// `(generator, period, coefficient)`.
    pub alpha: Vec<(usize, usize, f64)>,
    /// `(period, battery, renewable, coefficient)` on entries of `Λ`.
    pub beta: Vec<(usize, usize, usize, f64)>,
    pub rhs: f64,
    /// Lets the master write the `α` part through the angle variables, which
    /// keeps line-cut rows short.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_form: Option<FlowForm>,
    pub provenance: CutProvenance,
}

impl Cut {
    pub fn lhs(&self, pg_mw: &[Vec<f64>], policy: &ControlPolicy) -> f64 {
        let a: f64 = self.alpha.iter().map(|&(g, t, c)| c * pg_mw[t][g]).sum();
        let b: f64 = self
            .beta
            .iter()
            .map(|&(t, i, j, c)| c * policy.gain(t, i, j))
            .sum();
        a + b
    }

    /// Amount by which the point falls short of the cut (positive when cut
    /// off).
    pub fn violation(&self, pg_mw: &[Vec<f64>], policy: &ControlPolicy) -> f64 {
        self.rhs - self.lhs(pg_mw, policy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSolution {
    /// `[period][generator]`, MW.
    pub pg_mw: Vec<Vec<f64>>,
    /// Values of the master gain variables.
    pub lambda: Vec<f64>,
    pub policy: ControlPolicy,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MasterOutcome {
    Optimal(CandidateSolution),
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutStatus {
    Added,
    Duplicate,
}

#[derive(Debug, Clone)]
pub struct MasterProblem {
    lp: LinearProgram,
    layout: ControlLayout,
    base_mva: f64,
    /// `[period][generator]` LP column.
    pg_var: Vec<Vec<usize>>,
    lambda_start: usize,
    /// `[period][branch]` angle columns of the two ends, `None` at the slack.
    theta_ends: Vec<Vec<(Option<usize>, Option<usize>, f64)>>,
    /// `[period][branch]` nominal flow (MW) from loads and forecasts alone.
    fixed_flow: Vec<Vec<f64>>,
    objective_offset: f64,
    cuts: Vec<Cut>,
    cut_keys: Vec<Vec<(usize, f64)>>,
    backend: Backend,
    /// Set once a cut with no variables and a positive right-hand side was
    /// added.
    infeasible: bool,
}

impl MasterProblem {
    pub fn build(case: &GridCase, net: &DCNetwork) -> Result<Self> {
        let periods = case.periods();
        let pu = case.per_unit();
        let base = case.base_mva;
        let mut lp = LinearProgram::new(Sense::Minimize);
        let mut objective_offset = 0.0;

        let mut pg_var = vec![Vec::with_capacity(case.generators.len()); periods];
        for (t, vars) in pg_var.iter_mut().enumerate() {
            for g in &case.generators {
                vars.push(lp.add_var(0.0, g.pmax[t], 0.0));
            }
        }

        // Costs: linear terms go straight into the objective, convex ones
        // through an epigraph variable bounded below by secant lines.
        let segments = case.cost_pwl_segments;
        for t in 0..periods {
            for (k, g) in case.generators.iter().enumerate() {
                let p = pg_var[t][k];
                let pmax_mw = pu.to_mw(g.pmax[t]);
                let lines: Vec<(f64, f64)> = match &g.cost {
                    CostModel::Polynomial { c2, c1, c0 } if *c2 == 0.0 || pmax_mw == 0.0 => {
                        lp.objective[p] += c1 * base;
                        objective_offset += c0;
                        Vec::new()
                    }
                    CostModel::Polynomial { .. } => {
                        let step = pmax_mw / segments as f64;
                        (0..segments)
                            .map(|s| {
                                let (a, b) = (s as f64 * step, (s + 1) as f64 * step);
                                let (fa, fb) = (g.cost.eval(a), g.cost.eval(b));
                                let slope = (fb - fa) / (b - a);
                                (slope, fa - slope * a)
                            })
                            .collect()
                    }
                    CostModel::Piecewise { points } => points
                        .windows(2)
                        .map(|w| {
                            let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                            (slope, w[0].1 - slope * w[0].0)
                        })
                        .collect(),
                };
                if lines.is_empty() {
                    continue;
                }
                let z = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
                for (slope, intercept) in lines {
                    // z ≥ slope·P_MW + intercept
                    lp.add_constraint(vec![(z, 1.0), (p, -slope * base)], Relation::Ge, intercept);
                }
            }
        }

        // Nominal DC network per period with angles referenced to the slack.
        let nbus = net.num_buses();
        let slack = net.slack_index();
        let lookup = case.bus_lookup();
        let mut theta_ends = Vec::with_capacity(periods);
        let mut fixed_flow = Vec::with_capacity(periods);
        for t in 0..periods {
            let theta: Vec<Option<usize>> = (0..nbus)
                .map(|k| (k != slack).then(|| lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0)))
                .collect();
            theta_ends.push(
                net.branch_ends()
                    .iter()
                    .map(|&(f, to, b)| (theta[f], theta[to], b))
                    .collect::<Vec<_>>(),
            );
            let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nbus];
            for (k, g) in case.generators.iter().enumerate() {
                rows[lookup[&g.bus]].push((pg_var[t][k], 1.0));
            }
            for &(f, to, b) in net.branch_ends() {
                // Flow f→to leaves f and enters to.
                if let Some(v) = theta[f] {
                    rows[f].push((v, -b));
                    rows[to].push((v, b));
                }
                if let Some(v) = theta[to] {
                    rows[f].push((v, b));
                    rows[to].push((v, -b));
                }
            }
            let mut rhs: Vec<f64> = case.loads[t].clone();
            for r in &case.renewables {
                rhs[lookup[&r.bus]] -= r.forecast[t];
            }
            let fixed: Vec<f64> = rhs.iter().map(|v| -v).collect();
            fixed_flow.push(net.branch_flows(&net.solve_angles(&fixed)).iter().map(|f| f * base).collect());
            for (row, value) in rows.into_iter().zip(rhs) {
                lp.add_constraint(row, Relation::Eq, value);
            }
            for (l, br) in case.branches.iter().enumerate() {
                let Some(limit) = br.limit else { continue };
                let (f, to, b) = net.branch_ends()[l];
                let mut coeffs = Vec::new();
                if let Some(v) = theta[f] {
                    coeffs.push((v, b));
                }
                if let Some(v) = theta[to] {
                    coeffs.push((v, -b));
                }
                lp.add_range(coeffs, -limit, limit);
            }
        }

        // Battery gains and the balance rows.
        let layout = ControlLayout::new(case);
        let lambda_start = lp.num_vars();
        for _ in &layout.vars {
            lp.add_var(0.0, 1.0, 0.0);
        }
        let active = active_coordinates(case);
        for (_, vars) in layout.balance_rows(|t, j| active[t][j]) {
            let coeffs = vars.iter().map(|&v| (lambda_start + v, 1.0)).collect();
            lp.add_constraint(coeffs, Relation::Eq, 1.0);
        }

        Ok(Self {
            lp,
            layout,
            base_mva: base,
            pg_var,
            lambda_start,
            theta_ends,
            fixed_flow,
            objective_offset,
            cuts: Vec::new(),
            cut_keys: Vec::new(),
            backend: Backend::Auto,
            infeasible: false,
        })
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn layout(&self) -> &ControlLayout {
        &self.layout
    }

    pub fn num_vars(&self) -> usize {
        self.lp.num_vars()
    }

    pub fn num_constraints(&self) -> usize {
        self.lp.num_constraints()
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn lp(&self) -> &LinearProgram {
        &self.lp
    }

    pub fn solve(&self) -> Result<MasterOutcome> {
        if self.infeasible {
            return Ok(MasterOutcome::Infeasible);
        }
        let result = solve_lp_robust(&self.lp, self.backend)?;
        match result.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Ok(MasterOutcome::Infeasible),
            LpStatus::Unbounded => return Err(Error::Lp("master problem is unbounded".into())),
            LpStatus::NumericalFailure => {
                return Err(Error::Lp("master problem failed numerically".into()))
            }
        }
        let pg_mw = self
            .pg_var
            .iter()
            .map(|vars| vars.iter().map(|&v| result.x[v] * self.base_mva).collect())
            .collect();
        let lambda: Vec<f64> = (0..self.layout.len())
            .map(|v| result.x[self.lambda_start + v])
            .collect();
        Ok(MasterOutcome::Optimal(CandidateSolution {
            pg_mw,
            policy: self.layout.policy(&lambda),
            lambda,
            objective: result.objective + self.objective_offset,
        }))
    }

    /// Appends `cut` unless an equivalent cut is already pooled.
    pub fn add_cut(&mut self, cut: Cut) -> CutStatus {
        let (coeffs, rhs) = self.cut_row(&cut);
        if coeffs.is_empty() {
            // 0 ≥ rhs: either trivially true or proof that no point survives.
            if rhs <= DUPLICATE_TOL {
                return CutStatus::Duplicate;
            }
            self.infeasible = true;
            self.cuts.push(cut);
            self.cut_keys.push(Vec::new());
            return CutStatus::Added;
        }
        let key = normalized_key(&coeffs, rhs);
        if self.cut_keys.iter().any(|k| same_key(k, &key)) {
            log::warn!(
                "duplicate {:?} cut for element {} in period {} rejected",
                cut.provenance.constraint,
                cut.provenance.element,
                cut.provenance.period
            );
            return CutStatus::Duplicate;
        }
        self.lp.add_constraint(coeffs, Relation::Ge, rhs);
        self.cut_keys.push(key);
        self.cuts.push(cut);
        CutStatus::Added
    }

    /// Row coefficients and right-hand side of `cut` over the LP columns.
    fn cut_row(&self, cut: &Cut) -> (Vec<(usize, f64)>, f64) {
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        let mut rhs = cut.rhs;
        let mut push = |v: usize, c: f64| match coeffs.iter_mut().find(|(k, _)| *k == v) {
            Some(e) => e.1 += c,
            None => coeffs.push((v, c)),
        };
        if let Some(form) = cut.flow_form {
            // scale · (b(θ_f − θ_t)·base − f_fixed)
            let (from, to, b) = self.theta_ends[form.period][form.branch];
            let k = form.scale * b * self.base_mva;
            if let Some(v) = from {
                push(v, k);
            }
            if let Some(v) = to {
                push(v, -k);
            }
            rhs += form.scale * self.fixed_flow[form.period][form.branch];
        } else {
            for &(g, t, c) in &cut.alpha {
                push(self.pg_var[t][g], c * self.base_mva);
            }
        }
        for &(t, i, j, c) in &cut.beta {
            if let Some(v) = self.layout.var(t, i, j) {
                push(self.lambda_start + v, c);
            }
        }
        coeffs.retain(|(_, c)| *c != 0.0);
        coeffs.sort_by_key(|(v, _)| *v);
        (coeffs, rhs)
    }
}

fn normalized_key(coeffs: &[(usize, f64)], rhs: f64) -> Vec<(usize, f64)> {
    let scale = coeffs
        .iter()
        .map(|(_, c)| c.abs())
        .fold(rhs.abs(), f64::max)
        .max(f64::MIN_POSITIVE);
    let mut key: Vec<(usize, f64)> = coeffs.iter().map(|&(v, c)| (v, c / scale)).collect();
    key.push((usize::MAX, rhs / scale));
    key
}

fn same_key(a: &[(usize, f64)], b: &[(usize, f64)]) -> bool {
    a.len() == b.len()
        && a
            .iter()
            .zip(b)
            .all(|(x, y)| x.0 == y.0 && (x.1 - y.1).abs() <= DUPLICATE_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::load_case;
    use crate::separation::{separate_all, SeparationContext, SeparationOptions};

    fn case9() -> GridCase {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/");
        load_case(format!("{dir}case9_reduced.m"), format!("{dir}case9_scenario.json")).unwrap()
    }

    fn optimal(master: &MasterProblem) -> CandidateSolution {
        match master.solve().unwrap() {
            MasterOutcome::Optimal(c) => c,
            MasterOutcome::Infeasible => panic!("master infeasible"),
        }
    }

    #[test]
    fn nominal_objective_close_to_quadratic_optimum() {
        let case = case9();
        let net = DCNetwork::build(&case).unwrap();
        let c = optimal(&MasterProblem::build(&case, &net).unwrap());
        assert!((c.objective - 2384.75).abs() < 0.01 * 2384.75, "{}", c.objective);
        let balance: f64 = c.lambda.iter().sum();
        assert!((balance - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cuts_hold_in_generator_form_after_resolve() {
        let case = case9();
        let net = DCNetwork::build(&case).unwrap();
        let mut master = MasterProblem::build(&case, &net).unwrap();
        let ctx = SeparationContext::new(&case, &net, SeparationOptions::default());
        let first = optimal(&master);
        let cert = separate_all(&ctx, &first).unwrap();
        assert!(cert.cuts.iter().any(|c| c.flow_form.is_some()));
        for cut in cert.cuts {
            master.add_cut(cut);
        }
        let second = optimal(&master);
        for cut in master.cuts() {
            let v = cut.violation(&second.pg_mw, &second.policy);
            assert!(v <= 1e-6, "{:?} cut violated by {v}", cut.provenance.family);
        }
        assert!(second.objective >= first.objective - 1e-9);
    }

    #[test]
    fn repeated_cut_is_rejected() {
        let case = case9();
        let net = DCNetwork::build(&case).unwrap();
        let mut master = MasterProblem::build(&case, &net).unwrap();
        let ctx = SeparationContext::new(&case, &net, SeparationOptions::default());
        let cut = separate_all(&ctx, &optimal(&master)).unwrap().cuts.remove(0);
        let rows = master.num_constraints();
        assert_eq!(master.add_cut(cut.clone()), CutStatus::Added);
        assert_eq!(master.add_cut(cut), CutStatus::Duplicate);
        assert_eq!(master.num_constraints(), rows + 1);
    }

    #[test]
    fn empty_cut_with_positive_rhs_is_infeasible() {
        let case = case9();
        let net = DCNetwork::build(&case).unwrap();
        let mut master = MasterProblem::build(&case, &net).unwrap();
        let cut = Cut {
            alpha: Vec::new(),
            beta: Vec::new(),
            rhs: 1.0,
            flow_form: None,
            provenance: CutProvenance {
                family: CutFamily::Charge,
                constraint: ConstraintKind::ChargeRange,
                period: 0,
                element: 0,
                witness: vec![0.0; 2],
                violation: 1.0,
            },
        };
        assert_eq!(master.add_cut(cut), CutStatus::Added);
        assert_eq!(master.solve().unwrap(), MasterOutcome::Infeasible);
    }
}
