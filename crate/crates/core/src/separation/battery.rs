//! Battery oracles: power, speed, charge range and run bounds.
//!
//! The electrical energy moved into battery `i` in period `h` is
//! `e_h = Δ Σ_j λ^h_{ij} w_{j,h}`; with `λ ≥ 0` its sign follows the sign of
//! the deviations, so every oracle works on sign-consistent orthants. When the
//! constraint depends on the charging segment reached at the start of a
//! period, the segment is fixed by bracketing the prefix sum and a violation
//! is turned into a disjunctive cut.

use super::{
    build_disjunctive_cut, maximize_over_orthant, Disjunct, DeviationRow, Finding,
    SeparationContext,
};
use crate::battery::BatterySpec;
use crate::error::Result;
use crate::master::{CandidateSolution, ConstraintKind, Cut, CutFamily, CutProvenance};
use crate::uncertainty::Sign;

/// Linear form `Σ c·λ^h_{ij}` over `Λ` entries `(h, i, j)`.
type EntryForm = Vec<(usize, usize, usize, f64)>;

/// See [`BatteryOracle::maximize`].
#[allow(clippy::too_many_arguments)]
pub(super) fn battery_value(
    ctx: &SeparationContext<'_>,
    candidate: &CandidateSolution,
    i: usize,
    t: usize,
    end: usize,
    sigma: Sign,
    prefix: Option<(Sign, f64, f64)>,
) -> Result<Option<(f64, Vec<f64>)>> {
    let spec = &ctx.case.batteries[i].spec;
    BatteryOracle { ctx, candidate, i, spec }.maximize(t, end, sigma, prefix)
}

pub(super) fn separate_battery(
    ctx: &SeparationContext<'_>,
    candidate: &CandidateSolution,
    i: usize,
    t: usize,
) -> Result<Vec<Finding>> {
    let spec = &ctx.case.batteries[i].spec;
    if ctx.layout.vars.iter().all(|v| v.battery != i) {
        return Ok(Vec::new());
    }
    let oracle = BatteryOracle { ctx, candidate, i, spec };
    let mut findings = Vec::new();
    oracle.period_limits(t, &mut findings)?;
    oracle.charge_range(t, &mut findings)?;
    if spec.segments() > 1 && t > 0 {
        oracle.bracketed_speed(t, &mut findings)?;
        for end in t..ctx.case.periods() {
            oracle.run_bound(t, end, &mut findings)?;
        }
    }
    Ok(findings)
}

struct BatteryOracle<'c, 'a> {
    ctx: &'c SeparationContext<'a>,
    candidate: &'c CandidateSolution,
    i: usize,
    spec: &'c BatterySpec,
}

/// Segment bracket on the prefix sum, for a given prefix sign.
struct Bracket {
    prefix: Sign,
    segment: usize,
    lower: f64,
    upper: f64,
}

impl BatteryOracle<'_, '_> {
    fn delta(&self) -> f64 {
        self.ctx.case.horizon.delta_hours
    }

    fn n(&self) -> usize {
        self.ctx.renewables()
    }

    /// Entries of battery `i` with a master variable in period `h`.
    fn entries(&self, h: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&j| self.ctx.layout.var(h, self.i, j).is_some())
    }

    /// `Σ_{h ∈ periods} e_h` as a linear function of `w`, scaled by `scale`.
    fn energy_form(&self, periods: std::ops::RangeInclusive<usize>, scale: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for h in periods {
            for j in self.entries(h) {
                let g = self.candidate.policy.gain(h, self.i, j);
                if g != 0.0 {
                    out.push((h * self.n() + j, scale * self.delta() * g));
                }
            }
        }
        out
    }

    /// Same sum as a linear function of `Λ` at the witness `w`.
    fn energy_entries(&self, periods: std::ops::RangeInclusive<usize>, scale: f64, w: &[f64]) -> EntryForm {
        let mut out = Vec::new();
        for h in periods {
            for j in self.entries(h) {
                let wj = w[h * self.n() + j];
                if wj != 0.0 {
                    out.push((h, self.i, j, scale * self.delta() * wj));
                }
            }
        }
        out
    }

    fn signs(&self, prefix: Option<(usize, Sign)>, run: (usize, usize, Sign)) -> Vec<Option<Sign>> {
        let n = self.n();
        let mut signs = vec![None; self.ctx.case.uncertainty.dim()];
        let mut set = |h: usize, s: Sign| {
            for j in self.entries(h) {
                let c = h * n + j;
                if self.ctx.reach(c, s) > 0.0 {
                    signs[c] = Some(s);
                }
            }
        };
        if let Some((end, s)) = prefix {
            for h in 0..end {
                set(h, s);
            }
        }
        for h in run.0..=run.1 {
            set(h, run.2);
        }
        signs
    }

    /// Largest `σ Σ_{h=t}^{end} e_h` over deviations that share sign `σ` in
    /// those periods. With `prefix = (ρ, lo, hi)` the periods before `t` share
    /// sign `ρ` and their summed input is held in `[lo, hi]`; otherwise they
    /// are zero.
    fn maximize(
        &self,
        t: usize,
        end: usize,
        sigma: Sign,
        prefix: Option<(Sign, f64, f64)>,
    ) -> Result<Option<(f64, Vec<f64>)>> {
        let objective = self.energy_form(t..=end, sigma.value());
        let mut rows = Vec::new();
        if let Some((_, lo, hi)) = prefix {
            let coeffs = if t == 0 { Vec::new() } else { self.energy_form(0..=t - 1, 1.0) };
            if coeffs.is_empty() {
                if lo > 0.0 || hi < 0.0 {
                    return Ok(None);
                }
            } else {
                rows.push(DeviationRow {
                    coeffs,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        if objective.is_empty() && rows.is_empty() {
            return Ok(Some((0.0, vec![0.0; self.ctx.case.uncertainty.dim()])));
        }
        let signs = self.signs(prefix.map(|p| (t, p.0)), (t, end, sigma));
        maximize_over_orthant(&self.ctx.case.uncertainty, &signs, &objective, &rows)
    }

    /// Power, and speed when the segment at the start of `t` is known.
    fn period_limits(&self, t: usize, out: &mut Vec<Finding>) -> Result<()> {
        let power = self.spec.max_power_mw * self.delta();
        let speed = if self.spec.segments() == 1 {
            Some(self.spec.speed[0])
        } else if t == 0 {
            Some(self.spec.segment_and_speed(self.spec.initial)?.speed)
        } else {
            None
        };
        let (bound, kind) = match speed {
            Some(v) if v <= power => (v, ConstraintKind::Speed),
            _ => (power, ConstraintKind::Power),
        };
        for sigma in Sign::both() {
            let s = sigma.value();
            let Some((value, w)) = self.maximize(t, t, sigma, None)? else {
                continue;
            };
            let violation = value - bound;
            if violation > self.ctx.options.tol {
                let lhs = self.energy_entries(t..=t, -s, &w);
                out.push(self.direct(kind, CutFamily::Speed, t, w, violation, lhs, -bound));
            }
        }
        Ok(())
    }

    /// Charge range at the end of period `t` for a sign-consistent history.
    /// The worst case over `W` is sign consistent because the state update is
    /// monotone in every period's input.
    fn charge_range(&self, t: usize, out: &mut Vec<Finding>) -> Result<()> {
        let spec = self.spec;
        let e = spec.charge_breakpoints();
        let x0 = spec.electrical(spec.initial)?;
        for sigma in Sign::both() {
            let s = sigma.value();
            let bound = match sigma {
                Sign::Pos => e[e.len() - 1] - x0,
                Sign::Neg => spec.extractable(spec.initial)?,
            };
            let Some((value, w)) = self.maximize(0, t, sigma, None)? else {
                continue;
            };
            let violation = value - bound;
            if violation > self.ctx.options.tol {
                let lhs = self.energy_entries(0..=t, -s, &w);
                out.push(self.direct(
                    ConstraintKind::ChargeRange,
                    CutFamily::Charge,
                    t,
                    w,
                    violation,
                    lhs,
                    -bound,
                ));
            }
        }
        Ok(())
    }

    /// Prefix-sum brackets locating each charging segment at the start of
    /// period `t`. Closed on both sides.
    fn brackets(&self) -> Result<Vec<Bracket>> {
        let spec = self.spec;
        let e = spec.charge_breakpoints();
        let chem = spec.chemical_breakpoints();
        let x0 = spec.electrical(spec.initial)?;
        let d0 = spec.extractable(spec.initial)?;
        let mut out = Vec::new();
        for k in 0..spec.segments() {
            // Charging history: x_t = x₀ + P with P ≥ 0.
            let (lo, hi) = ((e[k] - x0).max(0.0), e[k + 1] - x0);
            if lo <= hi {
                out.push(Bracket {
                    prefix: Sign::Pos,
                    segment: k,
                    lower: lo,
                    upper: hi,
                });
            }
            // Discharging history: D(y_t) = D(E₀) + P with P ≤ 0.
            let lo = spec.extractable(chem[k])? - d0;
            let hi = (spec.extractable(chem[k + 1])? - d0).min(0.0);
            if lo <= hi {
                out.push(Bracket {
                    prefix: Sign::Neg,
                    segment: k,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(out)
    }

    /// Speed limit of the segment reached at the start of `t > 0`.
    fn bracketed_speed(&self, t: usize, out: &mut Vec<Finding>) -> Result<()> {
        for bracket in self.brackets()? {
            let bound = self.spec.speed[bracket.segment];
            for sigma in Sign::both() {
                self.bracketed(ConstraintKind::Speed, &bracket, t, t, sigma, bound, out)?;
            }
        }
        Ok(())
    }

    /// Cumulative input over `t..=end` against the bound for the segment
    /// reached at the start of `t > 0`.
    fn run_bound(&self, t: usize, end: usize, out: &mut Vec<Finding>) -> Result<()> {
        let spec = self.spec;
        let e = spec.charge_breakpoints();
        let chem = spec.chemical_breakpoints();
        for bracket in self.brackets()? {
            for sigma in Sign::both() {
                let bound = match sigma {
                    Sign::Pos => e[e.len() - 1] - e[bracket.segment],
                    Sign::Neg => spec.extractable(chem[bracket.segment + 1])?,
                };
                self.bracketed(ConstraintKind::RunBound, &bracket, t, end, sigma, bound, out)?;
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn bracketed(
        &self,
        kind: ConstraintKind,
        bracket: &Bracket,
        t: usize,
        end: usize,
        sigma: Sign,
        bound: f64,
        out: &mut Vec<Finding>,
    ) -> Result<()> {
        let s = sigma.value();
        let prefix = Some((bracket.prefix, bracket.lower, bracket.upper));
        let Some((value, w)) = self.maximize(t, end, sigma, prefix)? else {
            return Ok(());
        };
        let violation = value - bound;
        if violation <= self.ctx.options.tol {
            return Ok(());
        }
        // Any feasible Λ either leaves the bracket under this witness or obeys
        // the segment's bound.
        let prefix = self.energy_entries(0..=t - 1, 1.0, &w);
        let run = self.energy_entries(t..=end, s, &w);
        let negate = |f: &EntryForm| -> EntryForm {
            f.iter().map(|&(h, i, j, c)| (h, i, j, -c)).collect()
        };
        let disjuncts = [
            (prefix.clone(), bracket.lower),
            (negate(&prefix), -bracket.upper),
            (run, bound),
        ];
        let cut = self.disjunctive_cut(kind, t, end, &w, violation, &disjuncts)?;
        if cut.is_none() {
            log::debug!(
                "battery {} period {t}: {kind:?} violation {violation:e} has no separating cut",
                self.i
            );
        }
        out.push(Finding {
            constraint: kind,
            period: t,
            element: self.i,
            witness: w,
            violation,
            cut,
        });
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn direct(
        &self,
        kind: ConstraintKind,
        family: CutFamily,
        t: usize,
        w: Vec<f64>,
        violation: f64,
        lhs: EntryForm,
        rhs: f64,
    ) -> Finding {
        let cut = Cut {
            alpha: Vec::new(),
            beta: lhs,
            rhs,
            flow_form: None,
            provenance: CutProvenance {
                family,
                constraint: kind,
                period: t,
                element: self.i,
                witness: w.clone(),
                violation,
            },
        };
        Finding {
            constraint: kind,
            period: t,
            element: self.i,
            witness: w,
            violation,
            cut: Some(cut),
        }
    }

    /// Cut valid for the union of `{form ≤ rhs}` over `disjuncts`, in the
    /// space of all gains up to period `end`.
    fn disjunctive_cut(
        &self,
        kind: ConstraintKind,
        t: usize,
        end: usize,
        w: &[f64],
        violation: f64,
        disjuncts: &[(EntryForm, f64)],
    ) -> Result<Option<Cut>> {
        let layout = &self.ctx.layout;
        let vars: Vec<usize> = (0..layout.len())
            .filter(|&v| layout.vars[v].period <= end)
            .collect();
        let mut local = vec![usize::MAX; layout.len()];
        for (k, &v) in vars.iter().enumerate() {
            local[v] = k;
        }
        let to_local = |form: &EntryForm| -> Vec<(usize, f64)> {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for &(h, i, j, c) in form {
                let v = local[layout.var(h, i, j).expect("entries have variables")];
                match row.iter_mut().find(|(k, _)| *k == v) {
                    Some(e) => e.1 += c,
                    None => row.push((v, c)),
                }
            }
            row
        };
        let disjuncts: Vec<Disjunct> = disjuncts
            .iter()
            .map(|(form, rhs)| Disjunct {
                rows: vec![(to_local(form), *rhs)],
            })
            .collect();
        let balance: Vec<Vec<usize>> = self
            .ctx
            .balance
            .iter()
            .filter(|(p, _)| *p <= end)
            .map(|(_, row)| row.iter().map(|&v| local[v]).collect())
            .collect();
        let point: Vec<f64> = vars.iter().map(|&v| self.candidate.lambda[v]).collect();
        let Some(found) =
            build_disjunctive_cut(&point, &balance, &disjuncts, self.ctx.options.tol)?
        else {
            return Ok(None);
        };
        // π x ≤ π₀ becomes -π x ≥ -π₀, spread over the entries of each
        // variable.
        let mut beta = Vec::new();
        for (k, &v) in vars.iter().enumerate() {
            let p = found.pi[k];
            if p == 0.0 {
                continue;
            }
            let var = &layout.vars[v];
            let share = -p / var.renewables.len() as f64;
            for &j in &var.renewables {
                beta.push((var.period, var.battery, j, share));
            }
        }
        Ok(Some(Cut {
            alpha: Vec::new(),
            beta,
            rhs: -found.pi0,
            flow_form: None,
            provenance: CutProvenance {
                family: CutFamily::Disjunctive,
                constraint: kind,
                period: t,
                element: self.i,
                witness: w.to_vec(),
                violation,
            },
        }))
    }
}
