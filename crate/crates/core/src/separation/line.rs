//! Line-limit oracle.
//!
//! For fixed `(P̃^g, Λ̃)` the flow on branch `l` in period `t` is
//! `f₀ + Σ_j g_j w_{j,t}` with `g_j = ν_{l,j} − Σ_i ν_{l,i} λ̃^t_{ij}`. Maximizing
//! `±flow` over `W` only needs the orthant where every `w_{j,t}` has the sign
//! of `±g_j`: any other sign can be shrunk to zero without lowering the value.

use super::{maximize_over_orthant, Finding, SeparationContext};
use crate::error::Result;
use crate::master::{CandidateSolution, ConstraintKind, Cut, CutFamily, CutProvenance, FlowForm};
use crate::uncertainty::Sign;

/// Nominal flows (MW) per period and branch for the candidate.
pub(super) fn nominal_flows(
    ctx: &SeparationContext<'_>,
    candidate: &CandidateSolution,
) -> Result<Vec<Vec<f64>>> {
    let n = ctx.net.num_buses();
    (0..ctx.case.periods())
        .map(|t| {
            let mut pg = vec![0.0; n];
            for (g, &p) in candidate.pg_mw[t].iter().enumerate() {
                pg[ctx.gen_bus[g]] += p;
            }
            Ok(ctx.net.nominal_flows(ctx.case, &pg, t)?.flows_mw)
        })
        .collect()
}

/// Sensitivity of the flow on `branch` in period `t` to each deviation
/// coordinate of that period under the candidate's gains.
fn flow_gains(ctx: &SeparationContext<'_>, candidate: &CandidateSolution, branch: usize, t: usize) -> Vec<f64> {
    (0..ctx.renewables())
        .map(|j| {
            ctx.shift.get(branch, ctx.ren_bus[j])
                - ctx
                    .bat_bus
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| ctx.shift.get(branch, b) * candidate.policy.gain(t, i, j))
                    .sum::<f64>()
        })
        .collect()
}

/// Orthant holding the maximizer of `direction · flow`, and an upper bound on
/// the flow change from each coordinate's reach.
fn best_orthant(
    ctx: &SeparationContext<'_>,
    gain: &[f64],
    t: usize,
    direction: Sign,
) -> (Vec<Option<Sign>>, f64) {
    let n = ctx.renewables();
    let s = direction.value();
    let mut bound = 0.0;
    let mut signs = vec![None; ctx.case.uncertainty.dim()];
    for (j, &g) in gain.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let sign = if s * g > 0.0 { Sign::Pos } else { Sign::Neg };
        let c = t * n + j;
        let reach = ctx.reach(c, sign);
        if reach > 0.0 {
            bound += g.abs() * reach;
            signs[c] = Some(sign);
        }
    }
    (signs, bound)
}

/// Largest `direction · flow` (MW) on `branch` in period `t` over `W`, given
/// the nominal flow `f0`, with a maximizing deviation.
pub(super) fn line_value(
    ctx: &SeparationContext<'_>,
    candidate: &CandidateSolution,
    branch: usize,
    t: usize,
    direction: Sign,
    f0: f64,
) -> Result<(f64, Vec<f64>)> {
    let gain = flow_gains(ctx, candidate, branch, t);
    let (signs, _) = best_orthant(ctx, &gain, t, direction);
    worst_flow(ctx, &gain, &signs, t, direction, f0)
}

fn worst_flow(
    ctx: &SeparationContext<'_>,
    gain: &[f64],
    signs: &[Option<Sign>],
    t: usize,
    direction: Sign,
    f0: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = ctx.renewables();
    let s = direction.value();
    let objective: Vec<(usize, f64)> = (0..n).map(|j| (t * n + j, s * gain[j])).collect();
    let w = maximize_over_orthant(&ctx.case.uncertainty, signs, &objective, &[])?
        .map(|(_, w)| w)
        .unwrap_or_else(|| vec![0.0; ctx.case.uncertainty.dim()]);
    let flow = f0 + (0..n).map(|j| gain[j] * w[t * n + j]).sum::<f64>();
    Ok((s * flow, w))
}

pub(super) fn separate_line(
    ctx: &SeparationContext<'_>,
    candidate: &CandidateSolution,
    branch: usize,
    t: usize,
    f0: f64,
) -> Result<Vec<Finding>> {
    let case = ctx.case;
    let Some(limit) = case.branches[branch].limit else {
        return Ok(Vec::new());
    };
    let limit = case.per_unit().to_mw(limit);
    let tol = ctx.options.tol;
    let n = ctx.renewables();
    let nu = |bus: usize| ctx.shift.get(branch, bus);
    let bat_nu: Vec<f64> = ctx.bat_bus.iter().map(|&b| nu(b)).collect();
    let gain = flow_gains(ctx, candidate, branch, t);

    let mut findings = Vec::new();
    for direction in Sign::both() {
        let s = direction.value();
        let (signs, reach) = best_orthant(ctx, &gain, t, direction);
        if s * f0 + reach <= limit + tol {
            continue;
        }
        let (value, w) = worst_flow(ctx, &gain, &signs, t, direction, f0)?;
        let violation = value - limit;
        if violation <= tol {
            continue;
        }
        let wt = &w[t * n..(t + 1) * n];
        let nominal_gen: f64 = candidate.pg_mw[t]
            .iter()
            .enumerate()
            .map(|(g, p)| nu(ctx.gen_bus[g]) * p)
            .sum();
        let constant = f0 - nominal_gen;
        let forecast_part: f64 = (0..n).map(|j| nu(ctx.ren_bus[j]) * wt[j]).sum();
        let alpha = (0..case.generators.len())
            .filter_map(|g| {
                let v = nu(ctx.gen_bus[g]);
                (v != 0.0).then_some((g, t, -s * v))
            })
            .collect();
        let mut beta = Vec::new();
        for (i, &v) in bat_nu.iter().enumerate() {
            for (j, &wj) in wt.iter().enumerate() {
                if v != 0.0 && wj != 0.0 && ctx.layout.var(t, i, j).is_some() {
                    beta.push((t, i, j, s * v * wj));
                }
            }
        }
        let cut = Cut {
            alpha,
            beta,
            rhs: s * (constant + forecast_part) - limit,
            flow_form: Some(FlowForm {
                branch,
                period: t,
                scale: -s,
            }),
            provenance: CutProvenance {
                family: CutFamily::Line,
                constraint: ConstraintKind::Line,
                period: t,
                element: branch,
                witness: w.clone(),
                violation,
            },
        };
        findings.push(Finding {
            constraint: ConstraintKind::Line,
            period: t,
            element: branch,
            witness: w,
            violation,
            cut: Some(cut),
        });
    }
    Ok(findings)
}
