//! Acceptance suite. Everything runs in one test so that the timed runs do
//! not compete with other tests for cores. One PASS/FAIL line is printed per
//! criterion; the test fails if any criterion fails.

use std::time::Instant;

use battopf_core::case_io::parse_matpower_case;
use battopf_core::separation::oracle;
use battopf_core::validator::check_deviation;
use battopf_core::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within_rel(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

// ---------------------------------------------------------------------------
// Brute-force enumeration over orthant polytopes.

/// Coordinate support: `None` pins the coordinate to zero, `Some(s)` lets it
/// take sign `s`.
type Support = Vec<Option<Sign>>;

/// Extra two-sided row `lo ≤ Σ c_k w_k ≤ hi`.
struct Band {
    coeffs: Vec<f64>,
    lo: f64,
    hi: f64,
}

/// Every vertex of `W ∩ support ∩ bands`, in `w` coordinates.
fn vertices(model: &ConcentrationModel, support: &Support, bands: &[Band]) -> Vec<Vec<f64>> {
    let dim = model.dim();
    let free: Vec<usize> = (0..dim).filter(|&k| support[k].is_some()).collect();
    let sign = |k: usize| support[k].map_or(0.0, Sign::value);
    let (kp, km, b) = model.to_dense();

    // Rows a·u ≤ r over u = |w| on the free coordinates.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for r in 0..b.len() {
        let a = free
            .iter()
            .map(|&k| if sign(k) > 0.0 { kp[r][k] } else { km[r][k] })
            .collect();
        rows.push((a, b[r]));
    }
    for (p, _) in free.iter().enumerate() {
        let mut a = vec![0.0; free.len()];
        a[p] = -1.0;
        rows.push((a, 0.0));
    }
    for band in bands {
        let a: Vec<f64> = free.iter().map(|&k| band.coeffs[k] * sign(k)).collect();
        rows.push((a.clone(), band.hi));
        rows.push((a.iter().map(|v| -v).collect(), -band.lo));
    }

    let d = free.len();
    let to_w = |u: &[f64]| {
        let mut w = vec![0.0; dim];
        for (p, &k) in free.iter().enumerate() {
            w[k] = sign(k) * u[p];
        }
        w
    };
    let feasible = |u: &[f64]| {
        rows.iter().all(|(a, r)| {
            let lhs: f64 = a.iter().zip(u).map(|(x, y)| x * y).sum();
            lhs <= r + 1e-9 * (1.0 + r.abs())
        })
    };
    if d == 0 {
        return if feasible(&[]) { vec![to_w(&[])] } else { Vec::new() };
    }

    let mut out = Vec::new();
    let mut pick: Vec<usize> = (0..d).collect();
    loop {
        let m = DMatrix::from_fn(d, d, |i, j| rows[pick[i]].0[j]);
        let r = DVector::from_fn(d, |i, _| rows[pick[i]].1);
        if let Some(u) = m.lu().solve(&r) {
            let u: Vec<f64> = u.iter().copied().collect();
            if u.iter().all(|v| v.is_finite()) && feasible(&u) {
                out.push(to_w(&u));
            }
        }
        // Next d-subset of the rows in lexicographic order.
        let n = rows.len();
        let mut i = d;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if pick[i] < n - d + i {
                pick[i] += 1;
                for k in i + 1..d {
                    pick[k] = pick[k - 1] + 1;
                }
                break;
            }
        }
    }
}

/// All sign patterns over `coords`, other coordinates pinned.
fn sign_patterns(dim: usize, coords: &[usize]) -> Vec<Support> {
    let mut out = Vec::new();
    for mask in 0..(1usize << coords.len()) {
        let mut s = vec![None; dim];
        for (b, &k) in coords.iter().enumerate() {
            s[k] = Some(if mask >> b & 1 == 1 { Sign::Neg } else { Sign::Pos });
        }
        out.push(s);
    }
    out
}

/// Branch flows (MW) from a direct angle solve under deviation `w`.
fn flows_under(case: &GridCase, net: &DCNetwork, cand: &CandidateSolution, t: usize, w: &[f64]) -> Vec<f64> {
    let base = case.base_mva;
    let n = case.renewables.len();
    let idx = |bus: usize| case.bus_index(bus).unwrap();
    let mut inj: Vec<f64> = case.loads[t].iter().map(|d| -d).collect();
    for (g, gen) in case.generators.iter().enumerate() {
        inj[idx(gen.bus)] += cand.pg_mw[t][g] / base;
    }
    for (j, r) in case.renewables.iter().enumerate() {
        inj[idx(r.bus)] += r.forecast[t] + w[t * n + j] / base;
    }
    for (i, b) in case.batteries.iter().enumerate() {
        let taken: f64 = (0..n).map(|j| cand.policy.gain(t, i, j) * w[t * n + j]).sum();
        inj[idx(b.spec.bus)] -= taken / base;
    }
    let theta = net.solve_angles(&inj);
    net.branch_ends()
        .iter()
        .map(|&(f, to, b)| b * (theta[f] - theta[to]) * base)
        .collect()
}

fn candidate(case: &GridCase, pg_mw: Vec<Vec<f64>>, gains: Vec<Vec<Vec<f64>>>) -> CandidateSolution {
    let layout = ControlLayout::new(case);
    let policy = ControlPolicy {
        scheme: case.control_scheme,
        gains,
    };
    CandidateSolution {
        pg_mw,
        lambda: layout.values(&policy),
        policy,
        objective: 0.0,
    }
}

// ---------------------------------------------------------------------------
// Oracle equivalence on toy3.

fn oracle_mismatch(
    case: &GridCase,
    net: &DCNetwork,
    cand: &CandidateSolution,
    band: (f64, f64),
    checked: &std::cell::Cell<usize>,
) -> Option<String> {
    let ctx = SeparationContext::new(case, net, SeparationOptions::default());
    let layout = ControlLayout::new(case);
    let model = &case.uncertainty;
    let dim = model.dim();
    let n = case.renewables.len();
    let periods = case.periods();
    let delta = case.horizon.delta_hours;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs()));

    for t in 0..periods {
        let coords: Vec<usize> = (0..n).map(|j| t * n + j).collect();
        let verts: Vec<Vec<f64>> = sign_patterns(dim, &coords)
            .iter()
            .flat_map(|s| vertices(model, s, &[]))
            .collect();
        let flows: Vec<Vec<f64>> = verts.iter().map(|w| flows_under(case, net, cand, t, w)).collect();
        for l in 0..case.branches.len() {
            for dir in Sign::both() {
                let brute = flows
                    .iter()
                    .map(|f| dir.value() * f[l])
                    .fold(f64::NEG_INFINITY, f64::max);
                let (lp, _) = match oracle::line_value(&ctx, cand, l, t, dir) {
                    Ok(v) => v,
                    Err(e) => return Some(format!("line {l} t{t}: {e}")),
                };
                checked.set(checked.get() + 1);
                if !close(lp, brute) {
                    return Some(format!("line {l} t{t} {dir:?}: oracle {lp} brute {brute}"));
                }
            }
        }
    }

    for i in 0..case.batteries.len() {
        let layout = &layout;
        let entries = |h: usize| (0..n).filter(move |&j| layout.var(h, i, j).is_some());
        let energy = |range: std::ops::Range<usize>| {
            let mut c = vec![0.0; dim];
            for h in range {
                for j in entries(h) {
                    c[h * n + j] = delta * cand.policy.gain(h, i, j);
                }
            }
            c
        };
        for t in 0..periods {
            for end in t..periods {
                for sigma in Sign::both() {
                    let prefixes: Vec<Option<(Sign, f64, f64)>> = std::iter::once(None)
                        .chain(Sign::both().into_iter().map(|rho| Some((rho, band.0, band.1))))
                        .collect();
                    for prefix in prefixes {
                        let mut support = vec![None; dim];
                        for h in t..=end {
                            for j in entries(h) {
                                support[h * n + j] = Some(sigma);
                            }
                        }
                        let mut bands = Vec::new();
                        if let Some((rho, lo, hi)) = prefix {
                            for h in 0..t {
                                for j in entries(h) {
                                    support[h * n + j] = Some(rho);
                                }
                            }
                            bands.push(Band {
                                coeffs: energy(0..t),
                                lo,
                                hi,
                            });
                        }
                        let objective = energy(t..end + 1);
                        let brute = vertices(model, &support, &bands)
                            .iter()
                            .map(|w| sigma.value() * objective.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
                            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
                        let lp = match oracle::battery_value(&ctx, cand, i, t, end, sigma, prefix) {
                            Ok(v) => v.map(|(v, _)| v),
                            Err(e) => return Some(format!("battery {i} t{t}..{end}: {e}")),
                        };
                        checked.set(checked.get() + 1);
                        let same = match (lp, brute) {
                            (None, None) => true,
                            (Some(a), Some(b)) => close(a, b),
                            _ => false,
                        };
                        if !same {
                            return Some(format!(
                                "battery {i} t{t}..{end} {sigma:?} prefix {prefix:?}: oracle {lp:?} brute {brute:?}"
                            ));
                        }
                    }
                }
            }
        }
    }
    None
}

fn criterion_oracles() -> Outcome {
    let start = Instant::now();
    let case = load_case(fixture("toy3.m"), fixture("toy3_scenario.json")).unwrap();
    let net = DCNetwork::build(&case).unwrap();
    let periods = case.periods();
    let nb = case.batteries.len();
    let nr = case.renewables.len();
    let pmax: Vec<Vec<f64>> = (0..periods)
        .map(|t| case.generators.iter().map(|g| g.pmax[t] * case.base_mva).collect())
        .collect();

    // Balanced candidates: the second unit is drawn, the slack unit covers
    // the rest, and the two batteries split each period's response.
    assert_eq!((case.generators.len(), nb, nr), (2, 2, 1));
    let net_load: Vec<f64> = (0..periods)
        .map(|t| case.total_load_mw(t) - case.renewables[0].forecast[t] * case.base_mva)
        .collect();
    let strategy = (
        proptest::collection::vec(0.0f64..1.0, periods),
        proptest::collection::vec(0.0f64..1.0, periods),
        -60.0f64..60.0,
        0.0f64..60.0,
    );
    let mut runner = TestRunner::new(Config {
        cases: 64,
        failure_persistence: None,
        rng_algorithm: proptest::test_runner::RngAlgorithm::ChaCha,
        ..Config::default()
    });
    let checked = std::cell::Cell::new(0);
    let result = runner.run(&strategy, |(p, a, lo, width)| {
        let pg = (0..periods)
            .map(|t| {
                let p1 = p[t] * pmax[t][1].min(net_load[t]);
                vec![net_load[t] - p1, p1]
            })
            .collect();
        let gains = (0..periods).map(|t| vec![vec![a[t]], vec![1.0 - a[t]]]).collect();
        let cand = candidate(&case, pg, gains);
        if let Some(msg) = oracle_mismatch(&case, &net, &cand, (lo, lo + width), &checked) {
            return Err(TestCaseError::fail(msg));
        }
        Ok(())
    });
    let secs = start.elapsed().as_secs_f64();
    match result {
        Ok(()) => outcome(secs < 60.0, format!(
                "{} oracle values on 64 random candidates agree within 1e-6; {secs:.2} s",
                checked.get()
            )),
        Err(e) => outcome(false, format!("{e}; {secs:.2} s")),
    }
}

// ---------------------------------------------------------------------------
// Cut validity on the two-bus instance.

fn criterion_cut_validity(runs: &mut Vec<(String, Vec<f64>)>) -> Outcome {
    let case = load_case(fixture("two_bus.m"), fixture("two_bus_scenario.json")).unwrap();
    let net = DCNetwork::build(&case).unwrap();
    let periods = case.periods();
    let model = &case.uncertainty;
    let dim = model.dim();
    let total: f64 = case.total_load_mw(0) - case.renewables[0].forecast[0] * case.base_mva;

    let report = run_cutting_plane(&case, &DriverOptions::default()).unwrap();
    runs.push(("two_bus".into(), report.objectives()));
    let mut pool: Vec<Cut> = report.cut_pool.clone();

    // Dispatch P1 on the slack unit and the rest on the load bus; the same
    // dispatch and gain in every period.
    let point = |p1: f64, lambda: f64| {
        let pg = vec![vec![p1, total - p1]; periods];
        let gains = vec![vec![vec![lambda; case.renewables.len()]; case.batteries.len()]; periods];
        candidate(&case, pg, gains)
    };

    // Pool every cut the oracles produce over a wider scan, including gains
    // above one where the battery limits bind.
    let ctx = SeparationContext::new(
        &case,
        &net,
        SeparationOptions {
            tol: 1e-6,
            max_cuts: usize::MAX,
        },
    );
    for a in 0..=20 {
        for b in 0..=40 {
            let cand = point(total * a as f64 / 20.0, 2.0 * b as f64 / 40.0);
            pool.extend(separate_all(&ctx, &cand).unwrap().cuts);
        }
    }

    // Scenarios: a 0.5 MW lattice over the box of W plus every vertex.
    let bounds = model.coordinate_bounds();
    let mut scenarios: Vec<Vec<f64>> = (0..(1usize << dim))
        .flat_map(|mask| {
            let s: Support = (0..dim)
                .map(|k| Some(if mask >> k & 1 == 1 { Sign::Neg } else { Sign::Pos }))
                .collect();
            vertices(model, &s, &[])
        })
        .collect();
    let steps: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(neg, pos)| {
            let (lo, hi) = (-neg, pos);
            let k = ((hi - lo) / 0.5).round() as usize;
            (0..=k).map(|s| lo + (hi - lo) * s as f64 / k as f64).collect()
        })
        .collect();
    let mut idx = vec![0usize; dim];
    loop {
        let w: Vec<f64> = (0..dim).map(|k| steps[k][idx[k]]).collect();
        if model.contains(&w) {
            scenarios.push(w);
        }
        let mut k = 0;
        while k < dim {
            idx[k] += 1;
            if idx[k] < steps[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == dim {
            break;
        }
    }

    let mut feasible = 0;
    let mut offending = Vec::new();
    for a in 0..=20 {
        for b in 0..=20 {
            let (p1, lambda) = (total * a as f64 / 20.0, b as f64 / 20.0);
            let cand = point(p1, lambda);
            let balanced = (lambda - 1.0).abs() <= 1e-9;
            let ok = balanced
                && scenarios.iter().all(|w| {
                    check_deviation(&case, &net, &cand.pg_mw, &cand.policy, w)
                        .unwrap()
                        .iter()
                        .all(|r| r.magnitude <= 1e-6)
                });
            if !ok {
                continue;
            }
            feasible += 1;
            for cut in &pool {
                let v = cut.violation(&cand.pg_mw, &cand.policy);
                if v > 1e-6 {
                    offending.push(format!(
                        "P1={p1:.1} λ={lambda:.2} violates {:?} cut by {v:.3e}",
                        cut.provenance.family
                    ));
                }
            }
        }
    }
    let families: std::collections::BTreeSet<_> = pool.iter().map(|c| c.provenance.family).collect();
    let detail = format!(
        "{feasible} feasible of 441 grid points, {} pooled cuts ({families:?}), {} scenarios",
        pool.len(),
        scenarios.len()
    );
    if offending.is_empty() {
        outcome(feasible > 0, detail)
    } else {
        outcome(false, format!("{detail}; {}", offending[0]))
    }
}

// ---------------------------------------------------------------------------
// Scaling on the synthetic grid.

fn criterion_scaling(runs: &mut Vec<(String, Vec<f64>)>) -> Outcome {
    let mut rows = Vec::new();
    let mut pass = true;
    let mut prev: Option<f64> = None;
    for t in [6usize, 8, 10, 12] {
        let case = synthetic_case(&SyntheticOptions {
            periods: t,
            ..SyntheticOptions::default()
        })
        .unwrap();
        let report = run_cutting_plane(&case, &DriverOptions::default()).unwrap();
        runs.push((format!("synthetic T={t}"), report.objectives()));
        let ratio = prev.map(|p| report.time_s / p);
        pass &= report.status == RunStatus::Optimal
            && report.iterations <= 40
            && report.time_s < 1800.0
            && ratio.is_none_or(|r| r <= 1.6);
        rows.push(format!(
            "T={t}: {} in {} it, {:.1} s{}",
            report.status.as_str(),
            report.iterations,
            report.time_s,
            ratio.map_or(String::new(), |r| format!(" (×{r:.2})"))
        ));
        prev = Some(report.time_s);
    }
    outcome(pass, rows.join("; "))
}

#[test]
fn acceptance() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut runs: Vec<(String, Vec<f64>)> = Vec::new();

    // Case9 with two batteries and two wind farms.
    let case9 = load_case(fixture("case9_reduced.m"), fixture("case9_scenario.json")).unwrap();
    let report = run_cutting_plane(&case9, &DriverOptions::default()).unwrap();
    runs.push(("case9".into(), report.objectives()));
    let nominal = report.log[0].objective;
    let nominal_time = report.log[0].wall_time_s;
    results.push((
        "case9 nominal cost",
        outcome(
            within_rel(nominal, 2384.75, 0.01) && nominal_time < 5.0,
            format!("first master objective {nominal:.2} (target 2384.75 ± 1%), {nominal_time:.3} s"),
        ),
    ));

    let solution = report.solution.clone().expect("case9 candidate");
    let lambda4 = solution.policy.gain(0, 0, 0);
    let lambda9 = solution.policy.gain(0, 1, 0);
    results.push((
        "case9 robust solve",
        outcome(
            report.status == RunStatus::Optimal
                && within_rel(solution.objective, 2488.05, 0.01)
                && (lambda4 - 0.36).abs() <= 0.02
                && (lambda9 - 0.64).abs() <= 0.02,
            format!(
                "{}, objective {:.2} (target 2488.05 ± 1%), λ4 {lambda4:.4}, λ9 {lambda9:.4}",
                report.status.as_str(),
                solution.objective
            ),
        ),
    ));

    // Same cost resolution as the case9 scenario.
    let mut plain = parse_matpower_case(&std::fs::read_to_string(fixture("case9.m")).unwrap()).unwrap();
    plain.cost_pwl_segments = 40;
    let plain_report = run_cutting_plane(&plain, &DriverOptions::default()).unwrap();
    runs.push(("case9 plain".into(), plain_report.objectives()));
    let plain_cost = plain_report.solution.as_ref().map_or(f64::NAN, |s| s.objective);
    results.push((
        "case9 DC-OPF cost",
        outcome(
            plain_report.status == RunStatus::Optimal && within_rel(plain_cost, 5216.0, 0.01),
            format!("{plain_cost:.2} (target 5216 ± 1%)"),
        ),
    ));

    let w = DeviationVector::new(2, vec![0.0, -100.0]).unwrap();
    let battery9 = &case9.batteries[1].spec;
    let energy = solution.policy.battery_energy(1, 0, &w, case9.horizon.delta_hours);
    let trajectory = battery9.simulate_trajectory(&[energy], case9.horizon.delta_hours);
    let drop = trajectory.charge[0] - trajectory.charge[1];
    let expected = lambda9 * 100.0 / 0.8;
    let lowest = trajectory.charge.iter().copied().fold(f64::INFINITY, f64::min);
    results.push((
        "battery drain",
        outcome(
            (drop - expected).abs() <= 1e-6 && (drop - 80.0).abs() <= 1e-6 && lowest >= -1e-6,
            format!("drop {drop:.6} MWh (expected {expected:.6}, 80), lowest charge {lowest:.3e}"),
        ),
    ));

    let validation = monte_carlo_validate(&case9, &solution.pg_mw, &solution.policy, 10_000, 42).unwrap();
    results.push((
        "Monte Carlo robustness",
        outcome(
            validation.violation_count == 0,
            format!(
                "{} violations over {} samples, worst {:.3e}",
                validation.violation_count,
                validation.samples,
                validation.max_violation.overall()
            ),
        ),
    ));

    results.push(("oracle equivalence", criterion_oracles()));
    results.push(("cut validity", criterion_cut_validity(&mut runs)));

    let toy3 = load_case(fixture("toy3.m"), fixture("toy3_scenario.json")).unwrap();
    runs.push(("toy3".into(), run_cutting_plane(&toy3, &DriverOptions::default()).unwrap().objectives()));
    let scaling = criterion_scaling(&mut runs);

    let mut drops = Vec::new();
    for (name, objectives) in &runs {
        for pair in objectives.windows(2) {
            if pair[1] < pair[0] - 1e-9 * (1.0 + pair[0].abs()) {
                drops.push(format!("{name}: {} → {}", pair[0], pair[1]));
            }
        }
    }
    results.push((
        "monotone objectives",
        outcome(
            drops.is_empty(),
            if drops.is_empty() {
                format!("{} runs nondecreasing", runs.len())
            } else {
                drops.join("; ")
            },
        ),
    ));
    results.push(("scaling trend", scaling));

    println!();
    for (k, (name, o)) in results.iter().enumerate() {
        println!(
            "{} {}. {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            k + 1,
            o.detail
        );
    }
    let failed: Vec<String> = results
        .iter()
        .enumerate()
        .filter(|(_, (_, o))| !o.pass)
        .map(|(k, (name, _))| format!("{}. {name}", k + 1))
        .collect();
    assert!(failed.is_empty(), "failed: {}", failed.join(", "));
}
