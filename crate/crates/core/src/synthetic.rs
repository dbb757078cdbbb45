//! Seeded synthetic grids for scaling runs: a random geometric network with
//! wind farms, batteries and a per-period budget uncertainty set.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::battery::{BatterySpec, ChargeCurve, DischargeCurve};
use crate::case_io::{
    BatteryPlacement, BranchSpec, Bus, BusType, ControlScheme, CostModel, GeneratorSpec, GridCase,
    Horizon, Renewable,
};
use crate::error::Result;
use crate::network::DCNetwork;
use crate::uncertainty::ConcentrationModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOptions {
    pub seed: u64,
    pub periods: usize,
    pub buses: usize,
    pub generators: usize,
    pub wind_farms: usize,
    pub batteries: usize,
    /// Peak system load, MW.
    pub peak_load_mw: f64,
    /// Installed wind capacity, MW.
    pub wind_capacity_mw: f64,
    /// Largest total wind deviation per period as a share of capacity.
    pub deviation_share: f64,
    pub cost_pwl_segments: usize,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        Self {
            seed: 2746,
            periods: 6,
            buses: 2746,
            generators: 450,
            wind_farms: 32,
            batteries: 32,
            peak_load_mw: 18_000.0,
            wind_capacity_mw: 4_500.0,
            deviation_share: 0.089,
            cost_pwl_segments: 5,
        }
    }
}

const BASE_MVA: f64 = 100.0;

/// Builds the case described by `options`. The same options always give the
/// same case; the network and placements do not depend on `periods`.
pub fn synthetic_case(options: &SyntheticOptions) -> Result<GridCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let nb = options.buses.max(2);
    let t_len = options.periods;

    // Geometric network: each bus joins its nearest predecessor, then a few
    // extra short links close loops.
    let points: Vec<(f64, f64)> = (0..nb).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
    let dist = |a: usize, b: usize| {
        let (p, q) = (points[a], points[b]);
        ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
    };
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for k in 1..nb {
        let nearest = (0..k)
            .min_by(|&a, &b| dist(k, a).total_cmp(&dist(k, b)))
            .expect("k ≥ 1");
        edges.push((nearest, k));
    }
    let extra = nb * 28 / 100;
    let mut seen: std::collections::HashSet<(usize, usize)> =
        edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    let mut added = 0;
    while added < extra {
        let a = rng.gen_range(0..nb);
        let mut near: Vec<usize> = (0..nb).filter(|&b| b != a).collect();
        near.select_nth_unstable_by(5.min(nb - 2), |&x, &y| dist(a, x).total_cmp(&dist(a, y)));
        let b = near[rng.gen_range(0..6.min(nb - 1))];
        if seen.insert((a.min(b), a.max(b))) {
            edges.push((a, b));
            added += 1;
        }
    }

    let buses: Vec<Bus> = (0..nb)
        .map(|k| Bus {
            id: k + 1,
            kind: if k == 0 { BusType::Slack } else { BusType::Pq },
        })
        .collect();
    let mut branches: Vec<BranchSpec> = edges
        .iter()
        .map(|&(a, b)| BranchSpec {
            from_bus: a + 1,
            to_bus: b + 1,
            susceptance: 1.0 / rng.gen_range(0.005..0.05),
            limit: None,
        })
        .collect();

    // Loads on roughly 70% of the buses, with a daily profile.
    let mut base_load = vec![0.0; nb];
    for l in base_load.iter_mut() {
        if rng.gen::<f64>() < 0.7 {
            *l = rng.gen_range(0.2..1.8);
        }
    }
    let total: f64 = base_load.iter().sum();
    base_load
        .iter_mut()
        .for_each(|l| *l *= options.peak_load_mw / BASE_MVA / total);
    let load_scale: Vec<f64> = (0..t_len)
        .map(|t| 0.85 + 0.15 * (std::f64::consts::PI * t as f64 / 12.0).sin())
        .collect();
    let loads: Vec<Vec<f64>> = load_scale
        .iter()
        .map(|s| base_load.iter().map(|l| l * s).collect())
        .collect();

    // Generators with 1.4× the peak load in capacity.
    let mut order: Vec<usize> = (0..nb).collect();
    order.shuffle(&mut rng);
    let gen_buses = &order[..options.generators.min(nb)];
    let raw: Vec<f64> = gen_buses.iter().map(|_| rng.gen_range(0.3..1.7)).collect();
    let raw_total: f64 = raw.iter().sum();
    let generators: Vec<GeneratorSpec> = gen_buses
        .iter()
        .zip(&raw)
        .map(|(&b, r)| {
            let pmax = r / raw_total * 1.4 * options.peak_load_mw / BASE_MVA;
            GeneratorSpec {
                bus: b + 1,
                pmax: vec![pmax; t_len],
                cost: CostModel::Polynomial {
                    c2: rng.gen_range(0.001..0.02),
                    c1: rng.gen_range(15.0..60.0),
                    c0: 0.0,
                },
            }
        })
        .collect();

    // Wind farms and their forecasts.
    order.shuffle(&mut rng);
    let wind_buses: Vec<usize> = order[..options.wind_farms.min(nb)].to_vec();
    let raw: Vec<f64> = wind_buses.iter().map(|_| rng.gen_range(0.5..1.5)).collect();
    let raw_total: f64 = raw.iter().sum();
    let renewables: Vec<Renewable> = wind_buses
        .iter()
        .zip(&raw)
        .map(|(&b, r)| {
            let cap = r / raw_total * options.wind_capacity_mw;
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let forecast = (0..t_len)
                .map(|t| {
                    let share = 0.5 + 0.2 * (phase + t as f64 / 4.0).sin();
                    cap * share / BASE_MVA
                })
                .collect();
            Renewable {
                bus: b + 1,
                forecast,
            }
        })
        .collect();

    // Budget set: each farm may miss by 35% of its forecast, and the summed
    // relative misses per period are capped so the total stays near the
    // requested share of capacity.
    let gamma: Vec<Vec<f64>> = renewables
        .iter()
        .map(|r| r.forecast.iter().map(|f| 0.35 * f * BASE_MVA).collect())
        .collect();
    let budget: Vec<f64> = (0..t_len)
        .map(|t| {
            let mut g: Vec<f64> = gamma.iter().map(|row| row[t]).collect();
            g.sort_by(|a, b| b.total_cmp(a));
            let target = options.deviation_share * options.wind_capacity_mw;
            let mut sum = 0.0;
            let mut count = 0.0;
            for v in g {
                if sum + v > target {
                    count += (target - sum) / v;
                    return count;
                }
                sum += v;
                count += 1.0;
            }
            count
        })
        .collect();
    let uncertainty = ConcentrationModel::from_budgets(&gamma, &budget)?;

    // Batteries sized so that any two of them can absorb the worst cumulative
    // deviation over the horizon.
    order.shuffle(&mut rng);
    let nr = renewables.len();
    let per_period = options.deviation_share * options.wind_capacity_mw;
    let mean_capacity = 1.4 * per_period * t_len.max(1) as f64;
    let batteries: Vec<BatteryPlacement> = order[..options.batteries.min(nb)]
        .iter()
        .map(|&b| {
            let e_max = mean_capacity * rng.gen_range(0.9..1.3);
            let spec = BatterySpec::new(
                b + 1,
                ChargeCurve::linear(0.0, e_max, 0.95)?,
                DischargeCurve::linear(0.0, e_max, 0.95)?,
                0.0,
                e_max,
                0.5 * e_max,
                vec![per_period],
                per_period,
            )?;
            Ok(BatteryPlacement {
                spec,
                responds_to: (0..nr).collect(),
            })
        })
        .collect::<Result<_>>()?;

    let mut case = GridCase {
        base_mva: BASE_MVA,
        buses,
        branches: branches.clone(),
        generators,
        loads,
        horizon: Horizon {
            periods: t_len,
            delta_hours: 1.0,
        },
        renewables,
        batteries,
        uncertainty,
        load_scale,
        control_scheme: ControlScheme::Aggregated,
        cost_pwl_segments: options.cost_pwl_segments,
        warnings: Vec::new(),
    };

    // Limits: headroom over the flows of a proportional dispatch, so the
    // nominal problem is feasible but the cheap units meet congestion. The
    // additive part lets a battery feeder carry 60% of a period's deviation.
    let net = DCNetwork::build(&case)?;
    let mut peak = vec![0.0f64; branches.len()];
    for t in 0..t_len {
        let wind: f64 = case.renewables.iter().map(|r| r.forecast[t]).sum();
        let demand: f64 = case.loads[t].iter().sum::<f64>() - wind;
        let capacity: f64 = case.generators.iter().map(|g| g.pmax[t]).sum();
        let mut pg = vec![0.0; nb];
        for g in &case.generators {
            pg[g.bus - 1] += g.pmax[t] * demand / capacity * BASE_MVA;
        }
        let flows = net.nominal_flows(&case, &pg, t)?;
        for (p, f) in peak.iter_mut().zip(flows.flows_mw) {
            *p = p.max(f.abs());
        }
    }
    for (br, p) in branches.iter_mut().zip(peak) {
        br.limit = Some((1.3 * p).max(p + 0.6 * per_period) / BASE_MVA);
    }
    case.branches = branches;
    case.validate()?;
    Ok(case)
}
