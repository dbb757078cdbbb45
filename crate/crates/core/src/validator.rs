//! Monte Carlo check of a plan: sampled deviations are replayed through the
//! exact battery dynamics and a DC angle solve.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::battery::BatteryViolationKind;
use crate::case_io::GridCase;
use crate::control::{active_coordinates, ControlPolicy};
use crate::error::{Error, Result};
use crate::network::DCNetwork;
use crate::uncertainty::DeviationVector;

/// Violations at or below this size (MW or MWh) pass.
pub const VALIDATION_TOL: f64 = 1e-6;
/// Largest tolerated `|Σ_i λ^t_{ij} − 1|`.
pub const BALANCE_TOL: f64 = 1e-9;
/// At most this many individual records are kept in a report.
pub const MAX_RECORDS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationFamily {
    Line,
    Range,
    RunBound,
    Speed,
    Power,
}

impl From<BatteryViolationKind> for ViolationFamily {
    fn from(kind: BatteryViolationKind) -> Self {
        match kind {
            BatteryViolationKind::Range => ViolationFamily::Range,
            BatteryViolationKind::RunBound => ViolationFamily::RunBound,
            BatteryViolationKind::Speed => ViolationFamily::Speed,
            BatteryViolationKind::Power => ViolationFamily::Power,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub sample: usize,
    pub family: ViolationFamily,
    pub period: usize,
    /// Branch index for line violations, battery index otherwise.
    pub element: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MaxViolations {
    pub line: f64,
    pub range: f64,
    pub run_bound: f64,
    pub speed: f64,
    pub power: f64,
}

impl MaxViolations {
    fn update(&mut self, family: ViolationFamily, v: f64) {
        let slot = match family {
            ViolationFamily::Line => &mut self.line,
            ViolationFamily::Range => &mut self.range,
            ViolationFamily::RunBound => &mut self.run_bound,
            ViolationFamily::Speed => &mut self.speed,
            ViolationFamily::Power => &mut self.power,
        };
        *slot = slot.max(v);
    }

    pub fn overall(&self) -> f64 {
        [self.line, self.range, self.run_bound, self.speed, self.power]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub samples: usize,
    pub seed: u64,
    pub max_violation: MaxViolations,
    /// Records above the tolerance.
    pub violation_count: usize,
    /// The first [`MAX_RECORDS`] records above the tolerance.
    pub violations: Vec<ViolationRecord>,
}

/// Replays `samples` deviations drawn with `seed` against the dispatch
/// `pg_mw[t][g]` and the gains in `policy`.
pub fn monte_carlo_validate(
    case: &GridCase,
    pg_mw: &[Vec<f64>],
    policy: &ControlPolicy,
    samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if samples == 0 {
        return Err(Error::Argument("at least one sample is required".into()));
    }
    let periods = case.periods();
    let n = case.renewables.len();
    policy.check_shape(periods, case.batteries.len(), n)?;
    if pg_mw.len() != periods || pg_mw.iter().any(|r| r.len() != case.generators.len()) {
        return Err(Error::Dimension {
            expected: periods * case.generators.len(),
            got: pg_mw.iter().map(Vec::len).sum(),
        });
    }
    let active = active_coordinates(case);
    let residual = policy.balance_residual(|t, j| active[t][j]);
    if residual > BALANCE_TOL {
        return Err(Error::Validation(format!(
            "battery gains miss the balance rows by {residual:e}"
        )));
    }

    let net = DCNetwork::build(case)?;
    let draws = case.uncertainty.sample_deviation(seed, samples)?;
    let per_sample: Vec<Vec<ViolationRecord>> = draws
        .par_iter()
        .enumerate()
        .map(|(k, w)| check_sample(case, &net, pg_mw, policy, k, w))
        .collect::<Result<_>>()?;

    let mut max_violation = MaxViolations::default();
    let mut violations = Vec::new();
    let mut violation_count = 0;
    for record in per_sample.into_iter().flatten() {
        max_violation.update(record.family, record.magnitude);
        if record.magnitude > VALIDATION_TOL {
            violation_count += 1;
            if violations.len() < MAX_RECORDS {
                violations.push(record);
            }
        }
    }
    Ok(ValidationReport {
        pass: violation_count == 0,
        samples,
        seed,
        max_violation,
        violation_count,
        violations,
    })
}

/// Violations of the plan under the single deviation `w`: battery
/// trajectories and branch flows, with magnitudes above zero.
pub fn check_deviation(
    case: &GridCase,
    net: &DCNetwork,
    pg_mw: &[Vec<f64>],
    policy: &ControlPolicy,
    w: &[f64],
) -> Result<Vec<ViolationRecord>> {
    check_sample(case, net, pg_mw, policy, 0, w)
}

fn check_sample(
    case: &GridCase,
    net: &DCNetwork,
    pg_mw: &[Vec<f64>],
    policy: &ControlPolicy,
    sample: usize,
    w: &[f64],
) -> Result<Vec<ViolationRecord>> {
    let n = case.renewables.len();
    let delta = case.horizon.delta_hours;
    let pu = case.per_unit();
    let lookup = case.bus_lookup();
    let dev = DeviationVector::new(n, w.to_vec())?;
    let mut out = Vec::new();

    for (i, b) in case.batteries.iter().enumerate() {
        let energies: Vec<f64> = (0..case.periods())
            .map(|t| policy.battery_energy(i, t, &dev, delta))
            .collect();
        let trajectory = b.spec.simulate_trajectory(&energies, delta);
        for v in trajectory.violations {
            out.push(ViolationRecord {
                sample,
                family: v.kind.into(),
                period: v.period,
                element: i,
                magnitude: v.magnitude,
            });
        }
    }

    for t in 0..case.periods() {
        let mut injection: Vec<f64> = case.loads[t].iter().map(|d| -d).collect();
        for (g, gen) in case.generators.iter().enumerate() {
            injection[lookup[&gen.bus]] += pu.to_pu(pg_mw[t][g]);
        }
        for (j, r) in case.renewables.iter().enumerate() {
            injection[lookup[&r.bus]] += r.forecast[t] + pu.to_pu(dev.get(j, t));
        }
        for (i, b) in case.batteries.iter().enumerate() {
            let absorbed: f64 = (0..n).map(|j| policy.gain(t, i, j) * dev.get(j, t)).sum();
            injection[lookup[&b.spec.bus]] -= pu.to_pu(absorbed);
        }
        let theta = net.solve_angles(&injection);
        for (l, br) in case.branches.iter().enumerate() {
            let Some(limit) = br.limit else { continue };
            let from = lookup[&br.from_bus];
            let to = lookup[&br.to_bus];
            let flow = pu.to_mw(br.susceptance * (theta[from] - theta[to]));
            let excess = flow.abs() - pu.to_mw(limit);
            if excess > 0.0 {
                out.push(ViolationRecord {
                    sample,
                    family: ViolationFamily::Line,
                    period: t,
                    element: l,
                    magnitude: excess,
                });
            }
        }
    }
    Ok(out)
}
