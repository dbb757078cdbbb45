//! Grid case data: the network read from a MATPOWER file plus the scenario
//! extension (horizon, renewables, batteries, uncertainty).

mod matpower;
mod scenario;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::battery::BatterySpec;
use crate::error::{Error, Result};
use crate::uncertainty::ConcentrationModel;
use crate::units::PerUnit;

pub use matpower::parse_matpower_case;
pub use scenario::{parse_scenario_spec, ScenarioSpec};

/// Default number of secant segments for quadratic costs.
pub const DEFAULT_PWL_SEGMENTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusType {
    Pq,
    Pv,
    Slack,
    Isolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series susceptance `1/x`, p.u., always positive.
    pub susceptance: f64,
    /// Thermal limit in p.u.; `None` means unlimited.
    pub limit: Option<f64>,
}

/// Generator cost in $/h as a function of output in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostModel {
    /// `c2·P² + c1·P + c0`.
    Polynomial { c2: f64, c1: f64, c0: f64 },
    /// Convex piecewise-linear through `(MW, $/h)` points.
    Piecewise { points: Vec<(f64, f64)> },
}

impl CostModel {
    pub fn eval(&self, p_mw: f64) -> f64 {
        match self {
            CostModel::Polynomial { c2, c1, c0 } => c2 * p_mw * p_mw + c1 * p_mw + c0,
            CostModel::Piecewise { points } => {
                let k = points
                    .windows(2)
                    .position(|w| p_mw <= w[1].0)
                    .unwrap_or(points.len() - 2);
                let ((x0, y0), (x1, y1)) = (points[k], points[k + 1]);
                y0 + (y1 - y0) * (p_mw - x0) / (x1 - x0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub bus: usize,
    /// Upper output limit per period, p.u.
    pub pmax: Vec<f64>,
    pub cost: CostModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub periods: usize,
    pub delta_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Renewable {
    pub bus: usize,
    /// Forecast output per period, p.u.
    pub forecast: Vec<f64>,
}

/// How battery gains are parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlScheme {
    /// One gain per battery and period, applied to the summed deviations of
    /// the renewables it responds to.
    #[default]
    Aggregated,
    /// One gain per battery, renewable and period.
    PerRenewable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryPlacement {
    pub spec: BatterySpec,
    /// Renewable ordinals this battery responds to, ascending.
    pub responds_to: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<BranchSpec>,
    pub generators: Vec<GeneratorSpec>,
    /// Load per period and bus (indexed like `buses`), p.u.
    pub loads: Vec<Vec<f64>>,
    pub horizon: Horizon,
    pub renewables: Vec<Renewable>,
    pub batteries: Vec<BatteryPlacement>,
    pub uncertainty: ConcentrationModel,
    pub load_scale: Vec<f64>,
    pub control_scheme: ControlScheme,
    pub cost_pwl_segments: usize,
    /// Notes about input fields that were read but ignored.
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl GridCase {
    pub fn per_unit(&self) -> PerUnit {
        PerUnit::new(self.base_mva)
    }

    pub fn periods(&self) -> usize {
        self.horizon.periods
    }

    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn bus_lookup(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusType::Slack)
            .expect("validated case has a slack bus")
    }

    pub fn total_load_mw(&self, t: usize) -> f64 {
        self.per_unit().to_mw(self.loads[t].iter().sum())
    }

    /// Checks the structural invariants of a complete case.
    pub fn validate(&self) -> Result<()> {
        if !(self.base_mva > 0.0) {
            return Err(Error::Validation("baseMVA must be positive".into()));
        }
        let lookup = self.validate_network()?;
        let t = self.horizon.periods;
        if t == 0 {
            return Err(Error::Validation("horizon needs at least one period".into()));
        }
        if !(self.horizon.delta_hours > 0.0) {
            return Err(Error::Validation("period length must be positive".into()));
        }
        if self.loads.len() != t || self.loads.iter().any(|l| l.len() != self.buses.len()) {
            return Err(Error::Validation(format!(
                "loads must cover {t} periods for every bus"
            )));
        }
        if self.load_scale.len() != t {
            return Err(Error::Validation(format!("load_scale must have {t} entries")));
        }
        for g in &self.generators {
            if g.pmax.len() != t {
                return Err(Error::Validation(format!(
                    "generator at bus {} needs {t} limits",
                    g.bus
                )));
            }
            if g.pmax.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::Validation(format!(
                    "generator at bus {} has a negative limit",
                    g.bus
                )));
            }
        }
        for r in &self.renewables {
            if !lookup.contains_key(&r.bus) {
                return Err(Error::Validation(format!("renewable at unknown bus {}", r.bus)));
            }
            if r.forecast.len() != t {
                return Err(Error::Validation(format!(
                    "forecast at bus {} must have {t} entries",
                    r.bus
                )));
            }
        }
        for b in &self.batteries {
            if !lookup.contains_key(&b.spec.bus) {
                return Err(Error::Validation(format!(
                    "battery at unknown bus {}",
                    b.spec.bus
                )));
            }
            if b.responds_to.iter().any(|&r| r >= self.renewables.len()) {
                return Err(Error::Validation(format!(
                    "battery at bus {} responds to an unknown renewable",
                    b.spec.bus
                )));
            }
        }
        let dim = self.renewables.len() * t;
        if self.uncertainty.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: self.uncertainty.dim(),
            });
        }
        if self.cost_pwl_segments == 0 {
            return Err(Error::Validation("cost_pwl_segments must be positive".into()));
        }
        Ok(())
    }

    /// Network-only checks, shared with the MATPOWER parser.
    pub(crate) fn validate_network(&self) -> Result<HashMap<usize, usize>> {
        let mut lookup = HashMap::new();
        for (i, b) in self.buses.iter().enumerate() {
            if lookup.insert(b.id, i).is_some() {
                return Err(Error::Validation(format!("duplicate bus id {}", b.id)));
            }
        }
        match self.buses.iter().filter(|b| b.kind == BusType::Slack).count() {
            0 => return Err(Error::Validation("missing slack bus".into())),
            1 => {}
            k => return Err(Error::Validation(format!("{k} slack buses; exactly one allowed"))),
        }
        for br in &self.branches {
            for end in [br.from_bus, br.to_bus] {
                if !lookup.contains_key(&end) {
                    return Err(Error::Validation(format!(
                        "branch {}-{} references unknown bus {end}",
                        br.from_bus, br.to_bus
                    )));
                }
            }
            if !(br.susceptance > 0.0 && br.susceptance.is_finite()) {
                return Err(Error::Validation(format!(
                    "branch {}-{} has invalid susceptance",
                    br.from_bus, br.to_bus
                )));
            }
            if let Some(l) = br.limit {
                if !(l > 0.0) {
                    return Err(Error::Validation(format!(
                        "branch {}-{} has a nonpositive limit",
                        br.from_bus, br.to_bus
                    )));
                }
            }
        }
        for g in &self.generators {
            if !lookup.contains_key(&g.bus) {
                return Err(Error::Validation(format!("generator at unknown bus {}", g.bus)));
            }
            match &g.cost {
                CostModel::Polynomial { c2, .. } if *c2 < 0.0 => {
                    return Err(Error::Validation(format!(
                        "generator at bus {} has a concave cost",
                        g.bus
                    )))
                }
                CostModel::Piecewise { points } => {
                    let slopes: Vec<f64> = points
                        .windows(2)
                        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
                        .collect();
                    if points.len() < 2
                        || points.windows(2).any(|w| !(w[1].0 > w[0].0))
                        || slopes.windows(2).any(|s| s[1] < s[0] - 1e-12)
                    {
                        return Err(Error::Validation(format!(
                            "generator at bus {} has a non-convex piecewise cost",
                            g.bus
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok(lookup)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let case: GridCase = serde_json::from_str(text)?;
        case.validate()?;
        Ok(case)
    }
}

/// Reads a MATPOWER file and a scenario file from disk.
pub fn load_case(
    case_path: impl AsRef<std::path::Path>,
    scenario_path: impl AsRef<std::path::Path>,
) -> Result<GridCase> {
    let base = parse_matpower_case(&std::fs::read_to_string(case_path)?)?;
    parse_scenario_spec(&std::fs::read_to_string(scenario_path)?, &base)
}
