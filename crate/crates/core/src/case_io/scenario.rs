//! Scenario extension document: horizon, renewables, batteries and the
//! uncertainty model, attached to a parsed network.

use serde::{Deserialize, Serialize};

use super::{BatteryPlacement, ControlScheme, GridCase, Horizon, Renewable, DEFAULT_PWL_SEGMENTS};
use crate::battery::{BatterySpec, ChargeCurve, DischargeCurve};
use crate::error::{Error, Result};
use crate::uncertainty::ConcentrationModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveJson {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResponseJson {
    Named(String),
    Buses(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewableJson {
    pub bus: usize,
    pub forecast_mw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryJson {
    pub bus: usize,
    pub e_min_mwh: f64,
    pub e_max_mwh: f64,
    pub initial_mwh: f64,
    /// Electrical input coordinate to chemical charge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charge_curve: Option<CurveJson>,
    /// Chemical charge to extractable electrical energy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discharge_curve: Option<CurveJson>,
    /// Used for a one-segment curve when `charge_curve` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charge_efficiency: Option<f64>,
    /// Used for a one-segment curve when `discharge_curve` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discharge_efficiency: Option<f64>,
    pub speed_mwh: Vec<f64>,
    pub max_power_mw: f64,
    pub responds_to: ResponseJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UncertaintyJson {
    Budgets {
        /// `[renewable][period]`, MW.
        gamma: Vec<Vec<f64>>,
        #[serde(rename = "Gamma")]
        budget: Vec<f64>,
    },
    Concentration {
        #[serde(rename = "K_plus")]
        k_plus: Vec<Vec<f64>>,
        #[serde(rename = "K_minus")]
        k_minus: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(rename = "T")]
    pub periods: usize,
    pub delta_hours: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_scale: Option<Vec<f64>>,
    #[serde(default)]
    pub renewables: Vec<RenewableJson>,
    #[serde(default)]
    pub batteries: Vec<BatteryJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<UncertaintyJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_pwl_segments: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_scheme: Option<ControlScheme>,
    /// Per-generator, per-period limits in MW, overriding the case's Pmax.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_pmax_mw: Option<Vec<Vec<f64>>>,
}

/// Attaches the scenario in `text` to the network `base`.
pub fn parse_scenario_spec(text: &str, base: &GridCase) -> Result<GridCase> {
    let spec: ScenarioSpec = serde_json::from_str(text)?;
    spec.apply(base)
}

impl ScenarioSpec {
    pub fn apply(&self, base: &GridCase) -> Result<GridCase> {
        let t = self.periods;
        if t == 0 {
            return Err(Error::Scenario("T must be at least 1".into()));
        }
        if !(self.delta_hours > 0.0) {
            return Err(Error::Scenario("delta_hours must be positive".into()));
        }
        let pu = base.per_unit();
        let mut warnings = base.warnings.clone();
        let lookup = base.validate_network()?;

        let load_scale = self.load_scale.clone().unwrap_or_else(|| vec![1.0; t]);
        if load_scale.len() != t {
            return Err(Error::Scenario(format!("load_scale must have {t} entries")));
        }
        let loads = load_scale
            .iter()
            .map(|s| base.loads[0].iter().map(|l| l * s).collect())
            .collect();

        let mut generators = base.generators.clone();
        match &self.gen_pmax_mw {
            Some(limits) => {
                if limits.len() != generators.len() {
                    return Err(Error::Scenario(format!(
                        "gen_pmax_mw has {} rows for {} generators",
                        limits.len(),
                        generators.len()
                    )));
                }
                for (g, row) in generators.iter_mut().zip(limits) {
                    if row.len() != t {
                        return Err(Error::Scenario(format!("gen_pmax_mw rows need {t} entries")));
                    }
                    g.pmax = row.iter().map(|&p| pu.to_pu(p)).collect();
                }
            }
            None => {
                for g in &mut generators {
                    g.pmax = vec![g.pmax[0]; t];
                }
            }
        }

        let mut renewables = Vec::new();
        for r in &self.renewables {
            if !lookup.contains_key(&r.bus) {
                return Err(Error::Scenario(format!("renewable at nonexistent bus {}", r.bus)));
            }
            if r.forecast_mw.len() != t {
                return Err(Error::Scenario(format!(
                    "forecast at bus {} must have {t} entries",
                    r.bus
                )));
            }
            renewables.push(Renewable {
                bus: r.bus,
                forecast: r.forecast_mw.iter().map(|&p| pu.to_pu(p)).collect(),
            });
        }

        let mut batteries = Vec::new();
        for b in &self.batteries {
            if !lookup.contains_key(&b.bus) {
                return Err(Error::Scenario(format!("battery at nonexistent bus {}", b.bus)));
            }
            batteries.push(BatteryPlacement {
                spec: battery_spec(b)?,
                responds_to: response_set(&b.responds_to, b.bus, &renewables)?,
            });
        }

        let dim = renewables.len() * t;
        let uncertainty = match &self.uncertainty {
            Some(UncertaintyJson::Budgets { gamma, budget }) => {
                if gamma.len() != renewables.len() {
                    return Err(Error::Scenario(format!(
                        "gamma has {} rows for {} renewables",
                        gamma.len(),
                        renewables.len()
                    )));
                }
                if budget.len() != t {
                    return Err(Error::Scenario(format!("Gamma must have {t} entries")));
                }
                ConcentrationModel::from_budgets(gamma, budget)?
            }
            Some(UncertaintyJson::Concentration { k_plus, k_minus, b }) => {
                if b.is_empty() {
                    if dim > 0 {
                        return Err(Error::Scenario(
                            "concentration model without rows is unbounded".into(),
                        ));
                    }
                    ConcentrationModel::zero(0)
                } else {
                    let model = ConcentrationModel::from_dense(k_plus, k_minus, b)?;
                    if model.dim() != dim {
                        return Err(Error::Dimension {
                            expected: dim,
                            got: model.dim(),
                        });
                    }
                    model
                }
            }
            None => {
                if dim > 0 {
                    warnings.push("no uncertainty model given; deviations fixed at zero".into());
                }
                ConcentrationModel::zero(dim)
            }
        };
        if dim > 0 && !uncertainty.is_full_dimensional() {
            let note = "uncertainty set is not full dimensional".to_string();
            log::warn!("{note}");
            warnings.push(note);
        }

        let case = GridCase {
            base_mva: base.base_mva,
            buses: base.buses.clone(),
            branches: base.branches.clone(),
            generators,
            loads,
            horizon: Horizon {
                periods: t,
                delta_hours: self.delta_hours,
            },
            renewables,
            batteries,
            uncertainty,
            load_scale,
            control_scheme: self.control_scheme.unwrap_or_default(),
            cost_pwl_segments: self.cost_pwl_segments.unwrap_or(DEFAULT_PWL_SEGMENTS),
            warnings,
        };
        case.validate()?;
        Ok(case)
    }
}

fn battery_spec(b: &BatteryJson) -> Result<BatterySpec> {
    let charge = match (&b.charge_curve, b.charge_efficiency) {
        (Some(c), _) => ChargeCurve::new(c.x.clone(), c.y.clone()),
        (None, Some(eta)) => ChargeCurve::linear(b.e_min_mwh, b.e_max_mwh, eta),
        (None, None) => Err(Error::Scenario(format!(
            "battery at bus {} needs charge_curve or charge_efficiency",
            b.bus
        ))),
    }
    .map_err(|e| Error::Scenario(format!("battery at bus {}: {e}", b.bus)))?;
    let discharge = match (&b.discharge_curve, b.discharge_efficiency) {
        (Some(c), _) => DischargeCurve::new(c.x.clone(), c.y.clone()),
        (None, Some(eta)) => DischargeCurve::linear(b.e_min_mwh, b.e_max_mwh, eta),
        (None, None) => Err(Error::Scenario(format!(
            "battery at bus {} needs discharge_curve or discharge_efficiency",
            b.bus
        ))),
    }
    .map_err(|e| Error::Scenario(format!("battery at bus {}: {e}", b.bus)))?;
    BatterySpec::new(
        b.bus,
        charge,
        discharge,
        b.e_min_mwh,
        b.e_max_mwh,
        b.initial_mwh,
        b.speed_mwh.clone(),
        b.max_power_mw,
    )
}

fn response_set(r: &ResponseJson, bus: usize, renewables: &[Renewable]) -> Result<Vec<usize>> {
    match r {
        ResponseJson::Named(s) if s == "all" => Ok((0..renewables.len()).collect()),
        ResponseJson::Named(s) => Err(Error::Scenario(format!(
            "battery at bus {bus}: responds_to must be \"all\" or a list of buses, got \"{s}\""
        ))),
        ResponseJson::Buses(ids) => {
            let mut out = Vec::new();
            for id in ids {
                let matched: Vec<usize> = renewables
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.bus == *id)
                    .map(|(k, _)| k)
                    .collect();
                if matched.is_empty() {
                    return Err(Error::Scenario(format!(
                        "battery at bus {bus} responds to bus {id}, which has no renewable"
                    )));
                }
                out.extend(matched);
            }
            out.sort_unstable();
            out.dedup();
            Ok(out)
        }
    }
}
