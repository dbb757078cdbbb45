//! Linear battery control: battery `i` moves `Δ·Σ_j λ^t_{ij} w_{j,t}` MWh of
//! electrical energy in period `t` (positive charges the battery), so its power
//! output is `-Σ_j λ^t_{ij} w_{j,t}`.

use serde::{Deserialize, Serialize};

use crate::case_io::{ControlScheme, GridCase};
use crate::error::{Error, Result};
use crate::uncertainty::DeviationVector;

/// One decision variable of the master problem: a gain shared by the
/// entries `λ^t_{ij}` for `j` in `renewables`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GainVar {
    pub period: usize,
    pub battery: usize,
    pub renewables: Vec<usize>,
}

/// How the entries of `Λ` map onto master variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlLayout {
    pub scheme: ControlScheme,
    pub periods: usize,
    pub batteries: usize,
    pub renewables: usize,
    pub vars: Vec<GainVar>,
    /// `var_of[t][i][j]`: variable holding `λ^t_{ij}`, if any.
    var_of: Vec<Vec<Vec<Option<usize>>>>,
}

impl ControlLayout {
    pub fn new(case: &GridCase) -> Self {
        let periods = case.periods();
        let nb = case.batteries.len();
        let nr = case.renewables.len();
        let mut vars = Vec::new();
        let mut var_of = vec![vec![vec![None; nr]; nb]; periods];
        for t in 0..periods {
            for (i, b) in case.batteries.iter().enumerate() {
                if b.responds_to.is_empty() {
                    continue;
                }
                match case.control_scheme {
                    ControlScheme::Aggregated => {
                        for &j in &b.responds_to {
                            var_of[t][i][j] = Some(vars.len());
                        }
                        vars.push(GainVar {
                            period: t,
                            battery: i,
                            renewables: b.responds_to.clone(),
                        });
                    }
                    ControlScheme::PerRenewable => {
                        for &j in &b.responds_to {
                            var_of[t][i][j] = Some(vars.len());
                            vars.push(GainVar {
                                period: t,
                                battery: i,
                                renewables: vec![j],
                            });
                        }
                    }
                }
            }
        }
        Self {
            scheme: case.control_scheme,
            periods,
            batteries: nb,
            renewables: nr,
            vars,
            var_of,
        }
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn var(&self, t: usize, i: usize, j: usize) -> Option<usize> {
        self.var_of[t][i][j]
    }

    /// Variables of the balance rows `Σ_i λ^t_{ij} = 1`, one row per `(t, j)`
    /// for which `active(t, j)` holds, with duplicate rows removed.
    pub fn balance_rows(&self, active: impl Fn(usize, usize) -> bool) -> Vec<(usize, Vec<usize>)> {
        let mut rows: Vec<(usize, Vec<usize>)> = Vec::new();
        for t in 0..self.periods {
            for j in 0..self.renewables {
                if !active(t, j) {
                    continue;
                }
                let vars: Vec<usize> = (0..self.batteries)
                    .filter_map(|i| self.var_of[t][i][j])
                    .collect();
                if !rows.iter().any(|(rt, rv)| *rt == t && *rv == vars) {
                    rows.push((t, vars));
                }
            }
        }
        rows
    }

    /// Policy with the given variable values.
    pub fn policy(&self, values: &[f64]) -> ControlPolicy {
        let mut gains = vec![vec![vec![0.0; self.renewables]; self.batteries]; self.periods];
        for (v, var) in self.vars.iter().enumerate() {
            for &j in &var.renewables {
                gains[var.period][var.battery][j] = values[v];
            }
        }
        ControlPolicy {
            scheme: self.scheme,
            gains,
        }
    }

    /// Variable values reproducing `policy`; entries sharing a variable are
    /// averaged.
    pub fn values(&self, policy: &ControlPolicy) -> Vec<f64> {
        self.vars
            .iter()
            .map(|var| {
                let sum: f64 = var
                    .renewables
                    .iter()
                    .map(|&j| policy.gains[var.period][var.battery][j])
                    .sum();
                sum / var.renewables.len() as f64
            })
            .collect()
    }
}

/// Gains `λ^t_{ij}` indexed `[t][battery][renewable]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPolicy {
    pub scheme: ControlScheme,
    pub gains: Vec<Vec<Vec<f64>>>,
}

impl ControlPolicy {
    pub fn zeros(periods: usize, batteries: usize, renewables: usize) -> Self {
        Self {
            scheme: ControlScheme::Aggregated,
            gains: vec![vec![vec![0.0; renewables]; batteries]; periods],
        }
    }

    pub fn periods(&self) -> usize {
        self.gains.len()
    }

    pub fn batteries(&self) -> usize {
        self.gains.first().map_or(0, Vec::len)
    }

    pub fn renewables(&self) -> usize {
        self.gains
            .first()
            .and_then(|g| g.first())
            .map_or(0, Vec::len)
    }

    pub fn gain(&self, t: usize, i: usize, j: usize) -> f64 {
        self.gains[t][i][j]
    }

    /// Electrical energy (MWh) moved into battery `i` in period `t`.
    pub fn battery_energy(&self, i: usize, t: usize, w: &DeviationVector, delta_hours: f64) -> f64 {
        delta_hours
            * self.gains[t][i]
                .iter()
                .zip(w.period(t))
                .map(|(l, v)| l * v)
                .sum::<f64>()
    }

    /// Largest `|Σ_i λ^t_{ij} - 1|` over the `(t, j)` selected by `active`.
    pub fn balance_residual(&self, active: impl Fn(usize, usize) -> bool) -> f64 {
        let mut worst: f64 = 0.0;
        for t in 0..self.periods() {
            for j in 0..self.renewables() {
                if active(t, j) {
                    let s: f64 = (0..self.batteries()).map(|i| self.gains[t][i][j]).sum();
                    worst = worst.max((s - 1.0).abs());
                }
            }
        }
        worst
    }

    pub fn check_shape(&self, periods: usize, batteries: usize, renewables: usize) -> Result<()> {
        if self.periods() != periods
            || self.gains.iter().any(|g| g.len() != batteries)
            || self.gains.iter().flatten().any(|r| r.len() != renewables)
        {
            return Err(Error::Dimension {
                expected: periods * batteries * renewables,
                got: self.gains.iter().flatten().map(Vec::len).sum(),
            });
        }
        if self.gains.iter().flatten().flatten().any(|v| !(*v >= 0.0)) {
            return Err(Error::Argument("battery gains must be nonnegative".into()));
        }
        Ok(())
    }
}

/// A deviation coordinate `(t, j)` that can be nonzero somewhere in the
/// uncertainty set.
pub fn active_coordinates(case: &GridCase) -> Vec<Vec<bool>> {
    let n = case.renewables.len();
    let bounds = case.uncertainty.coordinate_bounds();
    (0..case.periods())
        .map(|t| {
            (0..n)
                .map(|j| {
                    let (neg, pos) = bounds[t * n + j];
                    neg > 0.0 || pos > 0.0
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn policy(gains: Vec<Vec<Vec<f64>>>) -> ControlPolicy {
        ControlPolicy {
            scheme: ControlScheme::Aggregated,
            gains,
        }
    }

    #[test]
    fn zero_deviation_zero_energy() {
        let p = policy(vec![vec![vec![0.4, 0.4], vec![0.6, 0.6]]]);
        let w = DeviationVector::zeros(2, 1);
        assert_eq!(p.battery_energy(0, 0, &w, 1.0), 0.0);
    }

    #[test]
    fn case9_discharge() {
        let p = policy(vec![vec![vec![0.36, 0.36], vec![0.64, 0.64]]]);
        let w = DeviationVector::new(2, vec![0.0, -100.0]).unwrap();
        assert!((p.battery_energy(1, 0, &w, 1.0) + 64.0).abs() < 1e-12);
    }

    #[test]
    fn aggregated_energy_uses_the_sum() {
        let p = policy(vec![vec![vec![0.5, 0.5, 0.5]]]);
        let w = DeviationVector::new(3, vec![1.0, -4.0, 10.0]).unwrap();
        assert!((p.battery_energy(0, 0, &w, 2.0) - 2.0 * 0.5 * 7.0).abs() < 1e-12);
    }

    #[test]
    fn balance_gives_zero_net_deviation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (nb, nr) = (3, 4);
        for _ in 0..200 {
            let mut gains = vec![vec![0.0; nr]; nb];
            for j in 0..nr {
                let raw: Vec<f64> = (0..nb).map(|_| rng.gen_range(0.0..1.0)).collect();
                let s: f64 = raw.iter().sum();
                for i in 0..nb {
                    gains[i][j] = raw[i] / s;
                }
            }
            let p = policy(vec![gains]);
            let w: Vec<f64> = (0..nr).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let wv = DeviationVector::new(nr, w.clone()).unwrap();
            let total: f64 = (0..nb).map(|i| p.battery_energy(i, 0, &wv, 1.0)).sum();
            assert!((total - w.iter().sum::<f64>()).abs() < 1e-9);
        }
    }

    #[test]
    fn single_orthant_gives_matching_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let gains: Vec<Vec<f64>> = (0..2)
                .map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect();
            let p = policy(vec![gains]);
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let w: Vec<f64> = (0..3).map(|_| sign * rng.gen_range(0.0..10.0)).collect();
            let wv = DeviationVector::new(3, w).unwrap();
            for i in 0..2 {
                assert!(sign * p.battery_energy(i, 0, &wv, 1.0) >= 0.0);
            }
        }
    }
}
