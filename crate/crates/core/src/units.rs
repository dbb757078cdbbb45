//! Per-unit conversions.
//!
//! Network powers (loads, generator limits, forecasts, line limits) are held in
//! per-unit of the case MVA base. Battery energies and renewable deviations are
//! kept in MWh and MW, which is how they are specified and reported.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerUnit {
    pub base_mva: f64,
}

impl PerUnit {
    pub fn new(base_mva: f64) -> Self {
        Self { base_mva }
    }

    #[inline]
    pub fn to_pu(&self, mw: f64) -> f64 {
        mw / self.base_mva
    }

    #[inline]
    pub fn to_mw(&self, pu: f64) -> f64 {
        pu * self.base_mva
    }
}
