//! Results document written by `solve` and read back by `validate` and
//! `report`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::case_io::{ControlScheme, GridCase};
use crate::control::ControlPolicy;
use crate::driver::{CutCounts, RunReport};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPeriod {
    /// Zero-based period.
    pub t: usize,
    /// `[battery][renewable]`.
    pub entries: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub status: String,
    /// `null` when no candidate was produced.
    pub objective: Option<f64>,
    /// `[period][generator]` in the order of the case's generator table.
    #[serde(rename = "Pg_mw")]
    pub pg_mw: Vec<Vec<f64>>,
    pub lambda: Vec<LambdaPeriod>,
    pub iterations: usize,
    pub cuts: CutCounts,
    pub time_s: f64,
    #[serde(rename = "T")]
    pub periods: usize,
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub control_scheme: ControlScheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl ResultsFile {
    pub fn from_report(case: &GridCase, report: &RunReport) -> Self {
        let (objective, pg_mw, lambda) = match &report.solution {
            Some(s) => (
                Some(s.objective),
                s.pg_mw.clone(),
                s.policy
                    .gains
                    .iter()
                    .enumerate()
                    .map(|(t, entries)| LambdaPeriod {
                        t,
                        entries: entries.clone(),
                    })
                    .collect(),
            ),
            None => (None, Vec::new(), Vec::new()),
        };
        Self {
            status: report.status.as_str().to_string(),
            objective,
            pg_mw,
            lambda,
            iterations: report.iterations,
            cuts: report.cuts,
            time_s: report.time_s,
            periods: case.periods(),
            n: report.n,
            m: report.m,
            control_scheme: case.control_scheme,
            message: report.message.clone(),
        }
    }

    /// Gains as a policy, periods in file order.
    pub fn policy(&self) -> ControlPolicy {
        let mut periods: Vec<&LambdaPeriod> = self.lambda.iter().collect();
        periods.sort_by_key(|p| p.t);
        ControlPolicy {
            scheme: self.control_scheme,
            gains: periods.into_iter().map(|p| p.entries.clone()).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

/// Summary table with columns T, n, m, Cost, Iterations, Time.
pub fn report_table(results: &[ResultsFile], format: TableFormat) -> String {
    let mut out = String::new();
    let cost = |r: &ResultsFile| r.objective.map_or("-".to_string(), |v| format!("{v:.2}"));
    match format {
        TableFormat::Csv => {
            out.push_str("T,n,m,Cost,Iterations,Time\n");
            for r in results {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{:.2}",
                    r.periods,
                    r.n,
                    r.m,
                    cost(r),
                    r.iterations,
                    r.time_s
                );
            }
        }
        TableFormat::Markdown => {
            out.push_str("| T | n | m | Cost | Iterations | Time |\n");
            out.push_str("|---|---|---|---|---|---|\n");
            for r in results {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {:.2} |",
                    r.periods,
                    r.n,
                    r.m,
                    cost(r),
                    r.iterations,
                    r.time_s
                );
            }
        }
    }
    out
}
