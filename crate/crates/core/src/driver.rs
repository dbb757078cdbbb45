//! Cutting-plane loop: solve the master, separate, add cuts, repeat.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::case_io::GridCase;
use crate::error::Result;
use crate::lp::Backend;
use crate::master::{CandidateSolution, Cut, CutFamily, CutStatus, MasterOutcome, MasterProblem};
use crate::network::DCNetwork;
use crate::separation::{separate_all, SeparationContext, SeparationOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub max_cuts_per_iter: usize,
    pub backend: Backend,
    /// Wall-clock limit in seconds; `None` runs until another stop rule.
    pub time_limit_s: Option<f64>,
}

impl Default for DriverOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
            max_cuts_per_iter: 20,
            backend: Backend::Auto,
            time_limit_s: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    Stalled,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Optimal => "optimal",
            RunStatus::Infeasible => "infeasible",
            RunStatus::IterationLimit => "iteration_limit",
            RunStatus::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CutCounts {
    pub line: usize,
    pub speed: usize,
    pub charge: usize,
    pub disjunctive: usize,
}

impl CutCounts {
    fn add(&mut self, family: CutFamily) {
        match family {
            CutFamily::Line => self.line += 1,
            CutFamily::Speed => self.speed += 1,
            CutFamily::Charge => self.charge += 1,
            CutFamily::Disjunctive => self.disjunctive += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.line + self.speed + self.charge + self.disjunctive
    }
}

/// One master solve and the separation round that followed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Master variables and constraints at solve time.
    pub n: usize,
    pub m: usize,
    pub objective: f64,
    pub findings: usize,
    pub cuts_added: CutCounts,
    /// Seconds spent in the master solve and in separation.
    pub master_s: f64,
    pub separation_s: f64,
    /// Seconds since the start of the run.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub iterations: usize,
    pub log: Vec<IterationRecord>,
    /// Last master candidate; `None` when the first solve was infeasible.
    pub solution: Option<CandidateSolution>,
    pub cuts: CutCounts,
    /// Every pooled cut, in insertion order.
    pub cut_pool: Vec<Cut>,
    /// Master size at the end of the run.
    pub n: usize,
    pub m: usize,
    pub time_s: f64,
    pub message: Option<String>,
}

impl RunReport {
    /// Iteration log as CSV.
    pub fn log_csv(&self) -> String {
        let mut out =
            String::from("iteration,n,m,objective,cuts_line,cuts_speed,cuts_charge,cuts_disjunctive,master_s,separation_s,wall_time_s\n");
        for r in &self.log {
            let c = &r.cuts_added;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6}",
                r.iteration,
                r.n,
                r.m,
                r.objective,
                c.line,
                c.speed,
                c.charge,
                c.disjunctive,
                r.master_s,
                r.separation_s,
                r.wall_time_s
            );
        }
        out
    }

    /// Master objectives in solve order.
    pub fn objectives(&self) -> Vec<f64> {
        self.log.iter().map(|r| r.objective).collect()
    }
}

pub fn run_cutting_plane(case: &GridCase, options: &DriverOptions) -> Result<RunReport> {
    let start = Instant::now();
    case.validate()?;
    let net = DCNetwork::build(case)?;
    let mut master = MasterProblem::build(case, &net)?.with_backend(options.backend);
    let ctx = SeparationContext::new(
        case,
        &net,
        SeparationOptions {
            tol: options.tol,
            max_cuts: options.max_cuts_per_iter,
        },
    );

    let mut log: Vec<IterationRecord> = Vec::new();
    let mut solution: Option<CandidateSolution> = None;
    let mut totals = CutCounts::default();
    let mut status = RunStatus::IterationLimit;
    let mut message = None;

    for iteration in 1..=options.max_iter {
        let (n, m) = (master.num_vars(), master.num_constraints());
        let solve_start = Instant::now();
        let candidate = match master.solve()? {
            MasterOutcome::Optimal(c) => c,
            MasterOutcome::Infeasible => {
                status = RunStatus::Infeasible;
                message = Some(format!(
                    "robust problem infeasible after {} cuts",
                    master.cuts().len()
                ));
                break;
            }
        };
        if let Some(prev) = log.last() {
            let slack = 1e-9 * (1.0 + prev.objective.abs());
            if candidate.objective < prev.objective - slack {
                log::warn!(
                    "master objective decreased from {} to {}",
                    prev.objective,
                    candidate.objective
                );
            }
        }
        let master_s = solve_start.elapsed().as_secs_f64();
        let separation_start = Instant::now();
        let cert = separate_all(&ctx, &candidate)?;
        let separation_s = separation_start.elapsed().as_secs_f64();
        let mut added = CutCounts::default();
        for cut in &cert.cuts {
            let family = cut.provenance.family;
            if master.add_cut(cut.clone()) == CutStatus::Added {
                added.add(family);
                totals.add(family);
            }
        }
        log.push(IterationRecord {
            iteration,
            n,
            m,
            objective: candidate.objective,
            findings: cert.findings.len(),
            cuts_added: added,
            master_s,
            separation_s,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        log::info!(
            "iteration {iteration}: objective {:.4}, {} violations, {} cuts, master {master_s:.2} s, separation {separation_s:.2} s",
            candidate.objective,
            cert.findings.len(),
            added.total()
        );
        solution = Some(candidate);
        if cert.is_feasible() {
            status = RunStatus::Optimal;
            break;
        }
        if added.total() == 0 {
            status = RunStatus::Stalled;
            message = Some(format!(
                "{} violations found but no new cut separates the candidate",
                cert.findings.len()
            ));
            break;
        }
        if options
            .time_limit_s
            .is_some_and(|limit| start.elapsed().as_secs_f64() > limit)
        {
            message = Some("time limit reached; the plan is not certified robust".into());
            break;
        }
    }
    if status == RunStatus::IterationLimit && message.is_none() {
        message = Some(format!(
            "no certificate after {} iterations; the objective is a lower bound only",
            options.max_iter
        ));
    }

    Ok(RunReport {
        status,
        iterations: log.len(),
        log,
        solution,
        cuts: totals,
        cut_pool: master.cuts().to_vec(),
        n: master.num_vars(),
        m: master.num_constraints(),
        time_s: start.elapsed().as_secs_f64(),
        message,
    })
}
