//! Solves the synthetic grid for a range of horizons and prints the summary
//! table. Usage: `scaling [T...]` (default 6 8 10 12).

use battopf_core::results::{report_table, TableFormat};
use battopf_core::{run_cutting_plane, synthetic_case, DriverOptions, ResultsFile, SyntheticOptions};

fn main() {
    let horizons: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("horizon must be an integer"))
        .collect();
    let horizons = if horizons.is_empty() {
        vec![6, 8, 10, 12]
    } else {
        horizons
    };
    let mut rows = Vec::new();
    for periods in horizons {
        let case = synthetic_case(&SyntheticOptions {
            periods,
            ..SyntheticOptions::default()
        })
        .expect("synthetic case builds");
        let report = run_cutting_plane(&case, &DriverOptions::default()).expect("solver runs");
        let master: f64 = report.log.iter().map(|r| r.master_s).sum();
        let separation: f64 = report.log.iter().map(|r| r.separation_s).sum();
        eprintln!(
            "T={periods}: {} in {} iterations, master {master:.1} s, separation {separation:.1} s",
            report.status.as_str(),
            report.iterations
        );
        rows.push(ResultsFile::from_report(&case, &report));
    }
    print!("{}", report_table(&rows, TableFormat::Markdown));
}
