//! Multi-agent simulation harness: scenario files, builtin worlds, the
//! global clock, metrics and run artifacts.

pub mod builtin;
pub mod metrics;
pub mod output;
pub mod run;
pub mod scenario;

pub use builtin::{builtin, builtin_scenarios};
pub use metrics::{compute_metrics, CollisionEvent, CollisionKind, CycleRow, RunMetrics, TimeStats};
pub use output::{read_cycles, read_samples_csv, write_outputs, OutputOptions};
pub use run::{run, RunError, RunOptions, RunRecord, Sample};
pub use scenario::{load_scenario, parse_scenario, resolve, Scenario, ScenarioError, ScenarioFile};

/// A finished run with its diagnostics and metrics.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub cycles: Vec<CycleRow>,
    pub metrics: RunMetrics,
}

pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let record = run(scenario, opts)?;
    let cycles: Vec<CycleRow> =
        record.reports.iter().enumerate().flat_map(|(i, rs)| rs.iter().map(move |r| CycleRow::from_report(i, r))).collect();
    let metrics = compute_metrics(scenario, record.sample_dt, &record.samples, &cycles);
    Ok(RunOutcome { record, cycles, metrics })
}
