use std::fs;
use std::io::Write;
use std::path::Path;

use csal_core::evaluation::{active_replicate, replicate_problem, LearnerKind, ReplicateRow};
use csal_core::learner::{Action, StepEvent, Termination};
use csal_core::problems::validate::{validate_spec, CheckSettings};
use serde::Serialize;

use crate::config::Resolved;
use crate::CliError;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let fail = |e: csv::Error| CliError::Runtime(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    for r in rows {
        w.serialize(r).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))
}

#[derive(Serialize)]
struct TraceRow {
    t: u64,
    budget_used: u64,
    action: &'static str,
    depth: u32,
    index: String,
    unclassified: usize,
    classified: usize,
    max_depth: u32,
}

impl From<&StepEvent> for TraceRow {
    fn from(e: &StepEvent) -> Self {
        Self {
            t: e.t,
            budget_used: e.budget_used,
            action: e.action.as_str(),
            depth: e.depth,
            index: e.index.to_string(),
            unclassified: e.unclassified,
            classified: e.classified,
            max_depth: e.max_depth,
        }
    }
}

#[derive(Serialize)]
struct RunReport<'a> {
    problem_hash: String,
    problem: &'a csal_core::ProblemSpec,
    seed: u64,
    budget: u64,
    alpha: f64,
    smoothness: f64,
    geometry: csal_core::PartitionGeometry,
    noise: csal_core::NoiseModel,
    termination: Termination,
    steps: usize,
    refinements: usize,
    queries_total: u64,
    queries_per_label: &'a [u64],
    max_depth: u32,
    active_by_depth: &'a [u64],
    excess_risk: f64,
    excess_risk_stderr: f64,
    classified_mass: f64,
    num_eval: usize,
}

pub fn run(cfg: &Resolved) -> Result<(), CliError> {
    let params = cfg.run_params()?;
    let problem = replicate_problem(&cfg.config.problem, cfg.seed, 0, 1, cfg.learning.noise)
        .map_err(|e| CliError::Config(format!("`problem`: {e}")))?;
    let mut events = Vec::new();
    let (row, _) = active_replicate(
        problem.as_ref(),
        params.budget,
        0,
        cfg.seed,
        &cfg.learning,
        cfg.config.evaluation.num_eval,
        Some(&mut events),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;

    create_dir(&cfg.out)?;
    let trace: Vec<TraceRow> = events.iter().map(TraceRow::from).collect();
    write_csv(&cfg.out.join("trace.csv"), &trace)?;
    let report = RunReport {
        problem_hash: cfg.config.problem.hash(),
        problem: &cfg.config.problem,
        seed: cfg.seed,
        budget: params.budget,
        alpha: cfg.learning.alpha,
        smoothness: cfg.learning.smoothness,
        geometry: cfg.learning.geometry,
        noise: cfg.learning.noise,
        termination: row.termination.expect("active rows carry a termination"),
        steps: events.len(),
        refinements: events.iter().filter(|e| e.action == Action::Refine).count(),
        queries_total: row.queries_total,
        queries_per_label: &row.queries_per_label,
        max_depth: row.max_depth,
        active_by_depth: &row.active_by_depth,
        excess_risk: row.excess_risk,
        excess_risk_stderr: row.excess_risk_stderr,
        classified_mass: row.classified_mass,
        num_eval: cfg.config.evaluation.num_eval,
    };
    write_json(&cfg.out.join("report.json"), &report)?;
    println!(
        "{} steps, {} queries, excess risk {:.3e} ± {:.1e}; wrote {}",
        report.steps,
        report.queries_total,
        report.excess_risk,
        report.excess_risk_stderr,
        cfg.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    learner: &'static str,
    budget: u64,
    replicate: u32,
    seed: u64,
    excess_risk: f64,
    max_depth: u32,
    classified_mass: f64,
    queries_total: u64,
    queries_per_label: String,
}

impl From<&ReplicateRow> for SweepRow {
    fn from(r: &ReplicateRow) -> Self {
        Self {
            learner: r.learner.as_str(),
            budget: r.budget,
            replicate: r.replicate,
            seed: r.seed,
            excess_risk: r.excess_risk,
            max_depth: r.max_depth,
            classified_mass: r.classified_mass,
            queries_total: r.queries_total,
            queries_per_label: r
                .queries_per_label
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(";"),
        }
    }
}

pub fn sweep(cfg: &Resolved) -> Result<(), CliError> {
    let settings = cfg.sweep_settings()?;
    let (rows, report) = csal_core::evaluation::run_sweep(&cfg.config.problem, &settings)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    create_dir(&cfg.out)?;
    let csv_rows: Vec<SweepRow> = rows.iter().map(SweepRow::from).collect();
    write_csv(&cfg.out.join("sweep.csv"), &csv_rows)?;
    write_json(&cfg.out.join("report.json"), &report)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let slope = |s: &Option<csal_core::evaluation::SlopeReport>| {
        s.as_ref().map_or("n/a".to_string(), |s| format!("{:.3}", s.fit.slope))
    };
    let active = rows.iter().filter(|r| r.learner == LearnerKind::Active).count();
    println!(
        "{active} active + {} passive runs; slopes active {} passive {}; wrote {}",
        rows.len() - active,
        slope(&report.active_slope),
        slope(&report.passive_slope),
        cfg.out.display()
    );
    Ok(())
}

pub fn validate(cfg: &Resolved) -> Result<(), CliError> {
    let mut rng = csal_core::evaluation::stream_rng(cfg.seed, 0);
    let checks = validate_spec(&cfg.config.problem, &CheckSettings::default(), &mut rng)
        .map_err(|e| CliError::Config(format!("`problem`: {e}")))?;
    create_dir(&cfg.out)?;
    write_json(&cfg.out.join("validate.json"), &checks)?;
    let mut stdout = std::io::stdout().lock();
    for c in &checks {
        let _ = writeln!(
            stdout,
            "{:<22} {}  worst {:+.3e}  {}",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.worst,
            c.detail
        );
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("failed checks: {}", failed.join(", "))))
    }
}
