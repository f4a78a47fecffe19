//! Scenario execution and CSV emission for the command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::{Scenario, ScenarioFile};
use crate::engine::{run, SimTrace};
use crate::error::{Result, SimError};
use crate::scheduler::PhaseKind;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    Config = 1,
    Numerical = 2,
    Safety = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn of_error(e: &SimError) -> Self {
        match e {
            SimError::NumericalBlowup { .. } => ExitStatus::Numerical,
            SimError::InfeasibleDwell { .. } => ExitStatus::Safety,
            _ => ExitStatus::Config,
        }
    }

    pub fn of_trace(trace: &SimTrace) -> Self {
        if trace.safety_violation.is_some() {
            ExitStatus::Safety
        } else {
            ExitStatus::Ok
        }
    }
}

pub const TRACE_FILE: &str = "trace.csv";
pub const SWITCH_FILE: &str = "switches.csv";
pub const DWELL_FILE: &str = "dwell.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Column names of `trace.csv` for state dimension `n` and parameter dimension `p`.
pub fn trace_header(n: usize, p: usize) -> Vec<String> {
    let idx = |prefix: &str, k: usize| (1..=k).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>();
    let mut h = vec!["t".to_string()];
    h.extend(idx("x", n));
    h.extend(idx("xhat", n));
    h.extend(idx("xd", n));
    h.extend(idx("u", n));
    h.extend(idx("thetahat", p));
    h.extend(idx("thetatilde", p));
    h.extend(idx("e1_", n));
    h.extend(idx("e2_", n));
    h.extend(["V", "phase", "sigma"].map(String::from));
    h
}

pub const SWITCH_HEADER: [&str; 6] = ["sigma", "kind", "t", "V", "theta_bound", "budget"];
pub const DWELL_HEADER: [&str; 2] = ["sigma", "denied_budget"];

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new().has_headers(false).from_path(path)?)
}

/// Writes `trace.csv`, `switches.csv` and `dwell.csv` into `dir`.
pub fn write_outputs(dir: &Path, trace: &SimTrace, n: usize, p: usize) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut w = writer(&dir.join(TRACE_FILE))?;
    w.write_record(trace_header(n, p))?;
    for r in &trace.records {
        let mut row = vec![r.t.to_string()];
        for v in [&r.x, &r.x_hat, &r.x_d, &r.u, &r.theta_hat, &r.theta_tilde, &r.e1, &r.e2] {
            row.extend(v.iter().map(f64::to_string));
        }
        row.push(r.v.to_string());
        row.push(r.phase.code().to_string());
        row.push(r.sigma.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = writer(&dir.join(SWITCH_FILE))?;
    w.write_record(SWITCH_HEADER)?;
    for s in &trace.switches {
        w.write_record([
            s.sigma.to_string(),
            s.kind.as_str().to_string(),
            s.t.to_string(),
            s.v.to_string(),
            s.theta_bound.to_string(),
            s.budget.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = writer(&dir.join(DWELL_FILE))?;
    w.write_record(DWELL_HEADER)?;
    for (sigma, b) in &trace.denied_budgets {
        w.write_record([sigma.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Aggregate figures of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_theta_tilde: f64,
    pub denied_completed: usize,
    pub mean_budget: f64,
    pub max_budget: f64,
    pub max_v: f64,
    pub status: i32,
}

impl RunSummary {
    pub fn of(trace: &SimTrace, scenario: &Scenario) -> Self {
        let theta = scenario.setup.model.theta_true();
        let final_theta_tilde = if trace.final_theta_hat.len() == theta.len() {
            (theta - &trace.final_theta_hat).norm()
        } else {
            (theta - &scenario.setup.estimator.theta_hat0).norm()
        };
        // A Denied interval is complete once a later switch closed it.
        let denied_completed = trace
            .switches
            .iter()
            .enumerate()
            .filter(|(i, s)| s.kind == PhaseKind::Denied && *i + 1 < trace.switches.len())
            .count();
        let budgets: Vec<f64> = trace.denied_budgets.iter().map(|(_, b)| *b).collect();
        let (mean_budget, max_budget) = if budgets.is_empty() {
            (0.0, 0.0)
        } else {
            (budgets.iter().sum::<f64>() / budgets.len() as f64, budgets.iter().cloned().fold(f64::MIN, f64::max))
        };
        Self {
            final_theta_tilde,
            denied_completed,
            mean_budget,
            max_budget,
            max_v: trace.max_v,
            status: ExitStatus::of_trace(trace).code(),
        }
    }
}

/// Outcome of one scenario run.
#[derive(Debug)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub trace: Option<SimTrace>,
    pub summary: Option<RunSummary>,
    pub error: Option<SimError>,
}

/// Runs a scenario and writes its CSV files into `dir`.
///
/// Engine errors are returned inside the outcome with the matching status;
/// the trace files are written whenever the run completed.
pub fn run_scenario(scenario: &Scenario, dir: &Path) -> Result<RunOutcome> {
    match run(&scenario.setup) {
        Ok(trace) => {
            write_outputs(dir, &trace, scenario.setup.model.n(), scenario.setup.model.p())?;
            let summary = RunSummary::of(&trace, scenario);
            Ok(RunOutcome { status: ExitStatus::of_trace(&trace), trace: Some(trace), summary: Some(summary), error: None })
        }
        Err(e) => Ok(RunOutcome { status: ExitStatus::of_error(&e), trace: None, summary: None, error: Some(e) }),
    }
}

/// Scalars that can be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    DBar,
    KTheta,
    N,
    LambdaBar,
    VUpper,
}

impl FromStr for SweepParam {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d_bar" => Ok(SweepParam::DBar),
            "k_theta" => Ok(SweepParam::KTheta),
            "N" | "n" => Ok(SweepParam::N),
            "lambda_bar" => Ok(SweepParam::LambdaBar),
            "V_u" | "v_u" => Ok(SweepParam::VUpper),
            other => Err(SimError::Config(format!(
                "unknown sweep parameter '{other}' (expected d_bar, k_theta, N, lambda_bar or V_u)"
            ))),
        }
    }
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::DBar => "d_bar",
            SweepParam::KTheta => "k_theta",
            SweepParam::N => "N",
            SweepParam::LambdaBar => "lambda_bar",
            SweepParam::VUpper => "V_u",
        }
    }

    pub fn apply(self, file: &mut ScenarioFile, value: f64) -> Result<()> {
        match self {
            SweepParam::DBar => file.model.d_bar = value,
            SweepParam::KTheta => file.estimator.k_theta = value,
            SweepParam::N => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(SimError::Config(format!("N must be a positive integer, got {value}")));
                }
                file.estimator.n = value as usize;
            }
            SweepParam::LambdaBar => file.estimator.lambda_bar = value,
            SweepParam::VUpper => file.scheduler.v_u = value,
        }
        Ok(())
    }
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: &'static str,
    pub value: f64,
    pub summary: RunSummary,
}

pub const SUMMARY_HEADER: [&str; 8] =
    ["param", "value", "final_theta_tilde", "denied_completed", "mean_budget", "max_budget", "max_V", "status"];

/// Runs one scenario per value in parallel, each in `dir/<param>_<index>`,
/// and writes `dir/summary.csv`.
///
/// Values whose configuration is invalid abort the sweep before any run.
/// Runs that fail in the engine are reported with NaN figures and their status.
pub fn run_sweep(file: &ScenarioFile, param: SweepParam, values: &[f64], dir: &Path) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(SimError::Config("sweep needs at least one value".into()));
    }
    let scenarios = values
        .iter()
        .map(|&v| {
            let mut f = file.clone();
            param.apply(&mut f, v)?;
            f.build()
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = scenarios
        .par_iter()
        .zip(values.par_iter())
        .enumerate()
        .map(|(i, (sc, &value))| {
            let sub: PathBuf = dir.join(format!("{}_{i}", param.as_str()));
            let out = run_scenario(sc, &sub)?;
            let summary = out.summary.unwrap_or(RunSummary {
                final_theta_tilde: f64::NAN,
                denied_completed: 0,
                mean_budget: f64::NAN,
                max_budget: f64::NAN,
                max_v: f64::NAN,
                status: out.status.code(),
            });
            Ok(SweepRow { param: param.as_str(), value, summary })
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(dir)?;
    let mut w = writer(&dir.join(SUMMARY_FILE))?;
    w.write_record(SUMMARY_HEADER)?;
    for r in &rows {
        let s = &r.summary;
        w.write_record([
            r.param.to_string(),
            r.value.to_string(),
            s.final_theta_tilde.to_string(),
            s.denied_completed.to_string(),
            s.mean_budget.to_string(),
            s.max_budget.to_string(),
            s.max_v.to_string(),
            s.status.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

/// Worst status across sweep rows.
pub fn sweep_status(rows: &[SweepRow]) -> ExitStatus {
    match rows.iter().map(|r| r.summary.status).max().unwrap_or(0) {
        0 => ExitStatus::Ok,
        1 => ExitStatus::Config,
        2 => ExitStatus::Numerical,
        _ => ExitStatus::Safety,
    }
}
