#![allow(dead_code)]

use dwellsim::config::{Scenario, ScenarioFile};
use dwellsim::engine::{run, Record, SimTrace};
use dwellsim::scheduler::PhaseKind;

pub fn build(edit: impl FnOnce(&mut ScenarioFile)) -> Scenario {
    let mut f = ScenarioFile::default();
    edit(&mut f);
    f.build().expect("valid scenario")
}

pub fn simulate(edit: impl FnOnce(&mut ScenarioFile)) -> SimTrace {
    run(&build(edit).setup).expect("run succeeds")
}

/// Groups records of Denied phases by σ.
pub fn denied_runs(trace: &SimTrace) -> Vec<Vec<&Record>> {
    let mut out: Vec<Vec<&Record>> = Vec::new();
    let mut current: Option<usize> = None;
    for r in &trace.records {
        if r.phase == PhaseKind::Denied {
            if current != Some(r.sigma) {
                out.push(Vec::new());
                current = Some(r.sigma);
            }
            out.last_mut().unwrap().push(r);
        } else {
            current = None;
        }
    }
    out
}

pub fn record_at(trace: &SimTrace, t: f64) -> &Record {
    trace.records.iter().min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs())).unwrap()
}

/// Tight-growth linear model: `f(x) = A x` with `‖A‖ = 1` and real growth rate 0.6, no regressor, no disturbance.
pub const TIGHT_GROWTH: &str = include_str!("../../../../scenarios/tight_growth.json");
