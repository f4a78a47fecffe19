//! Dwell-time budgets and the Available/Denied phase machine.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::signals::TIME_EPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Available,
    Denied,
}

impl PhaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseKind::Available => "available",
            PhaseKind::Denied => "denied",
        }
    }

    /// Numeric code used in CSV output: 1 available, 0 denied.
    pub fn code(self) -> u8 {
        match self {
            PhaseKind::Available => 1,
            PhaseKind::Denied => 0,
        }
    }
}

/// Constants entering both dwell-time bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConstants {
    pub l_f: f64,
    pub l_y: f64,
    pub y_bar: f64,
    pub d_bar: f64,
    /// `λ_min(k1)`.
    pub k1_min: f64,
    /// `λ_min(k2)`.
    pub k2_min: f64,
    pub v_l: f64,
    pub v_u: f64,
    pub eta: f64,
}

impl AnalysisConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, val) in [("L_f", self.l_f), ("L_Y", self.l_y), ("Y_bar", self.y_bar), ("d_bar", self.d_bar)] {
            if !(val >= 0.0 && val.is_finite()) {
                return Err(SimError::Validation(format!("{name} must be finite and nonnegative")));
            }
        }
        if !(self.k1_min - self.l_f > 0.0) {
            return Err(SimError::Validation("λ_min(k1) must exceed L_f".into()));
        }
        if !(self.k2_min > 0.0) {
            return Err(SimError::Validation("λ_min(k2) must be positive".into()));
        }
        if !(self.v_l > 0.0 && self.v_l < self.v_u) {
            return Err(SimError::Validation("0 < V_l < V_u required".into()));
        }
        if !(self.v_u < 0.5 * self.eta * self.eta) {
            return Err(SimError::Validation("V_u < η²/2 required".into()));
        }
        Ok(())
    }

    /// Decay rate of the envelope while GPS is available.
    pub fn k_a(&self) -> f64 {
        ((self.k1_min - self.l_f) / 2.0).min(self.k2_min / 2.0)
    }

    pub fn l_1(&self, theta_bound: f64) -> f64 {
        self.l_f + self.l_y * theta_bound
    }

    /// Growth rate of the envelope while GPS is denied.
    pub fn k_u(&self, theta_bound: f64) -> f64 {
        (1.5 * self.l_1(theta_bound)).min(self.k2_min)
    }

    /// Offset `c = (d̄ + Ȳ θ̃)² / (2 L_1 k_u)`.
    pub fn offset(&self, theta_bound: f64) -> f64 {
        let l1 = self.l_1(theta_bound);
        let ku = self.k_u(theta_bound);
        let g = self.d_bar + self.y_bar * theta_bound;
        if g == 0.0 {
            0.0
        } else {
            g * g / (2.0 * l1 * ku)
        }
    }
}

/// Time for the decay envelope to contract from `v_start` to `V_l`; zero if already below.
pub fn min_available_dwell(v_start: f64, consts: &AnalysisConstants) -> Result<f64> {
    if !(v_start > 0.0) || !v_start.is_finite() {
        return Err(SimError::InvalidInput(format!("V must be positive, got {v_start}")));
    }
    Ok(((v_start / consts.v_l).ln() / consts.k_a()).max(0.0))
}

/// Longest Denied interval keeping the growth envelope below `V_u`.
pub fn max_denied_dwell(v_switch: f64, theta_bound: f64, consts: &AnalysisConstants) -> Result<f64> {
    if !(v_switch >= 0.0) || !v_switch.is_finite() {
        return Err(SimError::InvalidInput(format!("V must be nonnegative, got {v_switch}")));
    }
    if !(theta_bound >= 0.0) || !theta_bound.is_finite() {
        return Err(SimError::InvalidInput(format!("theta bound must be nonnegative, got {theta_bound}")));
    }
    if v_switch > consts.v_u {
        return Err(SimError::InfeasibleDwell { t: f64::NAN, v: v_switch, v_upper: consts.v_u });
    }
    let ku = consts.k_u(theta_bound);
    let c = consts.offset(theta_bound);
    if v_switch + c == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(((consts.v_u + c) / (v_switch + c)).ln() / ku)
}

/// Knobs applied on top of the analytic budgets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulePolicy {
    /// Lower limit on every Available budget.
    pub available_floor: f64,
    /// Multiplier on every Denied budget; 1 follows the bound exactly.
    pub denied_scale: f64,
    /// Switch once the remaining dwell is within this slack (half an integration step in the engine).
    pub snap: f64,
}

impl Default for SchedulePolicy {
    fn default() -> Self {
        Self { available_floor: 0.0, denied_scale: 1.0, snap: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub kind: PhaseKind,
    pub sigma: usize,
    pub t_start: f64,
    /// Minimum dwell when Available, maximum dwell when Denied.
    pub budget: f64,
}

impl Phase {
    pub fn initial(v0: f64, consts: &AnalysisConstants, policy: &SchedulePolicy) -> Result<Self> {
        let budget = min_available_dwell(v0, consts)?.max(policy.available_floor);
        Ok(Self { kind: PhaseKind::Available, sigma: 0, t_start: 0.0, budget })
    }

    pub fn is_due(&self, t: f64, policy: &SchedulePolicy) -> bool {
        t - self.t_start >= self.budget - policy.snap - TIME_EPS
    }
}

/// One row of the switch log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchRecord {
    pub sigma: usize,
    pub kind: PhaseKind,
    pub t: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub theta_bound: f64,
    pub budget: f64,
}

impl SwitchRecord {
    pub fn of(phase: &Phase, v: f64, theta_bound: f64) -> Self {
        Self { sigma: phase.sigma, kind: phase.kind, t: phase.t_start, v, theta_bound, budget: phase.budget }
    }
}

/// Transition when the current budget has elapsed; otherwise return the phase unchanged.
pub fn advance_phase(
    phase: &Phase,
    t: f64,
    v_now: f64,
    theta_bound: f64,
    consts: &AnalysisConstants,
    policy: &SchedulePolicy,
) -> Result<Phase> {
    if !phase.is_due(t, policy) {
        return Ok(*phase);
    }
    match phase.kind {
        PhaseKind::Available => {
            let budget = max_denied_dwell(v_now, theta_bound, consts).map_err(|e| match e {
                SimError::InfeasibleDwell { v, v_upper, .. } => SimError::InfeasibleDwell { t, v, v_upper },
                other => other,
            })?;
            Ok(Phase { kind: PhaseKind::Denied, sigma: phase.sigma, t_start: t, budget: budget * policy.denied_scale })
        }
        PhaseKind::Denied => {
            let budget = min_available_dwell(v_now.max(f64::MIN_POSITIVE), consts)?.max(policy.available_floor);
            Ok(Phase { kind: PhaseKind::Available, sigma: phase.sigma + 1, t_start: t, budget })
        }
    }
}
