//! Fixed-step integration of plant, observer, estimator and filters under the phase schedule.

use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::aggregation::{Admission, EwState, ExcitationMonitor, HistoryStack};
use crate::control::{control_input, errors, lyapunov, observer_rate, sliding_term_unchecked, GainSet};
use crate::dynamics::{DisturbanceGenerator, SystemModel, Trajectory};
use crate::error::{check_dim, Result, SimError};
use crate::estimator::{theta_rate, uub_constants, EstimatorConfig, ThetaBound};
use crate::linalg::lambda_min;
use crate::scheduler::{advance_phase, AnalysisConstants, Phase, PhaseKind, SchedulePolicy, SwitchRecord};
use crate::signals::{ExponentialFilter, FilterConfig, FilteredPair, SampleBuffer, TIME_EPS};

/// Classical fourth-order Runge–Kutta step.
pub fn rk4_step<F>(state: &DVector<f64>, t: f64, h: f64, mut rate: F) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    if !(h > 0.0) {
        return Err(SimError::InvalidInput(format!("step must be positive, got {h}")));
    }
    let finite = |k: &DVector<f64>| k.iter().all(|v| v.is_finite());
    let k1 = rate(t, state);
    if !finite(&k1) {
        return Err(SimError::NumericalBlowup { t });
    }
    let k2 = rate(t + 0.5 * h, &(state + &k1 * (0.5 * h)));
    if !finite(&k2) {
        return Err(SimError::NumericalBlowup { t });
    }
    let k3 = rate(t + 0.5 * h, &(state + &k2 * (0.5 * h)));
    if !finite(&k3) {
        return Err(SimError::NumericalBlowup { t });
    }
    let k4 = rate(t + h, &(state + &k3 * h));
    if !finite(&k4) {
        return Err(SimError::NumericalBlowup { t });
    }
    let next = state + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
    if !finite(&next) {
        return Err(SimError::NumericalBlowup { t });
    }
    Ok(next)
}

/// Filter/aggregation pairing used for parameter estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Windowed integration feeding a history stack.
    #[default]
    Cl,
    /// Windowed integration feeding exponentially weighted integrals.
    Ew,
    /// Exponential regressor filter feeding a history stack.
    Expfilter,
}

impl FromStr for Variant {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cl" => Ok(Variant::Cl),
            "ew" => Ok(Variant::Ew),
            "expfilter" => Ok(Variant::Expfilter),
            other => Err(SimError::Config(format!("unknown variant {other:?} (expected cl, ew or expfilter)"))),
        }
    }
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Cl => "cl",
            Variant::Ew => "ew",
            Variant::Expfilter => "expfilter",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub h: f64,
    pub t_end: f64,
    pub record_stride: usize,
    pub seed: u64,
    /// Disturbance sample-and-hold period.
    pub hold_step: f64,
    /// Integrate up to each switch instant exactly instead of snapping to the step grid.
    pub exact_switching: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { h: 1e-3, t_end: 9.0, record_stride: 10, seed: 0, hold_step: 1e-3, exact_switching: true }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h <= 1e-2) {
            return Err(SimError::Validation(format!("step h must lie in (0, 0.01], got {}", self.h)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(SimError::Validation(format!("t_end must be finite and nonnegative, got {}", self.t_end)));
        }
        if self.record_stride == 0 {
            return Err(SimError::Validation("record_stride must be positive".into()));
        }
        if !(self.hold_step > 0.0 && self.hold_step.is_finite()) {
            return Err(SimError::Validation("hold_step must be positive".into()));
        }
        Ok(())
    }
}

/// Everything one run needs.
#[derive(Clone)]
pub struct Setup {
    pub model: SystemModel,
    pub trajectory: Arc<dyn Trajectory>,
    pub estimator: EstimatorConfig,
    pub gains: GainSet,
    pub consts: AnalysisConstants,
    pub policy: SchedulePolicy,
    pub filter: FilterConfig,
    pub stack_capacity: usize,
    pub admission_threshold: f64,
    pub ew_alpha: f64,
    pub engine: EngineConfig,
    pub variant: Variant,
    pub x0: DVector<f64>,
    pub x_hat0: DVector<f64>,
}

impl std::fmt::Debug for Setup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Setup")
            .field("model", &self.model)
            .field("estimator", &self.estimator)
            .field("gains", &self.gains)
            .field("consts", &self.consts)
            .field("policy", &self.policy)
            .field("engine", &self.engine)
            .field("variant", &self.variant)
            .finish_non_exhaustive()
    }
}

impl Setup {
    pub fn validate(&self) -> Result<()> {
        let n = self.model.n();
        let p = self.model.p();
        check_dim("x0", n, self.x0.len())?;
        check_dim("x_hat0", n, self.x_hat0.len())?;
        check_dim("theta_hat0", p, self.estimator.theta_hat0.len())?;
        self.estimator.validate()?;
        self.gains.validate(n)?;
        self.consts.validate()?;
        self.filter.validate()?;
        self.engine.validate()?;
        if self.stack_capacity == 0 {
            return Err(SimError::Validation("history stack size N must be positive".into()));
        }
        if !(self.admission_threshold >= 0.0) {
            return Err(SimError::Validation("admission threshold must be nonnegative".into()));
        }
        if !(self.ew_alpha > 0.0) {
            return Err(SimError::Validation("ew_alpha must be positive".into()));
        }
        if !(self.policy.available_floor >= 0.0 && self.policy.denied_scale > 0.0) {
            return Err(SimError::Validation("available_floor must be >= 0 and denied_scale > 0".into()));
        }
        Ok(())
    }
}

/// One uniformly sampled trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub x: DVector<f64>,
    pub x_hat: DVector<f64>,
    pub x_d: DVector<f64>,
    pub u: DVector<f64>,
    pub theta_hat: DVector<f64>,
    /// `θ − θ̂`, diagnostics only.
    pub theta_tilde: DVector<f64>,
    pub e1: DVector<f64>,
    pub e2: DVector<f64>,
    pub v: f64,
    pub phase: PhaseKind,
    pub sigma: usize,
    /// `λ_min(Y_σ)` of the active aggregate.
    pub lambda_min: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub records: Vec<Record>,
    pub switches: Vec<SwitchRecord>,
    /// `(σ, Δt_σ^u)` for each Denied interval that started.
    pub denied_budgets: Vec<(usize, f64)>,
    pub admissions: Vec<(usize, Admission)>,
    /// `(σ, T_σ)` for each closed Available interval.
    pub excitation_times: Vec<(usize, Option<f64>)>,
    /// Largest `V` over every integration step.
    pub max_v: f64,
    /// Largest `‖Ξ_σ‖` seen (diagnostics; needs the disturbance integral).
    pub max_xi_sigma: f64,
    /// Largest `‖U_σ − Y_σ θ‖` seen (diagnostics; uses the true parameters).
    pub max_mre_residual: f64,
    /// First time `V` exceeded `V_u (1 + 10⁻³)`.
    pub safety_violation: Option<f64>,
    pub final_x: DVector<f64>,
    pub final_x_hat: DVector<f64>,
    pub final_theta_hat: DVector<f64>,
}

/// Relative slack on `V_u` tolerated by the safety monitor.
pub const SAFETY_SLACK: f64 = 1e-3;

/// Offsets of the blocks in the composite state
/// `(x, x̂, θ̂, ∫(f+u), ∫Y, ∫d, ζ, Y_f)`.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    p: usize,
}

impl Layout {
    fn len(&self) -> usize {
        5 * self.n + self.p + 2 * self.n * self.p
    }
    fn x(&self) -> usize {
        0
    }
    fn x_hat(&self) -> usize {
        self.n
    }
    fn theta(&self) -> usize {
        2 * self.n
    }
    fn int_fu(&self) -> usize {
        2 * self.n + self.p
    }
    fn int_y(&self) -> usize {
        3 * self.n + self.p
    }
    fn int_d(&self) -> usize {
        3 * self.n + self.p + self.n * self.p
    }
    fn zeta(&self) -> usize {
        4 * self.n + self.p + self.n * self.p
    }
    fn y_f(&self) -> usize {
        5 * self.n + self.p + self.n * self.p
    }

    fn vec(&self, s: &DVector<f64>, at: usize, len: usize) -> DVector<f64> {
        DVector::from_column_slice(&s.as_slice()[at..at + len])
    }
    fn mat(&self, s: &DVector<f64>, at: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.p, &s.as_slice()[at..at + self.n * self.p])
    }
    fn put(&self, s: &mut DVector<f64>, at: usize, vals: &[f64]) {
        s.as_mut_slice()[at..at + vals.len()].copy_from_slice(vals);
    }
}

/// Quantities held constant across one integration step.
struct StepInputs<'a> {
    phase: PhaseKind,
    theta_bound: f64,
    u_sigma: &'a DVector<f64>,
    y_sigma: &'a DMatrix<f64>,
    t_sigma: Option<f64>,
    d: DVector<f64>,
    filter_active: bool,
}

struct Feedback {
    x_d: DVector<f64>,
    u: DVector<f64>,
    v_r: Option<DVector<f64>>,
}

struct Runner<'a> {
    s: &'a Setup,
    lay: Layout,
    state: DVector<f64>,
    phase: Phase,
    bound: ThetaBound,
    buffer: SampleBuffer,
    stack: HistoryStack,
    ew: EwState,
    monitor: ExcitationMonitor,
    filter: ExponentialFilter,
    disturbance: DisturbanceGenerator,
    last_pair_t: f64,
    trace: SimTrace,
}

impl<'a> Runner<'a> {
    fn new(s: &'a Setup) -> Result<Self> {
        let n = s.model.n();
        let p = s.model.p();
        let lay = Layout { n, p };
        let mut state = DVector::zeros(lay.len());
        lay.put(&mut state, lay.x(), s.x0.as_slice());
        lay.put(&mut state, lay.x_hat(), s.x_hat0.as_slice());
        lay.put(&mut state, lay.theta(), s.estimator.theta_hat0.as_slice());
        let v0 = errors(&s.x0, &s.x_hat0, &s.trajectory.value(0.0))?.v;
        let phase = Phase::initial(v0.max(f64::MIN_POSITIVE), &s.consts, &s.policy)?;
        Ok(Self {
            s,
            lay,
            state,
            phase,
            bound: ThetaBound::new(s.estimator.initial_bound()),
            buffer: SampleBuffer::new(s.model.dynamics().clone(), s.filter.window)?,
            stack: HistoryStack::new(s.stack_capacity, s.admission_threshold, n, p)?,
            ew: EwState::new(s.ew_alpha, p)?,
            monitor: ExcitationMonitor::new(s.estimator.lambda_y),
            filter: ExponentialFilter::new(s.filter.beta, n, p)?,
            disturbance: DisturbanceGenerator::new(s.engine.seed, s.model.d_bar(), s.engine.hold_step, n)?,
            last_pair_t: 0.0,
            trace: SimTrace::default(),
        })
    }

    fn policy(&self) -> SchedulePolicy {
        let snap = if self.s.engine.exact_switching { 0.0 } else { 0.5 * self.s.engine.h };
        SchedulePolicy { snap, ..self.s.policy }
    }

    fn aggregates(&self) -> (&DVector<f64>, &DMatrix<f64>) {
        match self.s.variant {
            Variant::Ew => (self.ew.u_sigma(), self.ew.y_sigma()),
            Variant::Cl | Variant::Expfilter => (self.stack.u_sigma(), self.stack.y_sigma()),
        }
    }

    fn lambda_now(&self) -> f64 {
        match self.s.variant {
            Variant::Ew => lambda_min(self.ew.y_sigma()),
            Variant::Cl | Variant::Expfilter => self.stack.lambda_min(),
        }
    }

    /// Controller and sliding term from the observer side only.
    fn feedback(
        s: &Setup,
        t: f64,
        x: &DVector<f64>,
        x_hat: &DVector<f64>,
        theta_hat: &DVector<f64>,
        phase: PhaseKind,
        theta_bound: f64,
    ) -> Result<Feedback> {
        let (x_d, xd_rate) = s.trajectory.desired(t);
        let e2 = x_hat - &x_d;
        let v_r = match phase {
            PhaseKind::Available => {
                let e1 = x - x_hat;
                Some(sliding_term_unchecked(&e1, theta_bound, s.consts.d_bar, s.consts.y_bar, &s.gains))
            }
            PhaseKind::Denied => None,
        };
        let u = control_input(
            s.model.dynamics().as_ref(),
            t,
            x_hat,
            theta_hat,
            &e2,
            &xd_rate,
            &s.gains,
            phase,
            v_r.as_ref(),
        )?;
        Ok(Feedback { x_d, u, v_r })
    }

    fn rate(s: &Setup, lay: Layout, inp: &StepInputs<'_>, t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        let (n, p) = (lay.n, lay.p);
        let dynamics = s.model.dynamics().as_ref();
        let x = lay.vec(y, lay.x(), n);
        let x_hat = lay.vec(y, lay.x_hat(), n);
        let theta_hat = lay.vec(y, lay.theta(), p);
        let fb = Self::feedback(s, t, &x, &x_hat, &theta_hat, inp.phase, inp.theta_bound)?;

        let mut out = DVector::zeros(lay.len());
        let f_x = dynamics.drift(t, &x);
        let y_x = dynamics.regressor(t, &x);
        let x_rate = &f_x + &fb.u + &y_x * s.model.theta_true() + &inp.d;
        let xh_rate = observer_rate(dynamics, t, &x_hat, &theta_hat, &fb.u, inp.phase, fb.v_r.as_ref())?;
        lay.put(&mut out, lay.x(), x_rate.as_slice());
        lay.put(&mut out, lay.x_hat(), xh_rate.as_slice());
        if inp.phase == PhaseKind::Available {
            let th_rate = theta_rate(&s.estimator, &theta_hat, inp.u_sigma, inp.y_sigma, t, inp.t_sigma);
            lay.put(&mut out, lay.theta(), th_rate.as_slice());
        }
        let fu = &f_x + &fb.u;
        lay.put(&mut out, lay.int_fu(), fu.as_slice());
        lay.put(&mut out, lay.int_y(), y_x.as_slice());
        lay.put(&mut out, lay.int_d(), inp.d.as_slice());
        if inp.filter_active {
            let beta = s.filter.beta;
            let zeta = lay.vec(y, lay.zeta(), n);
            let y_f = lay.mat(y, lay.y_f());
            let zeta_rate = &fu + (&x - zeta) * beta;
            let yf_rate = (&y_x - y_f) * beta;
            lay.put(&mut out, lay.zeta(), zeta_rate.as_slice());
            lay.put(&mut out, lay.y_f(), yf_rate.as_slice());
        }
        Ok(out)
    }

    fn advance(&mut self, t: f64, h: f64) -> Result<()> {
        let (u_sigma, y_sigma) = {
            let (u, y) = self.aggregates();
            (u.clone(), y.clone())
        };
        let inp = StepInputs {
            phase: self.phase.kind,
            theta_bound: self.bound.current(),
            u_sigma: &u_sigma,
            y_sigma: &y_sigma,
            t_sigma: self.monitor.t_sigma(),
            d: self.disturbance.sample(t),
            filter_active: self.filter.is_active(),
        };
        let s = self.s;
        let lay = self.lay;
        let mut failure = None;
        let next = rk4_step(&self.state, t, h, |tt, y| match Self::rate(s, lay, &inp, tt, y) {
            Ok(r) => r,
            Err(e) => {
                failure.get_or_insert(e);
                DVector::from_element(lay.len(), f64::NAN)
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        self.state = next?;
        Ok(())
    }

    fn current(&self) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let l = self.lay;
        (l.vec(&self.state, l.x(), l.n), l.vec(&self.state, l.x_hat(), l.n), l.vec(&self.state, l.theta(), l.p))
    }

    fn v_at(&self, t: f64) -> f64 {
        let (x, x_hat, _) = self.current();
        let x_d = self.s.trajectory.value(t);
        lyapunov(&(&x - &x_hat), &(&x_hat - x_d))
    }

    fn push_measurement(&mut self, t: f64) -> Result<()> {
        let l = self.lay;
        let x = l.vec(&self.state, l.x(), l.n);
        let int_fu = l.vec(&self.state, l.int_fu(), l.n);
        let int_y = l.mat(&self.state, l.int_y());
        let int_d = l.vec(&self.state, l.int_d(), l.n);
        self.buffer.push_integrated(t, &x, &int_fu, &int_y, Some(&int_d))
    }

    fn current_pair(&mut self, t: f64) -> Result<FilteredPair> {
        match self.s.variant {
            Variant::Cl | Variant::Ew => self.buffer.windowed_pair(t, PhaseKind::Available),
            Variant::Expfilter => {
                let l = self.lay;
                self.filter.set_state(l.vec(&self.state, l.zeta(), l.n), l.mat(&self.state, l.y_f()));
                Ok(self.filter.pair(t, &l.vec(&self.state, l.x(), l.n)))
            }
        }
    }

    /// Bookkeeping after the state reached `t` while GPS is available.
    fn after_available_step(&mut self, t: f64, admission_point: bool) -> Result<()> {
        self.push_measurement(t)?;
        match self.s.variant {
            Variant::Ew => {
                let pair = self.current_pair(t)?;
                let dt = t - self.last_pair_t;
                self.ew.ew_update(&pair, dt);
                self.last_pair_t = t;
                self.monitor.excitation_time(&self.ew, t);
                let xi = self.ew.xi_sigma().map_or(0.0, |v| v.norm());
                self.trace.max_xi_sigma = self.trace.max_xi_sigma.max(xi);
                let r = (self.ew.u_sigma() - self.ew.y_sigma() * self.s.model.theta_true()).norm();
                self.trace.max_mre_residual = self.trace.max_mre_residual.max(r);
            }
            Variant::Cl | Variant::Expfilter => {
                if admission_point {
                    let pair = self.current_pair(t)?;
                    if let Some(adm) = self.stack.try_admit(&pair) {
                        self.trace.admissions.push((self.phase.sigma, adm));
                    }
                    self.monitor.excitation_time(&self.stack, t);
                    let xi = self.stack.xi_sigma().map_or(0.0, |v| v.norm());
                    self.trace.max_xi_sigma = self.trace.max_xi_sigma.max(xi);
                    let r = (self.stack.u_sigma() - self.stack.y_sigma() * self.s.model.theta_true()).norm();
                    self.trace.max_mre_residual = self.trace.max_mre_residual.max(r);
                }
            }
        }
        Ok(())
    }

    /// Per-interval resets at the start of a GPS-available interval.
    fn open_available(&mut self, t: f64) -> Result<()> {
        let l = self.lay;
        self.buffer.reset(t);
        self.push_measurement(t)?;
        self.stack.reset();
        self.ew.reset(t);
        self.ew.ew_update(&FilteredPair::zeros(l.n, l.p, t), 0.0);
        self.last_pair_t = t;
        self.monitor.reset();
        let x = l.vec(&self.state, l.x(), l.n);
        self.filter.reset(&x);
        if self.s.variant == Variant::Expfilter {
            l.put(&mut self.state, l.zeta(), x.as_slice());
            l.put(&mut self.state, l.y_f(), &vec![0.0; l.n * l.p]);
        }
        Ok(())
    }

    fn open_denied(&mut self) {
        let l = self.lay;
        self.buffer.clear();
        self.filter.deactivate();
        l.put(&mut self.state, l.zeta(), &vec![0.0; l.n]);
        l.put(&mut self.state, l.y_f(), &vec![0.0; l.n * l.p]);
    }

    fn maybe_switch(&mut self, t: f64) -> Result<()> {
        let policy = self.policy();
        if !self.phase.is_due(t, &policy) {
            return Ok(());
        }
        let v = self.v_at(t);
        if self.phase.kind == PhaseKind::Available {
            let lambda_y = self.lambda_now().max(self.s.admission_threshold);
            let elapsed = self.monitor.t_sigma().map_or(0.0, |ts| t - ts);
            let uub = uub_constants(&self.s.estimator, lambda_y, self.s.estimator.k_xi, self.s.consts.d_bar)?;
            self.bound.close_interval(t, elapsed, Some(&uub));
            self.trace.excitation_times.push((self.phase.sigma, self.monitor.t_sigma()));
        }
        let theta_bound = self.bound.current();
        let next = advance_phase(&self.phase, t, v, theta_bound, &self.s.consts, &policy)?;
        if next == self.phase {
            return Ok(());
        }
        self.phase = next;
        match next.kind {
            PhaseKind::Denied => {
                self.trace.denied_budgets.push((next.sigma, next.budget));
                self.open_denied();
            }
            PhaseKind::Available => self.open_available(t)?,
        }
        self.trace.switches.push(SwitchRecord::of(&next, v, theta_bound));
        Ok(())
    }

    fn monitor_safety(&mut self, t: f64) {
        let v = self.v_at(t);
        if v > self.trace.max_v {
            self.trace.max_v = v;
        }
        if self.trace.safety_violation.is_none() && v > self.s.consts.v_u * (1.0 + SAFETY_SLACK) {
            self.trace.safety_violation = Some(t);
        }
    }

    fn record(&mut self, t: f64) -> Result<()> {
        let (x, x_hat, theta_hat) = self.current();
        let fb = Self::feedback(self.s, t, &x, &x_hat, &theta_hat, self.phase.kind, self.bound.current())?;
        let err = errors(&x, &x_hat, &fb.x_d)?;
        let lambda = self.lambda_now();
        self.trace.records.push(Record {
            t,
            theta_tilde: self.s.model.theta_true() - &theta_hat,
            x,
            x_hat,
            x_d: fb.x_d,
            u: fb.u,
            theta_hat,
            e1: err.e1,
            e2: err.e2,
            v: err.v,
            phase: self.phase.kind,
            sigma: self.phase.sigma,
            lambda_min: lambda,
        });
        Ok(())
    }

    fn run(mut self) -> Result<SimTrace> {
        let cfg = self.s.engine;
        let steps = (cfg.t_end / cfg.h).round() as usize;
        let (x, x_hat, theta_hat) = self.current();
        self.trace.final_x = x;
        self.trace.final_x_hat = x_hat;
        self.trace.final_theta_hat = theta_hat;
        if steps == 0 {
            return Ok(self.trace);
        }
        let v0 = self.v_at(0.0);
        self.trace.switches.push(SwitchRecord::of(&self.phase, v0, self.bound.current()));
        self.open_available(0.0)?;
        self.monitor_safety(0.0);
        self.record(0.0)?;

        for k in 0..steps {
            let t0 = k as f64 * cfg.h;
            let t1 = (k + 1) as f64 * cfg.h;
            let mut t = t0;
            loop {
                let target = self.phase.t_start + self.phase.budget;
                let stop = if cfg.exact_switching && target > t + TIME_EPS && target < t1 - TIME_EPS {
                    target
                } else {
                    t1
                };
                self.advance(t, stop - t)?;
                t = stop;
                let on_grid = stop == t1;
                if self.phase.kind == PhaseKind::Available {
                    let admission_point = on_grid && (k + 1) % cfg.record_stride == 0;
                    self.after_available_step(t, admission_point)?;
                }
                self.monitor_safety(t);
                self.maybe_switch(t)?;
                if on_grid {
                    break;
                }
            }
            if (k + 1) % cfg.record_stride == 0 {
                self.record(t1)?;
            }
        }
        let (x, x_hat, theta_hat) = self.current();
        self.trace.final_x = x;
        self.trace.final_x_hat = x_hat;
        self.trace.final_theta_hat = theta_hat;
        Ok(self.trace)
    }
}

/// Integrates one scenario from the configured initial conditions to `t_end`.
pub fn run(setup: &Setup) -> Result<SimTrace> {
    setup.validate()?;
    Runner::new(setup)?.run()
}
