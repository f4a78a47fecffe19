//! Filtered regressor pairs `(U_f, Y_f)` built from state/input measurements.
//!
//! Two constructions are provided:
//!
//! * windowed integration: `U_f(t) = I_u(t) − I_u(t − Δt)`, `Y_f(t) = I_y(t) − I_y(t − Δt)`
//!   with `I_u(s) = x(s) − x(s⁻) − ∫_{s⁻}^{s} (f + u)` and `I_y(s) = ∫_{s⁻}^{s} Y`,
//!   where `s⁻ = max(t_a, s − Δt)` and `I(s) = 0` for `s ≤ t_a`;
//! * exponential filtering with `h(t) = β e^{−βt}`, realized as the stable
//!   first-order system `ζ' = f + u + β(x − ζ)`, `U_f = β(x − ζ)`,
//!   `Y_f' = β(Y − Y_f)`, which needs no derivative of `x`.
//!
//! With `d ≡ 0` both satisfy `U_f = Y_f θ`. Both pairs are zero while GPS is
//! denied.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{check_dim, Result, SimError};
use crate::scheduler::PhaseKind;

/// `(x, ∫(f+u), ∫Y, ∫d)` at one instant.
type Interpolated = (DVector<f64>, DVector<f64>, DMatrix<f64>, Option<DVector<f64>>);

/// Time comparisons within this tolerance are treated as equal.
pub(crate) const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterVariant {
    Windowed,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub variant: FilterVariant,
    /// Exponential filter rate β.
    pub beta: f64,
    /// Integration window Δt in seconds.
    pub window: f64,
    pub quadrature_step: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            variant: FilterVariant::Windowed,
            beta: 4.0,
            window: 0.25,
            quadrature_step: 1e-3,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(SimError::Validation(format!("filter beta must be > 0, got {}", self.beta)));
        }
        if !(self.window > 0.0 && self.window.is_finite()) {
            return Err(SimError::Validation(format!(
                "filter window must be > 0, got {}",
                self.window
            )));
        }
        if !(self.quadrature_step > 0.0 && self.quadrature_step <= self.window / 4.0) {
            return Err(SimError::Validation(format!(
                "quadrature_step must lie in (0, window/4], got {}",
                self.quadrature_step
            )));
        }
        Ok(())
    }
}

/// One filtered pair. `xi_f` is the disturbance residual, only known in
/// simulation diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredPair {
    pub t: f64,
    pub u_f: DVector<f64>,
    pub y_f: DMatrix<f64>,
    pub xi_f: Option<DVector<f64>>,
}

impl FilteredPair {
    pub fn zeros(n: usize, p: usize, t: f64) -> Self {
        Self {
            t,
            u_f: DVector::zeros(n),
            y_f: DMatrix::zeros(n, p),
            xi_f: Some(DVector::zeros(n)),
        }
    }

    /// `‖U_f − Y_f θ‖`.
    pub fn residual_norm(&self, theta: &DVector<f64>) -> f64 {
        (&self.u_f - &self.y_f * theta).norm()
    }
}

#[derive(Debug, Clone)]
struct Sample {
    t: f64,
    x: DVector<f64>,
    /// Running integral of `f + u`.
    int_fu: DVector<f64>,
    /// Running integral of `Y`.
    int_y: DMatrix<f64>,
    /// Running integral of `d` (diagnostics).
    int_d: Option<DVector<f64>>,
    /// Integrand values, kept for trapezoidal accumulation.
    fu: DVector<f64>,
    y: DMatrix<f64>,
}

/// Ring buffer of measurements for one GPS-available interval.
pub struct SampleBuffer {
    dynamics: Arc<dyn Dynamics>,
    window: f64,
    anchor: Option<f64>,
    samples: VecDeque<Sample>,
}

impl std::fmt::Debug for SampleBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SampleBuffer")
            .field("window", &self.window)
            .field("anchor", &self.anchor)
            .field("len", &self.samples.len())
            .finish()
    }
}

impl SampleBuffer {
    pub fn new(dynamics: Arc<dyn Dynamics>, window: f64) -> Result<Self> {
        if !(window > 0.0 && window.is_finite()) {
            return Err(SimError::InvalidInput(format!("window must be positive, got {window}")));
        }
        Ok(Self {
            dynamics,
            window,
            anchor: None,
            samples: VecDeque::new(),
        })
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn anchor(&self) -> Option<f64> {
        self.anchor
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time covered by the stored samples.
    pub fn span(&self) -> f64 {
        match (self.samples.front(), self.samples.back()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Starts a new GPS-available interval at `t_a`, discarding old samples.
    pub fn reset(&mut self, anchor: f64) {
        self.anchor = Some(anchor);
        self.samples.clear();
    }

    /// Clears the buffer at the start of a GPS-denied interval.
    pub fn clear(&mut self) {
        self.anchor = None;
        self.samples.clear();
    }

    fn retention(&self) -> f64 {
        // U_f needs x and the running integrals back to t − 2Δt.
        2.0 * self.window + 0.25 * self.window
    }

    fn check_order(&self, t: f64) -> Result<()> {
        if let Some(last) = self.samples.back() {
            if t <= last.t {
                return Err(SimError::Ordering { last: last.t, got: t });
            }
        }
        Ok(())
    }

    fn evict(&mut self) {
        let newest = match self.samples.back() {
            Some(s) => s.t,
            None => return,
        };
        let cutoff = newest - self.retention();
        // Keep one sample at or before the cutoff so interpolation still covers it.
        while self.samples.len() > 2 && self.samples[1].t <= cutoff {
            self.samples.pop_front();
        }
    }

    /// Stores a measurement, accumulating `∫(f + u)` and `∫Y` by the trapezoidal rule.
    pub fn push_sample(&mut self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        let n = self.dynamics.n();
        check_dim("state", n, x.len())?;
        check_dim("input", n, u.len())?;
        self.check_order(t)?;
        if self.anchor.is_none() {
            self.anchor = Some(t);
        }
        let fu = self.dynamics.drift(t, x) + u;
        let y = self.dynamics.regressor(t, x);
        let (int_fu, int_y) = match self.samples.back() {
            Some(prev) => {
                let h = t - prev.t;
                (
                    &prev.int_fu + (&prev.fu + &fu) * (0.5 * h),
                    &prev.int_y + (&prev.y + &y) * (0.5 * h),
                )
            }
            None => (DVector::zeros(n), DMatrix::zeros(n, self.dynamics.p())),
        };
        self.samples.push_back(Sample {
            t,
            x: x.clone(),
            int_fu,
            int_y,
            int_d: None,
            fu,
            y,
        });
        self.evict();
        Ok(())
    }

    /// Stores a measurement whose running integrals were produced by the
    /// integrator itself (augmented ODE states), so that the quadrature is
    /// consistent with the one that advanced `x`.
    pub fn push_integrated(
        &mut self,
        t: f64,
        x: &DVector<f64>,
        int_fu: &DVector<f64>,
        int_y: &DMatrix<f64>,
        int_d: Option<&DVector<f64>>,
    ) -> Result<()> {
        let n = self.dynamics.n();
        check_dim("state", n, x.len())?;
        check_dim("integral of f + u", n, int_fu.len())?;
        check_dim("integral of Y", n * self.dynamics.p(), int_y.len())?;
        self.check_order(t)?;
        if self.anchor.is_none() {
            self.anchor = Some(t);
        }
        self.samples.push_back(Sample {
            t,
            x: x.clone(),
            int_fu: int_fu.clone(),
            int_y: int_y.clone(),
            int_d: int_d.cloned(),
            fu: DVector::zeros(0),
            y: DMatrix::zeros(0, 0),
        });
        self.evict();
        Ok(())
    }

    /// Linear interpolation of `(x, ∫(f+u), ∫Y, ∫d)` at time `s`.
    fn at(&self, s: f64) -> Result<Interpolated> {
        let first = self.samples.front().ok_or(SimError::NotWarm { t: s })?;
        let last = self.samples.back().ok_or(SimError::NotWarm { t: s })?;
        if s < first.t - TIME_EPS || s > last.t + TIME_EPS {
            return Err(SimError::NotWarm { t: s });
        }
        // First index with t >= s - eps.
        let idx = self.samples.partition_point(|p| p.t < s - TIME_EPS);
        let hi = &self.samples[idx.min(self.samples.len() - 1)];
        if (hi.t - s).abs() <= TIME_EPS || idx == 0 {
            return Ok((hi.x.clone(), hi.int_fu.clone(), hi.int_y.clone(), hi.int_d.clone()));
        }
        let lo = &self.samples[idx - 1];
        let w = (s - lo.t) / (hi.t - lo.t);
        let lerp_v = |a: &DVector<f64>, b: &DVector<f64>| a * (1.0 - w) + b * w;
        let int_d = match (&lo.int_d, &hi.int_d) {
            (Some(a), Some(b)) => Some(lerp_v(a, b)),
            _ => None,
        };
        Ok((
            lerp_v(&lo.x, &hi.x),
            lerp_v(&lo.int_fu, &hi.int_fu),
            &lo.int_y * (1.0 - w) + &hi.int_y * w,
            int_d,
        ))
    }

    /// `(I_u(s), I_y(s), I_d(s))`, all zero for `s ≤ t_a`.
    #[allow(clippy::type_complexity)]
    fn window_integrals(
        &self,
        s: f64,
        anchor: f64,
    ) -> Result<(DVector<f64>, DMatrix<f64>, Option<DVector<f64>>)> {
        let n = self.dynamics.n();
        let p = self.dynamics.p();
        if s <= anchor + TIME_EPS {
            return Ok((DVector::zeros(n), DMatrix::zeros(n, p), Some(DVector::zeros(n))));
        }
        let lower = (s - self.window).max(anchor);
        let (x1, fu1, y1, d1) = self.at(s)?;
        let (x0, fu0, y0, d0) = self.at(lower)?;
        let i_u = (x1 - x0) - (fu1 - fu0);
        let i_y = y1 - y0;
        let i_d = match (d1, d0) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
        Ok((i_u, i_y, i_d))
    }

    /// Windowed-integration pair at time `t`; zero while GPS is denied.
    pub fn windowed_pair(&self, t: f64, phase: PhaseKind) -> Result<FilteredPair> {
        let n = self.dynamics.n();
        let p = self.dynamics.p();
        if phase == PhaseKind::Denied {
            return Ok(FilteredPair::zeros(n, p, t));
        }
        let anchor = self.anchor.ok_or(SimError::NotWarm { t })?;
        if t <= anchor + TIME_EPS {
            return Err(SimError::NotWarm { t });
        }
        let (iu_now, iy_now, id_now) = self.window_integrals(t, anchor)?;
        let (iu_then, iy_then, id_then) = self.window_integrals(t - self.window, anchor)?;
        let xi_f = match (id_now, id_then) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
        Ok(FilteredPair {
            t,
            u_f: iu_now - iu_then,
            y_f: iy_now - iy_then,
            xi_f,
        })
    }
}

/// State of the exponential regressor filter.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialFilter {
    beta: f64,
    /// `ζ`, with `U_f = β (x − ζ)`.
    zeta: DVector<f64>,
    y_f: DMatrix<f64>,
    active: bool,
    last: Option<(f64, DVector<f64>, DMatrix<f64>)>,
}

impl ExponentialFilter {
    pub fn new(beta: f64, n: usize, p: usize) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(SimError::InvalidInput(format!("beta must be positive, got {beta}")));
        }
        Ok(Self {
            beta,
            zeta: DVector::zeros(n),
            y_f: DMatrix::zeros(n, p),
            active: false,
            last: None,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    /// Restarts the filter at `t_a` with the measured state `x(t_a)`.
    pub fn reset(&mut self, x: &DVector<f64>) {
        self.zeta = x.clone();
        self.y_f.fill(0.0);
        self.active = true;
        self.last = None;
    }

    /// Holds the filter at zero for a GPS-denied interval.
    pub fn deactivate(&mut self) {
        self.zeta.fill(0.0);
        self.y_f.fill(0.0);
        self.active = false;
        self.last = None;
    }

    pub fn zeta(&self) -> &DVector<f64> {
        &self.zeta
    }

    pub fn y_f(&self) -> &DMatrix<f64> {
        &self.y_f
    }

    pub(crate) fn set_state(&mut self, zeta: DVector<f64>, y_f: DMatrix<f64>) {
        self.zeta = zeta;
        self.y_f = y_f;
    }

    /// Time derivatives `(ζ', Y_f')` for inputs `f + u` and `Y` at state `x`.
    pub fn rates(
        &self,
        x: &DVector<f64>,
        zeta: &DVector<f64>,
        y_f: &DMatrix<f64>,
        fu: &DVector<f64>,
        y: &DMatrix<f64>,
    ) -> (DVector<f64>, DMatrix<f64>) {
        if !self.active {
            return (DVector::zeros(zeta.len()), DMatrix::zeros(y_f.nrows(), y_f.ncols()));
        }
        (fu + (x - zeta) * self.beta, (y - y_f) * self.beta)
    }

    /// Current pair for measured state `x`.
    pub fn pair(&self, t: f64, x: &DVector<f64>) -> FilteredPair {
        if !self.active {
            return FilteredPair::zeros(x.len(), self.y_f.ncols(), t);
        }
        FilteredPair {
            t,
            u_f: (x - &self.zeta) * self.beta,
            y_f: self.y_f.clone(),
            xi_f: None,
        }
    }

    /// Advances the filter from the previous measurement to `(t, x, u)`,
    /// treating the inputs as linear in time between samples (exact for that
    /// interpolation), and returns the new pair.
    pub fn exponential_pair(
        &mut self,
        dynamics: &dyn Dynamics,
        t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<FilteredPair> {
        check_dim("state", self.zeta.len(), x.len())?;
        check_dim("input", self.zeta.len(), u.len())?;
        if !self.active {
            return Ok(self.pair(t, x));
        }
        // ζ' = −βζ + g_ζ with g_ζ = f + u + βx; Y_f' = −βY_f + βY.
        let g_zeta = dynamics.drift(t, x) + u + x * self.beta;
        let g_y = dynamics.regressor(t, x) * self.beta;
        if let Some((t0, g0_zeta, g0_y)) = self.last.take() {
            let h = t - t0;
            if h <= 0.0 {
                return Err(SimError::Ordering { last: t0, got: t });
            }
            let b = self.beta;
            let decay = (-b * h).exp();
            let c0 = (1.0 - decay) / b;
            let c1 = (h / b - (1.0 - decay) / (b * b)) / h;
            self.zeta = &self.zeta * decay + &g0_zeta * c0 + (&g_zeta - &g0_zeta) * c1;
            self.y_f = &self.y_f * decay + &g0_y * c0 + (&g_y - &g0_y) * c1;
        }
        self.last = Some((t, g_zeta, g_y));
        Ok(self.pair(t, x))
    }
}
