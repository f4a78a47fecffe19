//! Plant description, desired trajectory and disturbance realization.
//!
//! The plant is control-affine:
//!
//! ```text
//! x' = f(t, x) + u + Y(t, x) θ + d(t, x)
//! ```
//!
//! with a known drift `f`, a known regressor `Y` and unknown parameters `θ`.
//! The benchmark system ships as [`Benchmark`]; other systems plug in through
//! the [`Dynamics`] and [`Trajectory`] traits.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Result, SimError};
use crate::linalg::spectral_norm;

/// Known part of the plant: drift `f` and regressor `Y`.
pub trait Dynamics: Send + Sync {
    /// State dimension.
    fn n(&self) -> usize;
    /// Parameter dimension.
    fn p(&self) -> usize;
    fn drift(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;
    fn regressor(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64>;
}

/// The second-order benchmark: `f(x) = [x2, x1]`, `Y(x) = [[0, 0], [-x1, -x1^3]]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Benchmark;

impl Benchmark {
    pub const THETA: [f64; 2] = [1.0, 0.5];
    pub const D_BAR: f64 = 1.5;
}

impl Dynamics for Benchmark {
    fn n(&self) -> usize {
        2
    }

    fn p(&self) -> usize {
        2
    }

    fn drift(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[1], x[0]])
    }

    fn regressor(&self, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        let x1 = x[0];
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -x1, -x1 * x1 * x1])
    }
}

/// One monomial entry of a polynomial regressor: `Y[row, col] += coeff * x[state]^power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressorTerm {
    pub row: usize,
    pub col: usize,
    pub state: usize,
    pub power: u32,
    pub coeff: f64,
}

/// Linear drift `f(x) = A x` with a polynomial regressor.
///
/// Every monomial has `power >= 1`, so `f(0) = 0` and `Y(0) = 0` hold by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialDynamics {
    drift_matrix: DMatrix<f64>,
    p: usize,
    terms: Vec<RegressorTerm>,
}

impl PolynomialDynamics {
    pub fn new(drift_matrix: DMatrix<f64>, p: usize, terms: Vec<RegressorTerm>) -> Result<Self> {
        let n = drift_matrix.nrows();
        if n == 0 || drift_matrix.ncols() != n {
            return Err(SimError::InvalidInput("drift matrix must be square and non-empty".into()));
        }
        if p == 0 {
            return Err(SimError::InvalidInput("parameter dimension must be positive".into()));
        }
        check_finite("drift matrix", drift_matrix.as_slice())?;
        for term in &terms {
            if term.row >= n || term.col >= p || term.state >= n {
                return Err(SimError::InvalidInput(format!(
                    "regressor term {term:?} out of range for n = {n}, p = {p}"
                )));
            }
            if term.power == 0 {
                return Err(SimError::InvalidInput(
                    "regressor terms need power >= 1 so that Y(t, 0) = 0".into(),
                ));
            }
            check_finite("regressor coefficient", &[term.coeff])?;
        }
        Ok(Self { drift_matrix, p, terms })
    }
}

impl Dynamics for PolynomialDynamics {
    fn n(&self) -> usize {
        self.drift_matrix.nrows()
    }

    fn p(&self) -> usize {
        self.p
    }

    fn drift(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        &self.drift_matrix * x
    }

    fn regressor(&self, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.n(), self.p);
        for term in &self.terms {
            y[(term.row, term.col)] += term.coeff * x[term.state].powi(term.power as i32);
        }
        y
    }
}

/// Plant description. `theta_true` is only read by the plant integration and
/// by diagnostics; controller and estimator code never receive it.
#[derive(Clone)]
pub struct SystemModel {
    dynamics: Arc<dyn Dynamics>,
    theta_true: DVector<f64>,
    d_bar: f64,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("n", &self.n())
            .field("p", &self.p())
            .field("theta_true", &self.theta_true.as_slice())
            .field("d_bar", &self.d_bar)
            .finish()
    }
}

impl SystemModel {
    pub fn new(dynamics: Arc<dyn Dynamics>, theta_true: DVector<f64>, d_bar: f64) -> Result<Self> {
        check_dim("theta_true", dynamics.p(), theta_true.len())?;
        check_finite("theta_true", theta_true.as_slice())?;
        if !(d_bar >= 0.0 && d_bar.is_finite()) {
            return Err(SimError::InvalidInput(format!("d_bar must be nonnegative, got {d_bar}")));
        }
        Ok(Self { dynamics, theta_true, d_bar })
    }

    /// The benchmark plant with `θ = [1, 0.5]` and `d̄ = 1.5`.
    pub fn benchmark() -> Self {
        Self {
            dynamics: Arc::new(Benchmark),
            theta_true: DVector::from_column_slice(&Benchmark::THETA),
            d_bar: Benchmark::D_BAR,
        }
    }

    pub fn with_d_bar(mut self, d_bar: f64) -> Result<Self> {
        if !(d_bar >= 0.0 && d_bar.is_finite()) {
            return Err(SimError::InvalidInput(format!("d_bar must be nonnegative, got {d_bar}")));
        }
        self.d_bar = d_bar;
        Ok(self)
    }

    pub fn with_theta(mut self, theta: DVector<f64>) -> Result<Self> {
        check_dim("theta_true", self.p(), theta.len())?;
        self.theta_true = theta;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.dynamics.n()
    }

    pub fn p(&self) -> usize {
        self.dynamics.p()
    }

    pub fn d_bar(&self) -> f64 {
        self.d_bar
    }

    pub fn theta_true(&self) -> &DVector<f64> {
        &self.theta_true
    }

    pub fn dynamics(&self) -> &Arc<dyn Dynamics> {
        &self.dynamics
    }

    fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        check_dim("state", self.n(), x.len())?;
        check_finite("state", x.as_slice())
    }

    pub fn drift(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_state(x)?;
        Ok(self.dynamics.drift(t, x))
    }

    pub fn regressor(&self, t: f64, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_state(x)?;
        Ok(self.dynamics.regressor(t, x))
    }

    /// `f(t, x) + u + Y(t, x) θ + d`.
    pub fn plant_rate(
        &self,
        t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
        d: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_state(x)?;
        check_dim("input", self.n(), u.len())?;
        check_dim("disturbance", self.n(), d.len())?;
        Ok(self.plant_rate_unchecked(t, x, u, d))
    }

    pub(crate) fn plant_rate_unchecked(
        &self,
        t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
        d: &DVector<f64>,
    ) -> DVector<f64> {
        self.dynamics.drift(t, x) + u + self.dynamics.regressor(t, x) * &self.theta_true + d
    }
}

/// Desired trajectory `x_d(t)` with its rate and a known norm bound.
pub trait Trajectory: Send + Sync {
    fn value(&self, t: f64) -> DVector<f64>;
    fn rate(&self, t: f64) -> DVector<f64>;
    /// Known bound `x̄_d` on `‖x_d(t)‖`.
    fn sup_bound(&self) -> f64;

    fn desired(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        (self.value(t), self.rate(t))
    }
}

/// Componentwise sinusoid `x_d,i(t) = a_i sin(ω_i t + φ_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    pub amplitude: Vec<f64>,
    pub omega: Vec<f64>,
    pub phase: Vec<f64>,
}

impl Sinusoid {
    /// `x_d(t) = [sin 2t, 2 cos 2t]`.
    pub fn benchmark() -> Self {
        Self {
            amplitude: vec![1.0, 2.0],
            omega: vec![2.0, 2.0],
            phase: vec![0.0, std::f64::consts::FRAC_PI_2],
        }
    }

    pub fn dim(&self) -> usize {
        self.amplitude.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.amplitude.len();
        if n == 0 || self.omega.len() != n || self.phase.len() != n {
            return Err(SimError::InvalidInput(
                "sinusoid amplitude, omega and phase must have equal nonzero length".into(),
            ));
        }
        check_finite("sinusoid", &self.amplitude)?;
        check_finite("sinusoid", &self.omega)?;
        check_finite("sinusoid", &self.phase)
    }
}

impl Trajectory for Sinusoid {
    fn value(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| self.amplitude[i] * (self.omega[i] * t + self.phase[i]).sin()),
        )
    }

    fn rate(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| {
                self.amplitude[i] * self.omega[i] * (self.omega[i] * t + self.phase[i]).cos()
            }),
        )
    }

    fn sup_bound(&self) -> f64 {
        self.amplitude.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// Uniform sample-and-hold disturbance on `[-d̄, d̄]^n`.
///
/// Samples are drawn lazily in hold-index order and cached, so the value at a
/// given time does not depend on the order in which times are queried.
#[derive(Debug, Clone)]
pub struct DisturbanceGenerator {
    seed: u64,
    d_bar: f64,
    hold_step: f64,
    n: usize,
    rng: ChaCha8Rng,
    drawn: Vec<DVector<f64>>,
}

impl DisturbanceGenerator {
    pub fn new(seed: u64, d_bar: f64, hold_step: f64, n: usize) -> Result<Self> {
        if !(d_bar >= 0.0 && d_bar.is_finite()) {
            return Err(SimError::InvalidInput(format!("d_bar must be nonnegative, got {d_bar}")));
        }
        if !(hold_step > 0.0 && hold_step.is_finite()) {
            return Err(SimError::InvalidInput(format!(
                "hold_step must be positive, got {hold_step}"
            )));
        }
        Ok(Self {
            seed,
            d_bar,
            hold_step,
            n,
            rng: ChaCha8Rng::seed_from_u64(seed),
            drawn: Vec::new(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn d_bar(&self) -> f64 {
        self.d_bar
    }

    pub fn hold_step(&self) -> f64 {
        self.hold_step
    }

    /// Hold index of time `t`; the small offset keeps exact multiples of the
    /// hold step from falling into the previous slot through rounding.
    pub fn hold_index(&self, t: f64) -> usize {
        let k = (t.max(0.0) / self.hold_step + 1e-9).floor();
        k as usize
    }

    pub fn sample(&mut self, t: f64) -> DVector<f64> {
        let k = self.hold_index(t);
        while self.drawn.len() <= k {
            let v = if self.d_bar == 0.0 {
                DVector::zeros(self.n)
            } else {
                let d = self.d_bar;
                DVector::from_iterator(self.n, (0..self.n).map(|_| self.rng.gen_range(-d..=d)))
            };
            self.drawn.push(v);
        }
        self.drawn[k].clone()
    }
}

/// Axis-aligned operating box used to estimate the Lipschitz constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl OperatingBox {
    /// `‖x‖∞ ≤ r` in `n` dimensions.
    pub fn symmetric(n: usize, r: f64) -> Self {
        Self {
            lower: vec![-r; n],
            upper: vec![r; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_dim("operating box", n, self.lower.len())?;
        check_dim("operating box", n, self.upper.len())?;
        check_finite("operating box", &self.lower)?;
        check_finite("operating box", &self.upper)?;
        if self.lower.iter().zip(&self.upper).any(|(l, u)| l > u) {
            return Err(SimError::InvalidInput("operating box is empty".into()));
        }
        Ok(())
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }
}

/// Estimated Lipschitz constants of `f` and `Y` and the sup of `‖Y‖` on a box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzBounds {
    pub l_f: f64,
    pub l_y: f64,
    pub y_bar: f64,
}

const FD_STEP: f64 = 1e-6;

/// Grid estimate of `(L_f, L_Y, Ȳ)` on `box_`.
///
/// Every grid node is probed with central differences along a fixed set of
/// unit directions (coordinate axes and signed pairwise diagonals). The
/// constants are sups over nodes, so a grid whose nodes contain a coarser
/// grid's nodes (resolution `r` → `2r − 1`) never yields smaller values.
pub fn lipschitz_bounds(
    model: &SystemModel,
    box_: &OperatingBox,
    resolution: usize,
    times: &[f64],
) -> Result<LipschitzBounds> {
    let n = model.n();
    box_.validate(n)?;
    if resolution < 2 {
        return Err(SimError::InvalidInput("grid resolution must be at least 2".into()));
    }
    let times: &[f64] = if times.is_empty() { &[0.0] } else { times };
    let directions = probe_directions(n);
    let dynamics = model.dynamics();

    let mut out = LipschitzBounds { l_f: 0.0, l_y: 0.0, y_bar: 0.0 };
    let total = resolution.pow(n as u32);
    let mut x = DVector::zeros(n);
    for flat in 0..total {
        let mut rem = flat;
        for i in 0..n {
            let k = rem % resolution;
            rem /= resolution;
            let frac = k as f64 / (resolution - 1) as f64;
            x[i] = box_.lower[i] + frac * (box_.upper[i] - box_.lower[i]);
        }
        for &t in times {
            out.y_bar = out.y_bar.max(spectral_norm(&dynamics.regressor(t, &x)));
            for v in &directions {
                let xp = &x + v * FD_STEP;
                let xm = &x - v * FD_STEP;
                let df = (dynamics.drift(t, &xp) - dynamics.drift(t, &xm)).norm() / (2.0 * FD_STEP);
                let dy = spectral_norm(&(dynamics.regressor(t, &xp) - dynamics.regressor(t, &xm)))
                    / (2.0 * FD_STEP);
                out.l_f = out.l_f.max(df);
                out.l_y = out.l_y.max(dy);
            }
        }
    }
    Ok(out)
}

fn probe_directions(n: usize) -> Vec<DVector<f64>> {
    let mut dirs = Vec::new();
    for i in 0..n {
        dirs.push(DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 }));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in (i + 1)..n {
            for sign in [1.0, -1.0] {
                dirs.push(DVector::from_fn(n, |k, _| {
                    if k == i {
                        s
                    } else if k == j {
                        sign * s
                    } else {
                        0.0
                    }
                }));
            }
        }
    }
    dirs
}
