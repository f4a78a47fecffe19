//! Error signals, sliding-mode injection, switching observer and tracking controller.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::Dynamics;
use crate::error::{check_dim, Result, SimError};
use crate::linalg::lambda_min;
use crate::scheduler::PhaseKind;

/// Observer gain `k1`, tracking gain `k2` and the boundary-layer width `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    pub epsilon: f64,
    /// Use the discontinuous `sgn` instead of the boundary-layer saturation.
    pub pure_sign: bool,
}

impl GainSet {
    pub fn diagonal(k1: f64, k2: f64, n: usize, epsilon: f64) -> Self {
        Self {
            k1: DMatrix::identity(n, n) * k1,
            k2: DMatrix::identity(n, n) * k2,
            epsilon,
            pure_sign: false,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_dim("k1", n, self.k1.nrows())?;
        check_dim("k1", n, self.k1.ncols())?;
        check_dim("k2", n, self.k2.nrows())?;
        check_dim("k2", n, self.k2.ncols())?;
        if lambda_min(&self.k1) <= 0.0 {
            return Err(SimError::Validation("k1 must be positive definite".into()));
        }
        if lambda_min(&self.k2) <= 0.0 {
            return Err(SimError::Validation("k2 must be positive definite".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(SimError::Validation("boundary layer epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// `e1 = x − x̂`, `e2 = x̂ − x_d`, `V = ½‖e1‖² + ½‖e2‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorState {
    pub e1: DVector<f64>,
    pub e2: DVector<f64>,
    pub v: f64,
}

pub fn lyapunov(e1: &DVector<f64>, e2: &DVector<f64>) -> f64 {
    0.5 * e1.norm_squared() + 0.5 * e2.norm_squared()
}

pub fn errors(x: &DVector<f64>, x_hat: &DVector<f64>, x_d: &DVector<f64>) -> Result<ErrorState> {
    check_dim("x_hat", x.len(), x_hat.len())?;
    check_dim("x_d", x.len(), x_d.len())?;
    let e1 = x - x_hat;
    let e2 = x_hat - x_d;
    let v = lyapunov(&e1, &e2);
    Ok(ErrorState { e1, e2, v })
}

/// Unit saturation, the boundary-layer replacement for `sgn`.
fn sat(z: f64) -> f64 {
    z.clamp(-1.0, 1.0)
}

fn sign(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else if z < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `v_r = k1 e1 + (d̄ + Ȳ θ̃_σ) sat(e1 / ε)`; only defined while GPS is available.
pub fn sliding_term(
    e1: &DVector<f64>,
    theta_bound: f64,
    d_bar: f64,
    y_bar: f64,
    gains: &GainSet,
    phase: PhaseKind,
) -> Result<DVector<f64>> {
    if phase == PhaseKind::Denied {
        return Err(SimError::Phase("sliding term needs e1, which is unmeasured while GPS is denied".into()));
    }
    check_dim("e1", gains.k1.nrows(), e1.len())?;
    Ok(sliding_term_unchecked(e1, theta_bound, d_bar, y_bar, gains))
}

pub(crate) fn sliding_term_unchecked(
    e1: &DVector<f64>,
    theta_bound: f64,
    d_bar: f64,
    y_bar: f64,
    gains: &GainSet,
) -> DVector<f64> {
    let gain = d_bar + y_bar * theta_bound;
    let switching = if gains.pure_sign {
        e1.map(sign)
    } else {
        e1.map(|z| sat(z / gains.epsilon))
    };
    &gains.k1 * e1 + switching * gain
}

fn check_injection(phase: PhaseKind, v_r: Option<&DVector<f64>>) -> Result<()> {
    match (phase, v_r) {
        (PhaseKind::Available, None) => Err(SimError::Phase("v_r required while GPS is available".into())),
        (PhaseKind::Denied, Some(_)) => Err(SimError::Phase("v_r must be absent while GPS is denied".into())),
        _ => Ok(()),
    }
}

/// `x̂' = f(t, x̂) + Y(t, x̂) θ̂ + u (+ v_r while available)`.
pub fn observer_rate(
    dynamics: &dyn Dynamics,
    t: f64,
    x_hat: &DVector<f64>,
    theta_hat: &DVector<f64>,
    u: &DVector<f64>,
    phase: PhaseKind,
    v_r: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    check_injection(phase, v_r)?;
    check_dim("x_hat", dynamics.n(), x_hat.len())?;
    check_dim("theta_hat", dynamics.p(), theta_hat.len())?;
    check_dim("u", dynamics.n(), u.len())?;
    let mut rate = dynamics.drift(t, x_hat) + dynamics.regressor(t, x_hat) * theta_hat + u;
    if let Some(v) = v_r {
        rate += v;
    }
    Ok(rate)
}

/// `u = ẋ_d − f(t, x̂) − k2 e2 (− v_r while available) − Y(t, x̂) θ̂`.
#[allow(clippy::too_many_arguments)]
pub fn control_input(
    dynamics: &dyn Dynamics,
    t: f64,
    x_hat: &DVector<f64>,
    theta_hat: &DVector<f64>,
    e2: &DVector<f64>,
    xd_rate: &DVector<f64>,
    gains: &GainSet,
    phase: PhaseKind,
    v_r: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    check_injection(phase, v_r)?;
    check_dim("x_hat", dynamics.n(), x_hat.len())?;
    check_dim("theta_hat", dynamics.p(), theta_hat.len())?;
    check_dim("e2", dynamics.n(), e2.len())?;
    check_dim("xd_rate", dynamics.n(), xd_rate.len())?;
    let mut u = xd_rate - dynamics.drift(t, x_hat) - &gains.k2 * e2 - dynamics.regressor(t, x_hat) * theta_hat;
    if let Some(v) = v_r {
        u -= v;
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Benchmark, SystemModel, Sinusoid, Trajectory};
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn error_examples() {
        let z = errors(&v(&[1.0, 2.0]), &v(&[1.0, 2.0]), &v(&[1.0, 2.0])).unwrap();
        assert_eq!((z.e1.norm(), z.e2.norm(), z.v), (0.0, 0.0, 0.0));

        let xd0 = Sinusoid::benchmark().value(0.0);
        let s = errors(&v(&[-1.0, 1.0]), &v(&[0.0, 0.0]), &xd0).unwrap();
        assert_eq!(s.e1, v(&[-1.0, 1.0]));
        assert_eq!(s.e2, v(&[0.0, -2.0]));
        assert_eq!(s.v, 3.0);

        assert_eq!(lyapunov(&v(&[1.0, 0.0]), &v(&[0.0, 2.0])), 2.5);
        assert!(matches!(errors(&v(&[1.0]), &v(&[1.0, 2.0]), &v(&[0.0, 0.0])), Err(SimError::Dimension { .. })));
    }

    #[test]
    fn sliding_examples() {
        let g = GainSet::diagonal(1.0, 1.0, 2, 1e-6);
        let zero = sliding_term(&v(&[0.0, 0.0]), 1.0, 1.5, 1.5, &g, PhaseKind::Available).unwrap();
        assert_eq!(zero, v(&[0.0, 0.0]));

        // k1 = I, d̄ = 1.5, Ȳ θ̃ = 1.5.
        let s = sliding_term(&v(&[1.0, 0.0]), 1.0, 1.5, 1.5, &g, PhaseKind::Available).unwrap();
        assert!((s - v(&[4.0, 0.0])).norm() < 1e-12);

        assert!(matches!(
            sliding_term(&v(&[1.0, 0.0]), 1.0, 1.5, 1.5, &g, PhaseKind::Denied),
            Err(SimError::Phase(_))
        ));
    }

    #[test]
    fn sliding_gain_linearity() {
        let g = GainSet::diagonal(2.0, 1.0, 2, 0.1);
        let e1 = v(&[0.03, -0.5]);
        let base = &g.k1 * &e1;
        let a = sliding_term(&e1, 0.5, 1.0, 2.0, &g, PhaseKind::Available).unwrap() - &base;
        let b = sliding_term(&e1, 1.0, 2.0, 2.0, &g, PhaseKind::Available).unwrap() - &base;
        assert!((b - a * 2.0).norm() < 1e-14);
    }

    #[test]
    fn boundary_layer_converges_to_sign() {
        let e1 = v(&[0.2, -0.05]);
        let mut pure = GainSet::diagonal(1.0, 1.0, 2, 1.0);
        pure.pure_sign = true;
        let target = sliding_term(&e1, 1.0, 1.5, 2.0, &pure, PhaseKind::Available).unwrap();
        let mut last = f64::INFINITY;
        for eps in [1.0, 0.1, 0.01, 0.001] {
            let g = GainSet::diagonal(1.0, 1.0, 2, eps);
            let d = (sliding_term(&e1, 1.0, 1.5, 2.0, &g, PhaseKind::Available).unwrap() - &target).norm();
            assert!(d <= last);
            last = d;
        }
        assert!(last < 1e-12);
    }

    #[test]
    fn observer_examples() {
        let th = v(&Benchmark::THETA);
        let model = SystemModel::benchmark();
        let x = v(&[-1.0, 1.0]);
        let u = v(&[0.3, -0.2]);
        let z = v(&[0.0, 0.0]);
        let obs = observer_rate(&Benchmark, 0.0, &x, &th, &u, PhaseKind::Denied, None).unwrap();
        let plant = model.plant_rate(0.0, &x, &u, &z).unwrap();
        assert!((obs - plant).norm() < 1e-15);

        let a = observer_rate(&Benchmark, 0.0, &x, &th, &u, PhaseKind::Available, Some(&z)).unwrap();
        let d = observer_rate(&Benchmark, 0.0, &x, &th, &u, PhaseKind::Denied, None).unwrap();
        assert_eq!(a, d);

        let r = observer_rate(&Benchmark, 0.0, &x, &v(&[1.0, 0.5]), &z, PhaseKind::Denied, None).unwrap();
        assert!((r - v(&[1.0, 0.5])).norm() < 1e-15);

        assert!(observer_rate(&Benchmark, 0.0, &x, &th, &u, PhaseKind::Denied, Some(&z)).is_err());
        assert!(observer_rate(&Benchmark, 0.0, &x, &th, &u, PhaseKind::Available, None).is_err());
    }

    #[test]
    fn control_feedforward_only() {
        let traj = Sinusoid::benchmark();
        let g = GainSet::diagonal(5.0, 2.0, 2, 0.05);
        let t = 0.3;
        let (xd, xd_dot) = traj.desired(t);
        let th = v(&[0.2, -0.1]);
        let u = control_input(&Benchmark, t, &xd, &th, &v(&[0.0, 0.0]), &xd_dot, &g, PhaseKind::Denied, None).unwrap();
        let expect = &xd_dot - Benchmark.drift(t, &xd) - Benchmark.regressor(t, &xd) * &th;
        assert!((u - expect).norm() < 1e-15);
    }

    #[test]
    fn control_hand_example() {
        // x̂ = [0, 2], e2 = [0, −2], θ̂ = 0, k2 = 2I at t = 0:
        // u = [2, 0] − f([0, 2]) − k2 e2 = [2, 0] − [2, 0] − [0, −4] = [0, 4].
        let g = GainSet::diagonal(5.0, 2.0, 2, 0.05);
        let (_, xd_dot) = Sinusoid::benchmark().desired(0.0);
        let u = control_input(
            &Benchmark,
            0.0,
            &v(&[0.0, 2.0]),
            &v(&[0.0, 0.0]),
            &v(&[0.0, -2.0]),
            &xd_dot,
            &g,
            PhaseKind::Denied,
            None,
        )
        .unwrap();
        assert!((u - v(&[0.0, 4.0])).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn closed_loop_tracking_error_dynamics(
            xh1 in -3.0f64..3.0, xh2 in -3.0f64..3.0,
            x1 in -3.0f64..3.0, x2 in -3.0f64..3.0,
            th1 in -2.0f64..2.0, th2 in -2.0f64..2.0,
            t in 0.0f64..10.0,
            available in any::<bool>(),
        ) {
            let traj = Sinusoid::benchmark();
            let g = GainSet::diagonal(5.0, 3.0, 2, 0.05);
            let (xd, xd_dot) = traj.desired(t);
            let x_hat = v(&[xh1, xh2]);
            let th = v(&[th1, th2]);
            let err = errors(&v(&[x1, x2]), &x_hat, &xd).unwrap();
            let (phase, vr) = if available {
                (PhaseKind::Available, Some(sliding_term(&err.e1, 0.7, 1.5, 2.0, &g, PhaseKind::Available).unwrap()))
            } else {
                (PhaseKind::Denied, None)
            };
            let u = control_input(&Benchmark, t, &x_hat, &th, &err.e2, &xd_dot, &g, phase, vr.as_ref()).unwrap();
            let xh_dot = observer_rate(&Benchmark, t, &x_hat, &th, &u, phase, vr.as_ref()).unwrap();
            let e2_dot = xh_dot - xd_dot;
            let expect = -(&g.k2 * &err.e2);
            prop_assert!((e2_dot - expect).amax() < 1e-9);
        }
    }
}
