//! Switched adaptive update law and the parameter-error bound it certifies.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result, SimError};
use crate::linalg::{lambda_max, lambda_min};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub k_theta: f64,
    /// Adaptation gain Γ (symmetric positive definite).
    pub gamma: DMatrix<f64>,
    pub theta_hat0: DVector<f64>,
    /// A priori bound θ̄ on `‖θ‖`.
    pub theta_norm_bound: f64,
    /// Residual gain `k_ξ` with `‖Ξ_σ‖ ≤ k_ξ d̄`.
    pub k_xi: f64,
    /// Excitation level `λ_y` that starts adaptation.
    pub lambda_y: f64,
}

impl EstimatorConfig {
    pub fn benchmark() -> Self {
        Self {
            k_theta: 5.0,
            gamma: DMatrix::identity(2, 2) * 4.0,
            theta_hat0: DVector::zeros(2),
            theta_norm_bound: 1.2,
            k_xi: 0.1,
            lambda_y: 0.04,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.theta_hat0.len();
        if !(self.k_theta > 0.0 && self.k_theta.is_finite()) {
            return Err(SimError::Validation(format!("k_theta must be > 0, got {}", self.k_theta)));
        }
        check_dim("gamma rows", p, self.gamma.nrows())?;
        check_dim("gamma cols", p, self.gamma.ncols())?;
        if (&self.gamma - self.gamma.transpose()).amax() > 1e-12 {
            return Err(SimError::Validation("Gamma must be symmetric".into()));
        }
        if lambda_min(&self.gamma) <= 0.0 {
            return Err(SimError::Validation("Gamma must be positive definite".into()));
        }
        if !(self.theta_norm_bound >= 0.0) {
            return Err(SimError::Validation("theta_norm_bound must be nonnegative".into()));
        }
        if !(self.k_xi >= 0.0) {
            return Err(SimError::Validation("k_xi must be nonnegative".into()));
        }
        if !(self.lambda_y >= 0.0) {
            return Err(SimError::Validation("lambda_y must be nonnegative".into()));
        }
        Ok(())
    }

    /// `Γ̲ = λ_min(Γ⁻¹)`.
    pub fn gamma_lower(&self) -> f64 {
        1.0 / lambda_max(&self.gamma)
    }

    /// `Γ̄ = λ_max(Γ⁻¹)`.
    pub fn gamma_upper(&self) -> f64 {
        1.0 / lambda_min(&self.gamma)
    }

    /// Seed for the parameter-error bound: `θ̄ + ‖θ̂(0)‖`.
    pub fn initial_bound(&self) -> f64 {
        self.theta_norm_bound + self.theta_hat0.norm()
    }
}

/// `θ̂' = k_θ Γ (U_σ − Y_σ θ̂)` once `t ≥ T_σ`, zero otherwise.
pub fn theta_rate(
    cfg: &EstimatorConfig,
    theta_hat: &DVector<f64>,
    u_sigma: &DVector<f64>,
    y_sigma: &DMatrix<f64>,
    t: f64,
    t_sigma: Option<f64>,
) -> DVector<f64> {
    match t_sigma {
        Some(ts) if t >= ts => (&cfg.gamma * (u_sigma - y_sigma * theta_hat)) * cfg.k_theta,
        _ => DVector::zeros(theta_hat.len()),
    }
}

/// Constants of the ultimate bound on `θ̃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UubConstants {
    /// `ρ = k_θ λ_y / 4`.
    pub rho: f64,
    /// `ϖ = k_θ k_ξ² d̄² / (2 λ_y)`.
    pub varpi: f64,
    /// `√((Γ̄/Γ̲)(ϖ/ρ))`.
    pub radius: f64,
    pub gamma_lower: f64,
    pub gamma_upper: f64,
}

impl UubConstants {
    /// `α = Γ̄/Γ̲`.
    pub fn alpha(&self) -> f64 {
        self.gamma_upper / self.gamma_lower
    }

    /// `γ = ϖ/ρ`.
    pub fn gamma_ratio(&self) -> f64 {
        self.varpi / self.rho
    }

    fn decay(&self, elapsed: f64) -> f64 {
        (-self.rho * elapsed / self.gamma_upper).exp()
    }
}

pub fn uub_constants(cfg: &EstimatorConfig, lambda_y: f64, k_xi: f64, d_bar: f64) -> Result<UubConstants> {
    if !(lambda_y > 0.0 && lambda_y.is_finite()) {
        return Err(SimError::InvalidInput(format!("lambda_y must be positive, got {lambda_y}")));
    }
    let rho = cfg.k_theta * lambda_y / 4.0;
    let varpi = cfg.k_theta * k_xi * k_xi * d_bar * d_bar / (2.0 * lambda_y);
    let gamma_lower = cfg.gamma_lower();
    let gamma_upper = cfg.gamma_upper();
    let radius = ((gamma_upper / gamma_lower) * (varpi / rho)).sqrt();
    Ok(UubConstants { rho, varpi, radius, gamma_lower, gamma_upper })
}

/// Bound on `‖θ̃‖` after `elapsed` seconds of adaptation starting from `theta_in`.
pub fn propagate_bound(theta_in: f64, elapsed: f64, c: &UubConstants) -> f64 {
    let e = c.decay(elapsed.max(0.0));
    (c.alpha() * (theta_in * theta_in * e + c.gamma_ratio() * (1.0 - e))).sqrt()
}

/// Closed form of `propagate_bound` folded over consecutive adaptation
/// intervals of the given lengths:
///
/// ```text
/// √( α^{k+1} θ₀² Π_j E_j + γ Σ_j α^{k−j+1} (Π_{l>j} E_l)(1 − E_j) ),  E_j = e^{−ρ Δ_j / Γ̄}
/// ```
pub fn recursive_bound(theta0: f64, interval_lengths: &[f64], c: &UubConstants) -> f64 {
    if interval_lengths.is_empty() {
        return theta0;
    }
    let alpha = c.alpha();
    let k = interval_lengths.len() - 1;
    let e: Vec<f64> = interval_lengths.iter().map(|&dt| c.decay(dt.max(0.0))).collect();
    let prod_all: f64 = e.iter().product();
    let mut phi = 0.0;
    for j in 0..=k {
        let tail: f64 = e[j + 1..].iter().product();
        phi += alpha.powi((k - j + 1) as i32) * tail * (1.0 - e[j]);
    }
    (alpha.powi((k + 1) as i32) * theta0 * theta0 * prod_all + c.gamma_ratio() * phi).sqrt()
}

/// Running bound `θ̃_σ` with its value at every GPS-loss instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaBound {
    current: f64,
    history: Vec<(f64, f64)>,
}

impl ThetaBound {
    pub fn new(initial: f64) -> Self {
        Self { current: initial, history: Vec::new() }
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    /// Bounds recorded at successive `t_σ^u`.
    pub fn history(&self) -> &[(f64, f64)] {
        &self.history
    }

    /// Applies the adaptation of one GPS-available interval and records the
    /// bound at the switch time `t_u`. The bound is carried unchanged through
    /// the following denied interval.
    pub fn close_interval(&mut self, t_u: f64, adapt_elapsed: f64, consts: Option<&UubConstants>) -> f64 {
        if let Some(c) = consts {
            if adapt_elapsed > 0.0 {
                self.current = propagate_bound(self.current, adapt_elapsed, c);
            }
        }
        self.history.push((t_u, self.current));
        self.current
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> EstimatorConfig {
        EstimatorConfig::benchmark()
    }

    #[test]
    fn rate_zero_before_excitation() {
        let c = cfg();
        let th = DVector::from_column_slice(&[0.3, 0.1]);
        let u = DVector::from_column_slice(&[1.0, 1.0]);
        let y = DMatrix::identity(2, 2);
        assert_eq!(theta_rate(&c, &th, &u, &y, 1.0, Some(2.0)), DVector::zeros(2));
        assert_eq!(theta_rate(&c, &th, &u, &y, 1.0, None), DVector::zeros(2));
    }

    #[test]
    fn rate_zero_at_true_parameters() {
        let c = cfg();
        let theta = DVector::from_column_slice(&[1.0, 0.5]);
        let y = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]);
        let u = &y * &theta;
        assert!(theta_rate(&c, &theta, &u, &y, 1.0, Some(0.5)).norm() < 1e-15);
    }

    #[test]
    fn rate_hand_example() {
        // Residual [0.1, −0.2] times k_θ Γ = 20 I.
        let c = cfg();
        let th = DVector::zeros(2);
        let u = DVector::from_column_slice(&[0.1, -0.2]);
        let y = DMatrix::zeros(2, 2);
        let r = theta_rate(&c, &th, &u, &y, 1.0, Some(1.0));
        assert!((r - DVector::from_column_slice(&[2.0, -4.0])).norm() < 1e-14);
    }

    #[test]
    fn uub_examples() {
        let c = cfg();
        let z = uub_constants(&c, 0.4, 1.0, 0.0).unwrap();
        assert_eq!(z.varpi, 0.0);
        assert_eq!(z.radius, 0.0);
        assert!((z.alpha() - 1.0).abs() < 1e-15);

        let k = uub_constants(&c, 0.4, 1.0, 1.5).unwrap();
        assert!((k.rho - 0.5).abs() < 1e-12);
        assert!((k.varpi - 14.0625).abs() < 1e-12);
        assert!((k.radius - (14.0625f64 / 0.5).sqrt()).abs() < 1e-12);
        assert!((k.radius - 5.3033).abs() < 1e-4);

        assert!(matches!(uub_constants(&c, 0.0, 1.0, 1.5), Err(SimError::InvalidInput(_))));
    }

    #[test]
    fn propagate_examples() {
        let c = uub_constants(&cfg(), 0.4, 1.0, 1.5).unwrap();
        assert!((propagate_bound(2.0, 0.0, &c) - 2.0).abs() < 1e-15);
        assert!((propagate_bound(2.0, 1e4, &c) - c.radius).abs() < 1e-12);

        let manual = UubConstants {
            rho: 0.5,
            varpi: 0.0,
            radius: 0.0,
            gamma_lower: 0.25,
            gamma_upper: 0.25,
        };
        assert!((propagate_bound(1.0, 1.0, &manual) - (-2.0f64).exp().sqrt()).abs() < 1e-15);
        assert!((propagate_bound(1.0, 1.0, &manual) - 0.36788).abs() < 1e-5);
        let _ = manual.gamma_ratio();
    }

    fn fold(theta0: f64, lengths: &[f64], c: &UubConstants) -> f64 {
        lengths.iter().fold(theta0, |b, &dt| propagate_bound(b, dt, c))
    }

    #[test]
    fn recursive_matches_single_and_zero_lengths() {
        let c = uub_constants(&cfg(), 0.4, 1.0, 1.5).unwrap();
        assert!((recursive_bound(1.7, &[2.0], &c) - propagate_bound(1.7, 2.0, &c)).abs() < 1e-14);

        let aniso = EstimatorConfig {
            gamma: DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 2.0]),
            ..cfg()
        };
        let c = uub_constants(&aniso, 0.4, 1.0, 1.5).unwrap();
        let alpha = c.alpha();
        assert!((alpha - 2.0).abs() < 1e-12);
        let b = recursive_bound(0.8, &[0.0, 0.0, 0.0], &c);
        assert!((b - alpha.powf(1.5) * 0.8).abs() < 1e-12);
    }

    #[test]
    fn recursive_matches_fold_for_benchmark_intervals() {
        let c = uub_constants(&cfg(), 0.1, 0.1, 1.5).unwrap();
        let lengths = [3.0, 3.0, 3.0];
        let a = recursive_bound(1.2, &lengths, &c);
        let b = fold(1.2, &lengths, &c);
        assert!(((a - b) / b).abs() < 1e-12);
    }

    #[test]
    fn theta_bound_records_history() {
        let c = uub_constants(&cfg(), 0.2, 0.1, 1.5).unwrap();
        let mut tb = ThetaBound::new(1.2);
        let b1 = tb.close_interval(3.0, 3.0, Some(&c));
        let b2 = tb.close_interval(9.0, 3.0, Some(&c));
        assert!(b2 < b1 && b1 < 1.2);
        assert_eq!(tb.history().len(), 2);
        // Without excitation the bound is carried over unchanged.
        assert_eq!(tb.close_interval(12.0, 0.0, None), b2);
    }

    #[test]
    fn validation_rejects_indefinite_gamma() {
        let bad = EstimatorConfig { gamma: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), ..cfg() };
        assert!(bad.validate().is_err());
        assert!(cfg().validate().is_ok());
    }

    proptest! {
        #[test]
        fn recursive_equals_fold(
            theta0 in 0.0f64..5.0,
            lengths in proptest::collection::vec(0.0f64..6.0, 1..8),
            lambda_y in 0.05f64..2.0,
            g2 in 0.5f64..8.0,
            d_bar in 0.0f64..2.0,
        ) {
            let c = EstimatorConfig {
                gamma: DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, g2]),
                ..EstimatorConfig::benchmark()
            };
            let u = uub_constants(&c, lambda_y, 0.5, d_bar).unwrap();
            let a = recursive_bound(theta0, &lengths, &u);
            let b = fold(theta0, &lengths, &u);
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300) + 1e-300);
        }

        #[test]
        fn propagate_monotone_toward_radius(theta_in in 0.0f64..10.0, t1 in 0.0f64..5.0, dt in 0.0f64..5.0) {
            let u = uub_constants(&EstimatorConfig::benchmark(), 0.4, 1.0, 1.5).unwrap();
            let a = propagate_bound(theta_in, t1, &u);
            let b = propagate_bound(theta_in, t1 + dt, &u);
            if theta_in > u.radius {
                prop_assert!(b <= a + 1e-12);
            } else {
                prop_assert!(b >= a - 1e-12);
            }
        }
    }
}
