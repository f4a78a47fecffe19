//! JSON scenario files.
//!
//! Every section and field is optional; omitted values fall back to the
//! benchmark scenario. Unknown keys are rejected.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::GainSet;
use crate::dynamics::{
    lipschitz_bounds, Benchmark, Dynamics, LipschitzBounds, OperatingBox, PolynomialDynamics, RegressorTerm,
    Sinusoid, SystemModel,
};
use crate::engine::{EngineConfig, Setup, Variant};
use crate::error::{Result, SimError};
use crate::estimator::EstimatorConfig;
use crate::linalg::lambda_min;
use crate::scheduler::{AnalysisConstants, SchedulePolicy};
use crate::signals::{FilterConfig, FilterVariant};

/// Grid resolution per axis used to estimate the Lipschitz constants.
pub const LIPSCHITZ_GRID: usize = 61;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Benchmark,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// Row-major drift matrix `A` of `f(x) = A x` (custom models only).
    pub drift: Option<Vec<Vec<f64>>>,
    /// Regressor monomials (custom models only).
    pub regressor: Option<Vec<RegressorTerm>>,
    pub theta: Vec<f64>,
    pub d_bar: f64,
    pub x0: Vec<f64>,
    pub x_hat0: Vec<f64>,
    /// Operating box half-widths, one per state or a single value for all.
    pub operating_box: Vec<f64>,
    pub trajectory: Sinusoid,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::Benchmark,
            drift: None,
            regressor: None,
            theta: vec![1.0, 0.5],
            d_bar: 1.5,
            x0: vec![-1.0, 1.0],
            x_hat0: vec![0.0, 0.0],
            operating_box: vec![3.0],
            trajectory: Sinusoid::benchmark(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsSection {
    /// Diagonal of `k1`; a single value is broadcast.
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub epsilon: f64,
}

impl Default for GainsSection {
    fn default() -> Self {
        Self { k1: vec![5.0], k2: vec![1.0], epsilon: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    /// Diagonal of `Γ`; a single value is broadcast.
    pub gamma: Vec<f64>,
    pub k_theta: f64,
    /// History stack size `N`.
    pub n: usize,
    pub lambda_bar: f64,
    pub window: f64,
    pub variant: Variant,
    pub theta_bar: f64,
    pub k_xi: f64,
    pub filter_beta: f64,
    pub ew_alpha: f64,
    pub theta_hat0: Vec<f64>,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            gamma: vec![4.0],
            k_theta: 5.0,
            n: 20,
            lambda_bar: 0.04,
            window: 0.25,
            variant: Variant::Cl,
            theta_bar: 5.0,
            k_xi: 0.05,
            filter_beta: 4.0,
            ew_alpha: 0.5,
            theta_hat0: vec![0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerSection {
    pub v_l: f64,
    pub v_u: f64,
    pub eta: f64,
    /// Minimum length of every Available interval after the first.
    pub available_floor: f64,
    /// Multiplier applied to every computed Denied budget.
    pub denied_scale: f64,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        Self { v_l: 0.67, v_u: 1136.0, eta: 48.0, available_floor: 3.0, denied_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub h: f64,
    pub t_end: f64,
    pub seed: u64,
    pub record_stride: usize,
    pub hold_step: f64,
    pub exact_switching: bool,
}

impl Default for EngineSection {
    fn default() -> Self {
        Self { h: 1e-3, t_end: 18.0, seed: 0, record_stride: 10, hold_step: 1e-3, exact_switching: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputsSection {
    pub directory: PathBuf,
}

impl Default for OutputsSection {
    fn default() -> Self {
        Self { directory: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub model: ModelSection,
    pub gains: GainsSection,
    pub estimator: EstimatorSection,
    pub scheduler: SchedulerSection,
    pub engine: EngineSection,
    pub outputs: OutputsSection,
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub setup: Setup,
    pub bounds: LipschitzBounds,
}

fn broadcast(what: &str, v: &[f64], n: usize) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; n]),
        m if m == n => Ok(v.to_vec()),
        m => Err(SimError::Config(format!("{what}: expected 1 or {n} values, got {m}"))),
    }
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn dynamics(&self) -> Result<Arc<dyn Dynamics>> {
        let m = &self.model;
        match m.kind {
            ModelKind::Benchmark => {
                if m.drift.is_some() || m.regressor.is_some() {
                    return Err(SimError::Config("model.drift and model.regressor require kind = \"custom\"".into()));
                }
                Ok(Arc::new(Benchmark))
            }
            ModelKind::Custom => {
                let rows = m.drift.as_ref().ok_or_else(|| SimError::Config("model.drift is required for custom models".into()))?;
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(SimError::Config("model.drift must be a nonempty square matrix".into()));
                }
                let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                let terms = m.regressor.clone().unwrap_or_default();
                Ok(Arc::new(PolynomialDynamics::new(a, m.theta.len(), terms)?))
            }
        }
    }

    /// Builds and validates the run setup, including the analysis constants.
    pub fn build(&self) -> Result<Scenario> {
        let dynamics = self.dynamics()?;
        let model = SystemModel::new(dynamics, DVector::from_vec(self.model.theta.clone()), self.model.d_bar)?;
        let (n, p) = (model.n(), model.p());
        self.model.trajectory.validate()?;
        if self.model.trajectory.dim() != n {
            return Err(SimError::Config(format!(
                "model.trajectory has dimension {}, state has {n}",
                self.model.trajectory.dim()
            )));
        }
        let half = broadcast("model.operating_box", &self.model.operating_box, n)?;
        let box_ = OperatingBox { lower: half.iter().map(|r| -r).collect(), upper: half.clone() };
        let bounds = lipschitz_bounds(&model, &box_, LIPSCHITZ_GRID, &[])?;

        let g = &self.gains;
        let k1 = DMatrix::from_diagonal(&DVector::from_vec(broadcast("gains.k1", &g.k1, n)?));
        let k2 = DMatrix::from_diagonal(&DVector::from_vec(broadcast("gains.k2", &g.k2, n)?));
        let gains = GainSet { k1, k2, epsilon: g.epsilon, pure_sign: false };
        gains.validate(n)?;

        let e = &self.estimator;
        let gamma = DMatrix::from_diagonal(&DVector::from_vec(broadcast("estimator.gamma", &e.gamma, p)?));
        let estimator = EstimatorConfig {
            k_theta: e.k_theta,
            gamma,
            theta_hat0: DVector::from_vec(broadcast("estimator.theta_hat0", &e.theta_hat0, p)?),
            theta_norm_bound: e.theta_bar,
            k_xi: e.k_xi,
            lambda_y: e.lambda_bar,
        };

        let s = &self.scheduler;
        let consts = AnalysisConstants {
            l_f: bounds.l_f,
            l_y: bounds.l_y,
            y_bar: bounds.y_bar,
            d_bar: model.d_bar(),
            k1_min: lambda_min(&gains.k1),
            k2_min: lambda_min(&gains.k2),
            v_l: s.v_l,
            v_u: s.v_u,
            eta: s.eta,
        };

        let en = &self.engine;
        let engine = EngineConfig {
            h: en.h,
            t_end: en.t_end,
            record_stride: en.record_stride,
            seed: en.seed,
            hold_step: en.hold_step,
            exact_switching: en.exact_switching,
        };
        let filter = FilterConfig {
            variant: match e.variant {
                Variant::Expfilter => FilterVariant::Exponential,
                Variant::Cl | Variant::Ew => FilterVariant::Windowed,
            },
            beta: e.filter_beta,
            window: e.window,
            quadrature_step: en.h,
        };

        let setup = Setup {
            model,
            trajectory: Arc::new(self.model.trajectory.clone()),
            estimator,
            gains,
            consts,
            policy: SchedulePolicy { available_floor: s.available_floor, denied_scale: s.denied_scale, snap: 0.0 },
            filter,
            stack_capacity: e.n,
            admission_threshold: e.lambda_bar,
            ew_alpha: e.ew_alpha,
            engine,
            variant: e.variant,
            x0: DVector::from_vec(self.model.x0.clone()),
            x_hat0: DVector::from_vec(self.model.x_hat0.clone()),
        };
        setup.validate()?;
        Ok(Scenario { file: self.clone(), setup, bounds })
    }
}

/// Reads, parses and validates a scenario file.
pub fn parse_config(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    ScenarioFile::from_json(&text)?.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_object_gives_benchmark_defaults() {
        let f = ScenarioFile::from_json("{}").unwrap();
        assert_eq!(f, ScenarioFile::default());
        let sc = f.build().unwrap();
        assert_eq!(sc.setup.stack_capacity, 20);
        assert_relative_eq!(sc.setup.estimator.gamma[(0, 0)], 4.0);
        assert_relative_eq!(sc.setup.estimator.gamma[(1, 1)], 4.0);
        assert_relative_eq!(sc.setup.estimator.k_theta, 5.0);
        assert_relative_eq!(sc.setup.admission_threshold, 0.04);
        assert_relative_eq!(sc.setup.filter.window, 0.25);
        assert_relative_eq!(sc.setup.model.d_bar(), 1.5);
        assert_eq!(sc.setup.model.theta_true().as_slice(), &[1.0, 0.5]);
        assert_relative_eq!(sc.bounds.l_f, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn round_trip() {
        let d = ScenarioFile::default();
        assert_eq!(ScenarioFile::from_json(&d.to_json()).unwrap(), d);
        let mut c = d.clone();
        c.model.kind = ModelKind::Custom;
        c.model.drift = Some(vec![vec![0.6, 0.8], vec![-0.8, 0.6]]);
        c.model.regressor = Some(vec![RegressorTerm { row: 1, col: 0, state: 0, power: 1, coeff: -1.0 }]);
        assert_eq!(ScenarioFile::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = ScenarioFile::from_json(r#"{"gains": {"k3": [1.0]}}"#).unwrap_err();
        assert!(matches!(&e, SimError::Config(m) if m.contains("k3")), "{e}");
        assert!(ScenarioFile::from_json(r#"{"extra": 1}"#).is_err());
    }

    #[test]
    fn wrong_type_names_field() {
        let e = ScenarioFile::from_json(r#"{"engine": {"h": "fast"}}"#).unwrap_err();
        assert!(matches!(&e, SimError::Config(m) if m.contains("invalid type")), "{e}");
    }

    #[test]
    fn k1_below_lipschitz_rejected() {
        let f = ScenarioFile::from_json(r#"{"gains": {"k1": [0.5, 0.5]}}"#).unwrap();
        let e = f.build().unwrap_err();
        assert!(e.to_string().contains("λ_min(k1) must exceed L_f"), "{e}");
    }

    #[test]
    fn v_upper_above_eta_rejected() {
        let f = ScenarioFile::from_json(r#"{"scheduler": {"v_u": 5.0, "eta": 3.0}}"#).unwrap();
        let e = f.build().unwrap_err();
        assert!(e.to_string().contains("V_u < η²/2"), "{e}");
    }

    #[test]
    fn gamma_must_be_positive_definite() {
        let f = ScenarioFile::from_json(r#"{"estimator": {"gamma": [4.0, -1.0]}}"#).unwrap();
        assert!(f.build().is_err());
    }

    #[test]
    fn broadcast_length_checked() {
        let f = ScenarioFile::from_json(r#"{"gains": {"k1": [5.0, 5.0, 5.0]}}"#).unwrap();
        assert!(matches!(f.build().unwrap_err(), SimError::Config(_)));
    }

    #[test]
    fn custom_model_requires_drift() {
        let f = ScenarioFile::from_json(r#"{"model": {"kind": "custom"}}"#).unwrap();
        assert!(matches!(f.build().unwrap_err(), SimError::Config(m) if m.contains("drift")));
    }

    #[test]
    fn custom_linear_model_bounds() {
        let f = ScenarioFile::from_json(
            r#"{"model": {"kind": "custom", "drift": [[0.6, 0.8], [-0.8, 0.6]], "theta": [1.0], "d_bar": 0.0},
                "estimator": {"gamma": [4.0], "theta_hat0": [0.0]}}"#,
        )
        .unwrap();
        let sc = f.build().unwrap();
        assert_relative_eq!(sc.bounds.l_f, 1.0, epsilon = 1e-9);
        assert_relative_eq!(sc.bounds.l_y, 0.0);
        assert_relative_eq!(sc.bounds.y_bar, 0.0);
    }

    #[test]
    fn filter_step_follows_engine_step() {
        let f = ScenarioFile::from_json(r#"{"engine": {"h": 0.0005}, "estimator": {"variant": "expfilter"}}"#).unwrap();
        let sc = f.build().unwrap();
        assert_relative_eq!(sc.setup.filter.quadrature_step, 5e-4);
        assert_eq!(sc.setup.filter.variant, FilterVariant::Exponential);
    }
}
