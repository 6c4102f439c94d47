//! Feature predictors producing `ŷ₀(t)` and the diagonal of `Ŷ₀(t)`.
//!
//! All three accept a per-measurement weight so that measurements flagged as
//! anomalies contribute only marginally to future predictions.

mod ar;
mod kalman;
mod ma;

pub use ar::ArState;
pub use kalman::KalmanState;
pub use ma::MaState;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{DiagCovariance, FeatureVector};

pub const DEFAULT_ALPHA0: f64 = 0.02;
pub const DEFAULT_ALPHA1: f64 = 0.001;
pub const DEFAULT_MA_WINDOW: usize = 200;
pub const DEFAULT_V_HAT: f64 = 2.0;
pub const DEFAULT_X_INIT: f64 = 1.0;

/// Update weights for measurements tested as H0 and H1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightPolicy {
    pub alpha0: f64,
    pub alpha1: f64,
}

impl WeightPolicy {
    pub fn new(alpha0: f64, alpha1: f64) -> Result<Self> {
        let p = Self { alpha0, alpha1 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return Err(Error::config("alpha0", format!("{} not in (0, 1]", self.alpha0)));
        }
        if !(self.alpha1 >= 0.0 && self.alpha1 < self.alpha0) {
            return Err(Error::config("alpha1", format!("{} not in [0, alpha0)", self.alpha1)));
        }
        Ok(())
    }

    pub fn weight(&self, anomaly: bool) -> f64 {
        if anomaly {
            self.alpha1
        } else {
            self.alpha0
        }
    }
}

impl Default for WeightPolicy {
    fn default() -> Self {
        Self {
            alpha0: DEFAULT_ALPHA0,
            alpha1: DEFAULT_ALPHA1,
        }
    }
}

/// A prediction `ŷ₀(t)` together with the diagonal of its covariance `Ŷ₀(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub y_hat: FeatureVector,
    pub cov: DiagCovariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Ma,
    Ar,
    Kalman,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 3] = [PredictorKind::Ma, PredictorKind::Ar, PredictorKind::Kalman];

    pub fn as_str(&self) -> &'static str {
        match self {
            PredictorKind::Ma => "ma",
            PredictorKind::Ar => "ar",
            PredictorKind::Kalman => "kalman",
        }
    }
}

impl std::fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ma" => Ok(Self::Ma),
            "ar" => Ok(Self::Ar),
            "kalman" => Ok(Self::Kalman),
            other => Err(Error::config("predictor", format!("unknown predictor '{other}'"))),
        }
    }
}

/// Predictor parameters; kind-specific fields are ignored by other kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    /// MA window length N.
    pub ma_window: usize,
    /// Kalman measurement-noise estimate, `V̂ = v_hat·I`.
    pub v_hat: f64,
    /// Measurement-noise term in the AR starting correlation
    /// `x_init + ar_v_init`.
    pub ar_v_init: f64,
    /// Initial state variance per element. `None` uses the per-element power
    /// of the first measurement, falling back to `DEFAULT_X_INIT` when that
    /// is zero.
    pub x_init: Option<f64>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            kind: PredictorKind::Ar,
            ma_window: DEFAULT_MA_WINDOW,
            v_hat: DEFAULT_V_HAT,
            ar_v_init: 0.0,
            x_init: None,
        }
    }
}

impl PredictorConfig {
    pub fn of_kind(kind: PredictorKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == PredictorKind::Ma && self.ma_window == 0 {
            return Err(Error::config("ma_window", "must be positive"));
        }
        if !(self.v_hat.is_finite() && self.v_hat >= 0.0) {
            return Err(Error::config("v_hat", format!("{} is not a finite nonnegative value", self.v_hat)));
        }
        if !(self.ar_v_init.is_finite() && self.ar_v_init >= 0.0) {
            return Err(Error::config("ar_v_init", format!("{} is not a finite nonnegative value", self.ar_v_init)));
        }
        if let Some(x) = self.x_init {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::config("x_init", format!("{x} is not a finite nonnegative value")));
            }
        }
        Ok(())
    }

    fn x_init_for(&self, first: &FeatureVector) -> DiagCovariance {
        match self.x_init {
            Some(x) => DiagCovariance::constant(first.k(), x),
            None => {
                let p = first.power();
                if p.iter().all(|&v| v == 0.0) {
                    DiagCovariance::constant(first.k(), DEFAULT_X_INIT)
                } else {
                    DiagCovariance::clamped(p)
                }
            }
        }
    }
}

/// State of one of the three predictors.
#[derive(Debug, Clone)]
pub enum PredictorState {
    Ma(MaState),
    Ar(ArState),
    Kalman(KalmanState),
}

impl PredictorState {
    /// Builds the predictor for a stream whose first measurement is `first`.
    pub fn for_stream(config: &PredictorConfig, policy: &WeightPolicy, first: &FeatureVector) -> Result<Self> {
        config.validate()?;
        policy.validate()?;
        let k = first.k();
        Ok(match config.kind {
            PredictorKind::Ma => PredictorState::Ma(MaState::new(config.ma_window, policy.alpha0)?),
            PredictorKind::Ar => {
                let x = config.x_init_for(first);
                let init = sum_diag(&x, &DiagCovariance::constant(k, config.ar_v_init));
                PredictorState::Ar(ArState::new(init))
            }
            PredictorKind::Kalman => PredictorState::Kalman(KalmanState::new(
                config.x_init_for(first),
                DiagCovariance::constant(k, config.v_hat),
                policy.alpha0,
            )?),
        })
    }

    pub fn kind(&self) -> PredictorKind {
        match self {
            PredictorState::Ma(_) => PredictorKind::Ma,
            PredictorState::Ar(_) => PredictorKind::Ar,
            PredictorState::Kalman(_) => PredictorKind::Kalman,
        }
    }

    pub fn predict(&self) -> Result<Prediction> {
        match self {
            PredictorState::Ma(s) => s.predict(),
            PredictorState::Ar(s) => Ok(s.predict()),
            PredictorState::Kalman(s) => Ok(s.prediction()),
        }
    }

    /// Folds in a tested measurement with its weight. The Kalman state is
    /// corrected and then propagated, so it always holds the prior for the
    /// next step.
    pub fn update(&mut self, y: &FeatureVector, weight: f64) -> Result<()> {
        match self {
            PredictorState::Ma(s) => s.update(y, weight),
            PredictorState::Ar(s) => s.update(y, weight),
            PredictorState::Kalman(s) => {
                s.correct(y, weight)?;
                s.set_a_hat(1.0 - weight);
                s.propagate();
                Ok(())
            }
        }
    }
}

fn sum_diag(a: &DiagCovariance, b: &DiagCovariance) -> DiagCovariance {
    DiagCovariance::clamped(a.variances().iter().zip(b.variances()).map(|(x, y)| x + y).collect())
}

fn check_weight(weight: f64) -> Result<()> {
    if !(weight.is_finite() && (0.0..=1.0).contains(&weight)) {
        return Err(Error::InvalidWeight(weight));
    }
    Ok(())
}
