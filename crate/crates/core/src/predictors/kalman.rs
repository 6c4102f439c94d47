use num_complex::Complex64;

use super::Prediction;
use crate::error::{Error, Result};
use crate::vector::{alignment_factor, DiagCovariance, FeatureVector};

/// Diagonal Kalman filter with an EM-style estimate of the process noise.
///
/// The process-noise diagonal is re-estimated each step from the measurement
/// correlation as `Û = (1 − â²)·corr`, and `â` follows the update weight as
/// `â = 1 − α`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    y_hat: FeatureVector,
    x_cov: DiagCovariance,
    corr: DiagCovariance,
    v_hat: DiagCovariance,
    a_hat: f64,
    u_hat: DiagCovariance,
    alpha0: f64,
}

impl KalmanState {
    /// `ŷ₀ = 0`, `X̂₀ = x_init`, `corr = x_init + V̂`, `â = 1 − alpha0`.
    pub fn new(x_init: DiagCovariance, v_hat: DiagCovariance, alpha0: f64) -> Result<Self> {
        let k = x_init.k();
        if v_hat.k() != k {
            return Err(Error::DimensionMismatch { expected: k, got: v_hat.k() });
        }
        if !(alpha0 > 0.0 && alpha0 <= 1.0) {
            return Err(Error::config("alpha0", format!("{alpha0} not in (0, 1]")));
        }
        let corr = DiagCovariance::clamped(
            x_init.variances().iter().zip(v_hat.variances()).map(|(x, v)| x + v).collect(),
        );
        Ok(Self {
            y_hat: FeatureVector::zeros(k, 0),
            x_cov: x_init,
            corr,
            v_hat,
            a_hat: 1.0 - alpha0,
            u_hat: DiagCovariance::constant(k, 0.0),
            alpha0,
        })
    }

    /// Overrides the mean and covariances, mainly for tests and restores.
    pub fn with_state(
        mut self,
        y_hat: FeatureVector,
        x_cov: DiagCovariance,
        corr: DiagCovariance,
    ) -> Result<Self> {
        let k = self.y_hat.k();
        y_hat.check_dim(k)?;
        if x_cov.k() != k || corr.k() != k {
            return Err(Error::DimensionMismatch { expected: k, got: x_cov.k().min(corr.k()) });
        }
        self.y_hat = y_hat;
        self.x_cov = x_cov;
        self.corr = corr;
        Ok(self)
    }

    pub fn y_hat(&self) -> &FeatureVector {
        &self.y_hat
    }
    pub fn x_cov(&self) -> &DiagCovariance {
        &self.x_cov
    }
    pub fn corr(&self) -> &DiagCovariance {
        &self.corr
    }
    pub fn v_hat(&self) -> &DiagCovariance {
        &self.v_hat
    }
    pub fn u_hat(&self) -> &DiagCovariance {
        &self.u_hat
    }
    pub fn a_hat(&self) -> f64 {
        self.a_hat
    }

    pub fn set_a_hat(&mut self, a: f64) {
        assert!((0.0..=1.0).contains(&a), "a_hat {a} outside [0, 1]");
        self.a_hat = a;
    }

    /// Per-element gain `X / (X + (α̃₀/α)·V̂)`.
    pub fn gain(&self, weight: f64) -> Result<Vec<f64>> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidWeight(weight));
        }
        let scale = self.alpha0 / weight;
        Ok(self
            .x_cov
            .variances()
            .iter()
            .zip(self.v_hat.variances())
            .map(|(&x, &v)| {
                let denom = x + scale * v;
                if denom > 0.0 {
                    x / denom
                } else {
                    0.0
                }
            })
            .collect())
    }

    /// Measurement update; returns the gains that were applied.
    pub fn correct(&mut self, y: &FeatureVector, weight: f64) -> Result<Vec<f64>> {
        y.check_dim(self.y_hat.k())?;
        let gain = self.gain(weight)?;
        let factor = alignment_factor(y, &self.y_hat).unwrap_or(Complex64::new(1.0, 0.0));
        let y_hat = self
            .y_hat
            .values()
            .iter()
            .zip(y.values())
            .zip(&gain)
            .map(|((old, new), g)| old + (factor * new - old) * *g)
            .collect();
        self.y_hat = FeatureVector::from_raw(y_hat, y.t);
        for (x, g) in self.x_cov.variances_mut().iter_mut().zip(&gain) {
            *x *= 1.0 - g;
        }
        for ((c, v), g) in self.corr.variances_mut().iter_mut().zip(y.values()).zip(&gain) {
            *c += g * (v.norm_sqr() - *c);
        }
        Ok(gain)
    }

    /// Time update with the current `â`.
    pub fn propagate(&mut self) {
        let a = self.a_hat;
        let a2 = a * a;
        let fresh = 1.0 - a2;
        for (u, c) in self.u_hat.variances_mut().iter_mut().zip(self.corr.variances()) {
            *u = fresh * c;
        }
        let y_hat = self.y_hat.values().iter().map(|v| v * a).collect();
        self.y_hat = FeatureVector::from_raw(y_hat, self.y_hat.t);
        for (x, u) in self.x_cov.variances_mut().iter_mut().zip(self.u_hat.variances()) {
            *x = a2 * *x + u;
        }
        for ((c, v), u) in self
            .corr
            .variances_mut()
            .iter_mut()
            .zip(self.v_hat.variances())
            .zip(self.u_hat.variances())
        {
            *c = a2 * *c + fresh * v + u;
        }
    }

    /// `(ŷ₀, corr − |ŷ₀|²)` with the difference clamped at zero.
    pub fn prediction(&self) -> Prediction {
        let var = self
            .corr
            .variances()
            .iter()
            .zip(self.y_hat.values())
            .map(|(c, y)| c - y.norm_sqr())
            .collect();
        Prediction {
            y_hat: self.y_hat.clone(),
            cov: DiagCovariance::clamped(var),
        }
    }
}
