use super::{check_weight, Prediction};
use crate::error::Result;
use crate::vector::{alignment_factor, DiagCovariance, FeatureVector};

/// Autoregressive (exponentially weighted) predictor with a diagonal
/// correlation estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ArState {
    y_hat: FeatureVector,
    corr: DiagCovariance,
}

impl ArState {
    /// Starts from `ŷ₀ = 0` with the given initial correlation diagonal.
    pub fn new(init_corr: DiagCovariance) -> Self {
        Self {
            y_hat: FeatureVector::zeros(init_corr.k(), 0),
            corr: init_corr,
        }
    }

    pub fn from_parts(y_hat: FeatureVector, corr: DiagCovariance) -> Result<Self> {
        y_hat.check_dim(corr.k())?;
        Ok(Self { y_hat, corr })
    }

    pub fn y_hat(&self) -> &FeatureVector {
        &self.y_hat
    }

    pub fn corr(&self) -> &DiagCovariance {
        &self.corr
    }

    /// `ŷ ← w·align(y, ŷ) + (1−w)·ŷ`, `corr ← w·|y|² + (1−w)·corr`.
    pub fn update(&mut self, y: &FeatureVector, weight: f64) -> Result<()> {
        y.check_dim(self.y_hat.k())?;
        check_weight(weight)?;
        let keep = 1.0 - weight;
        let factor = alignment_factor(y, &self.y_hat).unwrap_or(num_complex::Complex64::new(1.0, 0.0));
        let fw = factor * weight;
        let y_hat = self
            .y_hat
            .values()
            .iter()
            .zip(y.values())
            .map(|(old, new)| fw * new + old * keep)
            .collect();
        self.y_hat = FeatureVector::from_raw(y_hat, y.t);
        for (c, v) in self.corr.variances_mut().iter_mut().zip(y.values()) {
            *c = weight * v.norm_sqr() + keep * *c;
        }
        Ok(())
    }

    /// `(ŷ, corr − |ŷ|²)` with the difference clamped at zero.
    pub fn predict(&self) -> Prediction {
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
