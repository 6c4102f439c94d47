use std::collections::VecDeque;

use num_complex::Complex64;

use super::{check_weight, Prediction};
use crate::error::{Error, Result};
use crate::vector::{alignment_factor, DiagCovariance, FeatureVector, HermitianMatrix, MAX_FULL_K};

/// Weighted moving average over the last `window` measurements.
///
/// Every stored vector is phase-aligned to a reference entry before
/// averaging. The reference is the most recent entry stored with weight
/// `alpha0` (the most recent non-anomalous measurement), or the most recent
/// entry when none qualifies.
#[derive(Debug, Clone)]
pub struct MaState {
    window: usize,
    alpha0: f64,
    history: VecDeque<(FeatureVector, f64)>,
}

impl MaState {
    pub fn new(window: usize, alpha0: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::config("ma_window", "must be positive"));
        }
        Ok(Self {
            window,
            alpha0,
            history: VecDeque::with_capacity(window + 1),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// Stored `(measurement, weight)` pairs, oldest first.
    pub fn history(&self) -> impl Iterator<Item = (&FeatureVector, f64)> {
        self.history.iter().map(|(y, w)| (y, *w))
    }

    pub fn update(&mut self, y: &FeatureVector, weight: f64) -> Result<()> {
        check_weight(weight)?;
        if let Some((first, _)) = self.history.front() {
            y.check_dim(first.k())?;
        }
        self.history.push_back((y.clone(), weight));
        while self.history.len() > self.window {
            self.history.pop_front();
        }
        Ok(())
    }

    fn reference(&self) -> Option<&FeatureVector> {
        self.history
            .iter()
            .rev()
            .find(|(_, w)| *w == self.alpha0)
            .or_else(|| self.history.back())
            .map(|(y, _)| y)
    }

    /// Alignment factors for every stored entry (1 where alignment is skipped).
    fn factors(&self, reference: &FeatureVector) -> Vec<Complex64> {
        self.history
            .iter()
            .map(|(y, _)| alignment_factor(y, reference).unwrap_or(Complex64::new(1.0, 0.0)))
            .collect()
    }

    fn total_weight(&self) -> Result<f64> {
        if self.history.is_empty() {
            return Err(Error::NoPrediction("moving-average window is empty"));
        }
        let total: f64 = self.history.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) {
            return Err(Error::NoPrediction("moving-average weights sum to zero"));
        }
        Ok(total)
    }

    pub fn predict(&self) -> Result<Prediction> {
        let total = self.total_weight()?;
        let reference = self.reference().expect("nonempty history");
        let k = reference.k();
        let factors = self.factors(reference);

        let mut mean = vec![Complex64::new(0.0, 0.0); k];
        let mut power = vec![0.0; k];
        for ((y, w), f) in self.history.iter().zip(&factors) {
            let fw = f * *w;
            for ((m, p), v) in mean.iter_mut().zip(power.iter_mut()).zip(y.values()) {
                *m += fw * v;
                *p += *w * v.norm_sqr();
            }
        }
        let inv = 1.0 / total;
        for m in &mut mean {
            *m *= inv;
        }
        let var = power
            .iter()
            .zip(&mean)
            .map(|(p, m)| p * inv - m.norm_sqr())
            .collect();
        Ok(Prediction {
            y_hat: FeatureVector::from_raw(mean, reference.t),
            cov: DiagCovariance::clamped(var),
        })
    }

    /// Full `Ŷ₀(t)` from the aligned window; only for K ≤ `MAX_FULL_K`.
    pub fn predict_full(&self) -> Result<(FeatureVector, HermitianMatrix)> {
        let total = self.total_weight()?;
        let reference = self.reference().expect("nonempty history");
        let k = reference.k();
        if k > MAX_FULL_K {
            return Err(Error::config("gamma_mode", format!("full covariance needs K <= {MAX_FULL_K}, got {k}")));
        }
        let factors = self.factors(reference);
        let inv = 1.0 / total;

        let aligned: Vec<Vec<Complex64>> = self
            .history
            .iter()
            .zip(&factors)
            .map(|((y, _), f)| y.values().iter().map(|v| v * f).collect())
            .collect();
        let mut mean = vec![Complex64::new(0.0, 0.0); k];
        for (a, (_, w)) in aligned.iter().zip(&self.history) {
            for (m, v) in mean.iter_mut().zip(a) {
                *m += v * (*w * inv);
            }
        }
        let mut cov = vec![Complex64::new(0.0, 0.0); k * k];
        for (a, (_, w)) in aligned.iter().zip(&self.history) {
            let w = *w * inv;
            for i in 0..k {
                for j in 0..k {
                    cov[i * k + j] += a[i] * a[j].conj() * w;
                }
            }
        }
        for i in 0..k {
            for j in 0..k {
                cov[i * k + j] -= mean[i] * mean[j].conj();
            }
            if cov[i * k + i].re < 0.0 {
                cov[i * k + i].re = 0.0;
            }
            cov[i * k + i].im = 0.0;
        }
        Ok((
            FeatureVector::from_raw(mean, reference.t),
            HermitianMatrix::from_raw(k, cov),
        ))
    }
}
