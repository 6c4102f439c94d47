//! Complex feature vectors, diagonal covariances and phase alignment.
//!
//! Real-valued features (amplitude statistics, RSSI) are carried as complex
//! values with a zero imaginary part so every predictor and test runs the
//! same code path with and without phase noise.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this magnitude of `yᴴr` the alignment factor is undefined and the
/// vector passes through unchanged.
pub const ALIGN_EPS: f64 = 1e-12;

/// Largest dimension for which full Hermitian matrices are supported.
pub const MAX_FULL_K: usize = 64;

/// One feature measurement: K complex scalars at time index `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<Complex64>,
    pub t: u64,
}

impl FeatureVector {
    pub fn new(values: Vec<Complex64>, t: u64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values, t })
    }

    pub fn from_real(values: &[f64], t: u64) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect(), t)
    }

    pub fn zeros(k: usize, t: u64) -> Self {
        assert!(k > 0, "zero-dimensional feature vector");
        Self {
            values: vec![Complex64::new(0.0, 0.0); k],
            t,
        }
    }

    /// Wraps values already known to be finite (internal arithmetic results).
    pub(crate) fn from_raw(values: Vec<Complex64>, t: u64) -> Self {
        debug_assert!(!values.is_empty());
        Self { values, t }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// `selfᴴ · other`.
    pub fn inner(&self, other: &FeatureVector) -> Complex64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: Complex64) -> FeatureVector {
        Self::from_raw(self.values.iter().map(|v| v * factor).collect(), self.t)
    }

    /// Element-wise `|y_k|²`.
    pub fn power(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.k() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.k(),
            });
        }
        Ok(())
    }
}

/// Diagonal of a covariance or correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DiagCovariance {
    variances: Vec<f64>,
}

impl DiagCovariance {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::EmptyVector);
        }
        for (index, &value) in variances.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidVariance { index, value });
            }
        }
        Ok(Self { variances })
    }

    pub fn constant(k: usize, value: f64) -> Self {
        assert!(k > 0 && value.is_finite() && value >= 0.0);
        Self {
            variances: vec![value; k],
        }
    }

    /// Clamps negative entries (numerical undershoot) to zero.
    pub(crate) fn clamped(mut variances: Vec<f64>) -> Self {
        for v in &mut variances {
            if !(*v > 0.0) {
                *v = 0.0;
            }
        }
        Self { variances }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.variances.len()
    }

    #[inline]
    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub(crate) fn variances_mut(&mut self) -> &mut [f64] {
        &mut self.variances
    }

    pub fn mean(&self) -> f64 {
        self.variances.iter().sum::<f64>() / self.k() as f64
    }
}

impl TryFrom<Vec<f64>> for DiagCovariance {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DiagCovariance> for Vec<f64> {
    fn from(d: DiagCovariance) -> Self {
        d.variances
    }
}

/// Rotates `y` by the global phase that makes `yᴴr` real and nonnegative:
/// returns `(yᴴr / |yᴴr|)·y`.
///
/// When `|yᴴr| < ALIGN_EPS` (zero reference, orthogonal vectors) the factor is
/// undefined and `y` is returned unchanged.
pub fn phase_align(y: &FeatureVector, reference: &FeatureVector) -> Result<FeatureVector> {
    y.check_dim(reference.k())?;
    Ok(match alignment_factor(y, reference) {
        Some(factor) => y.scaled(factor),
        None => y.clone(),
    })
}

/// Unit-modulus factor `yᴴr / |yᴴr|`, or `None` in the degenerate case.
pub(crate) fn alignment_factor(y: &FeatureVector, reference: &FeatureVector) -> Option<Complex64> {
    let ip = y.inner(reference);
    let mag = ip.norm();
    (mag >= ALIGN_EPS).then(|| ip / mag)
}

/// Dense K×K Hermitian matrix, used only for the optional full-Γ mode.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    k: usize,
    entries: Vec<Complex64>,
}

impl HermitianMatrix {
    /// Row-major entries; validated Hermitian within 1e-9 and PSD within
    /// `1e-9·trace`.
    pub fn new(k: usize, entries: Vec<Complex64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyVector);
        }
        if k > MAX_FULL_K {
            return Err(Error::config("k", format!("full matrices support K <= {MAX_FULL_K}")));
        }
        if entries.len() != k * k {
            return Err(Error::DimensionMismatch {
                expected: k * k,
                got: entries.len(),
            });
        }
        if let Some(index) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let m = Self { k, entries };
        for i in 0..k {
            for j in 0..=i {
                if (m.get(i, j) - m.get(j, i).conj()).norm() > 1e-9 {
                    return Err(Error::config("entries", format!("not Hermitian at ({i},{j})")));
                }
            }
        }
        let tol = 1e-9 * m.trace().abs().max(f64::MIN_POSITIVE);
        m.shifted(tol).cholesky().map_err(|_| Error::NotPositiveDefinite)?;
        Ok(m)
    }

    pub fn from_diag(d: &DiagCovariance) -> Self {
        let k = d.k();
        let mut entries = vec![Complex64::new(0.0, 0.0); k * k];
        for (i, &v) in d.variances().iter().enumerate() {
            entries[i * k + i] = Complex64::new(v, 0.0);
        }
        Self { k, entries }
    }

    pub(crate) fn from_raw(k: usize, entries: Vec<Complex64>) -> Self {
        debug_assert_eq!(entries.len(), k * k);
        Self { k, entries }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.k + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.k).map(|i| self.get(i, i).re).sum()
    }

    pub fn diag(&self) -> DiagCovariance {
        DiagCovariance::clamped((0..self.k).map(|i| self.get(i, i).re).collect())
    }

    fn shifted(&self, delta: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.k {
            m.entries[i * self.k + i] += delta;
        }
        m
    }

    /// Lower-triangular factor L with A = L·Lᴴ.
    fn cholesky(&self) -> Result<Vec<Complex64>> {
        let k = self.k;
        let mut l = vec![Complex64::new(0.0, 0.0); k * k];
        for j in 0..k {
            let mut d = self.get(j, j).re;
            for p in 0..j {
                d -= l[j * k + p].norm_sqr();
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite);
            }
            let d = d.sqrt();
            l[j * k + j] = Complex64::new(d, 0.0);
            for i in (j + 1)..k {
                let mut s = self.get(i, j);
                for p in 0..j {
                    s -= l[i * k + p] * l[j * k + p].conj();
                }
                l[i * k + j] = s / d;
            }
        }
        Ok(l)
    }

    /// Inverse of `self + floor·I` via Cholesky.
    pub fn regularized_inverse(&self, floor: f64) -> Result<HermitianMatrix> {
        let k = self.k;
        let l = self.shifted(floor).cholesky()?;
        let mut inv = vec![Complex64::new(0.0, 0.0); k * k];
        let mut col = vec![Complex64::new(0.0, 0.0); k];
        for c in 0..k {
            // forward: L z = e_c
            for i in 0..k {
                let mut s = if i == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
                for p in 0..i {
                    s -= l[i * k + p] * col[p];
                }
                col[i] = s / l[i * k + i];
            }
            // backward: Lᴴ x = z
            for i in (0..k).rev() {
                let mut s = col[i];
                for p in (i + 1)..k {
                    s -= l[p * k + i].conj() * col[p];
                }
                col[i] = s / l[i * k + i];
            }
            for i in 0..k {
                inv[i * k + c] = col[i];
            }
        }
        // symmetrize rounding noise
        for i in 0..k {
            inv[i * k + i].im = 0.0;
            for j in 0..i {
                let avg = (inv[i * k + j] + inv[j * k + i].conj()) * 0.5;
                inv[i * k + j] = avg;
                inv[j * k + i] = avg.conj();
            }
        }
        Ok(HermitianMatrix::from_raw(k, inv))
    }

    /// `xᴴ · A · y`.
    pub fn bilinear(&self, x: &[Complex64], y: &[Complex64]) -> Complex64 {
        let k = self.k;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..k {
            let row = &self.entries[i * k..(i + 1) * k];
            let ay: Complex64 = row.iter().zip(y).map(|(a, b)| a * b).sum();
            acc += x[i].conj() * ay;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn fv(v: &[(f64, f64)]) -> FeatureVector {
        FeatureVector::new(v.iter().map(|&(a, b)| c(a, b)).collect(), 0).unwrap()
    }

    #[test]
    fn align_examples() {
        let out = phase_align(&fv(&[(1.0, 0.0)]), &fv(&[(1.0, 0.0)])).unwrap();
        assert_eq!(out.values(), &[c(1.0, 0.0)]);

        let out = phase_align(&fv(&[(0.0, 1.0)]), &fv(&[(1.0, 0.0)])).unwrap();
        assert!((out.values()[0] - c(1.0, 0.0)).norm() < 1e-15);

        let out = phase_align(&fv(&[(1.0, 0.0)]), &fv(&[(0.0, 0.0)])).unwrap();
        assert_eq!(out.values(), &[c(1.0, 0.0)]);
    }

    #[test]
    fn align_orthogonal_passes_through() {
        let y = fv(&[(1.0, 0.0), (0.0, 0.0)]);
        let r = fv(&[(0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(phase_align(&y, &r).unwrap(), y);
    }

    #[test]
    fn align_rejects_dimension_mismatch() {
        let err = phase_align(&fv(&[(1.0, 0.0)]), &fv(&[(1.0, 0.0), (2.0, 0.0)])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn rejects_non_finite_and_negative() {
        assert!(FeatureVector::new(vec![c(f64::NAN, 0.0)], 0).is_err());
        assert!(FeatureVector::new(vec![], 0).is_err());
        assert!(DiagCovariance::new(vec![1.0, -0.1]).is_err());
        assert!(DiagCovariance::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn full_inverse_matches_identity() {
        let a = HermitianMatrix::new(
            2,
            vec![c(2.0, 0.0), c(0.5, 0.5), c(0.5, -0.5), c(1.0, 0.0)],
        )
        .unwrap();
        let inv = a.regularized_inverse(0.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut s = c(0.0, 0.0);
                for p in 0..2 {
                    s += a.get(i, p) * inv.get(p, j);
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s - c(want, 0.0)).norm() < 1e-12, "{i},{j}: {s}");
            }
        }
    }

    #[test]
    fn hermitian_validation() {
        assert!(HermitianMatrix::new(2, vec![c(1.0, 0.0), c(1.0, 1.0), c(1.0, 1.0), c(1.0, 0.0)]).is_err());
        // indefinite
        assert!(HermitianMatrix::new(2, vec![c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]).is_err());
        assert!(HermitianMatrix::new(65, vec![c(0.0, 0.0); 65 * 65]).is_err());
    }

    fn cvec(k: usize) -> impl Strategy<Value = Vec<Complex64>> {
        prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b)| c(a, b)), k)
    }

    proptest! {
        #[test]
        fn align_output_is_real_nonneg_and_norm_preserving(
            (y, r) in (1usize..6).prop_flat_map(|k| (cvec(k), cvec(k)))
        ) {
            let y = FeatureVector::new(y, 0).unwrap();
            let r = FeatureVector::new(r, 0).unwrap();
            prop_assume!(y.inner(&r).norm() > 1e-6);
            let out = phase_align(&y, &r).unwrap();
            let ip = out.inner(&r);
            prop_assert!(ip.im.abs() <= 1e-9 * (1.0 + ip.re.abs()));
            prop_assert!(ip.re >= 0.0);
            prop_assert!((out.norm() - y.norm()).abs() <= 1e-12 * (1.0 + y.norm()));
        }

        #[test]
        fn global_phase_absorbed(
            (y, r) in (1usize..6).prop_flat_map(|k| (cvec(k), cvec(k))),
            phi in 0.0..(2.0 * PI),
        ) {
            let y = FeatureVector::new(y, 0).unwrap();
            let r = FeatureVector::new(r, 0).unwrap();
            prop_assume!(y.inner(&r).norm() > 1e-6);
            let rotated = y.scaled(Complex64::from_polar(1.0, phi));
            let a = phase_align(&rotated, &r).unwrap();
            let b = phase_align(&y, &r).unwrap();
            for (p, q) in a.values().iter().zip(b.values()) {
                prop_assert!((p - q).norm() < 1e-12);
            }
        }

        #[test]
        fn reference_rotation_is_equivariant(
            (y, r) in (1usize..6).prop_flat_map(|k| (cvec(k), cvec(k))),
            psi in 0.0..(2.0 * PI),
        ) {
            let y = FeatureVector::new(y, 0).unwrap();
            let r = FeatureVector::new(r, 0).unwrap();
            prop_assume!(y.inner(&r).norm() > 1e-6);
            let rot = Complex64::from_polar(1.0, psi);
            let a = phase_align(&y, &r.scaled(rot)).unwrap();
            let b = phase_align(&y, &r).unwrap().scaled(rot);
            for (p, q) in a.values().iter().zip(b.values()) {
                prop_assert!((p - q).norm() < 1e-12);
            }
        }

        #[test]
        fn aligned_output_maximizes_real_inner_product(
            (y, r) in (1usize..5).prop_flat_map(|k| (cvec(k), cvec(k)))
        ) {
            let y = FeatureVector::new(y, 0).unwrap();
            let r = FeatureVector::new(r, 0).unwrap();
            prop_assume!(y.inner(&r).norm() > 1e-6);
            let best = phase_align(&y, &r).unwrap().inner(&r).re;
            for step in 0..360 {
                let theta = step as f64 * 2.0 * PI / 360.0;
                let cand = y.scaled(Complex64::from_polar(1.0, theta)).inner(&r).re;
                prop_assert!(cand <= best + 1e-12);
            }
        }
    }
}
