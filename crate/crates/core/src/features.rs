//! Packet bundling and the eight CSI/RSSI feature extractors.
//!
//! Standard deviations and variances are population statistics over the
//! pooled packets of B consecutive bundles. Amplitudes are linear `|csi|`.

use std::collections::VecDeque;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::FeatureVector;

pub const DEFAULT_BUNDLE_WINDOW: f64 = 0.2;

/// One received packet. `rssi` is `None` once the packet has been normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub time: f64,
    pub rssi: Option<f64>,
    pub csi: Vec<Complex64>,
}

/// All packets of one time window.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub window_index: u64,
    pub packets: Vec<Packet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    FavgCsiStd,
    FavgCsiVar,
    CsiStdVec,
    CsiVarVec,
    TavgCsiAmplVec,
    RssiStd,
    RssiVar,
    TavgRssi,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 8] = [
        FeatureKind::FavgCsiStd,
        FeatureKind::FavgCsiVar,
        FeatureKind::CsiStdVec,
        FeatureKind::CsiVarVec,
        FeatureKind::TavgCsiAmplVec,
        FeatureKind::RssiStd,
        FeatureKind::RssiVar,
        FeatureKind::TavgRssi,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::FavgCsiStd => "favg-csi-std",
            FeatureKind::FavgCsiVar => "favg-csi-var",
            FeatureKind::CsiStdVec => "csi-std-vec",
            FeatureKind::CsiVarVec => "csi-var-vec",
            FeatureKind::TavgCsiAmplVec => "tavg-csi-ampl-vec",
            FeatureKind::RssiStd => "rssi-std",
            FeatureKind::RssiVar => "rssi-var",
            FeatureKind::TavgRssi => "tavg-rssi",
        }
    }

    pub fn uses_rssi(&self) -> bool {
        matches!(self, FeatureKind::RssiStd | FeatureKind::RssiVar | FeatureKind::TavgRssi)
    }

    /// Output dimension for a trace with `k_sub` subcarriers.
    pub fn dim(&self, k_sub: usize) -> usize {
        match self {
            FeatureKind::CsiStdVec | FeatureKind::CsiVarVec | FeatureKind::TavgCsiAmplVec => k_sub,
            _ => 1,
        }
    }

    fn min_packets(&self) -> usize {
        match self {
            FeatureKind::TavgCsiAmplVec | FeatureKind::TavgRssi => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('_', "-");
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::config("feature", format!("unknown feature '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    /// Number of consecutive bundles pooled per feature measurement.
    pub bundles: usize,
    /// Compute CSI features from unit-norm CSI vectors.
    #[serde(default)]
    pub normalized: bool,
}

impl FeatureSpec {
    pub fn new(kind: FeatureKind, bundles: usize, normalized: bool) -> Self {
        Self { kind, bundles, normalized }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bundles == 0 {
            return Err(Error::config("bundles", "must be positive"));
        }
        if self.normalized && self.kind.uses_rssi() {
            return Err(Error::config(
                "normalized",
                format!("{} is not available from normalized CSI", self.kind),
            ));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!(
            "{}{}/B={}",
            self.kind,
            if self.normalized { "(norm)" } else { "" },
            self.bundles
        )
    }
}

/// Incremental form of [`bundle_packets`]: emits each bundle once a packet
/// from a later window arrives.
#[derive(Debug, Clone)]
pub struct Bundler {
    window: f64,
    current: Option<Bundle>,
    last_time: f64,
    position: usize,
}

impl Bundler {
    pub fn new(window: f64) -> Result<Self> {
        if !(window.is_finite() && window > 0.0) {
            return Err(Error::config("bundle_window", format!("{window} must be positive")));
        }
        Ok(Self {
            window,
            current: None,
            last_time: f64::NEG_INFINITY,
            position: 0,
        })
    }

    pub fn push(&mut self, p: Packet) -> Result<Option<Bundle>> {
        let position = self.position;
        self.position += 1;
        if !(p.time >= self.last_time) || p.time < 0.0 {
            return Err(Error::Unsorted { position });
        }
        self.last_time = p.time;
        let idx = (p.time / self.window).floor() as u64;
        match &mut self.current {
            Some(b) if b.window_index == idx => {
                b.packets.push(p);
                Ok(None)
            }
            _ => Ok(self.current.replace(Bundle {
                window_index: idx,
                packets: vec![p],
            })),
        }
    }

    pub fn finish(&mut self) -> Option<Bundle> {
        self.current.take()
    }
}

/// Partitions time-sorted packets into windows of `window` seconds. Windows
/// without packets produce no bundle, so gaps show up as jumps in
/// `window_index`.
pub fn bundle_packets(packets: &[Packet], window: f64) -> Result<Vec<Bundle>> {
    let mut bundler = Bundler::new(window)?;
    let mut out = Vec::new();
    for p in packets {
        out.extend(bundler.push(p.clone())?);
    }
    out.extend(bundler.finish());
    Ok(out)
}

/// Scales the CSI vector to unit norm and drops the RSSI reading.
pub fn normalize_csi(p: &Packet) -> Result<Packet> {
    let norm = p.csi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(Packet {
        time: p.time,
        rssi: None,
        csi: p.csi.iter().map(|c| c / norm).collect(),
    })
}

fn amplitudes(p: &Packet, normalized: bool) -> Result<Vec<f64>> {
    if normalized {
        Ok(normalize_csi(p)?.csi.iter().map(|c| c.norm()).collect())
    } else {
        Ok(p.csi.iter().map(|c| c.norm()).collect())
    }
}

fn rssi_of(p: &Packet) -> Result<f64> {
    p.rssi
        .ok_or_else(|| Error::config("rssi", "packet carries no RSSI reading"))
}

fn finish(kind: FeatureKind, k_sub: usize, mean: &[f64], var: &[f64], rssi_mean: f64, rssi_var: f64, t: u64) -> Result<FeatureVector> {
    let values: Vec<f64> = match kind {
        FeatureKind::FavgCsiStd => vec![var.iter().map(|v| v.sqrt()).sum::<f64>() / k_sub as f64],
        FeatureKind::FavgCsiVar => vec![var.iter().sum::<f64>() / k_sub as f64],
        FeatureKind::CsiStdVec => var.iter().map(|v| v.sqrt()).collect(),
        FeatureKind::CsiVarVec => var.to_vec(),
        FeatureKind::TavgCsiAmplVec => mean.to_vec(),
        FeatureKind::RssiStd => vec![rssi_var.sqrt()],
        FeatureKind::RssiVar => vec![rssi_var],
        FeatureKind::TavgRssi => vec![rssi_mean],
    };
    FeatureVector::from_real(&values, t)
}

/// Extracts one feature measurement from the pooled packets of `bundles`.
///
/// Returns `Ok(None)` when the pool is too small for the requested statistic
/// (a stream gap). The time index is the last bundle's window index.
pub fn extract(bundles: &[Bundle], spec: &FeatureSpec) -> Result<Option<FeatureVector>> {
    spec.validate()?;
    let packets: Vec<&Packet> = bundles.iter().flat_map(|b| &b.packets).collect();
    let Some(last) = bundles.last() else {
        return Ok(None);
    };
    if packets.len() < spec.kind.min_packets() {
        return Ok(None);
    }
    let k_sub = packets[0].csi.len();
    let m = packets.len() as f64;

    if spec.kind.uses_rssi() {
        let r: Vec<f64> = packets.iter().map(|p| rssi_of(p)).collect::<Result<_>>()?;
        let mean = r.iter().sum::<f64>() / m;
        let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
        return finish(spec.kind, k_sub.max(1), &[], &[], mean, var, last.window_index).map(Some);
    }

    if k_sub == 0 {
        return Err(Error::EmptyVector);
    }
    let amps: Vec<Vec<f64>> = packets
        .iter()
        .map(|p| {
            if p.csi.len() != k_sub {
                return Err(Error::DimensionMismatch { expected: k_sub, got: p.csi.len() });
            }
            amplitudes(p, spec.normalized)
        })
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; k_sub];
    for a in &amps {
        for (s, v) in mean.iter_mut().zip(a) {
            *s += v;
        }
    }
    mean.iter_mut().for_each(|s| *s /= m);
    let mut var = vec![0.0; k_sub];
    for a in &amps {
        for ((s, v), mu) in var.iter_mut().zip(a).zip(&mean) {
            *s += (v - mu).powi(2);
        }
    }
    var.iter_mut().for_each(|s| *s /= m);
    finish(spec.kind, k_sub, &mean, &var, 0.0, 0.0, last.window_index).map(Some)
}

/// Count, per-element mean and sum of squared deviations; merged with the
/// parallel (Chan et al.) update.
#[derive(Debug, Clone, PartialEq)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn empty(k: usize) -> Self {
        Self { count: 0.0, mean: vec![0.0; k], m2: vec![0.0; k] }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1.0;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / self.count;
            *s += d * (v - *m);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0.0 {
            return;
        }
        if self.count == 0.0 {
            *self = other.clone();
            return;
        }
        let n = self.count + other.count;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.m2[i] += other.m2[i] + d * d * self.count * other.count / n;
            self.mean[i] += d * other.count / n;
        }
        self.count = n;
    }

    fn variance(&self) -> Vec<f64> {
        self.m2.iter().map(|s| (s / self.count).max(0.0)).collect()
    }
}

/// Sliding B-bundle feature extraction over a bundle stream.
///
/// A measurement is emitted for every bundle whose window index `t` satisfies
/// `t ≥ first + B − 1`, pooling the bundles in windows `(t − B, t]`.
#[derive(Debug, Clone)]
pub struct FeatureStream {
    spec: FeatureSpec,
    first_window: Option<u64>,
    k_sub: Option<usize>,
    recent: VecDeque<(u64, Moments)>,
}

impl FeatureStream {
    pub fn new(spec: FeatureSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            first_window: None,
            k_sub: None,
            recent: VecDeque::new(),
        })
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    fn bundle_moments(&self, bundle: &Bundle, k_sub: usize) -> Result<Moments> {
        if self.spec.kind.uses_rssi() {
            let mut m = Moments::empty(1);
            for p in &bundle.packets {
                m.push(&[rssi_of(p)?]);
            }
            return Ok(m);
        }
        let mut m = Moments::empty(k_sub);
        for p in &bundle.packets {
            if p.csi.len() != k_sub {
                return Err(Error::DimensionMismatch { expected: k_sub, got: p.csi.len() });
            }
            m.push(&amplitudes(p, self.spec.normalized)?);
        }
        Ok(m)
    }

    /// Adds the next bundle (window indices must increase) and returns the
    /// feature measurement for its window, if any.
    pub fn push(&mut self, bundle: &Bundle) -> Result<Option<FeatureVector>> {
        let Some(first_packet) = bundle.packets.first() else {
            return Ok(None);
        };
        let k_sub = *self.k_sub.get_or_insert(first_packet.csi.len());
        if k_sub == 0 && !self.spec.kind.uses_rssi() {
            return Err(Error::EmptyVector);
        }
        let t = bundle.window_index;
        if let Some(&(prev, _)) = self.recent.back() {
            if t <= prev {
                return Err(Error::Unsorted { position: t as usize });
            }
        }
        let first = *self.first_window.get_or_insert(t);
        let moments = self.bundle_moments(bundle, k_sub)?;
        self.recent.push_back((t, moments));
        let b = self.spec.bundles as u64;
        while let Some(&(w, _)) = self.recent.front() {
            if w + b <= t {
                self.recent.pop_front();
            } else {
                break;
            }
        }
        if t < first + b - 1 {
            return Ok(None);
        }
        let width = if self.spec.kind.uses_rssi() { 1 } else { k_sub };
        let mut pooled = Moments::empty(width);
        for (_, m) in &self.recent {
            pooled.merge(m);
        }
        if (pooled.count as usize) < self.spec.kind.min_packets() {
            return Ok(None);
        }
        let var = pooled.variance();
        if self.spec.kind.uses_rssi() {
            finish(self.spec.kind, 1, &[], &[], pooled.mean[0], var[0], t).map(Some)
        } else {
            finish(self.spec.kind, k_sub, &pooled.mean, &var, 0.0, 0.0, t).map(Some)
        }
    }
}

/// Feature stream for a whole bundle sequence, gaps dropped.
pub fn feature_stream(bundles: &[Bundle], spec: &FeatureSpec) -> Result<Vec<FeatureVector>> {
    let mut fs = FeatureStream::new(*spec)?;
    let mut out = Vec::with_capacity(bundles.len());
    for b in bundles {
        if let Some(f) = fs.push(b)? {
            out.push(f);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pkt(time: f64, rssi: f64, csi: &[(f64, f64)]) -> Packet {
        Packet {
            time,
            rssi: Some(rssi),
            csi: csi.iter().map(|&(a, b)| Complex64::new(a, b)).collect(),
        }
    }

    fn bundle(idx: u64, packets: Vec<Packet>) -> Bundle {
        Bundle { window_index: idx, packets }
    }

    #[test]
    fn bundling_examples() {
        let ps = vec![pkt(0.05, -40.0, &[(1.0, 0.0)]), pkt(0.15, -40.0, &[(1.0, 0.0)]), pkt(0.25, -40.0, &[(1.0, 0.0)])];
        let b = bundle_packets(&ps, 0.2).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!((b[0].window_index, b[0].packets.len()), (0, 2));
        assert_eq!((b[1].window_index, b[1].packets.len()), (1, 1));

        assert_eq!(bundle_packets(&ps[..1], 0.2).unwrap().len(), 1);

        // 10 s at 100 packets/s: counting oracle
        let ps: Vec<Packet> = (0..1000).map(|i| pkt(i as f64 / 100.0, -40.0, &[(1.0, 0.0)])).collect();
        let b = bundle_packets(&ps, 0.2).unwrap();
        assert_eq!(b.len(), 50);
        assert!(b.iter().all(|x| (19..=21).contains(&x.packets.len())));
        assert_eq!(b.iter().map(|x| x.packets.len()).sum::<usize>(), 1000);

        let unsorted = vec![pkt(0.3, 0.0, &[]), pkt(0.1, 0.0, &[])];
        assert!(matches!(bundle_packets(&unsorted, 0.2), Err(Error::Unsorted { position: 1 })));
    }

    #[test]
    fn gaps_show_as_index_jumps() {
        let ps = vec![pkt(0.05, -40.0, &[(1.0, 0.0)]), pkt(0.65, -40.0, &[(1.0, 0.0)])];
        let b = bundle_packets(&ps, 0.2).unwrap();
        assert_eq!(b.iter().map(|x| x.window_index).collect::<Vec<_>>(), vec![0, 3]);
    }

    #[test]
    fn normalize_examples() {
        let n = normalize_csi(&pkt(0.0, -40.0, &[(3.0, 0.0), (4.0, 0.0)])).unwrap();
        assert!((n.csi[0].re - 0.6).abs() < 1e-15 && (n.csi[1].re - 0.8).abs() < 1e-15);
        assert_eq!(n.rssi, None);
        let n = normalize_csi(&pkt(0.0, -40.0, &[(0.0, 1.0)])).unwrap();
        assert_eq!(n.csi, vec![Complex64::new(0.0, 1.0)]);
        assert!(matches!(normalize_csi(&pkt(0.0, 0.0, &[(0.0, 0.0)])), Err(Error::ZeroNorm)));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let csi: Vec<(f64, f64)> = (0..56).map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))).collect();
        let n = normalize_csi(&pkt(0.0, 0.0, &csi)).unwrap();
        let norm = n.csi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    fn scalar(kind: FeatureKind, bundles: &[Bundle]) -> f64 {
        extract(bundles, &FeatureSpec::new(kind, bundles.len(), false)).unwrap().unwrap().values()[0].re
    }

    #[test]
    fn extraction_examples() {
        let constant = bundle(0, (0..5).map(|i| pkt(i as f64 * 0.01, -40.0, &[(0.0, 2.0), (1.0, 0.0)])).collect());
        assert_eq!(scalar(FeatureKind::FavgCsiStd, &[constant.clone()]), 0.0);
        assert_eq!(scalar(FeatureKind::FavgCsiVar, &[constant.clone()]), 0.0);
        let tavg = extract(&[constant], &FeatureSpec::new(FeatureKind::TavgCsiAmplVec, 1, false)).unwrap().unwrap();
        assert_eq!(tavg.values(), &[Complex64::new(2.0, 0.0), Complex64::new(1.0, 0.0)]);

        let two = bundle(0, vec![pkt(0.0, -40.0, &[(1.0, 0.0)]), pkt(0.1, -40.0, &[(0.0, -3.0)])]);
        assert_eq!(scalar(FeatureKind::FavgCsiVar, &[two.clone()]), 1.0);
        assert_eq!(scalar(FeatureKind::FavgCsiStd, &[two]), 1.0);

        let r = bundle(0, vec![pkt(0.0, -40.0, &[(1.0, 0.0)]), pkt(0.05, -42.0, &[(1.0, 0.0)]), pkt(0.1, -44.0, &[(1.0, 0.0)])]);
        assert_eq!(scalar(FeatureKind::TavgRssi, &[r.clone()]), -42.0);
        assert!((scalar(FeatureKind::RssiVar, &[r.clone()]) - 8.0 / 3.0).abs() < 1e-12);
        assert!((scalar(FeatureKind::RssiStd, &[r]) - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn too_few_packets_is_a_gap() {
        let one = bundle(4, vec![pkt(0.8, -40.0, &[(1.0, 0.0)])]);
        assert!(extract(&[one.clone()], &FeatureSpec::new(FeatureKind::RssiVar, 1, false)).unwrap().is_none());
        assert!(extract(&[one], &FeatureSpec::new(FeatureKind::TavgRssi, 1, false)).unwrap().is_some());
    }

    #[test]
    fn normalized_rssi_is_rejected() {
        assert!(FeatureSpec::new(FeatureKind::RssiVar, 1, true).validate().is_err());
        assert!(FeatureSpec::new(FeatureKind::CsiVarVec, 0, false).validate().is_err());
        assert_eq!("favg_csi_std".parse::<FeatureKind>().unwrap(), FeatureKind::FavgCsiStd);
        assert!("doppler".parse::<FeatureKind>().is_err());
    }

    fn random_bundles(seed: u64, n: usize, per: usize, k: usize) -> Vec<Bundle> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|w| {
                let packets = (0..per)
                    .map(|i| Packet {
                        time: w as f64 * 0.2 + i as f64 * 0.2 / per as f64,
                        rssi: Some(-40.0 + rng.random_range(-3.0..3.0f64).round()),
                        csi: (0..k)
                            .map(|_| Complex64::new(1.0 + rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)))
                            .collect(),
                    })
                    .collect();
                Bundle { window_index: w as u64, packets }
            })
            .collect()
    }

    #[test]
    fn stream_pools_raw_packets_like_brute_force() {
        let bundles = random_bundles(7, 30, 12, 6);
        for kind in FeatureKind::ALL {
            for normalized in [false, true] {
                let spec = FeatureSpec::new(kind, 10, normalized);
                if spec.validate().is_err() {
                    continue;
                }
                let streamed = feature_stream(&bundles, &spec).unwrap();
                assert_eq!(streamed.len(), 21);
                for f in &streamed {
                    let t = f.t as usize;
                    let oracle = extract(&bundles[t + 1 - 10..=t], &spec).unwrap().unwrap();
                    for (a, b) in f.values().iter().zip(oracle.values()) {
                        assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()), "{kind} {a} {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn pooled_differs_from_averaged_single_bundles() {
        // two bundles with equal internal spread but different means
        let a = bundle(0, vec![pkt(0.0, -40.0, &[(1.0, 0.0)]), pkt(0.1, -40.0, &[(2.0, 0.0)])]);
        let b = bundle(1, vec![pkt(0.2, -40.0, &[(5.0, 0.0)]), pkt(0.3, -40.0, &[(6.0, 0.0)])]);
        let spec1 = FeatureSpec::new(FeatureKind::FavgCsiVar, 1, false);
        let avg = (extract(&[a.clone()], &spec1).unwrap().unwrap().values()[0].re
            + extract(&[b.clone()], &spec1).unwrap().unwrap().values()[0].re)
            / 2.0;
        let pooled = scalar(FeatureKind::FavgCsiVar, &[a, b]);
        assert_eq!(avg, 0.25);
        assert_eq!(pooled, 4.25);
    }

    #[test]
    fn stream_respects_gaps_and_warm_fill() {
        let mut bundles = random_bundles(3, 6, 4, 2);
        bundles.remove(3);
        let spec = FeatureSpec::new(FeatureKind::CsiVarVec, 2, false);
        let ts: Vec<u64> = feature_stream(&bundles, &spec).unwrap().iter().map(|f| f.t).collect();
        assert_eq!(ts, vec![1, 2, 4, 5]);
    }

    proptest! {
        #[test]
        fn var_is_std_squared_and_phase_invariant(seed in 0u64..1000, phases in prop::collection::vec(0.0f64..6.3, 8)) {
            let bundles = random_bundles(seed, 2, 4, 3);
            let rotated: Vec<Bundle> = bundles.iter().map(|b| Bundle {
                window_index: b.window_index,
                packets: b.packets.iter().enumerate().map(|(i, p)| Packet {
                    csi: p.csi.iter().map(|c| c * Complex64::from_polar(1.0, phases[i])).collect(),
                    ..p.clone()
                }).collect(),
            }).collect();
            let pairs = [
                (FeatureKind::FavgCsiStd, FeatureKind::FavgCsiVar),
                (FeatureKind::CsiStdVec, FeatureKind::CsiVarVec),
                (FeatureKind::RssiStd, FeatureKind::RssiVar),
            ];
            for (s, v) in pairs {
                if s == FeatureKind::FavgCsiStd { continue; } // mean of std is not sqrt of mean var
                let sd = extract(&bundles, &FeatureSpec::new(s, 2, false)).unwrap().unwrap();
                let var = extract(&bundles, &FeatureSpec::new(v, 2, false)).unwrap().unwrap();
                for (a, b) in sd.values().iter().zip(var.values()) {
                    prop_assert!((a.re * a.re - b.re).abs() <= 1e-12 * (1.0 + b.re.abs()));
                }
            }
            for kind in FeatureKind::ALL {
                let spec = FeatureSpec::new(kind, 2, false);
                let a = extract(&bundles, &spec).unwrap().unwrap();
                let b = extract(&rotated, &spec).unwrap().unwrap();
                for (x, y) in a.values().iter().zip(b.values()) {
                    prop_assert!((x - y).norm() <= 1e-12 * (1.0 + x.norm()));
                }
            }
        }

        #[test]
        fn normalized_features_ignore_per_packet_gain(seed in 0u64..1000, gains in prop::collection::vec(0.1f64..10.0, 8)) {
            let bundles = random_bundles(seed, 2, 4, 5);
            let scaled: Vec<Bundle> = bundles.iter().map(|b| Bundle {
                window_index: b.window_index,
                packets: b.packets.iter().enumerate().map(|(i, p)| Packet {
                    csi: p.csi.iter().map(|c| c * gains[i]).collect(),
                    ..p.clone()
                }).collect(),
            }).collect();
            for kind in FeatureKind::ALL.into_iter().filter(|k| !k.uses_rssi()) {
                let spec = FeatureSpec::new(kind, 2, true);
                let a = extract(&bundles, &spec).unwrap().unwrap();
                let b = extract(&scaled, &spec).unwrap().unwrap();
                for (x, y) in a.values().iter().zip(b.values()) {
                    prop_assert!((x - y).norm() <= 1e-12 * (1.0 + x.norm()));
                }
            }
        }
    }
}
