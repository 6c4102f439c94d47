//! Gauss-Markov channel simulation and synthetic packet traces.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Packet, DEFAULT_BUNDLE_WINDOW};
use crate::vector::{DiagCovariance, FeatureVector};

pub const DEFAULT_SUBCARRIERS: usize = 56;
pub const DEFAULT_PACKETS_PER_BUNDLE: usize = 50;
pub const DEFAULT_A: f64 = 1.0 - 1e-9;
pub const DEFAULT_V: f64 = 0.001;
pub const DEFAULT_MOTION_FACTOR: f64 = 10.0;

/// Draws a circularly symmetric complex Gaussian with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModelParams {
    pub a: f64,
    pub u_cov: DiagCovariance,
    pub v_cov: DiagCovariance,
    pub x_init_cov: DiagCovariance,
    pub phase_noise: bool,
}

impl ChannelModelParams {
    /// Stationary channel with per-element state variance `x_var`.
    pub fn stationary(k: usize, a: f64, x_var: f64, v_var: f64, phase_noise: bool) -> Self {
        Self {
            a,
            u_cov: DiagCovariance::constant(k, (1.0 - a * a) * x_var),
            v_cov: DiagCovariance::constant(k, v_var),
            x_init_cov: DiagCovariance::constant(k, x_var),
            phase_noise,
        }
    }

    pub fn k(&self) -> usize {
        self.x_init_cov.k()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a <= 1.0) {
            return Err(Error::config("channel.a", format!("{} not in (0, 1]", self.a)));
        }
        let k = self.k();
        if k == 0 {
            return Err(Error::config("channel.x_init_cov", "must not be empty"));
        }
        for (field, c) in [("channel.u_cov", &self.u_cov), ("channel.v_cov", &self.v_cov)] {
            if c.k() != k {
                return Err(Error::config(field, format!("length {} differs from x_init_cov length {k}", c.k())));
            }
        }
        Ok(())
    }

    /// Per-element variance of one measurement around the current state.
    pub fn step_variance(&self) -> Vec<f64> {
        self.u_cov
            .variances()
            .iter()
            .zip(self.v_cov.variances())
            .map(|(u, v)| u + v)
            .collect()
    }

    /// Draws `x(0) ~ CN(0, X_init)`.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> FeatureVector {
        let values = self
            .x_init_cov
            .variances()
            .iter()
            .map(|&v| complex_gaussian(rng, v))
            .collect();
        FeatureVector::from_raw(values, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyModel {
    /// 0: anomalous measurements are centred on the origin; 1: on the regular value.
    pub gamma: u8,
    pub y_cov: DiagCovariance,
    /// Inclusive `(start, end)` intervals in measurement time units.
    #[serde(default)]
    pub schedule: Vec<(u64, u64)>,
}

impl AnomalyModel {
    pub fn none(k: usize) -> Self {
        Self {
            gamma: 1,
            y_cov: DiagCovariance::constant(k, 0.0),
            schedule: Vec::new(),
        }
    }

    /// Motion emulation: `γ = 1`, `Y = factor × (U + V)`.
    pub fn motion(channel: &ChannelModelParams, factor: f64, schedule: Vec<(u64, u64)>) -> Self {
        Self {
            gamma: 1,
            y_cov: DiagCovariance::clamped(channel.step_variance().iter().map(|v| factor * v).collect()),
            schedule,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.gamma > 1 {
            return Err(Error::config("anomaly.gamma", format!("{} not in {{0, 1}}", self.gamma)));
        }
        if self.y_cov.k() != k {
            return Err(Error::config("anomaly.y_cov", format!("length {} differs from channel length {k}", self.y_cov.k())));
        }
        crate::detector::validate_labels(&self.schedule)
            .map_err(|_| Error::config("anomaly.schedule", "intervals must be sorted, disjoint and start ≤ end"))
    }

    pub fn active(&self, t: u64) -> bool {
        let i = self.schedule.partition_point(|&(_, e)| e < t);
        i < self.schedule.len() && self.schedule[i].0 <= t
    }
}

/// One Gauss-Markov transition and the phase-rotated noisy measurement of the
/// current state.
pub fn gm_step<R: Rng + ?Sized>(
    x: &FeatureVector,
    params: &ChannelModelParams,
    rng: &mut R,
) -> Result<(FeatureVector, FeatureVector)> {
    x.check_dim(params.k())?;
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let rot = if params.phase_noise {
        Complex64::from_polar(1.0, phi)
    } else {
        Complex64::new(1.0, 0.0)
    };
    let mut y = Vec::with_capacity(x.k());
    let mut next = Vec::with_capacity(x.k());
    for ((xk, &u), &v) in x.values().iter().zip(params.u_cov.variances()).zip(params.v_cov.variances()) {
        y.push(rot * (xk + complex_gaussian(rng, v)));
        next.push(params.a * xk + complex_gaussian(rng, u));
    }
    Ok((FeatureVector::from_raw(next, x.t + 1), FeatureVector::from_raw(y, x.t)))
}

/// Replaces `y0` by `γ·y0 + w`, `w ~ CN(0, Y)`, when `t` is inside the schedule.
pub fn inject_anomaly<R: Rng + ?Sized>(y0: &FeatureVector, model: &AnomalyModel, t: u64, rng: &mut R) -> FeatureVector {
    if !model.active(t) {
        return y0.clone();
    }
    let g = f64::from(model.gamma);
    let values = y0
        .values()
        .iter()
        .zip(model.y_cov.variances())
        .map(|(y, &v)| g * y + complex_gaussian(rng, v))
        .collect();
    FeatureVector::from_raw(values, y0.t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSynthesisParams {
    pub packets_per_bundle: usize,
    pub bundle_window: f64,
    pub subcarriers: usize,
    pub rssi_offset: f64,
    pub rssi_quantum: f64,
    /// Gaussian RSSI reading noise in dB, added before quantization.
    pub rssi_noise_db: f64,
    pub power_randomization: Option<(f64, f64)>,
}

impl Default for TraceSynthesisParams {
    fn default() -> Self {
        Self {
            packets_per_bundle: DEFAULT_PACKETS_PER_BUNDLE,
            bundle_window: DEFAULT_BUNDLE_WINDOW,
            subcarriers: DEFAULT_SUBCARRIERS,
            rssi_offset: -30.0,
            rssi_quantum: 1.0,
            rssi_noise_db: 1.0,
            power_randomization: None,
        }
    }
}

impl TraceSynthesisParams {
    pub fn validate(&self) -> Result<()> {
        if self.packets_per_bundle == 0 {
            return Err(Error::config("synthesis.packets_per_bundle", "must be positive"));
        }
        if !(self.bundle_window.is_finite() && self.bundle_window > 0.0) {
            return Err(Error::config("synthesis.bundle_window", "must be positive"));
        }
        if self.subcarriers == 0 {
            return Err(Error::config("synthesis.subcarriers", "must be positive"));
        }
        if !(self.rssi_quantum >= 0.0 && self.rssi_quantum.is_finite()) {
            return Err(Error::config("synthesis.rssi_quantum", "must be a finite value ≥ 0"));
        }
        if !(self.rssi_noise_db >= 0.0 && self.rssi_noise_db.is_finite()) {
            return Err(Error::config("synthesis.rssi_noise_db", "must be a finite value ≥ 0"));
        }
        if !self.rssi_offset.is_finite() {
            return Err(Error::config("synthesis.rssi_offset", "must be finite"));
        }
        if let Some((lo, hi)) = self.power_randomization {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::config(
                    "synthesis.power_randomization",
                    format!("need 0 < min_gain ≤ max_gain, got ({lo}, {hi})"),
                ));
            }
        }
        Ok(())
    }

    fn quantize(&self, db: f64) -> f64 {
        if self.rssi_quantum > 0.0 {
            (db / self.rssi_quantum).round() * self.rssi_quantum
        } else {
            db
        }
    }
}

/// Full simulation configuration as read from a TOML or JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub duration_s: f64,
    pub a: f64,
    pub x_init: f64,
    pub v: f64,
    pub phase_noise: bool,
    pub synthesis: TraceSynthesisParams,
    pub gamma: u8,
    /// Anomaly variance as a multiple of the per-packet measurement variance.
    pub motion_factor: f64,
    /// Inclusive anomaly bursts in bundle-window indices.
    pub bursts: Vec<(u64, u64)>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            duration_s: 400.0,
            a: DEFAULT_A,
            x_init: 1.0,
            v: DEFAULT_V,
            phase_noise: true,
            synthesis: TraceSynthesisParams::default(),
            gamma: 1,
            motion_factor: DEFAULT_MOTION_FACTOR,
            bursts: vec![(1200, 1249), (1500, 1549), (1800, 1849)],
        }
    }
}

impl SimulationConfig {
    /// Anomaly-free variant of this configuration.
    pub fn quiet(mut self) -> Self {
        self.bursts.clear();
        self
    }

    pub fn channel(&self) -> ChannelModelParams {
        ChannelModelParams::stationary(self.synthesis.subcarriers, self.a, self.x_init, self.v, self.phase_noise)
    }

    /// Anomaly model with the schedule converted to packet indices.
    pub fn anomaly(&self) -> AnomalyModel {
        let ppb = self.synthesis.packets_per_bundle as u64;
        let schedule = self.bursts.iter().map(|&(s, e)| (s * ppb, (e + 1) * ppb - 1)).collect();
        let mut m = AnomalyModel::motion(&self.channel(), self.motion_factor, schedule);
        m.gamma = self.gamma;
        m
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::config("duration_s", "must be positive"));
        }
        if !(self.a > 0.0 && self.a <= 1.0) {
            return Err(Error::config("channel.a", format!("{} not in (0, 1]", self.a)));
        }
        if !(self.x_init >= 0.0 && self.x_init.is_finite()) {
            return Err(Error::config("x_init", "must be a finite value ≥ 0"));
        }
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return Err(Error::config("v", "must be a finite value ≥ 0"));
        }
        if !(self.motion_factor >= 0.0 && self.motion_factor.is_finite()) {
            return Err(Error::config("motion_factor", "must be a finite value ≥ 0"));
        }
        self.synthesis.validate()?;
        let channel = self.channel();
        channel.validate()?;
        crate::detector::validate_labels(&self.bursts)
            .map_err(|_| Error::config("bursts", "intervals must be sorted, disjoint and start ≤ end"))?;
        self.anomaly().validate(channel.k())
    }

    pub fn synthesize(&self, seed: u64) -> Result<SyntheticTrace> {
        self.validate()?;
        synthesize_trace(&self.channel(), &self.anomaly(), &self.synthesis, self.duration_s, seed)
    }

    pub fn generator(&self, seed: u64) -> Result<TraceGenerator> {
        self.validate()?;
        TraceGenerator::new(&self.channel(), &self.anomaly(), &self.synthesis, self.duration_s, seed)
    }
}

/// Packets plus the anomaly labels in bundle-window indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrace {
    pub packets: Vec<Packet>,
    pub labels: Vec<(u64, u64)>,
    pub k_sub: usize,
    pub seed: u64,
}

/// Independent random streams, so toggling one effect leaves every other
/// draw untouched.
struct Streams {
    channel: ChaCha8Rng,
    phase: ChaCha8Rng,
    anomaly: ChaCha8Rng,
    gain: ChaCha8Rng,
    rssi: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |n: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(n);
            r
        };
        Self {
            channel: stream(1),
            phase: stream(2),
            anomaly: stream(3),
            gain: stream(4),
            rssi: stream(5),
        }
    }
}

/// Streaming packet generator: one Gauss-Markov step per packet, anomalies
/// injected per schedule (packet indices), then optional per-packet gain, the
/// phase offset and a quantized RSSI reading.
pub struct TraceGenerator {
    channel: ChannelModelParams,
    quiet: ChannelModelParams,
    anomaly: AnomalyModel,
    synth: TraceSynthesisParams,
    rngs: Streams,
    x: FeatureVector,
    next: u64,
    total: u64,
}

impl TraceGenerator {
    pub fn new(
        channel: &ChannelModelParams,
        anomaly: &AnomalyModel,
        synth: &TraceSynthesisParams,
        duration_s: f64,
        seed: u64,
    ) -> Result<Self> {
        channel.validate()?;
        synth.validate()?;
        if channel.k() != synth.subcarriers {
            return Err(Error::config(
                "synthesis.subcarriers",
                format!("{} differs from channel dimension {}", synth.subcarriers, channel.k()),
            ));
        }
        anomaly.validate(channel.k())?;
        let windows = (duration_s / synth.bundle_window + 1e-9).floor();
        if !(windows >= 1.0) {
            return Err(Error::config(
                "duration_s",
                format!("{duration_s} s is shorter than one {} s bundle", synth.bundle_window),
            ));
        }
        let mut rngs = Streams::new(seed);
        let x = channel.initial_state(&mut rngs.channel);
        Ok(Self {
            channel: channel.clone(),
            quiet: ChannelModelParams { phase_noise: false, ..channel.clone() },
            anomaly: anomaly.clone(),
            synth: synth.clone(),
            rngs,
            x,
            next: 0,
            total: windows as u64 * synth.packets_per_bundle as u64,
        })
    }

    pub fn windows(&self) -> u64 {
        self.total / self.synth.packets_per_bundle as u64
    }

    /// Anomaly schedule converted to inclusive bundle-window intervals.
    pub fn labels(&self) -> Vec<(u64, u64)> {
        let ppb = self.synth.packets_per_bundle as u64;
        let windows = self.windows();
        self.anomaly
            .schedule
            .iter()
            .filter(|&&(s, _)| s / ppb < windows)
            .map(|&(s, e)| (s / ppb, (e / ppb).min(windows - 1)))
            .collect()
    }

    fn packet(&mut self) -> Packet {
        let n = self.next;
        self.next += 1;
        let ppb = self.synth.packets_per_bundle as u64;
        let (next, y) = gm_step(&self.x, &self.quiet, &mut self.rngs.channel).expect("state dimension is fixed");
        self.x = next;
        let y = inject_anomaly(&y, &self.anomaly, n, &mut self.rngs.anomaly);
        let phi: f64 = self.rngs.phase.random_range(0.0..std::f64::consts::TAU);
        let gain = match self.synth.power_randomization {
            Some((lo, hi)) => lo + (hi - lo) * self.rngs.gain.random_range(0.0..1.0),
            None => 1.0,
        };
        let rot = if self.channel.phase_noise {
            Complex64::from_polar(gain, phi)
        } else {
            Complex64::new(gain, 0.0)
        };
        let csi: Vec<Complex64> = y.values().iter().map(|v| v * rot).collect();
        let power = csi.iter().map(|c| c.norm_sqr()).sum::<f64>() / csi.len() as f64;
        let noise: f64 = StandardNormal.sample(&mut self.rngs.rssi);
        let db = self.synth.rssi_offset + 10.0 * power.max(1e-30).log10() + self.synth.rssi_noise_db * noise;
        let (w, i) = (n / ppb, n % ppb);
        Packet {
            time: (w as f64 + (i as f64 + 0.5) / ppb as f64) * self.synth.bundle_window,
            rssi: Some(self.synth.quantize(db)),
            csi,
        }
    }
}

impl Iterator for TraceGenerator {
    type Item = Packet;

    fn next(&mut self) -> Option<Packet> {
        (self.next < self.total).then(|| self.packet())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.total - self.next) as usize;
        (left, Some(left))
    }
}

/// Generates a whole trace in memory; see [`TraceGenerator`].
pub fn synthesize_trace(
    channel: &ChannelModelParams,
    anomaly: &AnomalyModel,
    synth: &TraceSynthesisParams,
    duration_s: f64,
    seed: u64,
) -> Result<SyntheticTrace> {
    let generator = TraceGenerator::new(channel, anomaly, synth, duration_s, seed)?;
    let labels = generator.labels();
    Ok(SyntheticTrace {
        packets: generator.collect(),
        labels,
        k_sub: channel.k(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{bundle_packets, extract, feature_stream, FeatureKind, FeatureSpec};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn deterministic_limit() {
        let p = ChannelModelParams {
            a: 1.0,
            u_cov: DiagCovariance::constant(2, 0.0),
            v_cov: DiagCovariance::constant(2, 0.0),
            x_init_cov: DiagCovariance::constant(2, 1.0),
            phase_noise: false,
        };
        let mut r = rng(1);
        let x0 = p.initial_state(&mut r);
        let mut x = x0.clone();
        for _ in 0..50 {
            let (next, y) = gm_step(&x, &p, &mut r).unwrap();
            assert_eq!(y.values(), x0.values());
            x = next;
        }
    }

    #[test]
    fn memoryless_at_a_zero() {
        let p = ChannelModelParams { a: 0.0, ..ChannelModelParams::stationary(1, 1.0, 1.0, 0.0, false) };
        let mut r = rng(2);
        let x = FeatureVector::from_real(&[1e6], 0).unwrap();
        let (next, _) = gm_step(&x, &p, &mut r).unwrap();
        assert_eq!(next.values()[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn stationary_variance() {
        let p = ChannelModelParams::stationary(1, 0.98, 1.0, 0.0, false);
        assert!((p.u_cov.variances()[0] - 0.0396).abs() < 1e-12);
        let mut r = rng(3);
        let mut x = p.initial_state(&mut r);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let (next, _) = gm_step(&x, &p, &mut r).unwrap();
            acc += next.values()[0].norm_sqr();
            x = next;
        }
        let var = acc / n as f64;
        let a2: f64 = 0.98 * 0.98;
        let se = ((1.0 + a2) / ((1.0 - a2) * n as f64)).sqrt();
        assert!((var - 1.0).abs() < 3.0 * se, "{var} vs 1 ± {se}");
    }

    #[test]
    fn anomaly_injection() {
        let y0 = FeatureVector::from_real(&[3.0], 0).unwrap();
        let mut m = AnomalyModel {
            gamma: 0,
            y_cov: DiagCovariance::constant(1, 25.0),
            schedule: vec![(10, 20)],
        };
        assert_eq!(inject_anomaly(&y0, &m, 5, &mut rng(0)), y0);
        let mut r = rng(4);
        let n = 10_000;
        let draws: Vec<Complex64> = (0..n).map(|_| inject_anomaly(&y0, &m, 15, &mut r).values()[0]).collect();
        let mean = draws.iter().sum::<Complex64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).norm_sqr()).sum::<f64>() / n as f64;
        assert!(mean.re.abs() < 3.0 * 5.0 / 100.0 && mean.im.abs() < 3.0 * 5.0 / 100.0);
        assert!((var - 25.0).abs() < 0.05 * 25.0);

        m.gamma = 1;
        m.y_cov = DiagCovariance::constant(1, 0.0);
        assert_eq!(inject_anomaly(&y0, &m, 15, &mut r), y0);
    }

    fn small(duration: f64) -> SimulationConfig {
        SimulationConfig {
            duration_s: duration,
            bursts: vec![],
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn counting() {
        let t = small(60.0).synthesize(7).unwrap();
        assert_eq!(t.packets.len(), 15_000);
        let b = bundle_packets(&t.packets, 0.2).unwrap();
        assert_eq!(b.len(), 300);
        assert!(b.iter().enumerate().all(|(i, x)| x.window_index == i as u64 && x.packets.len() == 50));
        assert!(small(0.1).synthesize(7).is_err());
    }

    #[test]
    fn deterministic_by_seed() {
        assert_eq!(small(2.0).synthesize(9).unwrap(), small(2.0).synthesize(9).unwrap());
        assert_ne!(small(2.0).synthesize(9).unwrap().packets, small(2.0).synthesize(10).unwrap().packets);
    }

    #[test]
    fn zero_noise_gives_zero_variance_features() {
        let cfg = SimulationConfig {
            a: 1.0,
            v: 0.0,
            ..small(4.0)
        };
        let mut t = cfg.synthesize(1).unwrap();
        assert!(t.packets.iter().all(|p| p.csi.iter().zip(&t.packets[0].csi).all(|(a, b)| (a.norm() - b.norm()).abs() < 1e-12)));
        for p in &mut t.packets {
            p.rssi = Some(-30.0);
        }
        let bundles = bundle_packets(&t.packets, 0.2).unwrap();
        for kind in [FeatureKind::FavgCsiVar, FeatureKind::CsiStdVec, FeatureKind::RssiVar] {
            for f in feature_stream(&bundles, &FeatureSpec::new(kind, 1, false)).unwrap() {
                assert!(f.values().iter().all(|v| v.norm() < 1e-12));
            }
        }
    }

    #[test]
    fn phase_noise_never_touches_amplitudes() {
        let on = small(2.0).synthesize(5).unwrap();
        let off = SimulationConfig { phase_noise: false, ..small(2.0) }.synthesize(5).unwrap();
        for (a, b) in on.packets.iter().zip(&off.packets) {
            assert_eq!(a.rssi, b.rssi);
            for (x, y) in a.csi.iter().zip(&b.csi) {
                assert!((x.norm() - y.norm()).abs() <= 1e-12 * (1.0 + y.norm()));
            }
        }
    }

    #[test]
    fn normalized_features_cancel_power_randomization() {
        let plain = small(4.0);
        let mut rand = small(4.0);
        rand.synthesis.power_randomization = Some((0.5, 1.5));
        let a = bundle_packets(&plain.synthesize(11).unwrap().packets, 0.2).unwrap();
        let b = bundle_packets(&rand.synthesize(11).unwrap().packets, 0.2).unwrap();
        for kind in [FeatureKind::FavgCsiVar, FeatureKind::CsiStdVec, FeatureKind::TavgCsiAmplVec] {
            let spec = FeatureSpec::new(kind, 1, true);
            for (x, y) in feature_stream(&a, &spec).unwrap().iter().zip(&feature_stream(&b, &spec).unwrap()) {
                for (p, q) in x.values().iter().zip(y.values()) {
                    assert!((p - q).norm() <= 1e-12 * (1.0 + p.norm()));
                }
            }
        }
    }

    #[test]
    fn labeled_windows_have_inflated_variance() {
        let cfg = SimulationConfig {
            duration_s: 80.0,
            bursts: vec![(100, 149), (250, 299)],
            ..SimulationConfig::default()
        };
        let t = cfg.synthesize(21).unwrap();
        assert_eq!(t.labels, vec![(100, 149), (250, 299)]);
        let bundles = bundle_packets(&t.packets, 0.2).unwrap();
        let spec = FeatureSpec::new(FeatureKind::FavgCsiVar, 1, false);
        let (mut inside, mut outside) = (Vec::new(), Vec::new());
        for b in &bundles {
            let v = extract(std::slice::from_ref(b), &spec).unwrap().unwrap().values()[0].re;
            if t.labels.iter().any(|&(s, e)| (s..=e).contains(&b.window_index)) {
                inside.push(v);
            } else {
                outside.push(v);
            }
        }
        outside.sort_by(f64::total_cmp);
        let median = outside[outside.len() / 2];
        assert!(inside.iter().all(|&v| v > 3.0 * median));
    }

    #[test]
    fn config_errors_name_the_field() {
        let bad = SimulationConfig { a: 1.5, ..SimulationConfig::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("channel.a"));
        let mut bad = SimulationConfig::default();
        bad.synthesis.power_randomization = Some((2.0, 1.0));
        assert!(bad.validate().unwrap_err().to_string().contains("power_randomization"));
        let bad = SimulationConfig { bursts: vec![(5, 3)], ..SimulationConfig::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("bursts"));
    }
}
