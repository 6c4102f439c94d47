//! End-to-end operations on packet traces: feature extraction, threshold
//! calibration, detection, the feature grid and the update benchmark.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{evaluate_with_grace, Detector, DetectorConfig, Metrics, Timeline, DEFAULT_WARMUP};
use crate::error::{Error, Result};
use crate::features::{bundle_packets, feature_stream, Bundle, Bundler, FeatureKind, FeatureSpec, FeatureStream, Packet};
use crate::hypothesis::{calibrate_threshold, Decision, TestConfig, TestMode, DEFAULT_MARGIN_FACTOR, DEFAULT_PERCENTILE};
use crate::predictors::{PredictorConfig, PredictorKind, WeightPolicy};
use crate::simulator::complex_gaussian;
use crate::vector::FeatureVector;

pub const CALIBRATION_DISCARD: usize = 500;
pub const CALIBRATION_RECORD: usize = 500;
/// Smallest threshold a calibration may return.
pub const MIN_ETA: f64 = 1e-12;

/// Bundles the packets and extracts one feature stream; gaps are dropped.
pub fn extract_features(packets: &[Packet], spec: &FeatureSpec, bundle_window: f64) -> Result<Vec<FeatureVector>> {
    let bundles = bundle_packets(packets, bundle_window)?;
    feature_stream(&bundles, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationOptions {
    pub discard: usize,
    pub record: usize,
    pub percentile: f64,
    pub margin: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            discard: CALIBRATION_DISCARD,
            record: CALIBRATION_RECORD,
            percentile: DEFAULT_PERCENTILE,
            margin: DEFAULT_MARGIN_FACTOR,
        }
    }
}

/// Everything needed to replay detection on another trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub feature: FeatureSpec,
    pub predictor: PredictorConfig,
    pub weights: WeightPolicy,
    /// Test configuration with the learned threshold in `eta`.
    pub test: TestConfig,
    pub warmup: usize,
    pub discard: usize,
    pub record: usize,
    pub percentile: f64,
    pub margin: f64,
    pub eta: f64,
    pub p_high: f64,
    pub p_low: f64,
    /// Feature dimension.
    pub k: usize,
    pub k_sub: usize,
    pub bundle_window: f64,
}

impl CalibrationFile {
    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            predictor: self.predictor.clone(),
            weights: self.weights,
            test: TestConfig { eta: self.eta, ..self.test.clone() },
            warmup_steps: self.warmup,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::config("eta", format!("{} must be finite and positive", self.eta)));
        }
        self.feature.validate()?;
        self.detector_config().validate()
    }
}

/// Calibration result plus the detector state right after the recorded steps,
/// so a caller can keep streaming with the learned threshold.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub file: CalibrationFile,
    pub recorded: Vec<f64>,
    pub detector: Detector,
}

/// Runs the detector with `η = ∞`, discards the first `discard` steps,
/// records the statistic over the next `record` steps and sets
/// `η = P_p + margin·(P_p − P_{100−p})`.
pub fn calibrate(
    features: &[FeatureVector],
    feature: FeatureSpec,
    config: &DetectorConfig,
    k_sub: usize,
    bundle_window: f64,
    options: CalibrationOptions,
) -> Result<Calibration> {
    feature.validate()?;
    let needed = options.discard + options.record;
    if options.record == 0 {
        return Err(Error::config("record", "must be positive"));
    }
    if features.len() < needed {
        return Err(Error::Calibration(format!(
            "need {needed} feature steps, trace provides {}",
            features.len()
        )));
    }
    let mut open = config.clone();
    open.test.eta = f64::INFINITY;
    let mut det = Detector::new(open)?;
    let mut recorded = Vec::with_capacity(options.record);
    for (position, y) in features[..needed].iter().enumerate() {
        let out = det.step(y).map_err(|e| Error::AtStep { position, source: Box::new(e) })?;
        if position >= options.discard {
            recorded.push(out.decision.statistic);
        }
    }
    let est = calibrate_threshold(&recorded, options.percentile, options.margin)?;
    let eta = est.eta.max(MIN_ETA);
    det.set_threshold(eta)?;
    let file = CalibrationFile {
        feature,
        predictor: config.predictor.clone(),
        weights: config.weights,
        test: config.test.clone(),
        warmup: config.warmup_steps,
        discard: options.discard,
        record: options.record,
        percentile: options.percentile,
        margin: options.margin,
        eta,
        p_high: est.p_high,
        p_low: est.p_low,
        k: features[0].k(),
        k_sub,
        bundle_window,
    };
    let file = CalibrationFile {
        test: TestConfig { eta, ..file.test.clone() },
        ..file
    };
    Ok(Calibration { file, recorded, detector: det })
}

/// Replays a feature stream from the start with the calibrated threshold.
pub fn detect(features: &[FeatureVector], calibration: &CalibrationFile) -> Result<Timeline> {
    calibration.validate()?;
    if let Some(f) = features.first() {
        if f.k() != calibration.k {
            return Err(Error::DimensionMismatch { expected: calibration.k, got: f.k() });
        }
    }
    crate::detector::run_stream(&calibration.detector_config(), features.iter().cloned())
}

/// Feature extraction plus [`detect`] on raw packets. An empty trace gives an
/// empty timeline; otherwise the subcarrier count must match the calibration.
pub fn detect_packets(packets: &[Packet], k_sub: usize, calibration: &CalibrationFile) -> Result<Timeline> {
    calibration.validate()?;
    if packets.is_empty() {
        return Ok(Timeline::default());
    }
    if k_sub != calibration.k_sub {
        return Err(Error::DimensionMismatch { expected: calibration.k_sub, got: k_sub });
    }
    let features = extract_features(packets, &calibration.feature, calibration.bundle_window)?;
    detect(&features, calibration)
}

/// Packet-at-a-time form of [`detect_packets`]: bundling, feature
/// extraction and detection advance as packets arrive.
#[derive(Debug, Clone)]
pub struct LiveDetector {
    k_sub: usize,
    bundler: Bundler,
    features: FeatureStream,
    detector: Detector,
}

impl LiveDetector {
    pub fn new(calibration: &CalibrationFile) -> Result<Self> {
        calibration.validate()?;
        Ok(Self {
            k_sub: calibration.k_sub,
            bundler: Bundler::new(calibration.bundle_window)?,
            features: FeatureStream::new(calibration.feature)?,
            detector: Detector::new(calibration.detector_config())?,
        })
    }

    /// Feature steps processed so far.
    pub fn steps(&self) -> usize {
        self.detector.steps()
    }

    /// Returns the decision of the window this packet closed, if any.
    pub fn push(&mut self, packet: Packet) -> Result<Option<Decision>> {
        if packet.csi.len() != self.k_sub {
            return Err(Error::DimensionMismatch { expected: self.k_sub, got: packet.csi.len() });
        }
        match self.bundler.push(packet)? {
            Some(bundle) => self.step(&bundle),
            None => Ok(None),
        }
    }

    /// Closes the last open window.
    pub fn finish(&mut self) -> Result<Option<Decision>> {
        match self.bundler.finish() {
            Some(bundle) => self.step(&bundle),
            None => Ok(None),
        }
    }

    fn step(&mut self, bundle: &Bundle) -> Result<Option<Decision>> {
        match self.features.push(bundle)? {
            Some(y) => Ok(Some(self.detector.step(&y)?.decision)),
            None => Ok(None),
        }
    }
}

/// Detector configuration with the defaults for one grid cell.
pub fn default_detector(predictor: PredictorKind, test: TestMode) -> DetectorConfig {
    DetectorConfig {
        predictor: PredictorConfig::of_kind(predictor),
        weights: WeightPolicy::default(),
        test: TestConfig::new(test),
        warmup_steps: DEFAULT_WARMUP,
    }
}

/// The eight features at `B = 1` and `B = 10`.
pub fn feature_grid() -> Vec<FeatureSpec> {
    [1, 10]
        .into_iter()
        .flat_map(|b| FeatureKind::ALL.into_iter().map(move |k| FeatureSpec::new(k, b, false)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub feature: FeatureSpec,
    pub predictor: PredictorKind,
    pub test: TestMode,
    pub eta: Option<f64>,
    pub intervals: Option<usize>,
    pub anomaly_fraction: Option<f64>,
    pub metrics: Option<Metrics>,
    /// Set when the cell could not be evaluated (for example too few steps).
    pub error: Option<String>,
}

/// Calibrates on the leading part of the trace and detects over all of it,
/// for every feature in `features` and both tests. Cells run in parallel.
pub fn run_grid(
    packets: &[Packet],
    k_sub: usize,
    labels: Option<&[(u64, u64)]>,
    features: &[FeatureSpec],
    predictors: &[PredictorKind],
    bundle_window: f64,
) -> Result<Vec<GridCell>> {
    let bundles = bundle_packets(packets, bundle_window)?;
    let streams: Vec<(FeatureSpec, Result<Vec<FeatureVector>>)> = features
        .par_iter()
        .map(|spec| (*spec, feature_stream(&bundles, spec)))
        .collect();
    let mut jobs = Vec::new();
    for (i, _) in streams.iter().enumerate() {
        for &p in predictors {
            for t in TestMode::ALL {
                jobs.push((i, p, t));
            }
        }
    }
    Ok(jobs
        .into_par_iter()
        .map(|(i, predictor, test)| {
            let (feature, stream) = &streams[i];
            let mut cell = GridCell {
                feature: *feature,
                predictor,
                test,
                eta: None,
                intervals: None,
                anomaly_fraction: None,
                metrics: None,
                error: None,
            };
            let outcome = stream.as_ref().map_err(|e| e.to_string()).and_then(|s| {
                let cal = calibrate(s, *feature, &default_detector(predictor, test), k_sub, bundle_window, CalibrationOptions::default())
                    .map_err(|e| e.to_string())?;
                let timeline = detect(s, &cal.file).map_err(|e| e.to_string())?;
                let metrics = labels
                    .map(|l| evaluate_with_grace(&timeline, l, 0))
                    .transpose()
                    .map_err(|e| e.to_string())?;
                Ok((cal.file.eta, timeline, metrics))
            });
            match outcome {
                Ok((eta, timeline, metrics)) => {
                    cell.eta = Some(eta);
                    cell.intervals = Some(timeline.intervals.len());
                    cell.anomaly_fraction = Some(timeline.anomaly_fraction());
                    cell.metrics = metrics;
                }
                Err(e) => cell.error = Some(e),
            }
            cell
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub k: usize,
    pub iters: usize,
    pub predictor: PredictorKind,
    pub test: TestMode,
    pub mean_ns: f64,
    pub median_ns: f64,
    pub min_ns: f64,
    pub max_ns: f64,
}

/// Times predict + test + update per step on random complex K-vectors. The
/// detector is first run for a full MA window so every predictor is in its
/// steady state.
pub fn bench(k: usize, iters: usize, predictor: PredictorKind, test: TestMode, seed: u64) -> Result<BenchReport> {
    if k == 0 {
        return Err(Error::EmptyVector);
    }
    if iters == 0 {
        return Err(Error::config("iters", "must be positive"));
    }
    let mut config = default_detector(predictor, test);
    config.warmup_steps = 0;
    config.test.eta = 1.0;
    let mut det = Detector::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<FeatureVector> = (0..256)
        .map(|t| {
            FeatureVector::new((0..k).map(|_| complex_gaussian(&mut rng, 1.0)).collect(), t)
                .expect("gaussian draws are finite")
        })
        .collect();
    let prime = det.config().predictor.ma_window;
    for y in pool.iter().cycle().take(prime) {
        det.step(y)?;
    }
    let mut samples = Vec::with_capacity(iters);
    for y in pool.iter().cycle().take(iters) {
        let start = Instant::now();
        std::hint::black_box(det.step(std::hint::black_box(y))?);
        samples.push(start.elapsed().as_nanos() as f64);
    }
    let mean_ns = samples.iter().sum::<f64>() / iters as f64;
    samples.sort_by(f64::total_cmp);
    Ok(BenchReport {
        k,
        iters,
        predictor,
        test,
        mean_ns,
        median_ns: crate::hypothesis::percentile(&samples, 50.0),
        min_ns: samples[0],
        max_ns: samples[iters - 1],
    })
}
