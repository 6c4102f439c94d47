//! Streaming pipeline: predict, test, decide, then feed the measurement back
//! into the predictor with a weight chosen by the decision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::{self, decide, Decision, Gamma, GammaMode, Hypothesis, TestConfig};
use crate::predictors::{PredictorConfig, PredictorKind, PredictorState, WeightPolicy};
use crate::vector::{FeatureVector, MAX_FULL_K};

pub const DEFAULT_WARMUP: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub predictor: PredictorConfig,
    pub weights: WeightPolicy,
    pub test: TestConfig,
    /// Steps forced to H0 (and weight `alpha0`) at the start of a stream.
    pub warmup_steps: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            predictor: PredictorConfig::default(),
            weights: WeightPolicy::default(),
            test: TestConfig::default(),
            warmup_steps: DEFAULT_WARMUP,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        self.predictor.validate()?;
        self.weights.validate()?;
        self.test.validate()?;
        if self.test.gamma_mode == GammaMode::Full && self.predictor.kind != PredictorKind::Ma {
            return Err(Error::config(
                "gamma_mode",
                "full gamma needs the full covariance of the moving-average predictor",
            ));
        }
        Ok(())
    }
}

/// Result of one detector step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub decision: Decision,
    /// Weight the measurement was folded into the predictor with.
    pub weight: f64,
}

/// One detector per feature stream.
#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    state: Option<PredictorState>,
    k: Option<usize>,
    steps: usize,
    variance_sum: f64,
    variance_count: u64,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            state: None,
            k: None,
            steps: 0,
            variance_sum: 0.0,
            variance_count: 0,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn k(&self) -> Option<usize> {
        self.k
    }

    /// Number of measurements processed so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn predictor(&self) -> Option<&PredictorState> {
        self.state.as_ref()
    }

    /// Replaces the threshold, e.g. after calibration on the same stream.
    pub fn set_threshold(&mut self, eta: f64) -> Result<()> {
        let mut test = self.config.test.clone();
        test.eta = eta;
        test.validate()?;
        self.config.test = test;
        Ok(())
    }

    fn eps_var(&mut self, mean_variance: f64) -> f64 {
        if let Some(e) = self.config.test.eps_var {
            return e;
        }
        self.variance_sum += mean_variance;
        self.variance_count += 1;
        hypothesis::relative_eps(self.variance_sum / self.variance_count as f64)
    }

    /// Prediction and statistic for `y`, or `None` when the predictor cannot
    /// predict yet.
    fn evaluate(&mut self, y: &FeatureVector) -> Result<Option<f64>> {
        let state = self.state.as_ref().expect("initialized");
        let full = self.config.test.gamma_mode == GammaMode::Full;
        let (y_hat, gamma) = match (state, full) {
            (PredictorState::Ma(ma), true) => {
                if y.k() > MAX_FULL_K {
                    return Err(Error::config("gamma_mode", format!("full gamma needs K <= {MAX_FULL_K}")));
                }
                let (y_hat, cov) = match ma.predict_full() {
                    Ok(p) => p,
                    Err(Error::NoPrediction(_)) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let eps = self.eps_var(cov.diag().mean());
                (y_hat, Gamma::Full(hypothesis::gamma_full(&cov, eps)?))
            }
            _ => {
                let p = match state.predict() {
                    Ok(p) => p,
                    Err(Error::NoPrediction(_)) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let eps = self.eps_var(p.cov.mean());
                (p.y_hat, Gamma::Diag(hypothesis::gamma_diag(&p.cov, eps)))
            }
        };
        hypothesis::statistic(&self.config.test, y, &y_hat, &gamma).map(Some)
    }

    pub fn step(&mut self, y: &FeatureVector) -> Result<StepOutcome> {
        match self.k {
            Some(k) => y.check_dim(k)?,
            None => {
                self.state = Some(PredictorState::for_stream(&self.config.predictor, &self.config.weights, y)?);
                self.k = Some(y.k());
            }
        }

        let decision = match self.evaluate(y)? {
            Some(h) => {
                let mut d = decide(h, self.config.test.eta, y.t);
                if self.steps < self.config.warmup_steps {
                    d.hypothesis = Hypothesis::H0;
                }
                d
            }
            None => Decision {
                hypothesis: Hypothesis::H0,
                statistic: 0.0,
                t: y.t,
            },
        };
        let weight = self.config.weights.weight(decision.is_anomaly());
        self.state.as_mut().expect("initialized").update(y, weight)?;
        self.steps += 1;
        Ok(StepOutcome { decision, weight })
    }
}

/// Decisions of a stream plus the maximal runs of H1 over consecutive time
/// indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timeline {
    pub decisions: Vec<Decision>,
    pub intervals: Vec<(u64, u64)>,
}

impl Timeline {
    pub fn from_decisions(decisions: Vec<Decision>) -> Self {
        let intervals = compact_runs(&decisions);
        Self { decisions, intervals }
    }

    pub fn anomaly_fraction(&self) -> f64 {
        if self.decisions.is_empty() {
            return 0.0;
        }
        self.decisions.iter().filter(|d| d.is_anomaly()).count() as f64 / self.decisions.len() as f64
    }
}

fn compact_runs(decisions: &[Decision]) -> Vec<(u64, u64)> {
    let mut out: Vec<(u64, u64)> = Vec::new();
    let mut open: Option<(u64, u64)> = None;
    for d in decisions {
        match (open, d.is_anomaly()) {
            (Some((s, e)), true) if d.t == e + 1 => open = Some((s, d.t)),
            (Some(run), true) => {
                out.push(run);
                open = Some((d.t, d.t));
            }
            (None, true) => open = Some((d.t, d.t)),
            (Some(run), false) => {
                out.push(run);
                open = None;
            }
            (None, false) => {}
        }
    }
    out.extend(open);
    out
}

/// Runs a fresh detector over a whole stream.
pub fn run_stream<I>(config: &DetectorConfig, features: I) -> Result<Timeline>
where
    I: IntoIterator<Item = FeatureVector>,
{
    let mut det = Detector::new(config.clone())?;
    let mut decisions = Vec::new();
    for (position, y) in features.into_iter().enumerate() {
        let out = det.step(&y).map_err(|e| Error::AtStep {
            position,
            source: Box::new(e),
        })?;
        decisions.push(out.decision);
    }
    Ok(Timeline::from_decisions(decisions))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Fraction of steps inside labels flagged H1.
    pub tpr: f64,
    /// Fraction of steps outside labels flagged H1.
    pub fpr: f64,
    /// Per label: first H1 step inside the label minus the label start.
    pub latencies: Vec<Option<u64>>,
    pub mean_latency: Option<f64>,
    pub positives: usize,
    pub negatives: usize,
    pub true_positives: usize,
    pub false_positives: usize,
}

pub fn validate_labels(labels: &[(u64, u64)]) -> Result<()> {
    for (i, &(s, e)) in labels.iter().enumerate() {
        if s > e {
            return Err(Error::OverlappingLabels { position: i });
        }
        if i > 0 && s <= labels[i - 1].1 {
            return Err(Error::OverlappingLabels { position: i });
        }
    }
    Ok(())
}

pub fn evaluate(timeline: &Timeline, labels: &[(u64, u64)]) -> Result<Metrics> {
    evaluate_with_grace(timeline, labels, 0)
}

/// Like [`evaluate`], but steps within `grace` windows of a label start do
/// not count towards the true-positive rate.
pub fn evaluate_with_grace(timeline: &Timeline, labels: &[(u64, u64)], grace: u64) -> Result<Metrics> {
    validate_labels(labels)?;
    let label_of = |t: u64| {
        let i = labels.partition_point(|&(_, e)| e < t);
        (i < labels.len() && labels[i].0 <= t).then_some(i)
    };
    let mut latencies = vec![None; labels.len()];
    let (mut pos, mut neg, mut tp, mut fp) = (0, 0, 0, 0);
    for d in &timeline.decisions {
        match label_of(d.t) {
            Some(i) => {
                if d.is_anomaly() && latencies[i].is_none() {
                    latencies[i] = Some(d.t - labels[i].0);
                }
                if d.t >= labels[i].0 + grace {
                    pos += 1;
                    tp += usize::from(d.is_anomaly());
                }
            }
            None => {
                neg += 1;
                fp += usize::from(d.is_anomaly());
            }
        }
    }
    let detected: Vec<u64> = latencies.iter().flatten().copied().collect();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(Metrics {
        tpr: ratio(tp, pos),
        fpr: ratio(fp, neg),
        mean_latency: (!detected.is_empty())
            .then(|| detected.iter().sum::<u64>() as f64 / detected.len() as f64),
        latencies,
        positives: pos,
        negatives: neg,
        true_positives: tp,
        false_positives: fp,
    })
}
