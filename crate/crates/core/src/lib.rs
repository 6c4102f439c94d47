//! Streaming anomaly detection for complex-valued feature vectors under
//! phase noise.
//!
//! A [`detector::Detector`] couples a predictor (moving average,
//! autoregressive or Kalman) with an omnidirectional or unidirectional
//! hypothesis test. The [`features`] module turns WiFi CSI/RSSI packet
//! traces into feature streams, and [`simulator`] produces labeled synthetic
//! traces from a Gauss-Markov channel model.

pub mod api;
pub mod detector;
pub mod error;
pub mod features;
pub mod hypothesis;
pub mod predictors;
pub mod simulator;
pub mod trace;
pub mod vector;
pub mod workflow;

pub use detector::{Detector, DetectorConfig, Metrics, Timeline};
pub use error::{Error, Result};
pub use features::{FeatureKind, FeatureSpec, Packet};
pub use hypothesis::{Decision, Hypothesis, TestConfig, TestMode};
pub use predictors::{PredictorConfig, PredictorKind, WeightPolicy};
pub use vector::{phase_align, DiagCovariance, FeatureVector, HermitianMatrix};
