//! Request and response bodies of the HTTP service.
//!
//! Traces travel as the JSON-lines format of [`crate::trace`]; everything
//! else is plain JSON built from the types below.

use serde::{Deserialize, Serialize};

use crate::detector::{DetectorConfig, Timeline};
use crate::error::Error;
use crate::features::{FeatureSpec, Packet};
use crate::hypothesis::{Decision, TestMode};
use crate::predictors::PredictorKind;
use crate::simulator::SimulationConfig;
use crate::workflow::{CalibrationFile, CalibrationOptions};

pub const DEFAULT_BUNDLE_WINDOW: f64 = crate::features::DEFAULT_BUNDLE_WINDOW;

fn default_window() -> f64 {
    DEFAULT_BUNDLE_WINDOW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    #[serde(default)]
    pub config: SimulationConfig,
    pub seed: u64,
}

/// Summary of an uploaded trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceInfo {
    pub id: u64,
    pub k_sub: usize,
    pub packets: usize,
    pub seed: Option<u64>,
    pub labels: Option<Vec<(u64, u64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateRequest {
    pub trace: u64,
    pub feature: FeatureSpec,
    pub detector: DetectorConfig,
    #[serde(default)]
    pub options: CalibrationOptions,
    #[serde(default = "default_window")]
    pub bundle_window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateResponse {
    pub calibration: CalibrationFile,
    /// The statistic values the threshold was computed from.
    pub recorded: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub trace: u64,
    pub calibration: CalibrationFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub timeline: Timeline,
    pub labels: Vec<(u64, u64)>,
    /// Windows after a label start that do not count towards the TPR.
    #[serde(default)]
    pub grace: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRequest {
    pub trace: u64,
    pub features: Vec<FeatureSpec>,
    pub predictors: Vec<PredictorKind>,
    /// Overrides the labels stored in the trace header.
    #[serde(default)]
    pub labels: Option<Vec<(u64, u64)>>,
    #[serde(default = "default_window")]
    pub bundle_window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRequest {
    pub k: usize,
    pub iters: usize,
    pub predictor: PredictorKind,
    pub test: TestMode,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    pub calibration: CalibrationFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: u64,
    pub k: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketBatch {
    pub packets: Vec<Packet>,
}

/// Decisions for the feature steps completed by a batch of packets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepBatch {
    pub decisions: Vec<Decision>,
}

/// Whether a failure stems from the request itself or from the data it refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Data,
    NotFound,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: ErrorKind,
    pub message: String,
}

impl From<&Error> for ErrorKind {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidConfig { .. } => ErrorKind::Usage,
            Error::Io(_) => ErrorKind::Internal,
            _ => ErrorKind::Data,
        }
    }
}
