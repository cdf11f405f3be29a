//! The probability contract the search consumes, plus the built-in logistic
//! model and the subprocess adapter.

mod external;
mod logistic;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;

pub use external::{ExternalPredictor, DEFAULT_TIMEOUT_MS};
pub use logistic::{
    LogisticModel, ModelFileError, TrainConfig, TrainError, TrainingProblem, WeightInit,
};

/// Failure of a probability query. Every kind aborts the request that caused
/// it; no value is ever substituted.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictError {
    #[error("instance {index} has {found} values, model expects {expected}")]
    WidthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("predictor timed out after {0} ms")]
    Timeout(u64),
    #[error("malformed predictor response: {0}")]
    Malformed(String),
    #[error("predictor returned {found} probabilities for {expected} instances")]
    LengthMismatch { expected: usize, found: usize },
    #[error("probability {value} at position {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("response id {found} does not match request id {expected}")]
    IdMismatch { expected: u64, found: u64 },
    #[error("predictor process: {0}")]
    Process(String),
}

/// Anything that maps feature vectors to the probability of the positive
/// class. Implementations must be deterministic and return finite values in
/// `[0, 1]`.
pub trait Predictor: Send + Sync {
    fn predict_proba(&self, batch: &[Vec<f64>]) -> Result<Vec<f64>, PredictError>;

    /// Expected input width, when the predictor knows it.
    fn n_features(&self) -> Option<usize> {
        None
    }

    fn predict_one(&self, instance: &[f64]) -> Result<f64, PredictError> {
        let out = self.predict_proba(&[instance.to_vec()])?;
        out.first().copied().ok_or(PredictError::LengthMismatch {
            expected: 1,
            found: 0,
        })
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn predict_proba(&self, batch: &[Vec<f64>]) -> Result<Vec<f64>, PredictError> {
        (**self).predict_proba(batch)
    }
    fn n_features(&self) -> Option<usize> {
        (**self).n_features()
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict_proba(&self, batch: &[Vec<f64>]) -> Result<Vec<f64>, PredictError> {
        (**self).predict_proba(batch)
    }
    fn n_features(&self) -> Option<usize> {
        (**self).n_features()
    }
}

impl<P: Predictor + ?Sized> Predictor for Arc<P> {
    fn predict_proba(&self, batch: &[Vec<f64>]) -> Result<Vec<f64>, PredictError> {
        (**self).predict_proba(batch)
    }
    fn n_features(&self) -> Option<usize> {
        (**self).n_features()
    }
}

/// Adapts a per-instance closure. Handy for toy models and tests.
pub struct FnPredictor<F> {
    f: F,
    width: Option<usize>,
}

impl<F> FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f, width: None }
    }

    pub fn with_width(f: F, width: usize) -> Self {
        Self {
            f,
            width: Some(width),
        }
    }
}

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn predict_proba(&self, batch: &[Vec<f64>]) -> Result<Vec<f64>, PredictError> {
        batch
            .iter()
            .enumerate()
            .map(|(index, x)| {
                if let Some(expected) = self.width.filter(|&w| w != x.len()) {
                    return Err(PredictError::WidthMismatch {
                        index,
                        expected,
                        found: x.len(),
                    });
                }
                let p = (self.f)(x);
                if (0.0..=1.0).contains(&p) {
                    Ok(p)
                } else {
                    Err(PredictError::OutOfRange { index, value: p })
                }
            })
            .collect()
    }

    fn n_features(&self) -> Option<usize> {
        self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Negative,
    Positive,
}

impl Class {
    pub fn opposite(self) -> Self {
        match self {
            Class::Negative => Class::Positive,
            Class::Positive => Class::Negative,
        }
    }

    pub fn from_target(target: u8) -> Self {
        if target == 1 {
            Class::Positive
        } else {
            Class::Negative
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Class::Negative => "negative",
            Class::Positive => "positive",
        })
    }
}

/// Decision threshold. Strictly above is positive; exactly 0.5 is negative.
pub const THRESHOLD: f64 = 0.5;

pub fn predict_class(probability: f64) -> Class {
    if probability > THRESHOLD {
        Class::Positive
    } else {
        Class::Negative
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CorrectnessLabel {
    #[serde(rename = "TP")]
    TruePositive,
    #[serde(rename = "FP")]
    FalsePositive,
    #[serde(rename = "TN")]
    TrueNegative,
    #[serde(rename = "FN")]
    FalseNegative,
    #[serde(rename = "UNKNOWN")]
    Unknown,
}

impl CorrectnessLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrectnessLabel::TruePositive => "TP",
            CorrectnessLabel::FalsePositive => "FP",
            CorrectnessLabel::TrueNegative => "TN",
            CorrectnessLabel::FalseNegative => "FN",
            CorrectnessLabel::Unknown => "UNKNOWN",
        }
    }
}

impl fmt::Display for CorrectnessLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn correctness_label(probability: f64, truth: Option<u8>) -> CorrectnessLabel {
    let Some(truth) = truth else {
        return CorrectnessLabel::Unknown;
    };
    match (predict_class(probability), truth == 1) {
        (Class::Positive, true) => CorrectnessLabel::TruePositive,
        (Class::Positive, false) => CorrectnessLabel::FalsePositive,
        (Class::Negative, false) => CorrectnessLabel::TrueNegative,
        (Class::Negative, true) => CorrectnessLabel::FalseNegative,
    }
}

/// Accuracy and confusion counts at the 0.5 threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Metrics {
    pub fn from_predictions(probabilities: &[f64], targets: &[u8]) -> Self {
        let mut m = Metrics::default();
        for (&p, &t) in probabilities.iter().zip(targets) {
            match correctness_label(p, Some(t)) {
                CorrectnessLabel::TruePositive => m.tp += 1,
                CorrectnessLabel::FalsePositive => m.fp += 1,
                CorrectnessLabel::TrueNegative => m.tn += 1,
                CorrectnessLabel::FalseNegative => m.fn_ += 1,
                CorrectnessLabel::Unknown => {}
            }
        }
        let total = m.tp + m.fp + m.tn + m.fn_;
        if total > 0 {
            m.accuracy = (m.tp + m.tn) as f64 / total as f64;
        }
        m
    }

    pub fn evaluate<P: Predictor + ?Sized>(
        model: &P,
        dataset: &Dataset,
    ) -> Result<Self, PredictError> {
        let probabilities = model.predict_proba(dataset.rows())?;
        Ok(Self::from_predictions(&probabilities, dataset.targets()))
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}
