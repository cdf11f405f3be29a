use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use super::{sigmoid, Metrics, PredictError, Predictor};
use crate::dataset::{compute_feature_stats, Dataset};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInit {
    Zeros,
    /// Normal(0, scale) draws from the training seed.
    Random {
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub l2_penalty: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub init: WeightInit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2_penalty: 1e-3,
            epochs: 500,
            learning_rate: 0.1,
            seed: 0,
            init: WeightInit::Zeros,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

/// Mean log loss with an L2 penalty on the weights (not the intercept), over
/// standardized features. Parameters are laid out as `[w_0, .., w_{F-1}, b]`.
#[derive(Debug, Clone)]
pub struct TrainingProblem {
    standardized: Vec<Vec<f64>>,
    targets: Vec<f64>,
    l2_penalty: f64,
}

impl TrainingProblem {
    pub fn new(standardized: Vec<Vec<f64>>, targets: &[u8], l2_penalty: f64) -> Self {
        Self {
            standardized,
            targets: targets.iter().map(|&t| f64::from(t)).collect(),
            l2_penalty,
        }
    }

    pub fn n_params(&self) -> usize {
        self.standardized.first().map_or(0, Vec::len) + 1
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        self.loss_and_gradient(params).0
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        self.loss_and_gradient(params).1
    }

    pub fn loss_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let f = params.len() - 1;
        let (weights, bias) = (&params[..f], params[f]);
        let n = self.targets.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; f + 1];
        for (z, &y) in self.standardized.iter().zip(&self.targets) {
            let s = dot(weights, z) + bias;
            loss += softplus(s) - y * s;
            let residual = sigmoid(s) - y;
            for (g, &zj) in grad.iter_mut().zip(z) {
                *g += residual * zj;
            }
            grad[f] += residual;
        }
        loss /= n;
        for g in &mut grad {
            *g /= n;
        }
        let half_penalty: f64 = weights.iter().map(|w| w * w).sum::<f64>() * self.l2_penalty / 2.0;
        for (g, w) in grad.iter_mut().zip(weights) {
            *g += self.l2_penalty * w;
        }
        (loss + half_penalty, grad)
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Logistic regression over features standardized with the training-set
/// mean and population std. A zero-std feature contributes nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub feature_names: Vec<String>,
    pub l2_penalty: f64,
    pub train_metrics: Option<Metrics>,
}

impl LogisticModel {
    pub fn from_parts(
        weights: Vec<f64>,
        intercept: f64,
        means: Vec<f64>,
        stds: Vec<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self, ModelFileError> {
        let f = weights.len();
        if means.len() != f || stds.len() != f || feature_names.len() != f {
            return Err(ModelFileError::Inconsistent(format!(
                "{} weights, {} means, {} stds, {} names",
                f,
                means.len(),
                stds.len(),
                feature_names.len()
            )));
        }
        let all = weights
            .iter()
            .chain(&means)
            .chain(&stds)
            .chain([&intercept]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(ModelFileError::Inconsistent("non-finite parameter".into()));
        }
        if stds.iter().any(|&s| s < 0.0) {
            return Err(ModelFileError::Inconsistent("negative std".into()));
        }
        Ok(Self {
            weights,
            intercept,
            means,
            stds,
            feature_names,
            l2_penalty: 0.0,
            train_metrics: None,
        })
    }

    pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<Self, TrainError> {
        if config.l2_penalty.is_nan() || config.l2_penalty < 0.0 {
            return Err(TrainError::InvalidConfig("l2 penalty must be >= 0".into()));
        }
        if config.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !config.learning_rate.is_finite() || config.learning_rate < 0.0 {
            return Err(TrainError::InvalidConfig(
                "learning rate must be finite and >= 0".into(),
            ));
        }
        let stats = compute_feature_stats(dataset);
        let means: Vec<f64> = stats.iter().map(|s| s.mean).collect();
        let stds: Vec<f64> = stats.iter().map(|s| s.std).collect();
        let standardized = dataset
            .rows()
            .iter()
            .map(|row| standardize(row, &means, &stds))
            .collect();
        let problem = TrainingProblem::new(standardized, dataset.targets(), config.l2_penalty);

        let mut params = vec![0.0; problem.n_params()];
        if let WeightInit::Random { scale } = config.init {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let normal = Normal::new(0.0, scale.abs())
                .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
            for p in &mut params {
                *p = normal.sample(&mut rng);
            }
        }
        for epoch in 0..config.epochs {
            let (loss, grad) = problem.loss_and_gradient(&params);
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch, loss });
            }
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
        }
        let loss = problem.loss(&params);
        if !loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(TrainError::Diverged {
                epoch: config.epochs,
                loss,
            });
        }

        let intercept = params.pop().unwrap_or(0.0);
        let mut model = Self {
            weights: params,
            intercept,
            means,
            stds,
            feature_names: dataset.feature_names().to_vec(),
            l2_penalty: config.l2_penalty,
            train_metrics: None,
        };
        let probabilities: Vec<f64> = dataset
            .rows()
            .iter()
            .map(|r| model.probability(r))
            .collect();
        model.train_metrics = Some(Metrics::from_predictions(&probabilities, dataset.targets()));
        Ok(model)
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let z = standardize(x, &self.means, &self.stds);
        dot(&self.weights, &z) + self.intercept
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Serializes to the model-file JSON. Every number carries 17
    /// significant digits, so reading it back reproduces the same bits.
    pub fn to_json(&self) -> String {
        let mut out = String::from("{\"type\":\"logistic\",\"weights\":");
        push_array(&mut out, &self.weights);
        out.push_str(",\"intercept\":");
        push_number(&mut out, self.intercept);
        out.push_str(",\"means\":");
        push_array(&mut out, &self.means);
        out.push_str(",\"stds\":");
        push_array(&mut out, &self.stds);
        out.push_str(",\"feature_names\":");
        out.push_str(&serde_json::to_string(&self.feature_names).expect("strings serialize"));
        out.push('}');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, ModelFileError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct ModelFile {
            #[serde(rename = "type")]
            kind: String,
            weights: Vec<f64>,
            intercept: f64,
            means: Vec<f64>,
            stds: Vec<f64>,
            feature_names: Vec<String>,
        }
        let file: ModelFile = serde_json::from_str(text)?;
        if file.kind != "logistic" {
            return Err(ModelFileError::UnsupportedType(file.kind));
        }
        Self::from_parts(
            file.weights,
            file.intercept,
            file.means,
            file.stds,
            file.feature_names,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelFileError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn standardize(x: &[f64], means: &[f64], stds: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(means.iter().zip(stds))
        .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { 0.0 })
        .collect()
}

fn push_number(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String cannot fail");
}

fn push_array(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, &v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        push_number(out, v);
    }
    out.push(']');
}

impl Predictor for LogisticModel {
    fn predict_proba(&self, batch: &[Vec<f64>]) -> Result<Vec<f64>, PredictError> {
        batch
            .iter()
            .enumerate()
            .map(|(index, x)| {
                if x.len() != self.weights.len() {
                    return Err(PredictError::WidthMismatch {
                        index,
                        expected: self.weights.len(),
                        found: x.len(),
                    });
                }
                Ok(self.probability(x))
            })
            .collect()
    }

    fn n_features(&self) -> Option<usize> {
        Some(self.weights.len())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model type {0:?}")]
    UnsupportedType(String),
    #[error("inconsistent model file: {0}")]
    Inconsistent(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_separable() -> Dataset {
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..50 {
            rows.push(vec![-1.0]);
            targets.push(0);
            rows.push(vec![1.0]);
            targets.push(1);
        }
        Dataset::new(vec!["x".into()], rows, targets, "y").unwrap()
    }

    #[test]
    fn separable_data_learns_positive_weight() {
        let config = TrainConfig {
            l2_penalty: 0.01,
            ..TrainConfig::default()
        };
        let model = LogisticModel::train(&toy_separable(), &config).unwrap();
        assert!(model.weights[0] > 0.0);
        assert_eq!(model.train_metrics.unwrap().accuracy, 1.0);
    }

    #[test]
    fn all_positive_targets_push_probability_up() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let ds = Dataset::new(vec!["a".into(), "b".into()], rows, vec![1; 20], "y").unwrap();
        let model = LogisticModel::train(&ds, &TrainConfig::default()).unwrap();
        for row in ds.rows() {
            assert!(model.probability(row) > 0.5);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_zero_init() {
        let config = TrainConfig {
            epochs: 1,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let model = LogisticModel::train(&toy_separable(), &config).unwrap();
        assert_eq!(model.weights, vec![0.0]);
        assert_eq!(model.intercept, 0.0);
        assert_eq!(
            model.predict_proba(&[vec![-7.0], vec![3.0]]).unwrap(),
            vec![0.5, 0.5]
        );
    }

    #[test]
    fn seed_only_matters_with_random_init() {
        let ds = toy_separable();
        let a = LogisticModel::train(
            &ds,
            &TrainConfig {
                seed: 1,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let b = LogisticModel::train(
            &ds,
            &TrainConfig {
                seed: 2,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert_eq!(a, b);
        let random = |seed| TrainConfig {
            seed,
            epochs: 3,
            init: WeightInit::Random { scale: 1.0 },
            ..TrainConfig::default()
        };
        let c = LogisticModel::train(&ds, &random(1)).unwrap();
        let c2 = LogisticModel::train(&ds, &random(1)).unwrap();
        let d = LogisticModel::train(&ds, &random(2)).unwrap();
        assert_eq!(c, c2);
        assert_ne!(c.weights, d.weights);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let config = TrainConfig {
            learning_rate: 1e308,
            epochs: 50,
            ..TrainConfig::default()
        };
        assert!(matches!(
            LogisticModel::train(&toy_separable(), &config),
            Err(TrainError::Diverged { .. })
        ));
    }

    #[test]
    fn zero_std_feature_contributes_nothing() {
        let model = LogisticModel::from_parts(
            vec![1.0, 5.0],
            0.0,
            vec![0.0, 3.0],
            vec![1.0, 0.0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert_eq!(model.probability(&[0.0, 100.0]), 0.5);
    }

    #[test]
    fn model_file_is_bit_exact() {
        let model = LogisticModel::from_parts(
            vec![0.1, -1.0 / 3.0, 1e-300, 12345.678901234567],
            std::f64::consts::PI,
            vec![0.0, -2.5, 7.0, 1e10],
            vec![1.0, 0.3, 2.0 / 3.0, 0.0],
            vec!["a".into(), "b \"q\"".into(), "c".into(), "d".into()],
        )
        .unwrap();
        let text = model.to_json();
        assert!(text.starts_with("{\"type\":\"logistic\",\"weights\":[1.0000000000000001e-1,"));
        let back = LogisticModel::from_json(&text).unwrap();
        assert_eq!(back, model);
        for (a, b) in back.weights.iter().zip(&model.weights) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn model_file_errors() {
        assert!(matches!(
            LogisticModel::from_json(
                r#"{"type":"svm","weights":[],"intercept":0,"means":[],"stds":[],"feature_names":[]}"#
            ),
            Err(ModelFileError::UnsupportedType(_))
        ));
        assert!(matches!(
            LogisticModel::from_json(
                r#"{"type":"logistic","weights":[1],"intercept":0,"means":[],"stds":[],"feature_names":[]}"#
            ),
            Err(ModelFileError::Inconsistent(_))
        ));
        assert!(matches!(
            LogisticModel::from_json("{"),
            Err(ModelFileError::Json(_))
        ));
    }
}
