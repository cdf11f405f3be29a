//! The single dataset + model pair a process serves or explains against.

use std::collections::BTreeSet;
use std::sync::Arc;

use binflip::context::{self, Condition, DensityHistogram, InstanceSummary, SummaryError};
use binflip::counterfactual::{
    generate_counterfactual, CounterfactualResult, SearchConfig, SearchError,
};
use binflip::dataset::{
    compute_feature_stats, BinError, BinGrid, Dataset, FeatureStats, DEFAULT_BINS,
};
use binflip::model::{Metrics, PredictError, Predictor};

#[derive(Debug, Clone)]
pub struct SessionOptions {
    pub n_bins: usize,
    pub max_changed_features: usize,
    pub max_bin_distance: usize,
    pub initial_locks: Vec<String>,
    /// When false, ground truth is hidden: correctness is `UNKNOWN` and only
    /// the `all` density condition is available.
    pub expose_targets: bool,
}

impl Default for SessionOptions {
    fn default() -> Self {
        let search = SearchConfig::default();
        Self {
            n_bins: DEFAULT_BINS,
            max_changed_features: search.max_changed_features,
            max_bin_distance: search.max_bin_distance,
            initial_locks: Vec::new(),
            expose_targets: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("model expects {model} features, dataset has {dataset}")]
    WidthMismatch { model: usize, dataset: usize },
    #[error("model feature names do not match the dataset header")]
    NameMismatch,
    #[error("feature and bin limits must both be at least 1")]
    InvalidLimits,
    #[error(transparent)]
    Bins(#[from] BinError),
    #[error("model query failed: {0}")]
    Predict(#[from] PredictError),
}

pub struct Session {
    dataset: Dataset,
    stats: Vec<FeatureStats>,
    grid: BinGrid,
    model: Arc<dyn Predictor>,
    options: SessionOptions,
    initial_locks: BTreeSet<usize>,
    metrics: Option<Metrics>,
}

impl Session {
    pub fn new(
        dataset: Dataset,
        model: Arc<dyn Predictor>,
        options: SessionOptions,
    ) -> Result<Self, SessionError> {
        if let Some(width) = model.n_features() {
            if width != dataset.n_features() {
                return Err(SessionError::WidthMismatch {
                    model: width,
                    dataset: dataset.n_features(),
                });
            }
        }
        if options.max_changed_features == 0 || options.max_bin_distance == 0 {
            return Err(SessionError::InvalidLimits);
        }
        let initial_locks = resolve_names(&dataset, &options.initial_locks)?;
        let stats = compute_feature_stats(&dataset);
        let grid = BinGrid::build(&stats, options.n_bins)?;
        let metrics = if options.expose_targets {
            Some(Metrics::evaluate(model.as_ref(), &dataset)?)
        } else {
            None
        };
        Ok(Self {
            dataset,
            stats,
            grid,
            model,
            options,
            initial_locks,
            metrics,
        })
    }

    /// Rejects a model whose recorded feature names differ from the header.
    pub fn check_names(dataset: &Dataset, names: &[String]) -> Result<(), SessionError> {
        if names.len() != dataset.n_features() {
            return Err(SessionError::WidthMismatch {
                model: names.len(),
                dataset: dataset.n_features(),
            });
        }
        if names != dataset.feature_names() {
            return Err(SessionError::NameMismatch);
        }
        Ok(())
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn grid(&self) -> &BinGrid {
        &self.grid
    }

    pub fn stats(&self) -> &[FeatureStats] {
        &self.stats
    }

    pub fn model(&self) -> &dyn Predictor {
        self.model.as_ref()
    }

    pub fn options(&self) -> &SessionOptions {
        &self.options
    }

    pub fn metrics(&self) -> Option<Metrics> {
        self.metrics
    }

    pub fn expose_targets(&self) -> bool {
        self.options.expose_targets
    }

    pub fn initial_locks(&self) -> &BTreeSet<usize> {
        &self.initial_locks
    }

    pub fn feature_names(&self) -> &[String] {
        self.dataset.feature_names()
    }

    pub fn lock_names(&self, locks: &BTreeSet<usize>) -> Vec<String> {
        locks
            .iter()
            .map(|&f| self.feature_names()[f].clone())
            .collect()
    }

    pub fn resolve_locks<S: AsRef<str>>(
        &self,
        names: &[S],
    ) -> Result<BTreeSet<usize>, SessionError> {
        resolve_names(&self.dataset, names)
    }

    pub fn truth(&self, index: usize) -> Option<u8> {
        if self.options.expose_targets {
            self.dataset.targets().get(index).copied()
        } else {
            None
        }
    }

    pub fn summary(&self, index: usize) -> Result<InstanceSummary, SummaryError> {
        let row = self
            .dataset
            .row(index)
            .ok_or(SummaryError::IndexOutOfRange {
                index,
                n_rows: self.dataset.n_rows(),
            })?;
        let mut s = context::summarize(
            row,
            self.truth(index),
            &self.stats,
            &self.grid,
            self.model(),
        )?;
        s.index = index as i64;
        Ok(s)
    }

    pub fn summarize_values(&self, values: &[f64]) -> Result<InstanceSummary, SummaryError> {
        context::summarize(values, None, &self.stats, &self.grid, self.model())
    }

    pub fn histogram(&self, condition: Condition) -> DensityHistogram {
        context::density_histogram(&self.dataset, &self.grid, condition)
    }

    pub fn search_config(
        &self,
        locks: BTreeSet<usize>,
        max_changed_features: Option<usize>,
        max_bin_distance: Option<usize>,
    ) -> SearchConfig {
        SearchConfig {
            max_changed_features: max_changed_features.unwrap_or(self.options.max_changed_features),
            max_bin_distance: max_bin_distance.unwrap_or(self.options.max_bin_distance),
            locks,
            max_iterations: None,
        }
    }

    pub fn explain(
        &self,
        instance: &[f64],
        config: &SearchConfig,
    ) -> Result<CounterfactualResult, SearchError> {
        generate_counterfactual(instance, self.model(), &self.grid, config)
    }
}

fn resolve_names<S: AsRef<str>>(
    dataset: &Dataset,
    names: &[S],
) -> Result<BTreeSet<usize>, SessionError> {
    names
        .iter()
        .map(|n| {
            let n = n.as_ref();
            dataset
                .feature_index(n)
                .ok_or_else(|| SessionError::UnknownFeature(n.to_string()))
        })
        .collect()
}
