//! Greedy counterfactual search over the bin grid.
//!
//! Starting from the raw instance, every iteration tries moving each unlocked
//! feature one bin up or down, keeps the single move that pushes the
//! probability furthest toward the opposite class, and stops as soon as the
//! predicted class changes. Two limits bound the explanation: at most
//! `max_changed_features` features may sit outside their original bin, and no
//! feature may drift more than `max_bin_distance` bins from where it started.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{BinError, BinGrid};
use crate::model::{predict_class, Class, PredictError, Predictor};

pub const DEFAULT_MAX_CHANGED_FEATURES: usize = 5;
pub const DEFAULT_MAX_BIN_DISTANCE: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchConfig {
    /// `w`: features allowed away from their original bin at once.
    pub max_changed_features: usize,
    /// `l`: bins a feature may move away from its original bin.
    pub max_bin_distance: usize,
    pub locks: BTreeSet<usize>,
    /// Defaults to `4 * w * l` when unset.
    pub max_iterations: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_changed_features: DEFAULT_MAX_CHANGED_FEATURES,
            max_bin_distance: DEFAULT_MAX_BIN_DISTANCE,
            locks: BTreeSet::new(),
            max_iterations: None,
        }
    }
}

impl SearchConfig {
    pub fn new(max_changed_features: usize, max_bin_distance: usize) -> Self {
        Self {
            max_changed_features,
            max_bin_distance,
            ..Self::default()
        }
    }

    pub fn with_locks(mut self, locks: impl IntoIterator<Item = usize>) -> Self {
        self.locks = locks.into_iter().collect();
        self
    }

    pub fn iteration_cap(&self) -> usize {
        self.max_iterations
            .unwrap_or(4 * self.max_changed_features * self.max_bin_distance)
    }

    pub fn is_locked(&self, feature: usize) -> bool {
        self.locks.contains(&feature)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SearchStatus {
    Flipped,
    /// Legal moves exist but none improves the probability.
    LocalOptimum,
    /// No legal move is left.
    ConstraintsExhausted,
    MaxIterations,
}

impl SearchStatus {
    pub const ALL: [SearchStatus; 4] = [
        SearchStatus::Flipped,
        SearchStatus::LocalOptimum,
        SearchStatus::ConstraintsExhausted,
        SearchStatus::MaxIterations,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SearchStatus::Flipped => "FLIPPED",
            SearchStatus::LocalOptimum => "LOCAL_OPTIMUM",
            SearchStatus::ConstraintsExhausted => "CONSTRAINTS_EXHAUSTED",
            SearchStatus::MaxIterations => "MAX_ITERATIONS",
        }
    }
}

impl std::fmt::Display for SearchStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single-bin step not yet scored against the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub feature: usize,
    pub from_bin: usize,
    pub to_bin: usize,
    pub new_value: f64,
}

impl Candidate {
    pub fn is_upward(&self) -> bool {
        self.to_bin > self.from_bin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Move {
    pub feature: usize,
    pub from_bin: usize,
    pub to_bin: usize,
    pub new_value: f64,
    pub probability_after: f64,
}

/// Net change of one feature between the instance and the counterfactual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Change {
    pub feature: usize,
    pub from_value: f64,
    pub from_bin: usize,
    pub to_bin: usize,
    pub to_value: f64,
}

impl Change {
    pub fn displacement(&self) -> usize {
        self.from_bin.abs_diff(self.to_bin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub status: SearchStatus,
    pub original_probability: f64,
    pub final_probability: f64,
    /// Predicted class of the original instance.
    pub direction: Class,
    pub trace: Vec<Move>,
    pub changes: Vec<Change>,
}

impl CounterfactualResult {
    pub fn is_flipped(&self) -> bool {
        self.status == SearchStatus::Flipped
    }

    /// The instance with every net change applied.
    pub fn apply_changes(&self, instance: &[f64]) -> Vec<f64> {
        let mut out = instance.to_vec();
        for c in &self.changes {
            out[c.feature] = c.to_value;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error("instance has {found} values, grid has {expected} features")]
    WidthMismatch { expected: usize, found: usize },
    #[error("model expects {model} features, grid has {grid}")]
    ModelWidthMismatch { model: usize, grid: usize },
    #[error("instance value for feature {0} is not finite")]
    NonFinite(usize),
    #[error("locked feature {feature} is out of range for {n_features} features")]
    LockOutOfRange { feature: usize, n_features: usize },
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Bin(#[from] BinError),
    #[error("model query failed: {0}")]
    Predict(#[from] PredictError),
}

/// Where the search currently stands. Features still in their original bin
/// carry their raw value; moved features carry their bin's representative.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchState {
    pub original_values: Vec<f64>,
    pub original_bins: Vec<usize>,
    pub values: Vec<f64>,
    pub bins: Vec<usize>,
}

impl SearchState {
    pub fn new(instance: &[f64], grid: &BinGrid) -> Result<Self, SearchError> {
        if instance.len() != grid.n_features() {
            return Err(SearchError::WidthMismatch {
                expected: grid.n_features(),
                found: instance.len(),
            });
        }
        if let Some(f) = instance.iter().position(|v| !v.is_finite()) {
            return Err(SearchError::NonFinite(f));
        }
        let bins = instance
            .iter()
            .enumerate()
            .map(|(f, &v)| grid.bin_index(f, v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            original_values: instance.to_vec(),
            original_bins: bins.clone(),
            values: instance.to_vec(),
            bins,
        })
    }

    pub fn displaced_count(&self) -> usize {
        self.bins
            .iter()
            .zip(&self.original_bins)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn displacement_after(&self, candidate: &Candidate) -> usize {
        candidate
            .to_bin
            .abs_diff(self.original_bins[candidate.feature])
    }

    pub fn apply(&mut self, step: &Move) {
        self.values[step.feature] = step.new_value;
        self.bins[step.feature] = step.to_bin;
    }

    fn with_candidate(&self, candidate: &Candidate) -> Vec<f64> {
        let mut v = self.values.clone();
        v[candidate.feature] = candidate.new_value;
        v
    }
}

/// All legal single-bin steps from `state`.
pub fn enumerate_candidates(
    state: &SearchState,
    config: &SearchConfig,
    grid: &BinGrid,
) -> Vec<Candidate> {
    let n_bins = grid.n_bins();
    let displaced = state.displaced_count();
    let mut out = Vec::new();
    for feature in 0..state.values.len() {
        if config.is_locked(feature) || grid.is_degenerate(feature) {
            continue;
        }
        let current = state.bins[feature];
        let original = state.original_bins[feature];
        let targets = [current.checked_sub(1), Some(current + 1)];
        for to_bin in targets.into_iter().flatten() {
            if to_bin >= n_bins || to_bin.abs_diff(original) > config.max_bin_distance {
                continue;
            }
            if current == original && displaced + 1 > config.max_changed_features {
                continue;
            }
            let new_value = if to_bin == original {
                state.original_values[feature]
            } else {
                grid.representative_value(feature, to_bin)
                    .expect("bin is in range for a non-degenerate feature")
            };
            out.push(Candidate {
                feature,
                from_bin: current,
                to_bin,
                new_value,
            });
        }
    }
    out
}

/// Signed progress toward the opposite class.
pub fn improvement(direction: Class, current: f64, new: f64) -> f64 {
    match direction {
        Class::Negative => new - current,
        Class::Positive => current - new,
    }
}

/// Scores every candidate in one batch and returns the best strictly
/// improving move. Ties on improvement go to the smaller displacement from
/// the original bin, then the lower feature index, then the upward step.
pub fn greedy_step<P: Predictor + ?Sized>(
    candidates: &[Candidate],
    model: &P,
    state: &SearchState,
    current_probability: f64,
    direction: Class,
) -> Result<Option<Move>, PredictError> {
    if candidates.is_empty() {
        return Ok(None);
    }
    let batch: Vec<Vec<f64>> = candidates.iter().map(|c| state.with_candidate(c)).collect();
    let probabilities = model.predict_proba(&batch)?;
    if probabilities.len() != candidates.len() {
        return Err(PredictError::LengthMismatch {
            expected: candidates.len(),
            found: probabilities.len(),
        });
    }

    let mut best: Option<(f64, &Candidate, f64)> = None;
    for (candidate, &p) in candidates.iter().zip(&probabilities) {
        let delta = improvement(direction, current_probability, p);
        if delta.is_nan() || delta <= 0.0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((best_delta, incumbent, _)) => {
                delta > best_delta
                    || (delta == best_delta
                        && tie_key(state, candidate) < tie_key(state, incumbent))
            }
        };
        if better {
            best = Some((delta, candidate, p));
        }
    }
    Ok(best.map(|(_, c, p)| Move {
        feature: c.feature,
        from_bin: c.from_bin,
        to_bin: c.to_bin,
        new_value: c.new_value,
        probability_after: p,
    }))
}

fn tie_key(state: &SearchState, c: &Candidate) -> (usize, usize, bool) {
    (state.displacement_after(c), c.feature, !c.is_upward())
}

/// Runs the greedy search for one instance.
pub fn generate_counterfactual<P: Predictor + ?Sized>(
    instance: &[f64],
    model: &P,
    grid: &BinGrid,
    config: &SearchConfig,
) -> Result<CounterfactualResult, SearchError> {
    if config.max_changed_features == 0 || config.max_bin_distance == 0 {
        return Err(SearchError::InvalidConfig(
            "feature and bin limits must both be at least 1".into(),
        ));
    }
    if let Some(&feature) = config.locks.iter().find(|&&f| f >= grid.n_features()) {
        return Err(SearchError::LockOutOfRange {
            feature,
            n_features: grid.n_features(),
        });
    }
    if let Some(width) = model.n_features() {
        if width != grid.n_features() {
            return Err(SearchError::ModelWidthMismatch {
                model: width,
                grid: grid.n_features(),
            });
        }
    }
    let mut state = SearchState::new(instance, grid)?;
    let original_probability = model.predict_one(instance)?;
    let direction = predict_class(original_probability);
    let mut probability = original_probability;
    let mut trace = Vec::new();

    let status = loop {
        if trace.len() >= config.iteration_cap() {
            break SearchStatus::MaxIterations;
        }
        let candidates = enumerate_candidates(&state, config, grid);
        if candidates.is_empty() {
            break SearchStatus::ConstraintsExhausted;
        }
        let Some(step) = greedy_step(&candidates, model, &state, probability, direction)? else {
            break SearchStatus::LocalOptimum;
        };
        state.apply(&step);
        probability = step.probability_after;
        trace.push(step);
        if predict_class(probability) != direction {
            break SearchStatus::Flipped;
        }
    };

    let changes = (0..state.values.len())
        .filter(|&f| state.bins[f] != state.original_bins[f])
        .map(|f| Change {
            feature: f,
            from_value: state.original_values[f],
            from_bin: state.original_bins[f],
            to_bin: state.bins[f],
            to_value: state.values[f],
        })
        .collect();
    Ok(CounterfactualResult {
        status,
        original_probability,
        final_probability: probability,
        direction,
        trace,
        changes,
    })
}

/// Extension point for alternative generators. The greedy bin search is the
/// only one shipped.
pub trait CounterfactualGenerator: Send + Sync {
    fn generate(
        &self,
        instance: &[f64],
        model: &dyn Predictor,
        grid: &BinGrid,
        config: &SearchConfig,
    ) -> Result<CounterfactualResult, SearchError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyBinSearch;

impl CounterfactualGenerator for GreedyBinSearch {
    fn generate(
        &self,
        instance: &[f64],
        model: &dyn Predictor,
        grid: &BinGrid,
        config: &SearchConfig,
    ) -> Result<CounterfactualResult, SearchError> {
        generate_counterfactual(instance, model, grid, config)
    }
}
