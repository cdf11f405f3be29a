//! Explaining many rows at once and summarizing how often the search flips.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::counterfactual::{
    generate_counterfactual, CounterfactualResult, SearchConfig, SearchError, SearchStatus,
};
use crate::dataset::BinGrid;
use crate::model::Predictor;
use crate::par;

/// Runs the search for every row, in parallel when the `parallel` feature is
/// on. Results are in row order.
pub fn explain_rows<P: Predictor + ?Sized>(
    rows: &[Vec<f64>],
    model: &P,
    grid: &BinGrid,
    config: &SearchConfig,
) -> Vec<Result<CounterfactualResult, SearchError>> {
    par::map(rows, |row| {
        generate_counterfactual(row, model, grid, config)
    })
}

pub fn explain_rows_sequential<P: Predictor + ?Sized>(
    rows: &[Vec<f64>],
    model: &P,
    grid: &BinGrid,
    config: &SearchConfig,
) -> Vec<Result<CounterfactualResult, SearchError>> {
    par::map_sequential(rows, |row| {
        generate_counterfactual(row, model, grid, config)
    })
}

/// Decile of a probability; 1.0 falls in the last one.
pub fn decile(probability: f64) -> usize {
    ((probability * 10.0).floor().max(0.0) as usize).min(9)
}

pub fn is_near_boundary(probability: f64) -> bool {
    (0.3..=0.7).contains(&probability)
}

pub fn is_extreme(probability: f64) -> bool {
    !(0.1..=0.9).contains(&probability)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub n_rows: usize,
    pub statuses: BTreeMap<String, usize>,
    pub flipped_rate: f64,
    /// FLIPPED rate per decile of the original probability; 0 for empty deciles.
    pub flipped_rate_by_decile: Vec<f64>,
    pub decile_counts: Vec<usize>,
    /// Original probability in `[0.3, 0.7]`.
    pub near_boundary_count: usize,
    pub flipped_rate_near_boundary: f64,
    /// Original probability below 0.1 or above 0.9.
    pub extreme_count: usize,
    pub flipped_rate_extreme: f64,
    pub mean_changes_flipped: f64,
}

fn rate(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

impl BatchReport {
    pub fn from_results<'a>(results: impl IntoIterator<Item = &'a CounterfactualResult>) -> Self {
        let mut statuses: BTreeMap<String, usize> = SearchStatus::ALL
            .iter()
            .map(|s| (s.as_str().to_string(), 0))
            .collect();
        let mut n_rows = 0;
        let mut flipped = 0;
        let mut decile_counts = vec![0usize; 10];
        let mut decile_flips = [0usize; 10];
        let (mut near, mut near_flips, mut extreme, mut extreme_flips) = (0, 0, 0, 0);
        let mut changes_flipped = 0usize;
        for r in results {
            n_rows += 1;
            *statuses.entry(r.status.as_str().to_string()).or_default() += 1;
            let d = decile(r.original_probability);
            decile_counts[d] += 1;
            let hit = usize::from(r.is_flipped());
            flipped += hit;
            decile_flips[d] += hit;
            if is_near_boundary(r.original_probability) {
                near += 1;
                near_flips += hit;
            }
            if is_extreme(r.original_probability) {
                extreme += 1;
                extreme_flips += hit;
            }
            if r.is_flipped() {
                changes_flipped += r.changes.len();
            }
        }
        Self {
            n_rows,
            statuses,
            flipped_rate: rate(flipped, n_rows),
            flipped_rate_by_decile: decile_flips
                .iter()
                .zip(&decile_counts)
                .map(|(&f, &n)| rate(f, n))
                .collect(),
            decile_counts,
            near_boundary_count: near,
            flipped_rate_near_boundary: rate(near_flips, near),
            extreme_count: extreme,
            flipped_rate_extreme: rate(extreme_flips, extreme),
            mean_changes_flipped: rate(changes_flipped, flipped),
        }
    }
}
