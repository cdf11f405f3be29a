//! Where an instance sits relative to the rest of the data: per-bin density
//! counts, z-scores, and the full summary shown next to an explanation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{BinError, BinGrid, Dataset, FeatureStats};
use crate::model::{
    correctness_label, predict_class, Class, CorrectnessLabel, PredictError, Predictor,
};
use crate::par;

/// Ground-truth filter for density counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    All,
    Positive,
    Negative,
}

impl Condition {
    pub fn matches(self, target: u8) -> bool {
        match self {
            Condition::All => true,
            Condition::Positive => target == 1,
            Condition::Negative => target == 0,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::All => "all",
            Condition::Positive => "positive",
            Condition::Negative => "negative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown condition {0:?}; expected all, positive or negative")]
pub struct UnknownCondition(pub String);

impl FromStr for Condition {
    type Err = UnknownCondition;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Condition::All),
            "positive" => Ok(Condition::Positive),
            "negative" => Ok(Condition::Negative),
            other => Err(UnknownCondition(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityHistogram {
    pub condition: Condition,
    /// `counts[feature][bin]`.
    pub counts: Vec<Vec<usize>>,
    /// Counts scaled by each feature's largest bin count.
    pub opacities: Vec<Vec<f64>>,
}

/// Bin counts of the rows whose target matches `condition`. Zero-variance
/// features put all their mass in the middle pseudo-bin.
pub fn density_histogram(
    dataset: &Dataset,
    grid: &BinGrid,
    condition: Condition,
) -> DensityHistogram {
    let n_bins = grid.n_bins();
    let rows: Vec<&[f64]> = dataset
        .rows()
        .iter()
        .zip(dataset.targets())
        .filter(|&(_, &t)| condition.matches(t))
        .map(|(r, _)| r.as_slice())
        .collect();
    let features: Vec<usize> = (0..grid.n_features()).collect();
    let counts: Vec<Vec<usize>> = par::map(&features, |&f| {
        let mut counts = vec![0usize; n_bins];
        for row in &rows {
            let bin = grid
                .bin_index(f, row[f])
                .expect("dataset values are finite and the grid covers every feature");
            counts[bin] += 1;
        }
        counts
    });
    let opacities = counts
        .iter()
        .map(|c| {
            let max = c.iter().copied().max().unwrap_or(0);
            c.iter()
                .map(|&k| if max == 0 { 0.0 } else { k as f64 / max as f64 })
                .collect()
        })
        .collect();
    DensityHistogram {
        condition,
        counts,
        opacities,
    }
}

pub fn z_scores(instance: &[f64], stats: &[FeatureStats]) -> Vec<f64> {
    instance
        .iter()
        .zip(stats)
        .map(|(&x, s)| s.z_score(x))
        .collect()
}

/// Feature indices by descending `|z|`, ties by ascending index.
pub fn sort_features(z: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    /// Row index, or -1 for an instance not taken from the dataset.
    pub index: i64,
    pub values: Vec<f64>,
    pub bins: Vec<usize>,
    pub z_scores: Vec<f64>,
    pub probability: f64,
    pub predicted_class: Class,
    pub correctness: CorrectnessLabel,
    pub sorted_order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SummaryError {
    #[error("row {index} is out of range for {n_rows} rows")]
    IndexOutOfRange { index: usize, n_rows: usize },
    #[error("instance has {found} values, expected {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Bin(#[from] BinError),
    #[error("model query failed: {0}")]
    Predict(#[from] PredictError),
}

/// Summary of dataset row `index`, labelled against its ground truth.
pub fn instance_summary<P: Predictor + ?Sized>(
    dataset: &Dataset,
    stats: &[FeatureStats],
    grid: &BinGrid,
    model: &P,
    index: usize,
) -> Result<InstanceSummary, SummaryError> {
    let row = dataset.row(index).ok_or(SummaryError::IndexOutOfRange {
        index,
        n_rows: dataset.n_rows(),
    })?;
    let truth = dataset.targets()[index];
    let mut summary = summarize(row, Some(truth), stats, grid, model)?;
    summary.index = index as i64;
    Ok(summary)
}

/// Summary of values that may not come from the dataset. Without ground
/// truth the correctness label is `UNKNOWN`.
pub fn summarize<P: Predictor + ?Sized>(
    values: &[f64],
    truth: Option<u8>,
    stats: &[FeatureStats],
    grid: &BinGrid,
    model: &P,
) -> Result<InstanceSummary, SummaryError> {
    if values.len() != grid.n_features() || values.len() != stats.len() {
        return Err(SummaryError::WidthMismatch {
            expected: grid.n_features(),
            found: values.len(),
        });
    }
    let bins = values
        .iter()
        .enumerate()
        .map(|(f, &v)| grid.bin_index(f, v))
        .collect::<Result<Vec<_>, _>>()?;
    let z = z_scores(values, stats);
    let probability = model.predict_one(values)?;
    Ok(InstanceSummary {
        index: -1,
        values: values.to_vec(),
        bins,
        sorted_order: sort_features(&z),
        z_scores: z,
        probability,
        predicted_class: predict_class(probability),
        correctness: correctness_label(probability, truth),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::compute_feature_stats;
    use crate::model::FnPredictor;

    fn unit_grid(n: usize) -> BinGrid {
        let s = FeatureStats {
            mean: 0.0,
            std: 1.0,
            observed_min: -1.0,
            observed_max: 1.0,
        };
        BinGrid::build(&vec![s; n], 10).unwrap()
    }

    #[test]
    fn point_mass_histogram() {
        let ds = Dataset::new(vec!["a".into()], vec![vec![0.0]; 4], vec![0, 1, 0, 1], "y").unwrap();
        let h = density_histogram(&ds, &unit_grid(1), Condition::All);
        assert_eq!(h.counts[0], vec![0, 0, 0, 0, 0, 4, 0, 0, 0, 0]);
        assert_eq!(h.opacities[0][5], 1.0);
        assert_eq!(h.opacities[0].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn empty_condition_is_all_zero() {
        let ds = Dataset::new(vec!["a".into()], vec![vec![0.0]; 3], vec![0, 0, 0], "y").unwrap();
        let h = density_histogram(&ds, &unit_grid(1), Condition::Positive);
        assert!(h.counts[0].iter().all(|&c| c == 0));
        assert!(h.opacities[0].iter().all(|&o| o == 0.0));
    }

    #[test]
    fn positive_counts_and_opacities() {
        let ds = Dataset::new(
            vec!["a".into()],
            vec![vec![0.1], vec![0.2], vec![0.7], vec![-1.9]],
            vec![1, 1, 1, 0],
            "y",
        )
        .unwrap();
        let h = density_histogram(&ds, &unit_grid(1), Condition::Positive);
        assert_eq!(h.counts[0], vec![0, 0, 0, 0, 0, 2, 1, 0, 0, 0]);
        assert_eq!(h.opacities[0][5], 1.0);
        assert_eq!(h.opacities[0][6], 0.5);
    }

    #[test]
    fn degenerate_feature_uses_pseudo_bin() {
        let ds = Dataset::new(
            vec!["a".into(), "c".into()],
            vec![vec![1.0, 7.0], vec![2.0, 7.0], vec![3.0, 7.0]],
            vec![1, 0, 1],
            "y",
        )
        .unwrap();
        let grid = BinGrid::from_dataset(&ds, 10).unwrap();
        let h = density_histogram(&ds, &grid, Condition::All);
        assert_eq!(h.counts[1][5], 3);
        assert_eq!(h.counts[0].iter().sum::<usize>(), 3);
    }

    #[test]
    fn z_and_sort() {
        let stats = [
            FeatureStats {
                mean: 1.0,
                std: 2.0,
                observed_min: 0.0,
                observed_max: 2.0,
            },
            FeatureStats {
                mean: 4.0,
                std: 0.0,
                observed_min: 4.0,
                observed_max: 4.0,
            },
        ];
        assert_eq!(z_scores(&[1.0, 9.0], &stats), vec![0.0, 0.0]);
        assert_eq!(z_scores(&[5.0, 4.0], &stats), vec![2.0, 0.0]);
        assert_eq!(sort_features(&[0.1, -2.0, 1.0]), vec![1, 2, 0]);
        assert_eq!(sort_features(&[1.0, -1.0]), vec![0, 1]);
        assert!(sort_features(&[]).is_empty());
    }

    #[test]
    fn summary_of_mean_row() {
        let ds = Dataset::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 10.0], vec![2.0, 20.0], vec![1.0, 15.0]],
            vec![0, 1, 1],
            "y",
        )
        .unwrap();
        let stats = compute_feature_stats(&ds);
        let grid = BinGrid::build(&stats, 10).unwrap();
        let flat = FnPredictor::new(|_: &[f64]| 0.5);
        let s = instance_summary(&ds, &stats, &grid, &flat, 2).unwrap();
        assert_eq!(s.index, 2);
        assert_eq!(s.probability, 0.5);
        assert_eq!(s.predicted_class, Class::Negative);
        assert_eq!(s.correctness, CorrectnessLabel::FalseNegative);
        assert!(s.z_scores.iter().all(|&z| z == 0.0));
        assert_eq!(s.bins, vec![5, 5]);
        assert!(matches!(
            instance_summary(&ds, &stats, &grid, &flat, 3),
            Err(SummaryError::IndexOutOfRange {
                index: 3,
                n_rows: 3
            })
        ));

        let low = FnPredictor::new(|_: &[f64]| 0.29);
        let s = instance_summary(&ds, &stats, &grid, &low, 0).unwrap();
        assert_eq!(
            (s.predicted_class, s.correctness),
            (Class::Negative, CorrectnessLabel::TrueNegative)
        );

        let adhoc = summarize(&[1.0, 15.0], None, &stats, &grid, &low).unwrap();
        assert_eq!(
            (adhoc.index, adhoc.correctness),
            (-1, CorrectnessLabel::Unknown)
        );
    }

    #[test]
    fn condition_parsing() {
        assert_eq!("negative".parse::<Condition>(), Ok(Condition::Negative));
        assert!("maybe".parse::<Condition>().is_err());
    }
}
