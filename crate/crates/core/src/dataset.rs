//! Tabular datasets, per-feature Gaussian statistics and the bin grid the
//! counterfactual search walks on.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

/// A cell that could not be read as a finite number. `row` is 1-based over
/// data rows (the header is not counted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadCell {
    pub row: usize,
    pub column: String,
}

impl fmt::Display for BadCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {} column {:?}", self.row, self.column)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv has no header row")]
    MissingHeader,
    #[error("empty column name at position {0}")]
    EmptyColumnName(usize),
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("target column {0:?} not found")]
    UnknownTarget(String),
    #[error("dataset needs at least one feature column besides the target")]
    NoFeatures,
    #[error("dataset needs at least 2 rows, found {0}")]
    TooFewRows(usize),
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("missing or non-numeric cells: {}", format_cells(.0))]
    BadCells(Vec<BadCell>),
    #[error("target column {column:?} is not binary: row {row} has value {value:?}")]
    NonBinaryTarget {
        column: String,
        row: usize,
        value: String,
    },
    #[error("row {row} has {found} values, expected {expected}")]
    WidthMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("target {value} at row {row} is not 0 or 1")]
    InvalidTarget { row: usize, value: u8 },
    #[error("non-finite value at row {row}, feature {feature}")]
    NonFinite { row: usize, feature: usize },
}

fn format_cells(cells: &[BadCell]) -> String {
    const SHOWN: usize = 20;
    let mut out = cells
        .iter()
        .take(SHOWN)
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ");
    if cells.len() > SHOWN {
        out.push_str(&format!(" (and {} more)", cells.len() - SHOWN));
    }
    out
}

/// Immutable table of numeric features with binary ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    rows: Vec<Vec<f64>>,
    targets: Vec<u8>,
    target_name: String,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        targets: Vec<u8>,
        target_name: impl Into<String>,
    ) -> Result<Self, DatasetError> {
        if feature_names.is_empty() {
            return Err(DatasetError::NoFeatures);
        }
        let mut seen = HashSet::new();
        for (i, name) in feature_names.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(DatasetError::EmptyColumnName(i));
            }
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::DuplicateColumn(name.clone()));
            }
        }
        if rows.len() < 2 {
            return Err(DatasetError::TooFewRows(rows.len()));
        }
        if targets.len() != rows.len() {
            return Err(DatasetError::WidthMismatch {
                row: rows.len().min(targets.len()) + 1,
                expected: rows.len(),
                found: targets.len(),
            });
        }
        let width = feature_names.len();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(DatasetError::WidthMismatch {
                    row: r + 1,
                    expected: width,
                    found: row.len(),
                });
            }
            if let Some(feature) = row.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite {
                    row: r + 1,
                    feature,
                });
            }
        }
        if let Some(r) = targets.iter().position(|&t| t > 1) {
            return Err(DatasetError::InvalidTarget {
                row: r + 1,
                value: targets[r],
            });
        }
        Ok(Self {
            feature_names,
            rows,
            targets,
            target_name: target_name.into(),
        })
    }

    /// Reads a headed, comma-separated file. The target defaults to the last
    /// column; every other column must be numeric in every row.
    pub fn load_csv<R: Read>(source: R, target_column: Option<&str>) -> Result<Self, DatasetError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(source);
        let header: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
            return Err(DatasetError::MissingHeader);
        }
        let mut seen = HashSet::new();
        for (i, name) in header.iter().enumerate() {
            if name.is_empty() {
                return Err(DatasetError::EmptyColumnName(i));
            }
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::DuplicateColumn(name.clone()));
            }
        }
        let target_idx = match target_column {
            Some(name) => header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DatasetError::UnknownTarget(name.to_string()))?,
            None => header.len() - 1,
        };
        if header.len() < 2 {
            return Err(DatasetError::NoFeatures);
        }

        let mut rows = Vec::new();
        let mut targets = Vec::new();
        let mut bad = Vec::new();
        let mut non_binary = None;
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let row_no = i + 1;
            if record.len() != header.len() {
                return Err(DatasetError::RaggedRow {
                    row: row_no,
                    expected: header.len(),
                    found: record.len(),
                });
            }
            let mut values = Vec::with_capacity(header.len() - 1);
            let mut target = 0u8;
            for (c, cell) in record.iter().enumerate() {
                let parsed = parse_number(cell);
                if c == target_idx {
                    match parsed {
                        Some(0.0) => target = 0,
                        Some(1.0) => target = 1,
                        _ => {
                            if non_binary.is_none() {
                                non_binary = Some((row_no, cell.to_string()));
                            }
                        }
                    }
                } else {
                    match parsed {
                        Some(v) => values.push(v),
                        None => {
                            bad.push(BadCell {
                                row: row_no,
                                column: header[c].clone(),
                            });
                            values.push(f64::NAN);
                        }
                    }
                }
            }
            rows.push(values);
            targets.push(target);
        }
        if !bad.is_empty() {
            return Err(DatasetError::BadCells(bad));
        }
        if let Some((row, value)) = non_binary {
            return Err(DatasetError::NonBinaryTarget {
                column: header[target_idx].clone(),
                row,
                value,
            });
        }
        let target_name = header[target_idx].clone();
        let feature_names = header
            .into_iter()
            .enumerate()
            .filter(|&(c, _)| c != target_idx)
            .map(|(_, h)| h)
            .collect();
        Self::new(feature_names, rows, targets, target_name)
    }

    pub fn from_path(
        path: impl AsRef<Path>,
        target_column: Option<&str>,
    ) -> Result<Self, DatasetError> {
        let file = std::fs::File::open(path)?;
        Self::load_csv(std::io::BufReader::new(file), target_column)
    }

    /// Writes the dataset back as CSV with the target as the last column.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), DatasetError> {
        let mut writer = csv::Writer::from_writer(sink);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(&self.target_name);
        writer.write_record(&header)?;
        for (row, target) in self.rows.iter().zip(&self.targets) {
            let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            record.push(target.to_string());
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, index: usize) -> Option<&[f64]> {
        self.rows.get(index).map(Vec::as_slice)
    }

    pub fn targets(&self) -> &[u8] {
        &self.targets
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn column(&self, feature: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[feature])
    }
}

fn parse_number(cell: &str) -> Option<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return None;
    }
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Gaussian fit of one feature column (population moments).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
    pub observed_min: f64,
    pub observed_max: f64,
}

impl FeatureStats {
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        // Welford; the population variance is m2 / n.
        let mut n = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for x in values {
            n += 1;
            let delta = x - mean;
            mean += delta / n as f64;
            m2 += delta * (x - mean);
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if n == 0 {
            return Self {
                mean: 0.0,
                std: 0.0,
                observed_min: 0.0,
                observed_max: 0.0,
            };
        }
        let std = if lo == hi {
            0.0
        } else {
            (m2 / n as f64).sqrt()
        };
        Self {
            mean,
            std,
            observed_min: lo,
            observed_max: hi,
        }
    }

    pub fn z_score(&self, value: f64) -> f64 {
        if self.std > 0.0 {
            (value - self.mean) / self.std
        } else {
            0.0
        }
    }
}

pub fn compute_feature_stats(dataset: &Dataset) -> Vec<FeatureStats> {
    (0..dataset.n_features())
        .map(|f| FeatureStats::from_values(dataset.column(f)))
        .collect()
}

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BinError {
    #[error("at least 3 bins are required, got {0}")]
    TooFewBins(usize),
    #[error("feature {0} is out of range")]
    FeatureOutOfRange(usize),
    #[error("feature {0} has zero variance and no bins")]
    Degenerate(usize),
    #[error("bin {bin} is out of range for {n_bins} bins")]
    BinOutOfRange { bin: usize, n_bins: usize },
    #[error("value {0} is not finite")]
    NonFinite(f64),
}

/// Discretization of a single feature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureBins {
    pub mean: f64,
    pub std: f64,
    /// `n_bins - 1` cut points; empty when degenerate.
    pub boundaries: Vec<f64>,
    pub interior_width: f64,
    pub degenerate: bool,
}

/// Per-feature Gaussian discretization: the middle `n - 2` bins split
/// `[mean - 2 std, mean + 2 std]` evenly and the two outer bins take the tails.
/// Bins are half-open `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinGrid {
    n_bins: usize,
    features: Vec<FeatureBins>,
}

impl BinGrid {
    pub fn build(stats: &[FeatureStats], n_bins: usize) -> Result<Self, BinError> {
        if n_bins < 3 {
            return Err(BinError::TooFewBins(n_bins));
        }
        let features = stats.iter().map(|s| feature_bins(s, n_bins)).collect();
        Ok(Self { n_bins, features })
    }

    pub fn from_dataset(dataset: &Dataset, n_bins: usize) -> Result<Self, BinError> {
        Self::build(&compute_feature_stats(dataset), n_bins)
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[FeatureBins] {
        &self.features
    }

    pub fn feature(&self, feature: usize) -> Result<&FeatureBins, BinError> {
        self.features
            .get(feature)
            .ok_or(BinError::FeatureOutOfRange(feature))
    }

    pub fn is_degenerate(&self, feature: usize) -> bool {
        self.features.get(feature).is_some_and(|f| f.degenerate)
    }

    /// The bin holding `value`: the number of cut points `<= value`.
    pub fn bin_of(&self, feature: usize, value: f64) -> Result<usize, BinError> {
        let bins = self.feature(feature)?;
        if bins.degenerate {
            return Err(BinError::Degenerate(feature));
        }
        if !value.is_finite() {
            return Err(BinError::NonFinite(value));
        }
        Ok(bins.boundaries.partition_point(|&b| b <= value))
    }

    /// Like [`BinGrid::bin_of`], but degenerate features land in the middle
    /// pseudo-bin `n_bins / 2` instead of failing.
    pub fn bin_index(&self, feature: usize, value: f64) -> Result<usize, BinError> {
        if self.feature(feature)?.degenerate {
            return Ok(self.pseudo_bin());
        }
        self.bin_of(feature, value)
    }

    pub fn pseudo_bin(&self) -> usize {
        self.n_bins / 2
    }

    /// Value a feature takes when a move lands it in `bin`: the interval
    /// midpoint for interior bins, half an interior width past the outer cut
    /// point for the two tail bins.
    pub fn representative_value(&self, feature: usize, bin: usize) -> Result<f64, BinError> {
        let bins = self.feature(feature)?;
        if bins.degenerate {
            return Err(BinError::Degenerate(feature));
        }
        representative(bins, self.n_bins, bin)
    }
}

fn representative(bins: &FeatureBins, n_bins: usize, bin: usize) -> Result<f64, BinError> {
    let b = &bins.boundaries;
    let half = bins.interior_width / 2.0;
    match bin {
        0 => Ok(b[0] - half),
        i if i == n_bins - 1 => Ok(b[n_bins - 2] + half),
        i if i < n_bins - 1 => Ok(0.5 * (b[i - 1] + b[i])),
        i => Err(BinError::BinOutOfRange { bin: i, n_bins }),
    }
}

fn feature_bins(stats: &FeatureStats, n_bins: usize) -> FeatureBins {
    let degenerate = FeatureBins {
        mean: stats.mean,
        std: stats.std,
        boundaries: Vec::new(),
        interior_width: 0.0,
        degenerate: true,
    };
    if !stats.std.is_finite() || stats.std <= 0.0 {
        return degenerate;
    }
    let width = 4.0 * stats.std / (n_bins - 2) as f64;
    let lo = stats.mean - 2.0 * stats.std;
    let mut boundaries: Vec<f64> = (0..n_bins - 1).map(|k| lo + k as f64 * width).collect();
    boundaries[n_bins - 2] = stats.mean + 2.0 * stats.std;
    let bins = FeatureBins {
        mean: stats.mean,
        std: stats.std,
        boundaries,
        interior_width: width,
        degenerate: false,
    };
    // A spread too small to resolve next to the mean in f64 collapses cut
    // points; such a feature cannot be moved bin by bin.
    let resolvable = bins.boundaries.windows(2).all(|w| w[0] < w[1])
        && (0..n_bins).all(|i| {
            representative(&bins, n_bins, i)
                .map(|v| bins.boundaries.partition_point(|&b| b <= v) == i)
                .unwrap_or(false)
        });
    if resolvable {
        bins
    } else {
        degenerate
    }
}
