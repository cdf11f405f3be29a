//! Seeded synthetic datasets used by tests, benches and the bundled demo
//! data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::Dataset;
use crate::model::{sigmoid, LogisticModel};

/// `x = -1 -> 0`, `x = +1 -> 1`, fifty copies of each.
pub fn separable_toy() -> Dataset {
    let mut rows = Vec::with_capacity(100);
    let mut targets = Vec::with_capacity(100);
    for _ in 0..50 {
        rows.push(vec![-1.0]);
        targets.push(0);
        rows.push(vec![1.0]);
        targets.push(1);
    }
    Dataset::new(vec!["x".into()], rows, targets, "y").expect("valid toy data")
}

/// One feature `x` with mean 0 and population std 1; row 0 is `x = -0.3`.
/// Paired with [`sigmoid_toy_model`] a single bin step flips row 0.
pub fn sigmoid_toy() -> Dataset {
    let a = 1.91f64.sqrt();
    let xs = [-0.3, 0.3, -a, a];
    let rows = xs.iter().map(|&x| vec![x]).collect();
    let targets = xs.iter().map(|&x| u8::from(x > 0.0)).collect();
    Dataset::new(vec!["x".into()], rows, targets, "y").expect("valid toy data")
}

/// `p = sigmoid(x)`.
pub fn sigmoid_toy_model() -> LogisticModel {
    LogisticModel::from_parts(vec![1.0], 0.0, vec![0.0], vec![1.0], vec!["x".into()])
        .expect("valid parameters")
}

/// Gaussian features with a logistic ground truth spread over many weak
/// features, plus one constant column. With at most five features moved, rows
/// the truth puts far from 0.5 are usually out of reach.
pub fn gaussian_logistic(n_rows: usize, n_features: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<(f64, f64, f64)> = (0..n_features)
        .map(|f| {
            let mean = rng.random_range(-50.0..50.0);
            let std = rng.random_range(0.5..20.0);
            let sign = if f % 3 == 2 { -1.0 } else { 1.0 };
            let weight = sign * rng.random_range(0.6..1.4);
            (mean, std, weight)
        })
        .collect();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows = Vec::with_capacity(n_rows);
    let mut targets = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let mut logit = 0.0;
        let mut row = Vec::with_capacity(n_features + 1);
        for &(mean, std, weight) in &params {
            let z: f64 = std_normal.sample(&mut rng);
            logit += weight * z;
            row.push(mean + std * z);
        }
        row.push(42.0);
        let target = u8::from(rng.random::<f64>() < sigmoid(logit));
        rows.push(row);
        targets.push(target);
    }
    let mut names: Vec<String> = (0..n_features).map(|f| format!("f{f}")).collect();
    names.push("constant".into());
    Dataset::new(names, rows, targets, "label").expect("valid synthetic data")
}

pub const RISK_ESTIMATE: &str = "External Risk Estimate";

/// Time-dependent features of the credit-line stand-in.
pub const TIME_BASED: [&str; 4] = [
    "Months Since Oldest Trade Open",
    "Average Months in File",
    "Months Since Most Recent Delinquency",
    "Number of Satisfactory Trades",
];

/// A credit-line application dataset shaped like the public HELOC data: the
/// external risk estimate dominates, four time-based features matter, and
/// three remaining features are weak. Target 1 means good repayment.
pub fn heloc_like(n_rows: usize, seed: u64) -> Dataset {
    // (name, mean, std, weight on the standardized value)
    let spec: [(&str, f64, f64, f64); 8] = [
        (RISK_ESTIMATE, 72.0, 10.0, 2.4),
        (TIME_BASED[0], 200.0, 95.0, 0.55),
        (TIME_BASED[1], 78.0, 32.0, 0.6),
        (TIME_BASED[2], 22.0, 14.0, 0.5),
        (TIME_BASED[3], 21.0, 11.0, 0.55),
        ("Number of Inquiries in Last 6 Months", 1.5, 2.0, -0.12),
        ("Net Fraction Revolving Burden", 35.0, 28.0, -0.12),
        ("Percent Trades Never Delinquent", 92.0, 8.0, 0.1),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows = Vec::with_capacity(n_rows);
    let mut targets = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let mut logit = -0.2;
        let mut row = Vec::with_capacity(spec.len());
        for &(_, mean, std, weight) in &spec {
            let z: f64 = std_normal.sample(&mut rng);
            logit += weight * z;
            row.push(((mean + std * z) * 10.0).round() / 10.0);
        }
        targets.push(u8::from(rng.random::<f64>() < sigmoid(logit)));
        rows.push(row);
    }
    let names = spec.iter().map(|s| s.0.to_string()).collect();
    Dataset::new(names, rows, targets, "Risk Performance").expect("valid synthetic data")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::compute_feature_stats;

    #[test]
    fn sigmoid_toy_is_standard() {
        let stats = compute_feature_stats(&sigmoid_toy());
        assert!(stats[0].mean.abs() < 1e-15);
        assert!((stats[0].std - 1.0).abs() < 1e-15);
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(gaussian_logistic(50, 4, 7), gaussian_logistic(50, 4, 7));
        assert_ne!(gaussian_logistic(50, 4, 7), gaussian_logistic(50, 4, 8));
        let h = heloc_like(100, 1);
        assert_eq!(h, heloc_like(100, 1));
        assert_eq!(h.n_features(), 8);
        assert!(h.feature_index(RISK_ESTIMATE).is_some());
        assert!(TIME_BASED.iter().all(|n| h.feature_index(n).is_some()));
        let positives = h.targets().iter().filter(|&&t| t == 1).count();
        assert!(positives > 20 && positives < 80, "{positives}");
    }
}
