//! Counterfactual explanations for binary classifiers on numeric tabular
//! data.
//!
//! Each feature is discretized into bins fitted to a Gaussian, and a greedy
//! search moves unlocked features one bin at a time until the model's
//! predicted class flips or no legal, improving move remains. The
//! [`context`] module adds what the explanation view needs around it:
//! per-bin densities, z-scores and correctness labels.
//!
//! ```
//! use binflip::counterfactual::{generate_counterfactual, SearchConfig, SearchStatus};
//! use binflip::dataset::BinGrid;
//! use binflip::synthetic;
//!
//! let data = synthetic::sigmoid_toy();
//! let grid = BinGrid::from_dataset(&data, 10).unwrap();
//! let model = synthetic::sigmoid_toy_model();
//! let result = generate_counterfactual(&data.rows()[0], &model, &grid, &SearchConfig::default()).unwrap();
//! assert_eq!(result.status, SearchStatus::Flipped);
//! ```

pub mod batch;
pub mod context;
pub mod counterfactual;
pub mod dataset;
pub mod model;
pub mod par;
pub mod synthetic;

pub use counterfactual::{
    generate_counterfactual, CounterfactualResult, SearchConfig, SearchStatus,
};
pub use dataset::{BinGrid, Dataset, FeatureStats};
pub use model::{Class, CorrectnessLabel, LogisticModel, Predictor};
