#![allow(dead_code)]

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use binflip::dataset::Dataset;
use binflip::model::{LogisticModel, TrainConfig};
use binflip::synthetic;
use binflip_app::session::{Session, SessionOptions};
use tempfile::TempDir;

pub const BINFLIP: &str = env!("CARGO_BIN_EXE_binflip");
pub const PREDICTOR: &str = env!("CARGO_BIN_EXE_binflip-predictor");

/// A dataset CSV and a model file in a temporary directory.
pub struct Fixture {
    pub dir: TempDir,
    pub data: PathBuf,
    pub model: PathBuf,
}

impl Fixture {
    pub fn new(dataset: &Dataset, model: &LogisticModel) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data.csv");
        let path = dir.path().join("model.json");
        dataset.write_csv(File::create(&data).unwrap()).unwrap();
        model.save(&path).unwrap();
        Self {
            dir,
            data,
            model: path,
        }
    }

    pub fn sigmoid_toy() -> Self {
        Self::new(&synthetic::sigmoid_toy(), &synthetic::sigmoid_toy_model())
    }

    pub fn heloc(n_rows: usize, seed: u64) -> Self {
        let ds = synthetic::heloc_like(n_rows, seed);
        let model = LogisticModel::train(&ds, &TrainConfig::default()).unwrap();
        Self::new(&ds, &model)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

pub fn binflip(args: &[&str]) -> Output {
    Command::new(BINFLIP).args(args).output().unwrap()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn toy_session(options: SessionOptions) -> Session {
    Session::new(
        synthetic::sigmoid_toy(),
        Arc::new(synthetic::sigmoid_toy_model()),
        options,
    )
    .unwrap()
}

pub fn heloc_session(n_rows: usize, seed: u64, initial_locks: &[&str]) -> Session {
    let ds = synthetic::heloc_like(n_rows, seed);
    let model = LogisticModel::train(&ds, &TrainConfig::default()).unwrap();
    let options = SessionOptions {
        initial_locks: initial_locks.iter().map(|s| s.to_string()).collect(),
        ..SessionOptions::default()
    };
    Session::new(ds, Arc::new(model), options).unwrap()
}
