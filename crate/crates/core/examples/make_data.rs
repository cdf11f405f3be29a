//! Writes the bundled synthetic datasets and the toy model into a directory.
//!
//! `cargo run -p binflip-core --example make_data -- data`

use std::fs::{self, File};
use std::path::PathBuf;

use binflip::synthetic;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    fs::create_dir_all(&dir)?;
    synthetic::sigmoid_toy().write_csv(File::create(dir.join("sigmoid_toy.csv"))?)?;
    synthetic::sigmoid_toy_model().save(dir.join("sigmoid_toy_model.json"))?;
    synthetic::separable_toy().write_csv(File::create(dir.join("separable_toy.csv"))?)?;
    synthetic::heloc_like(2000, 7).write_csv(File::create(dir.join("heloc_synthetic.csv"))?)?;
    Ok(())
}
