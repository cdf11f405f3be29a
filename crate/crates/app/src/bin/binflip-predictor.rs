//! Reference predictor process for `--external-cmd`.
//!
//! Reads `{"id", "instances"}` lines on stdin and answers with
//! `{"id", "probabilities"}` lines. `--fault` makes it misbehave after
//! `--fault-after` correct answers, for exercising the client's error paths.

use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use binflip::model::{sigmoid, LogisticModel};
use clap::{Parser, ValueEnum};
use serde::Deserialize;
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Fault {
    /// Drop the last probability.
    Short,
    /// Reply with a line that is not JSON.
    Malformed,
    /// Reply with a probability above 1.
    OutOfRange,
    /// Reply with the wrong request id.
    WrongId,
    /// Never reply.
    Hang,
    /// Exit without replying.
    Exit,
}

#[derive(Debug, Parser)]
#[command(
    name = "binflip-predictor",
    version,
    about = "Line-delimited JSON predictor"
)]
struct Args {
    /// Serve a model JSON file written by `binflip train`.
    #[arg(long, conflicts_with = "constant")]
    model: Option<PathBuf>,
    /// Answer this probability for every instance.
    #[arg(long)]
    constant: Option<f64>,
    #[arg(long, value_enum)]
    fault: Option<Fault>,
    /// Correct replies to send before the fault kicks in.
    #[arg(long, default_value_t = 0)]
    fault_after: usize,
}

#[derive(Deserialize)]
struct Request {
    id: u64,
    instances: Vec<Vec<f64>>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let model = match &args.model {
        Some(path) => match LogisticModel::load(path) {
            Ok(m) => Some(m),
            Err(e) => {
                eprintln!("binflip-predictor: {}: {e}", path.display());
                return ExitCode::FAILURE;
            }
        },
        None => None,
    };
    let score = |x: &[f64]| match (&model, args.constant) {
        (Some(m), _) => m.probability(x),
        (None, Some(p)) => p,
        (None, None) => sigmoid(x.iter().sum()),
    };

    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    for (served, line) in stdin.lock().lines().enumerate() {
        let Ok(line) = line else { break };
        let request: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("binflip-predictor: bad request: {e}");
                return ExitCode::FAILURE;
            }
        };
        let id = request.id;
        let mut probabilities: Vec<f64> = request.instances.iter().map(|x| score(x)).collect();
        let fault = args.fault.filter(|_| served >= args.fault_after);
        let reply = match fault {
            None => json!({"id": id, "probabilities": probabilities}).to_string(),
            Some(Fault::Malformed) => "{\"id\": oops".to_string(),
            Some(Fault::Hang) => loop {
                std::thread::sleep(Duration::from_secs(3600));
            },
            Some(Fault::Exit) => return ExitCode::FAILURE,
            Some(Fault::Short) => {
                probabilities.pop();
                json!({"id": id, "probabilities": probabilities}).to_string()
            }
            Some(Fault::OutOfRange) => {
                if let Some(p) = probabilities.first_mut() {
                    *p = 1.5;
                }
                json!({"id": id, "probabilities": probabilities}).to_string()
            }
            Some(Fault::WrongId) => {
                json!({"id": id + 1, "probabilities": probabilities}).to_string()
            }
        };
        if writeln!(stdout, "{reply}")
            .and_then(|()| stdout.flush())
            .is_err()
        {
            break;
        }
    }
    ExitCode::SUCCESS
}
