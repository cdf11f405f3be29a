//! `binflip` command line: train, explain, batch and serve.

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use binflip::batch::{explain_rows, BatchReport};
use binflip::counterfactual::CounterfactualResult;
use binflip::dataset::{Dataset, DEFAULT_BINS};
use binflip::model::{
    predict_class, ExternalPredictor, LogisticModel, Predictor, TrainConfig, TrainError,
    WeightInit, DEFAULT_TIMEOUT_MS,
};
use binflip::SearchStatus;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::service::{self, ExplainResponse, DEFAULT_PORT};
use crate::session::{Session, SessionError, SessionOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_NOT_FLIPPED: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "binflip",
    version,
    about = "Counterfactual explanations by greedy bin moves"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a logistic regression model and write it as JSON.
    Train(TrainArgs),
    /// Explain one instance.
    Explain(ExplainArgs),
    /// Explain every row and write a coverage report.
    Batch(BatchArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Binary target column; defaults to the last column.
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ModelArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Predictor process speaking line-delimited JSON; split on whitespace.
    #[arg(long)]
    pub external_cmd: Option<String>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Features that may not change, comma-separated header names.
    #[arg(long = "lock", value_delimiter = ',')]
    pub locks: Vec<String>,
    /// Maximum number of changed features.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub w: Option<u64>,
    /// Maximum bin displacement per feature.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub l: Option<u64>,
    /// Number of bins per feature.
    #[arg(long, default_value_t = DEFAULT_BINS, value_parser = parse_bins)]
    pub bins: usize,
    /// Per-call timeout for an external predictor.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
    pub timeout_ms: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = TrainConfig::default().l2_penalty)]
    pub l2: f64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    pub seed: u64,
    /// Start from Normal(0, scale) weights drawn from the seed instead of zeros.
    #[arg(long)]
    pub init_scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Args)]
#[group(id = "instance", required = true, multiple = false, args = ["index", "values"])]
pub struct ExplainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Row of the dataset to explain.
    #[arg(long)]
    pub index: Option<usize>,
    /// Explicit feature values, comma-separated, in header order.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub values: Option<Vec<f64>>,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Report file.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_PORT, value_parser = clap::value_parser!(u16).range(1..))]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Features locked until a request says otherwise, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub initial_locks: Vec<String>,
    /// Static UI assets served at `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Hide ground truth: correctness is UNKNOWN and only condition=all is served.
    #[arg(long)]
    pub hide_targets: bool,
    #[arg(long, default_value_t = DEFAULT_BINS, value_parser = parse_bins)]
    pub bins: usize,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub w: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub l: u64,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
    pub timeout_ms: u64,
}

fn parse_bins(raw: &str) -> Result<usize, String> {
    let n: usize = raw.parse().map_err(|e| format!("{e}"))?;
    if n < 3 {
        return Err("at least 3 bins are required".into());
    }
    Ok(n)
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn runtime(message: impl ToString) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: message.to_string(),
        }
    }

    fn usage(message: impl ToString) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::UnknownFeature(_) | SessionError::InvalidLimits => Failure::usage(e),
            _ => Failure::runtime(e),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    let outcome = match cli.command {
        Command::Train(a) => train(&a, stdout),
        Command::Explain(a) => explain(&a, stdout),
        Command::Batch(a) => batch(&a, stdout),
        Command::Serve(a) => serve(a, stderr),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn load_dataset(args: &DataArgs) -> Result<Dataset, Failure> {
    Dataset::from_path(&args.data, args.target.as_deref())
        .map_err(|e| Failure::runtime(format!("{}: {e}", args.data.display())))
}

fn load_model(
    args: &ModelArgs,
    dataset: &Dataset,
    timeout_ms: u64,
) -> Result<Arc<dyn Predictor>, Failure> {
    if let Some(path) = &args.model {
        let model = LogisticModel::load(path)
            .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
        Session::check_names(dataset, &model.feature_names)?;
        return Ok(Arc::new(model));
    }
    let command = args.external_cmd.as_deref().unwrap_or_default();
    let parts: Vec<&str> = command.split_whitespace().collect();
    if parts.is_empty() {
        return Err(Failure::usage("--external-cmd is empty"));
    }
    let predictor = ExternalPredictor::spawn(&parts, Duration::from_millis(timeout_ms))
        .map_err(Failure::runtime)?
        .with_width(dataset.n_features());
    Ok(Arc::new(predictor))
}

fn session_for(
    data: &DataArgs,
    model: &ModelArgs,
    search: &SearchArgs,
) -> Result<Session, Failure> {
    let dataset = load_dataset(data)?;
    let model = load_model(model, &dataset, search.timeout_ms)?;
    let defaults = SessionOptions::default();
    let options = SessionOptions {
        n_bins: search.bins,
        max_changed_features: search
            .w
            .map_or(defaults.max_changed_features, |w| w as usize),
        max_bin_distance: search.l.map_or(defaults.max_bin_distance, |l| l as usize),
        initial_locks: search.locks.clone(),
        expose_targets: true,
    };
    Ok(Session::new(dataset, model, options)?)
}

fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let dataset = load_dataset(&args.data)?;
    let config = TrainConfig {
        l2_penalty: args.l2,
        epochs: args.epochs,
        learning_rate: args.lr,
        seed: args.seed,
        init: args
            .init_scale
            .map_or(WeightInit::Zeros, |scale| WeightInit::Random { scale }),
    };
    let model = match LogisticModel::train(&dataset, &config) {
        Ok(m) => m,
        Err(e @ TrainError::Diverged { .. }) => {
            return Err(Failure {
                code: EXIT_DIVERGED,
                message: e.to_string(),
            })
        }
        Err(e) => return Err(Failure::usage(e)),
    };
    model
        .save(&args.out)
        .map_err(|e| Failure::runtime(format!("{}: {e}", args.out.display())))?;
    if let Some(m) = model.train_metrics {
        writeln!(out, "accuracy: {:.4}", m.accuracy).map_err(Failure::runtime)?;
        writeln!(
            out,
            "TP: {}  FP: {}  TN: {}  FN: {}",
            m.tp, m.fp, m.tn, m.fn_
        )
        .map_err(Failure::runtime)?;
    }
    writeln!(out, "model written to {}", args.out.display()).map_err(Failure::runtime)?;
    Ok(EXIT_OK)
}

/// Fixed-point with six decimals, trailing zeros removed.
pub fn format_number(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

/// Human-readable explanation, one line per change.
pub fn render_text(names: &[String], result: &CounterfactualResult) -> String {
    let mut text = format!(
        "original probability: {} ({})\nstatus: {}\nfinal probability: {} ({})\n",
        format_number(result.original_probability),
        result.direction,
        result.status,
        format_number(result.final_probability),
        predict_class(result.final_probability),
    );
    for c in &result.changes {
        text.push_str(&format!(
            "{}: {} → {} (bin {} → {})\n",
            names[c.feature],
            format_number(c.from_value),
            format_number(c.to_value),
            c.from_bin,
            c.to_bin
        ));
    }
    text
}

fn exit_for(status: SearchStatus) -> i32 {
    if status == SearchStatus::Flipped {
        EXIT_OK
    } else {
        EXIT_NOT_FLIPPED
    }
}

fn explain(args: &ExplainArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let session = session_for(&args.data, &args.model, &args.search)?;
    let (index, values) = match (&args.index, &args.values) {
        (Some(i), _) => {
            let row = session.dataset().row(*i).ok_or_else(|| {
                Failure::runtime(format!(
                    "row {i} is out of range for {} rows",
                    session.dataset().n_rows()
                ))
            })?;
            (*i as i64, row.to_vec())
        }
        (None, Some(v)) => (-1, v.clone()),
        (None, None) => return Err(Failure::usage("one of --index or --values is required")),
    };
    let config = session.search_config(session.initial_locks().clone(), None, None);
    let result = session
        .explain(&values, &config)
        .map_err(Failure::runtime)?;
    let rendered = match args.format {
        Format::Text => render_text(session.feature_names(), &result),
        Format::Json => {
            let response = ExplainResponse::new(
                session.feature_names(),
                index,
                &result,
                session.lock_names(&config.locks),
                config.max_changed_features,
                config.max_bin_distance,
            );
            let mut s = serde_json::to_string(&response).map_err(Failure::runtime)?;
            s.push('\n');
            s
        }
    };
    out.write_all(rendered.as_bytes())
        .map_err(Failure::runtime)?;
    Ok(exit_for(result.status))
}

fn batch(args: &BatchArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let session = session_for(&args.data, &args.model, &args.search)?;
    let config = session.search_config(session.initial_locks().clone(), None, None);
    let results = explain_rows(
        session.dataset().rows(),
        session.model(),
        session.grid(),
        &config,
    )
    .into_iter()
    .enumerate()
    .map(|(i, r)| r.map_err(|e| Failure::runtime(format!("row {i}: {e}"))))
    .collect::<Result<Vec<_>, _>>()?;
    let report = BatchReport::from_results(&results);
    let mut json = serde_json::to_string_pretty(&report).map_err(Failure::runtime)?;
    json.push('\n');
    std::fs::write(&args.out, json)
        .map_err(|e| Failure::runtime(format!("{}: {e}", args.out.display())))?;
    writeln!(
        out,
        "{} rows, flipped rate {}, report written to {}",
        report.n_rows,
        format_number(report.flipped_rate),
        args.out.display()
    )
    .map_err(Failure::runtime)?;
    Ok(EXIT_OK)
}

fn serve(args: ServeArgs, err: &mut dyn Write) -> Result<i32, Failure> {
    let dataset = load_dataset(&args.data)?;
    let model = load_model(&args.model, &dataset, args.timeout_ms)?;
    let options = SessionOptions {
        n_bins: args.bins,
        max_changed_features: args.w as usize,
        max_bin_distance: args.l as usize,
        initial_locks: args.initial_locks.clone(),
        expose_targets: !args.hide_targets,
    };
    let session = Arc::new(Session::new(dataset, model, options)?);
    let addr = SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(Failure::runtime)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::runtime(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(Failure::runtime)?;
        writeln!(err, "listening on http://{local}").map_err(Failure::runtime)?;
        err.flush().map_err(Failure::runtime)?;
        service::serve_on(listener, session, args.ui_dir)
            .await
            .map_err(Failure::runtime)
    })?;
    Ok(EXIT_OK)
}
