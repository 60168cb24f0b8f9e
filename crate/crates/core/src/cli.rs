//! Command-line front end.
//!
//! Exit codes: 0 success, 2 bad input or format, 3 training failure,
//! 4 checkpoint or inventory problem. Data goes to stdout, logs to stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, CheckpointError};
use crate::config::{ConfigError, HparamSpace, TrainConfig};
use crate::corpus::{
    generate_synthetic, load_dataset, save_dataset, CorpusError, Dataset, NoiseParams,
};
use crate::evaluator::{accuracy, error_report, fold_average, ReportOptions};
use crate::model::ModelError;
use crate::preprocess::{PreprocessConfig, PreprocessError, Preprocessor};
use crate::search::random_search;
use crate::trainer::{toy_encoder, train_fold, TrainError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_TRAIN: i32 = 3;
pub const EXIT_CHECKPOINT: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "conceptnorm",
    version,
    about = "Medical concept normalization with a cosine-similarity head"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fill the processed_text column of a dataset.
    Preprocess(PreprocessArgs),
    /// Write a synthetic dataset.
    Generate(GenerateArgs),
    /// Train one model per fold.
    Train(TrainArgs),
    /// Random hyperparameter search on one fold; writes the best config.
    Search(SearchArgs),
    /// Per-fold and fold-averaged test accuracy plus an error report.
    Evaluate(EvaluateArgs),
    /// Top-k concepts for each input line.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Extra lexicon files (surface TAB expansion); may be repeated.
    #[arg(long = "lexicon")]
    pub lexicons: Vec<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub concepts: usize,
    #[arg(long, default_value_t = 200)]
    pub mentions: usize,
    /// Probability applied to every noise type.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for fold_<k>.ckpt and fold_<k>.report.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Only the first N folds.
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Search space file.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Where to write the best config.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the space's search_seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fold to search on.
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// A directory of fold_<k>.ckpt files, or a single checkpoint used for every fold.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for report.txt and errors.tsv; defaults to the checkpoint directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// A single mention; otherwise lines are read from --input or stdin.
    #[arg(long, conflicts_with = "input")]
    pub text: Option<String>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub topk: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Corpus(_)
            | CliError::Preprocess(_)
            | CliError::Config(_)
            | CliError::Input(_)
            | CliError::Io { .. }
            | CliError::Train(
                TrainError::Config(_) | TrainError::Corpus(_) | TrainError::UnknownConcept(_),
            ) => EXIT_INPUT,
            CliError::Train(_) => EXIT_TRAIN,
            CliError::Checkpoint(_) | CliError::Model(_) => EXIT_CHECKPOINT,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match execute(cli.command, &mut out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command, writing data output to `out`.
pub fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Preprocess(a) => run_preprocess(a),
        Command::Generate(a) => run_generate(a),
        Command::Train(a) => run_train(a),
        Command::Search(a) => run_search(a, out),
        Command::Evaluate(a) => run_evaluate(a, out),
        Command::Predict(a) => run_predict(a, out),
    }
}

fn preprocessor(extra: &[PathBuf]) -> Result<Preprocessor, CliError> {
    Ok(Preprocessor::new(PreprocessConfig {
        lexicon_paths: extra.to_vec(),
        ..PreprocessConfig::default()
    })?)
}

fn run_preprocess(a: PreprocessArgs) -> Result<(), CliError> {
    let mut ds = load_dataset(&a.data)?;
    ds.preprocess(&preprocessor(&a.lexicons)?);
    save_dataset(&a.out, &ds)?;
    eprintln!(
        "preprocessed {} records into {}",
        ds.folds.records().count(),
        a.out.display()
    );
    Ok(())
}

fn run_generate(a: GenerateArgs) -> Result<(), CliError> {
    let ds = generate_synthetic(a.concepts, a.mentions, NoiseParams::level(a.noise), a.seed)?;
    save_dataset(&a.out, &ds)?;
    eprintln!(
        "wrote {} concepts, {} mentions to {}",
        a.concepts,
        a.mentions,
        a.out.display()
    );
    Ok(())
}

/// Loads a dataset, preprocessing it with the default pipeline unless it
/// already carries processed text.
fn load_ready(path: &Path) -> Result<Dataset, CliError> {
    let mut ds = load_dataset(path)?;
    if !ds.folds.is_preprocessed() {
        ds.preprocess(&Preprocessor::default());
    }
    Ok(ds)
}

fn fold_count(ds: &Dataset, limit: Option<usize>) -> Result<usize, CliError> {
    let n = ds.folds.folds.len();
    match limit {
        Some(0) => Err(CliError::Input("--folds must be at least 1".into())),
        Some(k) if k > n => Err(CliError::Input(format!(
            "--folds {k} but the dataset has {n} folds"
        ))),
        Some(k) => Ok(k),
        None => Ok(n),
    }
}

fn run_train(a: TrainArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::parse(&read_text(p)?)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let ds = load_ready(&a.data)?;
    let n_folds = fold_count(&ds, a.folds)?;
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    for k in 0..n_folds {
        let train = &ds.folds.folds[k].train;
        let encoder = toy_encoder(train, &cfg)?;
        let result = train_fold(train, k, &cfg, encoder, &ds.inventory);
        let report_path = a.out.join(format!("fold_{k}.report.json"));
        let (model, report) = match result {
            Ok(r) => r,
            Err(TrainError::Diverged { epoch, report }) => {
                write_file(&report_path, report.to_json().as_bytes())?;
                return Err(TrainError::Diverged { epoch, report }.into());
            }
            Err(e) => return Err(e.into()),
        };
        save_checkpoint(&model, &a.out.join(format!("fold_{k}.ckpt")))?;
        write_file(&report_path, report.to_json().as_bytes())?;
        eprintln!(
            "fold {k}: {} epochs, best epoch {} val accuracy {:.4} ({:.1}s)",
            report.epochs.len(),
            report.best_epoch,
            report.best_val_accuracy,
            report.wall_time.as_secs_f64()
        );
    }
    Ok(())
}

fn run_search(a: SearchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut space = HparamSpace::parse(&read_text(&a.config)?)?;
    if let Some(seed) = a.seed {
        space.search_seed = seed;
    }
    let ds = load_ready(&a.data)?;
    let fold = ds
        .folds
        .folds
        .get(a.fold)
        .ok_or_else(|| CliError::Input(format!("dataset has no fold {}", a.fold)))?;
    let outcome = random_search(&space, &fold.train, a.fold, toy_encoder, &ds.inventory)?;
    out.write_all(outcome.to_tsv().as_bytes())
        .map_err(io_err(Path::new("<stdout>")))?;
    let best = outcome.best().ok_or_else(|| {
        let first = outcome
            .trials
            .first()
            .and_then(|t| t.outcome.as_ref().err())
            .map(|e| e.to_string())
            .unwrap_or_default();
        CliError::Train(TrainError::AllTrialsFailed {
            n_trials: outcome.trials.len(),
            first,
        })
    })?;
    write_file(&a.out, best.to_config_string().as_bytes())?;
    eprintln!("best config written to {}", a.out.display());
    Ok(())
}

fn run_evaluate(a: EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ds = load_ready(&a.data)?;
    let n_folds = fold_count(&ds, a.folds)?;
    let single = a.checkpoint.is_file();
    let report_dir = match &a.out {
        Some(d) => d.clone(),
        None if single => a
            .checkpoint
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default(),
        None => a.checkpoint.clone(),
    };
    let mut results = Vec::new();
    let mut text = String::new();
    let mut tsv = String::from("fold\tmention\tgold\tpredicted\tbucket\trivals\n");
    let mut lines = String::new();
    for k in 0..n_folds {
        let path = if single {
            a.checkpoint.clone()
        } else {
            a.checkpoint.join(format!("fold_{k}.ckpt"))
        };
        let model = load_checkpoint_for(&path, &ds.inventory)?;
        let fold = &ds.folds.folds[k];
        let result = accuracy(model.outcomes(&fold.test)?)
            .map_err(|_| CliError::Input(format!("fold {k} has no test mentions")))?;
        let report = error_report(
            &result.outcomes,
            &fold.train,
            &ds.inventory,
            model.encoder.vocab(),
            ReportOptions::default(),
        );
        let _ = writeln!(lines, "fold_{k}\t{:.4}", result.accuracy);
        let _ = writeln!(
            text,
            "# fold_{k}: accuracy {:.4} ({} / {})",
            result.accuracy, result.n_correct, result.n_total
        );
        text.push_str(&report.to_text(&ds.inventory));
        text.push('\n');
        for line in report.to_tsv(&ds.inventory).lines() {
            let _ = writeln!(tsv, "{k}\t{line}");
        }
        results.push(result);
    }
    let mean = fold_average(&results).expect("at least one fold");
    let _ = writeln!(lines, "mean\t{mean:.4}");
    out.write_all(lines.as_bytes())
        .map_err(io_err(Path::new("<stdout>")))?;
    fs::create_dir_all(&report_dir).map_err(io_err(&report_dir))?;
    write_file(&report_dir.join("report.txt"), text.as_bytes())?;
    write_file(&report_dir.join("errors.tsv"), tsv.as_bytes())?;
    Ok(())
}

fn run_predict(a: PredictArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_checkpoint(&a.checkpoint)?;
    let inputs: Vec<String> = match (&a.text, &a.input) {
        (Some(t), _) => vec![t.clone()],
        (None, Some(p)) => read_text(p)?.lines().map(str::to_string).collect(),
        (None, None) => io::stdin()
            .lock()
            .lines()
            .collect::<Result<_, _>>()
            .map_err(io_err(Path::new("<stdin>")))?,
    };
    let pre = Preprocessor::default();
    let mut buf = String::from("line\tmention\trank\tconcept_id\tterm\tsimilarity\n");
    for (i, raw) in inputs.iter().enumerate() {
        let ranked = model.top_k(&pre.apply(raw), a.topk)?;
        for (r, c) in ranked.iter().enumerate() {
            let _ = writeln!(
                buf,
                "{}\t{}\t{}\t{}\t{}\t{:.6}",
                i + 1,
                raw.replace('\t', " "),
                r + 1,
                model.inventory.id(c.index),
                model.inventory.term(c.index).unwrap_or(""),
                c.similarity
            );
        }
    }
    out.write_all(buf.as_bytes())
        .map_err(io_err(Path::new("<stdout>")))
}
