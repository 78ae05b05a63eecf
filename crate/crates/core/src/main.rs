//! `ministl` command-line interface.
//!
//! Exit status: 0 on success, 1 on invalid input (bad flags, config or model
//! names), 2 on runtime failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ministl::datagen::{container, Dataset, Split};
use ministl::harness::report::read_table;
use ministl::harness::train::EpochRecord;
use ministl::harness::{self, ExperimentConfig, Overrides};
use ministl::Error;

#[derive(Parser)]
#[command(name = "ministl", version, about = "Video prediction toolkit: data synthesis, training, evaluation and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (YAML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    device: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Root directory for run outputs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Validate the config and print the resolved plan without writing anything.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Materialize dataset splits into safetensors containers.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "both")]
        split: SplitArg,
    },
    /// Train the configured model (or the learning-rate × drop-path grid).
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to the run's best checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train or load every suite entry and evaluate it on clean and perturbed data.
    Bench {
        #[command(flatten)]
        common: Common,
    },
    /// Rewrite report.csv / report.md from a report.json table.
    Report {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<run dir>/report.json`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Failure> {
    let overrides = Overrides { seed: c.seed, device: c.device.clone(), epochs: c.epochs, out: c.out.clone() };
    let cfg = ExperimentConfig::load(&c.config).map_err(|e| match e {
        Error::Io { .. } => Failure::Validation(e.to_string()),
        e => e.into(),
    })?;
    Ok(cfg.resolve(&overrides, |k| std::env::var(k).ok())?)
}

fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn print_json<T: Serialize>(value: &T) {
    emit(&format!("{}\n", serde_json::to_string_pretty(value).expect("value serializes")));
}

fn progress(label: &str, e: &EpochRecord) {
    eprintln!(
        "[{label}] epoch {:>3}  train {:.6}  val mse/px {:.6}  ssim {:.4}  {:.1}s",
        e.epoch, e.train_loss, e.val.mse_pixel, e.val.ssim, e.seconds
    );
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::GenData { common, split } => gen_data(&common, split),
        Command::Train { common } => train(&common),
        Command::Eval { common, checkpoint } => eval(&common, checkpoint),
        Command::Bench { common } => bench(&common),
        Command::Report { common, input } => report(&common, input),
    }
}

fn gen_data(common: &Common, which: SplitArg) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let dir = cfg.run_dir().join("data");
    let splits: Vec<(Split, &str)> = [(Split::Train, "train"), (Split::Test, "test")]
        .into_iter()
        .filter(|(s, _)| match which {
            SplitArg::Both => true,
            SplitArg::Train => *s == Split::Train,
            SplitArg::Test => *s == Split::Test,
        })
        .collect();
    if common.dry_run {
        let plan: Vec<_> = splits
            .iter()
            .map(|&(s, name)| {
                serde_json::json!({
                    "split": name,
                    "path": dir.join(format!("{name}.safetensors")),
                    "dataset": cfg.data.dataset_spec(s, cfg.seed),
                })
            })
            .collect();
        print_json(&plan);
        return Ok(());
    }
    std::fs::create_dir_all(&dir).map_err(|e| Failure::from(Error::io(&dir, e)))?;
    for (s, name) in splits {
        let spec = cfg.data.dataset_spec(s, cfg.seed);
        let path = dir.join(format!("{name}.safetensors"));
        let split = Dataset::build(spec)?.materialize()?;
        let hash = container::save(&path, &split)?;
        emit(&format!("{}  {}  ({} clips)\n", hash, path.display(), split.len()));
    }
    Ok(())
}

fn train(common: &Common) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    if common.dry_run {
        let runs = if cfg.train.grid { harness::config::LR_GRID.len() * harness::config::DROP_PATH_GRID.len() } else { 1 };
        print_json(&serde_json::json!({
            "run_dir": cfg.run_dir(),
            "config_hash": cfg.hash(),
            "runs": runs,
            "model": cfg.model_config()?,
            "config": cfg,
        }));
        return Ok(());
    }
    let outcome = harness::train(&cfg, &mut progress)?;
    print_json(outcome.best_run());
    Ok(())
}

fn eval(common: &Common, checkpoint: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let path = checkpoint.unwrap_or_else(|| cfg.run_dir().join("checkpoints").join("best.safetensors"));
    if common.dry_run {
        print_json(&serde_json::json!({
            "checkpoint": path,
            "dataset": cfg.data.dataset_spec(Split::Test, cfg.seed),
            "perturbation": cfg.perturbation,
            "fps": (!cfg.bench.skip_fps).then(|| &cfg.bench.fps),
        }));
        return Ok(());
    }
    let report = harness::evaluate_checkpoint(&cfg, &path)?;
    print_json(&report);
    Ok(())
}

fn bench(common: &Common) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    if common.dry_run {
        let conditions: Vec<&str> =
            std::iter::once("clean").chain(cfg.bench.perturbations.iter().map(|k| k.as_str())).collect();
        print_json(&serde_json::json!({
            "run_dir": cfg.run_dir(),
            "suite": cfg.suite(),
            "conditions": conditions,
            "epochs": cfg.train.epochs,
        }));
        return Ok(());
    }
    let outcome = harness::benchmark(&cfg, &mut progress)?;
    let written = harness::write_report(&outcome.run_dir, &outcome.table, &outcome.strips)?;
    emit(&outcome.table.to_markdown());
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    if outcome.table.any_failed() {
        return Err(Failure::Runtime("one or more benchmark rows failed".into()));
    }
    Ok(())
}

fn report(common: &Common, input: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let input = input.unwrap_or_else(|| cfg.run_dir().join("report.json"));
    let dir = input.parent().map(Path::to_path_buf).unwrap_or_default();
    if common.dry_run {
        print_json(&serde_json::json!({ "input": input, "output_dir": dir }));
        return Ok(());
    }
    let table = read_table(&input)?;
    harness::write_report(&dir, &table, &[])?;
    emit(&table.to_markdown());
    Ok(())
}
