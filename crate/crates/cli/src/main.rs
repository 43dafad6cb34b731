use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use udc_cli::pipeline::{self, SplitName, CHECKPOINT};
use udc_cli::{Result, RunConfig};
use udc_triage::ServeConfig;

/// Train a CNN text classifier, score its uncertainty and hand the most
/// uncertain predictions to reviewers.
///
/// Settings come from built-in defaults, then the `--config` file, then
/// flags; later sources win.
#[derive(Debug, Parser)]
#[command(name = "udc", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `out` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model (or a margin/λ sweep) and write the checkpoint.
    Train,
    /// Score a split with every configured scorer.
    Score {
        /// Defaults to `<out>/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// train, valid or test; defaults to `scoring.split`.
        #[arg(long)]
        split: Option<String>,
    },
    /// Deferral report over one or more score files.
    Evaluate {
        #[arg(required = true)]
        scores: Vec<PathBuf>,
    },
    /// Write deterministic features of a split as CSV.
    ExportFeatures {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Write the review queue: the most uncertain fraction of a score file.
    TriageExport {
        #[arg(long)]
        scores: PathBuf,
        /// Defaults to `triage.top_ratio`.
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Serve a review queue over HTTP.
    Serve {
        /// Defaults to `<out>/triage_queue.jsonl`.
        #[arg(long)]
        queue: Option<PathBuf>,
        /// Defaults to `<out>/labels.jsonl`.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Defaults to `triage.addr`.
        #[arg(long)]
        addr: Option<String>,
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config(&cli)?;
    let checkpoint = |c: &Option<PathBuf>| c.clone().unwrap_or_else(|| cfg.out.join(CHECKPOINT));
    match &cli.command {
        Command::Train => {
            for s in pipeline::cmd_train(&cfg)? {
                println!(
                    "{}: best epoch {} of {}, validation micro-F1 {:.4}",
                    s.out.display(),
                    s.best_epoch,
                    s.epochs_run,
                    s.valid_micro_f1
                );
            }
        }
        Command::Score { checkpoint: c, split } => {
            let which: SplitName = split.as_deref().unwrap_or(&cfg.scoring.split).parse()?;
            for path in pipeline::cmd_score(&cfg, &checkpoint(c), which)? {
                println!("{}", path.display());
            }
        }
        Command::Evaluate { scores } => {
            let report = pipeline::cmd_evaluate(&cfg, scores)?;
            print!("{}", report.to_table());
            println!("{}", cfg.out.join(pipeline::REPORT).display());
        }
        Command::ExportFeatures { checkpoint: c, split } => {
            let (path, stats) = pipeline::cmd_export_features(&cfg, &checkpoint(c), split.parse()?)?;
            println!("{}", path.display());
            println!(
                "distance statistics: mean intra {:.6}, mean inter {:.6}, ratio {:.6}",
                stats.mean_intra, stats.mean_inter, stats.ratio
            );
        }
        Command::TriageExport { scores, ratio } => {
            let (path, n) = pipeline::cmd_triage_export(&cfg, scores, ratio.unwrap_or(cfg.triage.top_ratio))?;
            println!("{} ({n} items)", path.display());
        }
        Command::Serve {
            queue,
            labels,
            addr,
            ui_dir,
        } => {
            let ui = ui_dir
                .clone()
                .or_else(|| (!cfg.triage.ui_dir.is_empty()).then(|| PathBuf::from(&cfg.triage.ui_dir)));
            let serve = ServeConfig {
                queue: queue.clone().unwrap_or_else(|| cfg.out.join(pipeline::QUEUE)),
                labels: labels.clone().unwrap_or_else(|| cfg.out.join("labels.jsonl")),
                addr: addr.clone().unwrap_or_else(|| cfg.triage.addr.clone()),
                ui_dir: ui,
            };
            let runtime = tokio::runtime::Runtime::new().map_err(|e| udc_core::Error::io("<runtime>", e))?;
            runtime.block_on(udc_triage::serve(serve))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
