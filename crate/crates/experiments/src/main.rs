use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use dbprop_experiments::gradcheck::gradcheck;
use dbprop_experiments::opcount::opcount_report;
use dbprop_experiments::sine::train_to_target;
use dbprop_experiments::sweep::{
    auto_weight, landscape_input_sweep, landscape_param_sweep, ParamId, ParamSweepOptions, PenaltyKind,
};
use dbprop_experiments::{ExperimentConfig, TrainedModel};

#[derive(Parser)]
#[command(name = "dbprop", version, about = "Double-backpropagation toy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit 1→8→5→1 ReLU network to sin on [−π, π] and write a checkpoint
    TrainSine {
        /// Experiment config JSON; defaults are used for missing fields
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Output, input slope and classical penalty over a grid of inputs
    SweepInput {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = -3.14159, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, default_value_t = 3.14159, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 2001)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Penalty and its derivative while one layer parameter is varied
    SweepParam {
        #[arg(long)]
        ckpt: PathBuf,
        /// `layerJ.w[r][c]`, `layerJ.b[r]` (0-based r, c), or `auto` for the
        /// first layer-2 weight whose sweep crosses a kink
        #[arg(long, default_value = "auto")]
        param: String,
        /// `node` or `cdb`
        #[arg(long, default_value = "node")]
        penalty: String,
        /// 0 for the single pinned sample, M for an M-sample average
        #[arg(long, default_value_t = 0)]
        batch: usize,
        /// Seed for drawing the batch
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, allow_hyphen_values = true)]
        from: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        to: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measured vs closed-form operation counts as JSON
    OpcountReport {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic penalty gradients against finite differences
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_model(path: &Path) -> Result<TrainedModel> {
    let s = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TrainedModel::from_json(&s).with_context(|| format!("parsing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::TrainSine { config, seed, out } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::from_json(
                    &fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                )?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let model = train_to_target(&cfg)?;
            fs::write(&out, model.to_json()).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("train mse {:.6} after {} epochs", model.train_mse, model.epochs_run);
            Ok(true)
        }
        Command::SweepInput {
            ckpt,
            from,
            to,
            points,
            out,
        } => {
            let sweep = landscape_input_sweep(&load_model(&ckpt)?, from, to, points)?;
            sweep.write_csv(create(&out)?)?;
            Ok(true)
        }
        Command::SweepParam {
            ckpt,
            param,
            penalty,
            batch,
            seed,
            from,
            to,
            points,
            out,
        } => {
            let model = load_model(&ckpt)?;
            let param: ParamId = if param == "auto" {
                auto_weight(&model)?
            } else {
                param.parse()?
            };
            let opts = ParamSweepOptions {
                param,
                penalty: penalty.parse::<PenaltyKind>()?,
                batch,
                seed,
                from,
                to,
                points,
            };
            let sweep = landscape_param_sweep(&model, &opts)?;
            sweep.write_csv(create(&out)?)?;
            eprintln!("swept {param}");
            Ok(true)
        }
        Command::OpcountReport { out } => {
            let report = opcount_report()?;
            emit(out.as_deref(), &report.to_json())?;
            for r in report.rows.iter().filter(|r| !r.exact_match) {
                eprintln!(
                    "mismatch: {:?} L={} C={}: measured {} vs {} = {}",
                    r.variant, r.l, r.c, r.measured, r.formula, r.expected
                );
            }
            Ok(report.all_match)
        }
        Command::Gradcheck { seed, out } => {
            let report = gradcheck(seed)?;
            emit(out.as_deref(), &report.to_json())?;
            Ok(report.all_pass)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
