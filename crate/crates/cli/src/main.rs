//! `proxemic`: batch driver for data generation, training, sampling,
//! fitting, evaluation and visualization export.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use proxemic::body::BodyModel;
use proxemic::config::{OutputVariant, RunConfig};
use proxemic::pipeline;

#[derive(Parser)]
#[command(name = "proxemic", version, about = "Learn and synthesize human-scene proximity with basis-point-set features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`section.key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed of the command's own section.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the synthetic dataset.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train the networks on a dataset's training split.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset file written by gen-data.
        #[arg(long)]
        data: PathBuf,
    },
    /// Sample bodies in a scene from a trained checkpoint.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        /// raw, simoptim or advoptim.
        #[arg(long)]
        variant: Option<OutputVariant>,
        /// `synth:SEED` or a mesh path with a `.sdf` grid next to it.
        #[arg(long)]
        scene: Option<String>,
    },
    /// Re-run the fit on the samples of a generate run.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Directory of a generate run.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        variant: Option<OutputVariant>,
    },
    /// Score a generate or optimize run.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Export one sample's scene BPS, colored by its body feature, and its
    /// body mesh as PLY.
    ExportViz {
        #[arg(long)]
        input: PathBuf,
        /// Sample id, e.g. sample_0003.
        #[arg(long)]
        sample: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the resolved configuration (defaults when no file is given).
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    if !path.is_file() {
        return Err(Failure::Usage(anyhow::anyhow!("config file {} not found", path.display())));
    }
    RunConfig::load(path).map_err(|e| Failure::Usage(e.into()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData { common } => {
            let mut cfg = load_config(&common.config)?;
            if let Some(s) = common.seed {
                cfg.dataset.seed = s;
            }
            let ds = pipeline::gen_data(&cfg, &common.out).context("gen-data")?;
            println!("{} samples -> {}", ds.samples.len(), common.out.join(pipeline::DATASET_FILE).display());
        }
        Command::Train { common, data } => {
            let mut cfg = load_config(&common.config)?;
            if let Some(s) = common.seed {
                cfg.train.seed = s;
            }
            let outcome = pipeline::train_model(&cfg, &data, &common.out).context("train")?;
            if let (Some(a), Some(b)) = (outcome.history.first(), outcome.history.last()) {
                println!("loss {:.5} -> {:.5} over {} epochs", a.terms.total, b.terms.total, outcome.history.len());
            }
        }
        Command::Generate {
            common,
            checkpoint,
            count,
            variant,
            scene,
        } => {
            let mut cfg = load_config(&common.config)?;
            if let Some(s) = common.seed {
                cfg.generate.seed = s;
            }
            if let Some(c) = count {
                cfg.generate.count = c;
            }
            if let Some(v) = variant {
                cfg.generate.variant = v;
            }
            if let Some(s) = scene {
                cfg.generate.scene = s;
            }
            let run = pipeline::generate(&cfg, &checkpoint, &common.out).context("generate")?;
            println!(
                "{} samples ({} skipped) -> {}",
                run.samples.len(),
                run.failures.len(),
                common.out.display()
            );
        }
        Command::Optimize { common, input, variant } => {
            let mut cfg = load_config(&common.config)?;
            if let Some(v) = variant {
                cfg.generate.variant = v;
            }
            let run = pipeline::optimize(&cfg, &input, &common.out).context("optimize")?;
            println!("{} samples refit -> {}", run.samples.len(), common.out.display());
        }
        Command::Eval { common, input } => {
            let mut cfg = load_config(&common.config)?;
            if let Some(s) = common.seed {
                cfg.eval.seed = s;
            }
            let report = pipeline::eval_run(&cfg, &input, &common.out).context("eval")?;
            println!("{}", report.summary_json());
        }
        Command::ExportViz { input, sample, out } => {
            let run = pipeline::GenerationRun::load(&input).context("export-viz")?;
            let s = pipeline::find_sample(&run, &sample)?;
            let (a, b) = pipeline::export_viz(s, &BodyModel::new(), &out)?;
            println!("{}\n{}", a.display(), b.display());
        }
        Command::Config { config } => {
            let cfg = match config {
                Some(p) => load_config(&p)?,
                None => RunConfig::default(),
            };
            print!("{}", cfg.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
