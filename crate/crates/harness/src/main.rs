use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use tsb_harness::certify::{self, CertifyStatus};
use tsb_harness::figures::{self, Figure};
use tsb_harness::sweep::{self, Axis};
use tsb_harness::{run_experiment, ExperimentConfig, HarnessError};

/// Exit code for a configuration error.
const EXIT_CONFIG: u8 = 2;
/// Exit code when the certificate system is rank-deficient.
const EXIT_RANK_DEFICIENT: u8 = 3;

#[derive(Parser)]
#[command(name = "tsb", version, about = "Teacher-student ReLU recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory (overrides the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the data seed and every run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite an existing output directory.
    #[arg(long)]
    force: bool,
    /// Log every k-th iteration.
    #[arg(long, value_name = "K")]
    log_every: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every training spec of a config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Repeat a config along one axis, in parallel (TSB_THREADS caps workers).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// lambda, M, alpha or seed.
        #[arg(long)]
        axis: Axis,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        #[command(flatten)]
        common: Common,
    },
    /// Build the pre-certificate for a config's teacher and data.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        probes: Option<usize>,
        #[arg(long)]
        cap_radius: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    Fig1(FigArgs),
    Fig2(FigArgs),
    Fig3(FigArgs),
}

#[derive(Args)]
struct FigArgs {
    /// Start from this config instead of the built-in one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

fn load(path: &Path, common: &Common) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    apply(&mut cfg, common);
    Ok(cfg)
}

fn apply(cfg: &mut ExperimentConfig, common: &Common) {
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    if let Some(k) = common.log_every {
        cfg.override_log_every(k);
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Train { config, common } => {
            let cfg = load(&config, &common)?;
            let art = run_experiment(&cfg, common.force)?;
            for r in &art.runs {
                println!("{}: iterations={} alpha={:e} F={:e} J={:e} stray={:e}", r.label, r.iterations, r.alpha, r.final_f, r.final_j, r.recovery.stray_mass);
            }
            println!("wrote {} in {:.1}s", art.output.display(), art.wall_clock.as_secs_f64());
        }
        Command::Sweep { config, axis, values, common } => {
            let cfg = load(&config, &common)?;
            let values = sweep::parse_values(&values)?;
            let art = sweep::sweep(&cfg, axis, &values, common.force)?;
            let failed = art.rows.iter().filter(|r| r.result.is_err()).count();
            println!("wrote {} ({} rows, {failed} failed)", art.summary.display(), art.rows.len());
        }
        Command::Certify { config, probes, cap_radius, common } => {
            let mut cfg = load(&config, &common)?;
            if let Some(p) = probes {
                cfg.diagnostics.probes = p;
            }
            if let Some(c) = cap_radius {
                cfg.diagnostics.cap_radius = c;
            }
            let out = cfg.output.clone();
            let art = certify::certify(&cfg, &out, common.force)?;
            println!("wrote {}", art.report.display());
            if art.document.status == CertifyStatus::RankDeficient {
                eprintln!("X0 is rank-deficient: rank {} of {}", art.document.conditioning.rank, art.document.conditioning.dim);
                return Ok(ExitCode::from(EXIT_RANK_DEFICIENT));
            }
        }
        Command::Fig1(args) => figure(Figure::Fig1, args)?,
        Command::Fig2(args) => figure(Figure::Fig2, args)?,
        Command::Fig3(args) => figure(Figure::Fig3, args)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn figure(which: Figure, args: FigArgs) -> anyhow::Result<()> {
    let default_out = PathBuf::from(format!("out/{which:?}").to_lowercase());
    let cfg = match &args.config {
        Some(path) => load(path, &args.common)?,
        None => {
            let mut cfg = figures::figure_config(which, 0, &default_out);
            apply(&mut cfg, &args.common);
            cfg
        }
    };
    cfg.validate()?;
    let art = figures::reproduce_with(which, &cfg, args.common.force)?;
    for s in &art.summary.series {
        println!("{}: train_loss={:e} test_loss={:e} F={:e}", s.series, s.final_train_loss, s.final_test_loss, s.final_f);
    }
    if let Some(g) = &art.summary.fig3 {
        println!("max relative gap (train loss) {:e}, final F gap {:e}", g.max_relative_gap_train_loss, g.final_relative_gap_f);
    }
    println!("wrote {}", art.summary_path.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<HarnessError>() {
                Some(HarnessError::Config { .. }) => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
