use anyhow::Context;
use clap::{Parser, Subcommand};
use fgash::runner::{
    initial_field, inspect_model, run_fga, run_reference, run_transition_curve, sample_init,
    write_fga_artifacts, write_transition_curve,
};
use fgash::{FgaError, ModelPotential, RunConfig};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Frozen Gaussian approximation with surface hopping: experiment runner.
///
/// Reference solutions are cached in the directory named by FGASH_CACHE_DIR.
#[derive(Parser)]
#[command(name = "fgash", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run FGA-SH ensembles and write errors, statistics, fields and traces.
    RunFga {
        config: PathBuf,
        /// Output directory.
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Solve the reference problem at t_final and write it on the output mesh.
    RunReference {
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Transition rate of FGA-SH and of the reference at the snapshot times.
    TransitionCurve {
        config: PathBuf,
        /// Comma-separated times; overrides snapshot_times.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Energy surfaces and couplings on a uniform x grid.
    InspectModel {
        model: String,
        #[arg(long, default_value_t = 1.0 / 16.0)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        coupling_scale: f64,
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        x_min: f64,
        #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
        x_max: f64,
        #[arg(long, default_value_t = 1001)]
        points: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Initial amplitude field on the phase-space mesh.
    SampleInit {
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(
                File::create(p).with_context(|| p.display().to_string())?,
            ))
        }
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::RunFga { config, out } => {
            let config = RunConfig::load(&config)?;
            let outcome = run_fga(&config)?;
            write_fga_artifacts(&config, &outcome, &out)?;
            if let Some(stats) = &outcome.stats {
                stats.write_csv(std::io::stdout())?;
            }
        }
        Command::RunReference { config, out } => {
            let config = RunConfig::load(&config)?;
            run_reference(&config)?.write_csv(sink(out.as_deref())?)?;
        }
        Command::TransitionCurve { config, times, out } => {
            let mut config = RunConfig::load(&config)?;
            if let Some(t) = times {
                config.snapshot_times = Some(t);
                config.validate()?;
            }
            write_transition_curve(sink(out.as_deref())?, &run_transition_curve(&config)?)?;
        }
        Command::InspectModel {
            model,
            delta,
            coupling_scale,
            x_min,
            x_max,
            points,
            out,
        } => {
            let model =
                ModelPotential::from_name(&model, delta)?.with_coupling_scale(coupling_scale);
            model.validate()?;
            if points < 2 || x_max.partial_cmp(&x_min) != Some(std::cmp::Ordering::Greater) {
                return Err(FgaError::InvalidConfig(
                    "need x_max > x_min and at least two points".into(),
                )
                .into());
            }
            let xs: Vec<f64> = (0..points)
                .map(|i| x_min + (x_max - x_min) * i as f64 / (points - 1) as f64)
                .collect();
            inspect_model(sink(out.as_deref())?, &model, &xs)?;
        }
        Command::SampleInit { config, out } => {
            let config = RunConfig::load(&config)?;
            sample_init(sink(out.as_deref())?, &initial_field(&config)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<FgaError>() {
                Some(f) if !f.is_config_error() && !matches!(f, FgaError::Io(_)) => {
                    ExitCode::from(3)
                }
                _ => ExitCode::from(2),
            }
        }
    }
}
