use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spect_bayes::config::{Experiment, ExperimentConfig};
use spect_bayes::{experiments, par};

#[derive(Parser)]
#[command(name = "spect-bayes", version, about = "Parallel-beam SPECT reconstruction with posterior sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        experiment: Option<Experiment>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config, then print it with defaults filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(
    path: &Path,
    experiment: Option<Experiment>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> spect_bayes::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(e) = experiment {
        cfg.experiment = e;
    }
    if let Some(s) = seed {
        cfg.sampler.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn threads_from_env() -> Result<Option<usize>, String> {
    match std::env::var("SPECT_BAYES_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("SPECT_BAYES_THREADS must be a positive integer, got {v:?}")),
        },
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match threads_from_env() {
        Ok(Some(n)) => {
            if !par::init_global_threads(n) {
                eprintln!("warning: could not set worker count to {n}");
            }
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match cli.command {
        Command::Validate { config } => match load(&config, None, None, None) {
            Ok(cfg) => {
                println!("{}", serde_json::to_string_pretty(&cfg).expect("config serialises"));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Run {
            config,
            experiment,
            seed,
            out,
        } => {
            let cfg = match load(&config, experiment, seed, out) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            eprintln!(
                "running {} on {} with {} worker(s)",
                cfg.experiment,
                cfg.dims,
                par::current_num_threads()
            );
            match experiments::run(&cfg) {
                Ok(out) => {
                    for (step, r) in &out.reports {
                        println!(
                            "step {step} deg: relative_norm {:.6} mean_of_variances {:.6e} central_voxel_variance {:.6e} fwhm_voxels {}",
                            r.relative_norm,
                            r.mean_of_variances,
                            r.central_voxel_variance,
                            r.fwhm_voxels.map(|f| format!("{f:.4}")).unwrap_or_else(|| "n/a".into())
                        );
                    }
                    for row in &out.comparison {
                        println!(
                            "{}^3: map {:.6} mlem {:.6} ppr {:.6}",
                            row.size, row.map, row.mlem, row.ppr
                        );
                    }
                    println!(
                        "wrote {} artifacts to {}",
                        out.manifest.artifacts.len(),
                        out.output_dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
