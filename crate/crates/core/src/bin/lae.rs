use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lae_core::error::Error;
use lae_core::harness::{
    resolve_out_dir, run_bounds, run_checkgrad, run_sweep, run_surface, run_train_with_plot,
    ExperimentConfig,
};

/// Linear autoencoders that learn ordered, axis-aligned principal
/// components: training runs, learning-rate sweeps, loss-surface slices,
/// conditioning bounds, and gradient checks.
#[derive(Parser)]
#[command(name = "lae", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory (overrides the LAE_OUT_DIR env var and the
    /// config's `[output]` section).
    #[arg(long)]
    out_dir: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its trace CSV plus a run record JSON.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Override the `[run]` seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the `[run]` alpha.
        #[arg(long)]
        alpha: Option<f64>,
        /// Override the `[run]` epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Record measured wall time in the trace (breaks byte-for-byte
        /// reproducibility of the artifact).
        #[arg(long)]
        timing: bool,
        /// Also render the alignment/subspace curves as an SVG line plot.
        #[arg(long)]
        plot: bool,
    },
    /// Cross-product sweep over schemes, optimizers, latent sizes, and a
    /// learning-rate grid; emits sweep.csv with the best alpha per cell.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Evaluate the 2-D loss-surface slice and emit surface.csv.
    Surface {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Condition-number lower bounds across latent sizes plus
    /// finite-difference curvature cross-checks; emits bounds.csv and
    /// probes.csv.
    Bounds {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Finite-difference gradient validation for every objective.
    Checkgrad {
        /// Random instances per scheme.
        #[arg(long, default_value_t = 50)]
        instances: usize,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn is_config_error(err: &Error) -> bool {
    matches!(
        err,
        Error::Config { .. } | Error::InvalidRegularizer(_) | Error::InvalidPrior(_)
    )
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    if is_config_error(&err) {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn load_config(args: &ConfigArgs) -> Result<(ExperimentConfig, PathBuf), Error> {
    let cfg = ExperimentConfig::from_path(&args.config)?;
    let out_dir = resolve_out_dir(args.out_dir.as_deref(), &cfg.output);
    Ok((cfg, out_dir))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Train {
            config,
            seed,
            alpha,
            epochs,
            timing,
            plot,
        } => {
            let (mut cfg, out_dir) = match load_config(&config) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
            if let Some(run) = cfg.run.as_mut() {
                if let Some(s) = seed {
                    run.seed = s;
                }
                if let Some(a) = alpha {
                    run.alpha = a;
                }
                if let Some(e) = epochs {
                    run.epochs = e;
                }
            }
            match run_train_with_plot(&cfg, &out_dir, timing, plot) {
                Ok(artifacts) => {
                    let r = &artifacts.record;
                    println!(
                        "scheme={} optimizer={} k={} alpha={} seed={}",
                        r.scheme, r.optimizer, r.k, r.alpha, r.seed
                    );
                    for (name, value) in &r.final_metrics {
                        println!("final {name} = {value}");
                    }
                    for (thr, epochs) in &r.epochs_to_threshold {
                        match epochs {
                            Some(e) => println!("epochs_to(d_align <= {thr}) = {e}"),
                            None => println!("epochs_to(d_align <= {thr}) = none"),
                        }
                    }
                    if let Some(epoch) = r.diverged_at {
                        eprintln!("warning: run diverged at epoch {epoch}");
                    }
                    println!("trace: {}", artifacts.trace_path.display());
                    println!("record: {}", artifacts.record_path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Sweep { config, jobs } => {
            let (cfg, out_dir) = match load_config(&config) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
            let jobs = jobs.unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map(|n| n.get())
                    .unwrap_or(1)
            });
            match run_sweep(&cfg, &out_dir, jobs) {
                Ok(cells) => {
                    println!("scheme,optimizer,k,best_alpha,epochs_to_threshold");
                    for c in &cells {
                        println!(
                            "{},{},{},{},{}",
                            c.scheme,
                            c.optimizer,
                            c.k,
                            c.best_alpha
                                .map(|a| format!("{a}"))
                                .unwrap_or_else(|| "none".into()),
                            c.epochs
                                .map(|e| e.to_string())
                                .unwrap_or_else(|| "none".into())
                        );
                    }
                    println!("artifact: {}", out_dir.join("sweep.csv").display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Surface { config } => {
            let (cfg, out_dir) = match load_config(&config) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
            match run_surface(&cfg, &out_dir) {
                Ok(rows) => {
                    let min = rows
                        .iter()
                        .min_by(|a, b| a.loss.partial_cmp(&b.loss).unwrap())
                        .expect("non-empty grid");
                    println!("rows: {}", rows.len());
                    println!(
                        "min loss {} at alpha={} theta={}",
                        min.loss, min.alpha, min.theta
                    );
                    println!("artifact: {}", out_dir.join("surface.csv").display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Bounds { config } => {
            let (cfg, out_dir) = match load_config(&config) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
            match run_bounds(&cfg, &out_dir) {
                Ok(report) => {
                    print!("{}", report.render_table());
                    println!("artifacts: {}", out_dir.join("bounds.csv").display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Checkgrad {
            instances,
            eps,
            seed,
            out,
        } => match run_checkgrad(instances, eps, seed) {
            Ok(report) => {
                print!("{}", report.render());
                if let Some(path) = out {
                    if let Err(e) = std::fs::write(&path, report.render()) {
                        return fail(Error::Io {
                            path: path.display().to_string(),
                            source: e,
                        });
                    }
                }
                if report.passed() {
                    ExitCode::SUCCESS
                } else {
                    eprintln!("error: at least one scheme exceeded the 1e-5 tolerance");
                    ExitCode::from(1)
                }
            }
            Err(e) => fail(e),
        },
    }
}
