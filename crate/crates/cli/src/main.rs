use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qmetro_cli::compare::compare_runs;
use qmetro_cli::config::{ExperimentConfig, ModelKind};
use qmetro_cli::pipeline::{self, GridRequest};
use qmetro_cli::{configure_threads, CliError, CliResult};
use qmetro_core::models::{QuarterKind, QFI_STEP};
use qmetro_core::neural::TrainConfig;
use qmetro_core::policy::CemConfig;

#[derive(Parser)]
#[command(name = "qmetro", version = pipeline::version(), about = "Adaptive Bayesian phase estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Mz,
    Fourarm,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Mz => ModelKind::Mz,
            Model::Fourarm => ModelKind::Fourarm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Quarter {
    FourCoupler,
    Fourier,
}

impl From<Quarter> for QuarterKind {
    fn from(q: Quarter) -> Self {
        match q {
            Quarter::FourCoupler => QuarterKind::FourCoupler,
            Quarter::Fourier => QuarterKind::Fourier,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample r outcomes at every point of a calibration grid.
    GenerateGrid {
        #[arg(long)]
        lo: f64,
        #[arg(long)]
        hi: f64,
        /// Points per axis.
        #[arg(long)]
        n: usize,
        /// Number of phases; must match the model.
        #[arg(long)]
        dims: Option<usize>,
        #[arg(long)]
        r: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        model: Model,
        #[arg(long, value_enum, default_value = "four-coupler")]
        quarter: Quarter,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the posterior network on a calibration dataset.
    TrainNn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 60)]
        epochs: usize,
        #[arg(long, default_value_t = 256)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        /// Hidden layer widths, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "64,64,64")]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV.
        #[arg(long)]
        losses: Option<PathBuf>,
    },
    /// Train a feedback policy with the cross-entropy method.
    TrainPolicy {
        /// Experiment config describing the estimation environment.
        #[arg(long)]
        env: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        episodes: usize,
        #[arg(long, default_value_t = 100)]
        population: usize,
        #[arg(long, default_value_t = 0.1)]
        elite_frac: f64,
        #[arg(long, default_value_t = 0.5)]
        sigma0: f64,
        #[arg(long, default_value_t = 1)]
        episodes_per_candidate: usize,
        /// Score all candidates of an iteration on the same episodes.
        #[arg(long)]
        common_episodes: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration reward CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run an estimation sweep and write the Qloss curve and summary.
    RunEstimation {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured curve path.
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Override the configured summary path.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Also write the probe-by-probe trace of the first run.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Join curve CSVs on their probe axis.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Bound is coefficient / N; 1 is the shot-noise limit.
        #[arg(long, default_value_t = 1.0)]
        bound: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quantum Cramér–Rao bound of the 4-arm device.
    Qcrb {
        #[arg(long, value_enum, default_value = "four-coupler")]
        quarter: Quarter,
        /// Input modes of the two photons.
        #[arg(long, value_delimiter = ',', default_value = "2,3")]
        input: Vec<usize>,
        #[arg(long, default_value_t = QFI_STEP)]
        step: f64,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads(std::env::var("QMETRO_THREADS").ok().as_deref())?;
    match cli.command {
        Command::GenerateGrid {
            lo,
            hi,
            n,
            dims,
            r,
            seed,
            model,
            quarter,
            out,
        } => {
            let req = GridRequest {
                model: model.into(),
                quarter: quarter.into(),
                lo,
                hi,
                n,
                dims,
                r,
                seed,
            };
            let data = pipeline::generate_grid(&req, &out)?;
            eprintln!(
                "wrote {} points × {} outcomes ({} events) to {}",
                data.grid().len(),
                data.outcomes(),
                data.total_events(),
                out.display()
            );
        }
        Command::TrainNn {
            data,
            epochs,
            batch,
            lr,
            hidden,
            seed,
            out,
            losses,
        } => {
            let config = TrainConfig {
                epochs,
                batch_size: batch,
                learning_rate: lr,
                hidden,
                seed,
                ..TrainConfig::default()
            };
            let epoch_losses = pipeline::train_nn(&data, &config, &out)?;
            if let Some(path) = losses {
                let mut text = String::from("epoch,loss\n");
                for (i, l) in epoch_losses.iter().enumerate() {
                    text.push_str(&format!("{},{l}\n", i + 1));
                }
                pipeline::write_file(&path, text.as_bytes())?;
            }
            eprintln!(
                "final loss {:.6}; weights written to {}",
                epoch_losses.last().copied().unwrap_or(f64::NAN),
                out.display()
            );
        }
        Command::TrainPolicy {
            env,
            episodes,
            population,
            elite_frac,
            sigma0,
            episodes_per_candidate,
            common_episodes,
            seed,
            out,
            log,
        } => {
            let config = ExperimentConfig::load(&env)?;
            let cem = CemConfig {
                population,
                elite_frac,
                sigma0,
                episodes_per_candidate,
                common_episodes,
            };
            let report = pipeline::train_policy(&config, &cem, episodes, seed, &out, log.as_deref())?;
            eprintln!(
                "{} iterations, elite reward {:.4} -> {:.4}; policy written to {}",
                report.elite_mean_rewards.len(),
                report.elite_mean_rewards.first().copied().unwrap_or(f64::NAN),
                report.elite_mean_rewards.last().copied().unwrap_or(f64::NAN),
                out.display()
            );
        }
        Command::RunEstimation {
            config,
            curve,
            summary,
            trace,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(p) = curve {
                cfg.output.curve = p;
            }
            if let Some(p) = summary {
                cfg.output.summary = p;
            }
            let result = pipeline::run_experiment(&cfg)?;
            if let Some(p) = trace {
                pipeline::write_first_trace(&cfg, &p)?;
            }
            let n = cfg.n_probes;
            eprintln!(
                "Qloss at N={n}: {:.6} ± {:.6}; curve {}, summary {}",
                result.curve.at(n),
                result.curve.dispersion[n - 1],
                result.curve_path.display(),
                result.summary_path.display()
            );
        }
        Command::Compare { runs, bound, out } => {
            let table = compare_runs(&runs, bound)?;
            match out {
                Some(p) => pipeline::write_file(&p, &table)?,
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&table)?;
                }
            }
        }
        Command::Qcrb { quarter, input, step } => {
            let [a, b] = input[..] else {
                return Err(CliError::Config("--input takes two mode indices".into()));
            };
            pipeline::qcrb_report(quarter.into(), (a, b), step, std::io::stdout())?;
            println!();
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
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
