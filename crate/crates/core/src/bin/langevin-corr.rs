use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use langevin_corr::gle::BinMode;
use langevin_corr::market_data::WindowMode;
use langevin_corr::pipeline::{execute, recipe, Command, RunConfig, SimModel};
use langevin_corr::resilience::ModelTag;
use langevin_corr::Error;

#[derive(Parser)]
#[command(
    name = "langevin-corr",
    version,
    about = "Stochastic modelling of mean market correlation"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset (weekly, monthly42, overlap-artifact, synthetic-resilience).
    #[arg(long, global = true)]
    recipe: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parent directory for run outputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for window-parallel work.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Prices to locally normalised returns to the mean correlation series.
    Preprocess {
        #[arg(long)]
        prices: Option<PathBuf>,
        #[arg(long)]
        tau: Option<usize>,
        #[arg(long)]
        shift: Option<usize>,
        #[arg(long)]
        window_mode: Option<WindowMode>,
        #[arg(long)]
        normalization_window: Option<usize>,
    },
    /// Bayesian fit of a (generalised) Langevin model.
    FitGle {
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        bin_mode: Option<BinMode>,
        #[arg(long)]
        walkers: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
    },
    /// ACF and increment densities of data against a simulated fitted model.
    Diagnose {
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// One-step forecast benchmark.
    Predict {
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
    },
    /// Rolling-window drift slope and noise level.
    Resilience {
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long)]
        model: Option<ModelTag>,
        #[arg(long)]
        window_size: Option<usize>,
        #[arg(long)]
        window_shift: Option<usize>,
        #[arg(long)]
        step_h: Option<f64>,
    },
    /// Simulate a synthetic, OU or fitted GLE trajectory.
    Simulate {
        #[arg(long)]
        model: Option<SimModel>,
        /// Fitted GLE JSON for `--model gle`.
        #[arg(long)]
        gle: Option<PathBuf>,
        #[arg(long)]
        n_steps: Option<usize>,
        #[arg(long)]
        step_h: Option<f64>,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn build_config(g: &Global, cmd: Cmd) -> anyhow::Result<(RunConfig, Command)> {
    let mut cfg = match (&g.config, &g.recipe) {
        (Some(path), _) => RunConfig::from_json_file(path).with_context(|| format!("loading {}", path.display()))?,
        (None, Some(name)) => recipe(name)?,
        (None, None) => RunConfig::default(),
    };
    set(&mut cfg.seed, g.seed);
    set(&mut cfg.out, g.out.clone());
    let command = match cmd {
        Cmd::Preprocess {
            prices,
            tau,
            shift,
            window_mode,
            normalization_window,
        } => {
            cfg.inputs.prices = prices.or(cfg.inputs.prices);
            set(&mut cfg.preprocess.tau, tau);
            set(&mut cfg.preprocess.shift, shift);
            set(&mut cfg.preprocess.window_mode, window_mode);
            set(&mut cfg.preprocess.normalization_window, normalization_window);
            Command::Preprocess
        }
        Cmd::FitGle {
            series,
            k_max,
            bins,
            bin_mode,
            walkers,
            steps,
            burn_in,
            thin,
        } => {
            cfg.inputs.series = series.or(cfg.inputs.series);
            let f = &mut cfg.gle.fit;
            set(&mut f.k_max, k_max);
            set(&mut f.n_bins, bins);
            set(&mut f.bin_mode, bin_mode);
            set(&mut f.walkers, walkers);
            set(&mut f.steps, steps);
            set(&mut f.burn_in, burn_in);
            set(&mut f.thin, thin);
            Command::FitGle
        }
        Cmd::Diagnose { series, model } => {
            cfg.inputs.series = series.or(cfg.inputs.series);
            cfg.inputs.model = model.or(cfg.inputs.model);
            Command::Diagnose
        }
        Cmd::Predict {
            series,
            alphas,
            methods,
        } => {
            cfg.inputs.series = series.or(cfg.inputs.series);
            set(&mut cfg.forecast.alphas, alphas);
            set(&mut cfg.forecast.methods, methods);
            Command::Predict
        }
        Cmd::Resilience {
            series,
            model,
            window_size,
            window_shift,
            step_h,
        } => {
            cfg.inputs.series = series.or(cfg.inputs.series);
            let r = &mut cfg.resilience;
            set(&mut r.model_tag, model);
            set(&mut r.window_size, window_size);
            set(&mut r.window_shift, window_shift);
            set(&mut r.step_h, step_h);
            Command::Resilience
        }
        Cmd::Simulate {
            model,
            gle,
            n_steps,
            step_h,
        } => {
            cfg.inputs.model = gle.or(cfg.inputs.model);
            set(&mut cfg.simulate.model, model);
            set(&mut cfg.simulate.n_steps, n_steps);
            set(&mut cfg.simulate.step_h, step_h);
            Command::Simulate
        }
    };
    Ok((cfg, command))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    let (cfg, command) = build_config(&cli.global, cli.command)?;
    let (dir, manifest) = execute(&cfg, command)?;
    println!("{}", dir.display());
    for out in &manifest.outputs {
        eprintln!("  wrote {}", out.display());
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
            let validation = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Validation(_))));
            if let Some(Error::Validation(problems)) = e.downcast_ref::<Error>() {
                eprintln!("invalid configuration:");
                for p in problems {
                    eprintln!("  - {p}");
                }
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}
