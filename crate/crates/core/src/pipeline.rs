//! Run configuration, named recipes and the command implementations behind
//! the `langevin-corr` binary.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bayes::write_chains;
use crate::error::{Error, Result};
use crate::forecast::{
    acf, increment_distribution, run_forecast_benchmark, write_acf_csv, write_density_csv, ForecastMethod,
    ForecastSettings,
};
use crate::gle::{fit_gle, GleFit, GleFitConfig, DEFAULT_PLATEAU_TOL};
use crate::market_data::{
    compute_returns, load_prices, local_normalize, mean_correlation, read_series, write_series, WindowMode,
    DEFAULT_MAX_MISSING_FRACTION, DEFAULT_NORMALIZATION_WINDOW,
};
use crate::resilience::{run_resilience, McmcSettings, ModelTag, ResilienceConfig, ResiliencePriors};
use crate::sde_sim::{
    simulate_gle, simulate_langevin, simulate_synthetic, write_trajectory, SimConfig, SimMetadata, SyntheticSpec,
    Trajectory, RNG_ALGORITHM,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Inputs {
    pub prices: Option<PathBuf>,
    pub series: Option<PathBuf>,
    /// Fitted GLE JSON written by `fit-gle`.
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessBlock {
    pub normalization_window: usize,
    pub tau: usize,
    pub shift: usize,
    pub window_mode: WindowMode,
    pub max_missing_fraction: f64,
}

impl Default for PreprocessBlock {
    fn default() -> Self {
        PreprocessBlock {
            normalization_window: DEFAULT_NORMALIZATION_WINDOW,
            tau: 5,
            shift: 5,
            window_mode: WindowMode::Trailing,
            max_missing_fraction: DEFAULT_MAX_MISSING_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GleBlock {
    #[serde(flatten)]
    pub fit: GleFitConfig,
    pub plateau_tol: f64,
}

impl Default for GleBlock {
    fn default() -> Self {
        GleBlock {
            fit: GleFitConfig::default(),
            plateau_tol: DEFAULT_PLATEAU_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnoseBlock {
    pub max_lag: usize,
    pub increment_lags: Vec<usize>,
    pub simulation_length: usize,
}

impl Default for DiagnoseBlock {
    fn default() -> Self {
        DiagnoseBlock {
            max_lag: 30,
            increment_lags: crate::forecast::DEFAULT_INCREMENT_LAGS.to_vec(),
            simulation_length: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastBlock {
    pub alphas: Vec<f64>,
    pub methods: Vec<String>,
    pub settings: ForecastSettings,
}

impl Default for ForecastBlock {
    fn default() -> Self {
        ForecastBlock {
            alphas: crate::forecast::DEFAULT_ALPHAS.to_vec(),
            methods: ForecastMethod::defaults().iter().map(|m| m.label()).collect(),
            settings: ForecastSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResilienceBlock {
    pub model_tag: ModelTag,
    pub step_h: f64,
    pub window_size: usize,
    pub window_shift: usize,
    pub priors: Option<ResiliencePriors>,
    pub mcmc: McmcSettings,
    pub detrend_width: Option<f64>,
}

impl Default for ResilienceBlock {
    fn default() -> Self {
        let base = ResilienceConfig::new(ModelTag::Markov);
        ResilienceBlock {
            model_tag: base.model_tag,
            step_h: base.step_h,
            window_size: base.window_size,
            window_shift: base.window_shift,
            priors: None,
            mcmc: base.mcmc,
            detrend_width: None,
        }
    }
}

impl ResilienceBlock {
    pub fn to_config(&self, seed: u64) -> ResilienceConfig {
        ResilienceConfig {
            model_tag: self.model_tag,
            step_h: self.step_h,
            window_size: self.window_size,
            window_shift: self.window_shift,
            priors: self
                .priors
                .unwrap_or_else(|| ResiliencePriors::for_model(self.model_tag)),
            mcmc: self.mcmc,
            seed,
            detrend_width: self.detrend_width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimModel {
    /// Two-variable benchmark with a ramped coupling.
    Synthetic,
    /// `dx = -x dt + sqrt(D) dW`.
    Ou,
    /// The fitted GLE in `inputs.model`.
    Gle,
}

impl std::str::FromStr for SimModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(SimModel::Synthetic),
            "ou" => Ok(SimModel::Ou),
            "gle" => Ok(SimModel::Gle),
            other => Err(Error::InvalidArgument(format!("unknown simulation model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateBlock {
    pub model: SimModel,
    pub n_steps: usize,
    pub step_h: f64,
    pub x0: f64,
    /// Constant diffusion of the `ou` model.
    pub diffusion: f64,
    pub synthetic: SyntheticSpec,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        let d = SyntheticSpec::default_config(0);
        SimulateBlock {
            model: SimModel::Synthetic,
            n_steps: d.n_steps,
            step_h: d.step_h,
            x0: d.initial_state[0],
            diffusion: 0.25,
            synthetic: SyntheticSpec::default(),
        }
    }
}

/// Complete, serialisable configuration of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub inputs: Inputs,
    pub preprocess: PreprocessBlock,
    pub gle: GleBlock,
    pub diagnose: DiagnoseBlock,
    pub forecast: ForecastBlock,
    pub resilience: ResilienceBlock,
    pub simulate: SimulateBlock,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Inputs::default(),
            preprocess: PreprocessBlock::default(),
            gle: GleBlock::default(),
            diagnose: DiagnoseBlock::default(),
            forecast: ForecastBlock::default(),
            resilience: ResilienceBlock::default(),
            simulate: SimulateBlock::default(),
            seed: 0,
            out: PathBuf::from("runs"),
        }
    }
}

pub const RECIPES: [&str; 4] = ["weekly", "monthly42", "overlap-artifact", "synthetic-resilience"];

/// Named experiment presets.
pub fn recipe(name: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    match name {
        "weekly" => {
            cfg.preprocess.tau = 5;
            cfg.preprocess.shift = 5;
            cfg.preprocess.window_mode = WindowMode::Trailing;
            cfg.gle.fit.k_max = 6;
        }
        "monthly42" => {
            cfg.preprocess.tau = 42;
            cfg.preprocess.shift = 1;
            cfg.preprocess.window_mode = WindowMode::Centered;
        }
        "overlap-artifact" => {
            cfg.preprocess.tau = 42;
            cfg.preprocess.shift = 1;
            cfg.preprocess.window_mode = WindowMode::Centered;
            cfg.gle.fit.k_max = 90;
            cfg.gle.fit.walkers = 2 * cfg.gle.fit.dim();
            cfg.gle.fit.steps = 4000;
            cfg.gle.fit.burn_in = 2000;
            cfg.gle.fit.thin = 20;
        }
        "synthetic-resilience" => {
            cfg.simulate = SimulateBlock::default();
            cfg.resilience.model_tag = ModelTag::NonmarkovSlowHidden;
            cfg.resilience.step_h = cfg.simulate.step_h;
            cfg.resilience.mcmc.steps = 30000;
        }
        other => {
            return Err(Error::Validation(vec![format!(
                "unknown recipe `{other}` (known: {})",
                RECIPES.join(", ")
            )]))
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Preprocess,
    FitGle,
    Diagnose,
    Predict,
    Resilience,
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Preprocess => "preprocess",
            Command::FitGle => "fit-gle",
            Command::Diagnose => "diagnose",
            Command::Predict => "predict",
            Command::Resilience => "resilience",
            Command::Simulate => "simulate",
        }
    }
}

fn require(path: &Option<PathBuf>, field: &str, problems: &mut Vec<String>) {
    match path {
        None => problems.push(format!("{field} is required")),
        Some(p) if !p.exists() => problems.push(format!("{field} = {} does not exist", p.display())),
        Some(_) => {}
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Checks every field used by `command`, reporting all violations at once.
    pub fn validate(&self, command: Command) -> Result<()> {
        let mut p = Vec::new();
        match command {
            Command::Preprocess => {
                require(&self.inputs.prices, "inputs.prices", &mut p);
                let b = &self.preprocess;
                if b.normalization_window < 2 {
                    p.push(format!(
                        "preprocess.normalization_window = {} must be >= 2",
                        b.normalization_window
                    ));
                }
                if b.tau < 2 {
                    p.push(format!("preprocess.tau = {} must be >= 2", b.tau));
                }
                if b.shift < 1 {
                    p.push("preprocess.shift must be >= 1".into());
                }
                if !(0.0..1.0).contains(&b.max_missing_fraction) {
                    p.push(format!(
                        "preprocess.max_missing_fraction = {} must lie in [0, 1)",
                        b.max_missing_fraction
                    ));
                }
            }
            Command::FitGle => {
                require(&self.inputs.series, "inputs.series", &mut p);
                if let Err(Error::Validation(v)) = self.gle.fit.validate() {
                    p.extend(v.into_iter().map(|m| format!("gle.{m}")));
                }
                if !(self.gle.plateau_tol > 0.0) {
                    p.push(format!("gle.plateau_tol = {} must be > 0", self.gle.plateau_tol));
                }
            }
            Command::Diagnose => {
                require(&self.inputs.series, "inputs.series", &mut p);
                require(&self.inputs.model, "inputs.model", &mut p);
                if self.diagnose.increment_lags.contains(&0) {
                    p.push("diagnose.increment_lags must be >= 1".into());
                }
                if self.diagnose.simulation_length <= self.diagnose.max_lag {
                    p.push("diagnose.simulation_length must exceed diagnose.max_lag".into());
                }
            }
            Command::Predict => {
                require(&self.inputs.series, "inputs.series", &mut p);
                for a in &self.forecast.alphas {
                    if !(*a > 0.0 && *a < 1.0) {
                        p.push(format!("forecast.alphas contains {a}, outside (0, 1)"));
                    }
                }
                for m in &self.forecast.methods {
                    if m.parse::<ForecastMethod>().is_err() {
                        p.push(format!("forecast.methods contains unknown method `{m}`"));
                    }
                }
                if self.forecast.settings.n_bins < 2 {
                    p.push("forecast.settings.n_bins must be >= 2".into());
                }
            }
            Command::Resilience => {
                require(&self.inputs.series, "inputs.series", &mut p);
                if let Err(Error::Validation(v)) = self.resilience.to_config(self.seed).validate() {
                    p.extend(v.into_iter().map(|m| format!("resilience.{m}")));
                }
            }
            Command::Simulate => {
                let s = &self.simulate;
                if s.n_steps == 0 {
                    p.push("simulate.n_steps must be >= 1".into());
                }
                if !(s.step_h > 0.0) {
                    p.push(format!("simulate.step_h = {} must be > 0", s.step_h));
                }
                if s.model == SimModel::Ou && s.diffusion < 0.0 {
                    p.push(format!("simulate.diffusion = {} must be >= 0", s.diffusion));
                }
                if s.model == SimModel::Gle {
                    require(&self.inputs.model, "inputs.model", &mut p);
                }
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&json)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Record of one command invocation, sufficient to repeat it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub created_at: String,
    pub seed: u64,
    pub config_hash: String,
    pub rng: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<PathBuf>,
    pub config: RunConfig,
}

/// Output directory of a run: `<out>/<command>-<timestamp>-<hash prefix>`.
pub fn run_directory(cfg: &RunConfig, command: Command) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let hash = cfg.hash()?;
    let dir = cfg.out.join(format!("{}-{stamp}-{}", command.name(), &hash[..12]));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn input_digests(cfg: &RunConfig) -> Result<Vec<FileDigest>> {
    [&cfg.inputs.prices, &cfg.inputs.series, &cfg.inputs.model]
        .into_iter()
        .flatten()
        .filter(|p| p.exists())
        .map(|p| digest_file(p))
        .collect()
}

/// Validates, creates the run directory, executes and writes the manifest.
pub fn execute(cfg: &RunConfig, command: Command) -> Result<(PathBuf, Manifest)> {
    cfg.validate(command)?;
    let dir = run_directory(cfg, command)?;
    let outputs = match command {
        Command::Preprocess => cmd_preprocess(cfg, &dir)?,
        Command::FitGle => cmd_fit_gle(cfg, &dir)?,
        Command::Diagnose => cmd_diagnose(cfg, &dir)?,
        Command::Predict => cmd_predict(cfg, &dir)?,
        Command::Resilience => cmd_resilience(cfg, &dir)?,
        Command::Simulate => cmd_simulate(cfg, &dir)?,
    };
    let manifest = Manifest {
        command: command.name().into(),
        version: VERSION.into(),
        created_at: chrono::Utc::now().to_rfc3339(),
        seed: cfg.seed,
        config_hash: cfg.hash()?,
        rng: RNG_ALGORITHM.into(),
        inputs: input_digests(cfg)?,
        outputs,
        config: cfg.clone(),
    };
    write_json(&manifest, &dir.join("manifest.json"))?;
    Ok((dir, manifest))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn series_values(cfg: &RunConfig) -> Result<Vec<f64>> {
    let path = cfg
        .inputs
        .series
        .as_ref()
        .ok_or_else(|| Error::Validation(vec!["inputs.series is required".into()]))?;
    Ok(read_series(path)?.values)
}

fn load_fit(cfg: &RunConfig) -> Result<GleFit> {
    let path = cfg
        .inputs
        .model
        .as_ref()
        .ok_or_else(|| Error::Validation(vec!["inputs.model is required".into()]))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn cmd_preprocess(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let b = &cfg.preprocess;
    let path = cfg
        .inputs
        .prices
        .as_ref()
        .ok_or_else(|| Error::Validation(vec!["inputs.prices is required".into()]))?;
    let prices = load_prices(path, b.max_missing_fraction)?;
    let returns = local_normalize(&compute_returns(&prices)?, b.normalization_window)?;
    let mut series = mean_correlation(&returns, b.tau, b.shift, b.window_mode)?;
    series.dropped_assets = prices.dropped.clone();
    let out = dir.join("series.csv");
    write_series(&series, &out)?;
    Ok(vec![out.clone(), crate::market_data::sidecar_path(&out)])
}

pub fn cmd_fit_gle(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let values = series_values(cfg)?;
    let mut fit_cfg = cfg.gle.fit.clone();
    fit_cfg.seed = cfg.seed;
    let fit = fit_gle(&values, &fit_cfg)?;
    let fit_path = dir.join("gle_fit.json");
    fit.write_json(&fit_path)?;
    let chains = dir.join("chains");
    write_chains(&fit.ensemble, &chains)?;
    let mut outputs = vec![fit_path, chains.with_extension("bin"), chains.with_extension("json")];
    let kernel_path = dir.join("kernel.csv");
    let mut csv = String::from("k,mean,map,ci_lo,ci_hi\n");
    for (k, s) in fit.kernel.iter().enumerate() {
        csv.push_str(&format!("{},{},{},{},{}\n", k + 1, s.mean, s.map, s.ci95[0], s.ci95[1]));
    }
    std::fs::write(&kernel_path, csv).map_err(|e| Error::io(&kernel_path, e))?;
    outputs.push(kernel_path);
    if fit_cfg.k_max > 0 {
        let agg_path = dir.join("memory_aggregation.json");
        write_json(&fit.memory_aggregation(cfg.gle.plateau_tol), &agg_path)?;
        outputs.push(agg_path);
    }
    Ok(outputs)
}

pub fn cmd_diagnose(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let values = series_values(cfg)?;
    let fit = load_fit(cfg)?;
    let d = &cfg.diagnose;
    let history = values[values.len() - fit.map_model.k_max() - 1..].to_vec();
    let sim = simulate_gle(
        &fit.map_model,
        &SimConfig {
            history: Some(history[..history.len() - 1].to_vec()),
            ..SimConfig::new(
                fit.map_model.step_h,
                d.simulation_length,
                cfg.seed,
                history[history.len() - 1],
            )
        },
    )?;
    let mut outputs = Vec::new();
    for (name, series) in [("data", &values), ("simulated", &sim.x)] {
        let path = dir.join(format!("acf_{name}.csv"));
        write_acf_csv(&acf(series, d.max_lag.min(series.len() - 1))?, &path)?;
        outputs.push(path);
        let path = dir.join(format!("density_{name}_level.csv"));
        write_density_csv(&level_density(series)?, &path)?;
        outputs.push(path);
        for &lag in &d.increment_lags {
            let path = dir.join(format!("density_{name}_lag{lag}.csv"));
            write_density_csv(&increment_distribution(series, lag)?, &path)?;
            outputs.push(path);
        }
    }
    Ok(outputs)
}

/// KDE of the levels, reusing the increment estimator on a cumulative sum.
fn level_density(series: &[f64]) -> Result<crate::forecast::IncrementDensity> {
    let mut cum = Vec::with_capacity(series.len() + 1);
    cum.push(0.0);
    for v in series {
        cum.push(cum[cum.len() - 1] + v);
    }
    increment_distribution(&cum, 1)
}

pub fn cmd_predict(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let values = series_values(cfg)?;
    let methods = cfg
        .forecast
        .methods
        .iter()
        .map(|m| m.parse())
        .collect::<Result<Vec<ForecastMethod>>>()?;
    let mut settings = cfg.forecast.settings.clone();
    settings.seed = cfg.seed;
    let mut outputs = Vec::new();
    let mut table = String::from("alpha,method,rho2_in,rho2_out\n");
    for &alpha in &cfg.forecast.alphas {
        let report = run_forecast_benchmark(&values, alpha, &methods, &settings)?;
        for m in &report.methods {
            let f = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| x.to_string());
            table.push_str(&format!("{alpha},{},{},{}\n", m.method, f(m.rho2_in), f(m.rho2_out)));
        }
        let path = dir.join(format!("forecast_alpha{:.0}.json", alpha * 100.0));
        report.write_json(&path)?;
        outputs.push(path);
    }
    let path = dir.join("rho2.csv");
    std::fs::write(&path, table).map_err(|e| Error::io(&path, e))?;
    outputs.push(path);
    Ok(outputs)
}

pub fn cmd_resilience(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let values = series_values(cfg)?;
    let rc = cfg.resilience.to_config(cfg.seed);
    let track = run_resilience(&values, &rc)?;
    let csv = dir.join("resilience.csv");
    track.write_csv(&csv)?;
    let meta = dir.join("resilience.json");
    track.write_metadata(&rc, &meta)?;
    Ok(vec![csv, meta])
}

/// Simulates the model selected in `cfg.simulate`.
pub fn simulate(cfg: &RunConfig) -> Result<(Trajectory, SimMetadata)> {
    let s = &cfg.simulate;
    let (traj, sim_cfg, params) = match s.model {
        SimModel::Synthetic => {
            let sim_cfg = SimConfig {
                initial_state: vec![s.x0, 0.0],
                ..SimConfig::new(s.step_h, s.n_steps, cfg.seed, s.x0)
            };
            let t = simulate_synthetic(&s.synthetic, &sim_cfg)?;
            (t, sim_cfg, serde_json::to_value(s.synthetic)?)
        }
        SimModel::Ou => {
            let sim_cfg = SimConfig::new(s.step_h, s.n_steps, cfg.seed, s.x0);
            let d = s.diffusion;
            let t = simulate_langevin(|x| -x, |_| d, &sim_cfg)?;
            (t, sim_cfg, serde_json::json!({ "drift": "-x", "diffusion": d }))
        }
        SimModel::Gle => {
            let fit = load_fit(cfg)?;
            let mut model = fit.map_model;
            model.step_h = s.step_h;
            let sim_cfg = SimConfig::new(s.step_h, s.n_steps, cfg.seed, s.x0);
            let t = simulate_gle(&model, &sim_cfg)?;
            (t, sim_cfg, serde_json::to_value(&model)?)
        }
    };
    let meta = SimMetadata {
        model: format!("{:?}", s.model).to_lowercase(),
        rng: RNG_ALGORITHM.into(),
        config: sim_cfg,
        history_padded: traj.history_padded,
        parameters: params,
    };
    Ok((traj, meta))
}

pub fn cmd_simulate(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let (traj, meta) = simulate(cfg)?;
    let path = dir.join("trajectory.csv");
    write_trajectory(&traj, &path)?;
    let meta_path = dir.join("trajectory.json");
    write_json(&meta, &meta_path)?;
    Ok(vec![path, meta_path])
}
