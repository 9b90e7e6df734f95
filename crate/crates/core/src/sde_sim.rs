//! Euler–Maruyama simulation of the Langevin, memory-kernel and
//! two-timescale models.
//!
//! All simulators draw one standard normal per step from a `ChaCha8Rng`
//! seeded with `SimConfig::seed`, whether or not the diffusion vanishes, so
//! models that differ only by a zero term consume the generator identically.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gle::GleModel;
use crate::market_data::PriceMatrix;
use crate::resilience::DriftThetaVector;

/// Generator used for every stochastic path; recorded in metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64 + set_stream per path";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub step_h: f64,
    pub n_steps: usize,
    pub seed: u64,
    /// `[x0]`, or `[x0, hidden0]` for two-variable models.
    pub initial_state: Vec<f64>,
    /// Values preceding `x0`, oldest first. Only used by kernel models.
    #[serde(default)]
    pub history: Option<Vec<f64>>,
}

impl SimConfig {
    pub fn new(step_h: f64, n_steps: usize, seed: u64, x0: f64) -> Self {
        SimConfig {
            step_h,
            n_steps,
            seed,
            initial_state: vec![x0],
            history: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.step_h > 0.0 && self.step_h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step_h {} must be > 0", self.step_h)));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
        }
        if self.initial_state.is_empty() {
            return Err(Error::InvalidArgument("initial_state is empty".into()));
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Independent stream for path `index` of an ensemble run.
pub fn path_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Parameters of the two-variable benchmark
/// `x' = 15 + x - x^3 + q(t) y`, `y' = -rate y + sqrt(diffusion) Γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub coupling_start: f64,
    pub coupling_end: f64,
    pub ou_rate: f64,
    pub ou_diffusion: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            coupling_start: 0.5,
            coupling_end: 4.0,
            ou_rate: 0.1,
            ou_diffusion: 0.1,
        }
    }
}

impl SyntheticSpec {
    /// 30000 steps over `[0, 2000]`, started at the stable fixed point.
    pub fn default_config(seed: u64) -> SimConfig {
        SimConfig {
            step_h: 2000.0 / 30000.0,
            n_steps: 30000,
            seed,
            initial_state: vec![synthetic_fixed_point(), 0.0],
            history: None,
        }
    }

    pub fn drift(x: f64) -> f64 {
        15.0 + x - x * x * x
    }
}

/// Stable root of `15 + x - x^3`.
pub fn synthetic_fixed_point() -> f64 {
    let mut x: f64 = 2.5;
    for _ in 0..50 {
        x -= SyntheticSpec::drift(x) / (1.0 - 3.0 * x * x);
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub step_h: f64,
    pub x: Vec<f64>,
    /// Hidden driver, for two-variable models.
    pub hidden: Option<Vec<f64>>,
    /// True when a kernel model had to zero-pad missing history.
    pub history_padded: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimMetadata {
    pub model: String,
    pub rng: String,
    pub config: SimConfig,
    pub history_padded: bool,
    #[serde(default)]
    pub parameters: serde_json::Value,
}

fn check_state(x: f64, step: usize) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { step })
    }
}

fn langevin_path<R: Rng>(
    drift: impl Fn(f64) -> f64,
    diffusion: impl Fn(f64) -> f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let h = cfg.step_h;
    let mut x = cfg.initial_state[0];
    let mut out = Vec::with_capacity(cfg.n_steps + 1);
    out.push(x);
    for step in 0..cfg.n_steps {
        let d2 = diffusion(x);
        if d2 < 0.0 || d2.is_nan() {
            return Err(Error::NegativeDiffusion { step, value: d2 });
        }
        let xi: f64 = rng.sample(StandardNormal);
        x = x + h * drift(x) + (h * d2).sqrt() * xi;
        check_state(x, step + 1)?;
        out.push(x);
    }
    Ok(out)
}

/// `x_{t+1} = x_t + h D1(x_t) + sqrt(h D2(x_t)) ξ_t`.
pub fn simulate_langevin(
    drift: impl Fn(f64) -> f64,
    diffusion: impl Fn(f64) -> f64,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let x = langevin_path(drift, diffusion, cfg, &mut cfg.rng())?;
    Ok(Trajectory {
        step_h: cfg.step_h,
        x,
        hidden: None,
        history_padded: false,
    })
}

/// Runs `n_paths` independent Langevin paths, path `i` on stream `i` of `cfg.seed`.
pub fn simulate_langevin_ensemble<D, S>(
    drift: D,
    diffusion: S,
    cfg: &SimConfig,
    n_paths: usize,
) -> Result<Vec<Vec<f64>>>
where
    D: Fn(f64) -> f64 + Sync,
    S: Fn(f64) -> f64 + Sync,
{
    cfg.validate()?;
    (0..n_paths)
        .into_par_iter()
        .map(|i| langevin_path(&drift, &diffusion, cfg, &mut path_rng(cfg.seed, i as u64)))
        .collect()
}

/// Memory-kernel Langevin simulation:
/// `x_{t+1} = x_t + h (D1(x_t) + Σ_k K_k x_{t-k}) + sqrt(h D2(x_t)) ξ_t`
/// with binned coefficients; states outside the bin range use the edge bin.
pub fn simulate_gle(model: &GleModel, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let k_max = model.kernel.len();
    let supplied = cfg.history.clone().unwrap_or_default();
    let padded = supplied.len() < k_max;
    // buffer holds [history..., x0, x1, ...]
    let mut buf: Vec<f64> = Vec::with_capacity(k_max + cfg.n_steps + 1);
    buf.extend(std::iter::repeat_n(0.0, k_max.saturating_sub(supplied.len())));
    buf.extend(&supplied[supplied.len().saturating_sub(k_max)..]);
    let lead = buf.len();
    buf.push(cfg.initial_state[0]);

    let h = cfg.step_h;
    let mut rng = cfg.rng();
    for step in 0..cfg.n_steps {
        let t = lead + step;
        let x = buf[t];
        let bin = model.bin_of(x);
        let d2 = model.diffusion_per_bin[bin];
        if d2 < 0.0 || d2.is_nan() {
            return Err(Error::NegativeDiffusion { step, value: d2 });
        }
        let mut memory = 0.0;
        for (k, coeff) in model.kernel.iter().enumerate() {
            memory += coeff * buf[t - 1 - k];
        }
        let xi: f64 = rng.sample(StandardNormal);
        let next = x + h * (model.drift_per_bin[bin] + memory) + (h * d2).sqrt() * xi;
        check_state(next, step + 1)?;
        buf.push(next);
    }
    Ok(Trajectory {
        step_h: h,
        x: buf.split_off(lead),
        hidden: None,
        history_padded: padded && k_max > 0,
    })
}

fn two_scale_path<R: Rng>(
    drift: impl Fn(f64) -> f64,
    coupling: impl Fn(usize) -> f64,
    hidden_rate: f64,
    hidden_diffusion: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = cfg.step_h;
    let mut x = cfg.initial_state[0];
    let mut y = cfg.initial_state.get(1).copied().unwrap_or(0.0);
    let mut xs = Vec::with_capacity(cfg.n_steps + 1);
    let mut ys = Vec::with_capacity(cfg.n_steps + 1);
    xs.push(x);
    ys.push(y);
    let noise_scale = (h * hidden_diffusion).sqrt();
    for step in 0..cfg.n_steps {
        let xi: f64 = rng.sample(StandardNormal);
        x += h * (drift(x) + coupling(step) * y);
        y += -h * hidden_rate * y + noise_scale * xi;
        check_state(x, step + 1)?;
        check_state(y, step + 1)?;
        xs.push(x);
        ys.push(y);
    }
    Ok((xs, ys))
}

/// Observed variable with cubic drift driven by a hidden Ornstein–Uhlenbeck
/// process `λ` (drift `-λ/θ5²`, diffusion `1/θ5²`) in place of white noise.
pub fn simulate_two_scale(theta: &DriftThetaVector, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let theta5 = theta
        .theta5
        .ok_or_else(|| Error::InvalidArgument("theta5 is required for the two-scale model".into()))?;
    if theta5 == 0.0 || !theta5.is_finite() {
        return Err(Error::InvalidArgument(format!("theta5 = {theta5} is not usable")));
    }
    let inv = 1.0 / (theta5 * theta5);
    let (x, lambda) = two_scale_path(|x| theta.drift(x), |_| theta.theta4, inv, inv, cfg, &mut cfg.rng())?;
    Ok(Trajectory {
        step_h: cfg.step_h,
        x,
        hidden: Some(lambda),
        history_padded: false,
    })
}

/// The synthetic benchmark with the coupling ramped linearly over the run.
pub fn simulate_synthetic(spec: &SyntheticSpec, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if !(spec.coupling_start.is_finite() && spec.coupling_end.is_finite()) {
        return Err(Error::InvalidArgument("coupling values must be finite".into()));
    }
    if !(spec.ou_rate > 0.0) {
        return Err(Error::InvalidArgument(format!("ou_rate {} must be > 0", spec.ou_rate)));
    }
    if spec.ou_diffusion < 0.0 {
        return Err(Error::NegativeDiffusion {
            step: 0,
            value: spec.ou_diffusion,
        });
    }
    let n = cfg.n_steps as f64;
    let (q0, q1) = (spec.coupling_start, spec.coupling_end);
    let (x, y) = two_scale_path(
        SyntheticSpec::drift,
        |step| q0 + (q1 - q0) * step as f64 / n,
        spec.ou_rate,
        spec.ou_diffusion,
        cfg,
        &mut cfg.rng(),
    )?;
    Ok(Trajectory {
        step_h: cfg.step_h,
        x,
        hidden: Some(y),
        history_padded: false,
    })
}

/// One-factor equity panel with a slowly varying pairwise correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FactorMarketSpec {
    pub n_assets: usize,
    pub n_days: usize,
    /// Long-run level of the pairwise correlation.
    pub mean_corr: f64,
    /// Daily AR(1) coefficient of the logit correlation.
    pub persistence: f64,
    /// Stationary standard deviation of the logit correlation.
    pub logit_sd: f64,
    pub daily_vol: f64,
}

impl Default for FactorMarketSpec {
    fn default() -> Self {
        FactorMarketSpec {
            n_assets: 30,
            n_days: 2500,
            mean_corr: 0.3,
            persistence: 0.995,
            logit_sd: 0.8,
            daily_vol: 0.015,
        }
    }
}

/// Daily closes of a one-factor market, plus the latent correlation path.
pub fn simulate_factor_prices(spec: &FactorMarketSpec, seed: u64) -> Result<(PriceMatrix, Vec<f64>)> {
    if spec.n_assets < 2 || spec.n_days < 2 {
        return Err(Error::InvalidArgument(
            "factor market needs >= 2 assets and >= 2 days".into(),
        ));
    }
    if !(spec.mean_corr > 0.0 && spec.mean_corr < 1.0) || !(spec.persistence.abs() < 1.0) {
        return Err(Error::InvalidArgument(
            "mean_corr must lie in (0, 1) and |persistence| < 1".into(),
        ));
    }
    let mut rng = path_rng(seed, 0);
    let mu = (spec.mean_corr / (1.0 - spec.mean_corr)).ln();
    let innov = spec.logit_sd * (1.0 - spec.persistence * spec.persistence).sqrt();
    let mut z = mu;
    let mut rho = Vec::with_capacity(spec.n_days);
    let mut prices = vec![vec![100.0; spec.n_days]; spec.n_assets];
    for t in 1..spec.n_days {
        z = mu + spec.persistence * (z - mu) + innov * rng.sample::<f64, _>(StandardNormal);
        let r = 1.0 / (1.0 + (-z).exp());
        rho.push(r);
        let f: f64 = rng.sample(StandardNormal);
        for series in prices.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            let ret = spec.daily_vol * (r.sqrt() * f + (1.0 - r).sqrt() * e);
            series[t] = series[t - 1] * ret.exp();
        }
    }
    let start = chrono::NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    let dates = start
        .iter_days()
        .filter(|d| {
            !matches!(
                chrono::Datelike::weekday(d),
                chrono::Weekday::Sat | chrono::Weekday::Sun
            )
        })
        .take(spec.n_days)
        .map(|d| d.format("%Y-%m-%d").to_string())
        .collect();
    let pm = PriceMatrix {
        assets: (0..spec.n_assets).map(|i| format!("A{i:03}")).collect(),
        dates,
        missing_mask: vec![vec![false; spec.n_days]; spec.n_assets],
        prices,
        dropped: Vec::new(),
    };
    Ok((pm, rho))
}

/// Writes `t,x[,lambda]` rows.
pub fn write_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    match &traj.hidden {
        Some(hidden) => {
            out.push_str("t,x,lambda\n");
            for (i, (x, l)) in traj.x.iter().zip(hidden).enumerate() {
                let _ = writeln!(out, "{:?},{x:?},{l:?}", i as f64 * traj.step_h);
            }
        }
        None => {
            out.push_str("t,x\n");
            for (i, x) in traj.x.iter().enumerate() {
                let _ = writeln!(out, "{:?},{x:?}", i as f64 * traj.step_h);
            }
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
