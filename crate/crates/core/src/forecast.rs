//! Goodness-of-fit diagnostics and one-step-ahead forecasting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bayes::quantile_sorted;
use crate::error::{Error, Result};
use crate::gle::{fit_gle, BinMode, GleFitConfig, GleModel};

pub const KDE_GRID_POINTS: usize = 512;
pub const DEFAULT_INCREMENT_LAGS: [usize; 2] = [1, 2];
pub const DEFAULT_ALPHAS: [f64; 3] = [0.80, 0.85, 0.90];

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Biased sample autocorrelation for lags `0..=max_lag`.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag {
        return Err(Error::TooShort {
            needed: max_lag + 1,
            got: series.len(),
        });
    }
    let m = mean(series);
    let centered: Vec<f64> = series.iter().map(|x| x - m).collect();
    let denom: f64 = centered.iter().map(|x| x * x).sum();
    if !(denom > 0.0) {
        return Err(Error::ConstantSeries);
    }
    Ok((0..=max_lag)
        .map(|k| centered.iter().zip(&centered[k..]).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IncrementDensity {
    Kde {
        lag: usize,
        bandwidth: f64,
        grid: Vec<f64>,
        density: Vec<f64>,
    },
    /// All increments are equal.
    PointMass { lag: usize, value: f64 },
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^{-1/5}`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = mean(values);
    let sd = (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian KDE of `x[t] - x[t-lag]` on a fixed grid spanning the data
/// range widened by three bandwidths.
pub fn increment_distribution(series: &[f64], lag: usize) -> Result<IncrementDensity> {
    if lag == 0 || series.len() <= lag {
        return Err(Error::TooShort {
            needed: lag + 1,
            got: series.len(),
        });
    }
    let inc: Vec<f64> = series[lag..].iter().zip(series).map(|(b, a)| b - a).collect();
    let (lo, hi) = inc
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let bw = silverman_bandwidth(&inc);
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    if hi - lo <= 1e-9 * scale || !(bw > 0.0) {
        return Ok(IncrementDensity::PointMass { lag, value: inc[0] });
    }
    let (g0, g1) = (lo - 3.0 * bw, hi + 3.0 * bw);
    let grid: Vec<f64> = (0..KDE_GRID_POINTS)
        .map(|i| g0 + (g1 - g0) * i as f64 / (KDE_GRID_POINTS - 1) as f64)
        .collect();
    let norm = 1.0 / (inc.len() as f64 * bw * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|g| {
            inc.iter()
                .map(|v| {
                    let z = (g - v) / bw;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(IncrementDensity::Kde {
        lag,
        bandwidth: bw,
        grid,
        density,
    })
}

/// Conditional mean of the next value under `model`.
pub fn predict_one_step(model: &GleModel, history: &[f64]) -> Result<f64> {
    model.conditional_mean(history)
}

/// `ρ² = 1 - Σ(ŷ - y)² / Σ(ȳ - y)²`.
pub fn coefficient_of_prediction(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} actual vs {} predicted",
            y.len(),
            yhat.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: y.len(),
        });
    }
    let ybar = mean(y);
    let ss_tot: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::ConstantSeries);
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (b - a).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMethod {
    Naive,
    /// Memoryless binned Langevin model.
    Langevin,
    Gle {
        k_max: usize,
    },
}

impl ForecastMethod {
    pub fn k_max(self) -> usize {
        match self {
            ForecastMethod::Gle { k_max } => k_max,
            _ => 0,
        }
    }

    pub fn label(self) -> String {
        match self {
            ForecastMethod::Naive => "naive".into(),
            ForecastMethod::Langevin => "le".into(),
            ForecastMethod::Gle { k_max } => format!("gle{k_max}"),
        }
    }

    pub fn defaults() -> Vec<ForecastMethod> {
        vec![
            ForecastMethod::Naive,
            ForecastMethod::Langevin,
            ForecastMethod::Gle { k_max: 3 },
        ]
    }
}

impl std::str::FromStr for ForecastMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "naive" => Ok(ForecastMethod::Naive),
            "le" | "langevin" => Ok(ForecastMethod::Langevin),
            _ => s
                .strip_prefix("gle")
                .and_then(|k| k.trim_start_matches(['-', '_']).parse().ok())
                .map(|k_max| ForecastMethod::Gle { k_max })
                .ok_or_else(|| Error::InvalidArgument(format!("unknown forecast method `{s}`"))),
        }
    }
}

/// Model settings shared by the fitted forecast methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastSettings {
    pub n_bins: usize,
    pub bin_mode: BinMode,
    pub step_h: f64,
    pub walkers: usize,
    pub steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        ForecastSettings {
            n_bins: crate::gle::DEFAULT_BINS,
            bin_mode: BinMode::EqualWidth,
            step_h: 1.0,
            walkers: 64,
            steps: 3000,
            burn_in: 1000,
            thin: 10,
            seed: 0,
        }
    }
}

impl ForecastSettings {
    pub fn fit_config(&self, k_max: usize) -> GleFitConfig {
        let dim = 2 * self.n_bins + k_max;
        GleFitConfig {
            n_bins: self.n_bins,
            bin_mode: self.bin_mode,
            k_max,
            step_h: self.step_h,
            walkers: self.walkers.max(2 * dim),
            steps: self.steps,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.seed,
            ..GleFitConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodForecast {
    pub method: String,
    pub k_max: usize,
    pub rho2_in: Option<f64>,
    pub rho2_out: Option<f64>,
    /// `(ŷ, y)` pairs.
    pub predictions_in: Vec<(f64, f64)>,
    pub predictions_out: Vec<(f64, f64)>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub alpha: f64,
    pub split: usize,
    pub methods: Vec<MethodForecast>,
}

impl ForecastReport {
    pub fn method(&self, label: &str) -> Option<&MethodForecast> {
        self.methods.iter().find(|m| m.method == label)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// One-step forecasts of `series[t + 1]` for `t` in `range`.
fn forecast_range(
    series: &[f64],
    range: std::ops::Range<usize>,
    predict: &dyn Fn(&[f64]) -> Result<f64>,
) -> Result<Vec<(f64, f64)>> {
    range.map(|t| Ok((predict(&series[..=t])?, series[t + 1]))).collect()
}

fn score(pairs: &[(f64, f64)]) -> Result<f64> {
    let (yhat, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    coefficient_of_prediction(&y, &yhat)
}

fn evaluate_method(
    series: &[f64],
    split: usize,
    method: ForecastMethod,
    settings: &ForecastSettings,
) -> Result<MethodForecast> {
    let k = method.k_max();
    let model = match method {
        ForecastMethod::Naive => None,
        _ => Some(fit_gle(&series[..split], &settings.fit_config(k))?.map_model),
    };
    let predict = |hist: &[f64]| match &model {
        None => Ok(hist[hist.len() - 1]),
        Some(m) => predict_one_step(m, hist),
    };
    // in-sample targets series[k+1..split], out-of-sample series[split..]
    let predictions_in = forecast_range(series, k..split - 1, &predict)?;
    let predictions_out = forecast_range(series, split - 1..series.len() - 1, &predict)?;
    Ok(MethodForecast {
        method: method.label(),
        k_max: k,
        rho2_in: Some(score(&predictions_in)?),
        rho2_out: Some(score(&predictions_out)?),
        predictions_in,
        predictions_out,
        error: None,
    })
}

/// Fits each method on the first `floor(alpha n)` points and scores
/// rolling one-step forecasts on the training and test ranges.
pub fn run_forecast_benchmark(
    series: &[f64],
    alpha: f64,
    methods: &[ForecastMethod],
    settings: &ForecastSettings,
) -> Result<ForecastReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    let split = (alpha * series.len() as f64).floor() as usize;
    let max_k = methods.iter().map(|m| m.k_max()).max().unwrap_or(0);
    if split < max_k + 3 || series.len() - split < 2 {
        return Err(Error::TooShort {
            needed: max_k + 3,
            got: split.min(series.len() - split),
        });
    }
    let methods = methods
        .iter()
        .map(|&m| {
            evaluate_method(series, split, m, settings).unwrap_or_else(|e| MethodForecast {
                method: m.label(),
                k_max: m.k_max(),
                rho2_in: None,
                rho2_out: None,
                predictions_in: vec![],
                predictions_out: vec![],
                error: Some(e.to_string()),
            })
        })
        .collect();
    Ok(ForecastReport { alpha, split, methods })
}

pub fn write_acf_csv(values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("lag,acf\n");
    for (k, v) in values.iter().enumerate() {
        out.push_str(&format!("{k},{v}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_density_csv(density: &IncrementDensity, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("grid,density\n");
    match density {
        IncrementDensity::Kde { grid, density, .. } => {
            for (g, d) in grid.iter().zip(density) {
                out.push_str(&format!("{g},{d}\n"));
            }
        }
        IncrementDensity::PointMass { value, .. } => out.push_str(&format!("{value},inf\n")),
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
