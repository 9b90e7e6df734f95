//! Binned generalised Langevin equation: likelihood, Bayesian fit and
//! memory aggregation.
//!
//! The model for a series sampled every `h` is the Euler–Maruyama transition
//!
//! ```text
//! x[t+1] | past ~ N( x[t] + h (D1[b(x[t])] + Σ_k K[k] x[t-k]),  h D2[b(x[t])] )
//! ```
//!
//! where `b(x)` is the bin of `x`. The first `k_max` transitions are
//! conditioned on, not modelled. The same discretisation drives
//! [`crate::sde_sim::simulate_gle`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bayes::{
    self, laplace_init, run_ensemble_mcmc, summarize_values, EnsembleConfig, FnDensity, PosteriorEnsemble, Summary,
};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_PLATEAU_TOL: f64 = 0.1;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinMode {
    EqualWidth,
    EqualCount,
}

impl std::str::FromStr for BinMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal_width" | "equal-width" => Ok(BinMode::EqualWidth),
            "equal_count" | "equal-count" => Ok(BinMode::EqualCount),
            other => Err(Error::InvalidArgument(format!("unknown bin mode `{other}`"))),
        }
    }
}

/// Index of the bin holding `x`; values beyond the outer edges use the edge bins.
pub fn bin_index(edges: &[f64], x: f64) -> usize {
    let n_bins = edges.len() - 1;
    edges.partition_point(|e| *e <= x).saturating_sub(1).min(n_bins - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    pub edges: Vec<f64>,
    pub assignment: Vec<usize>,
}

impl Binning {
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.edges.len() - 1];
        for &b in &self.assignment {
            c[b] += 1;
        }
        c
    }
}

pub fn bin_series(values: &[f64], n_bins: usize, mode: BinMode) -> Result<Binning> {
    if n_bins < 2 {
        return Err(Error::InvalidArgument(format!("n_bins {n_bins} < 2")));
    }
    if values.len() < n_bins {
        return Err(Error::TooShort {
            needed: n_bins,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("series contains non-finite values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if !(hi > lo) {
        return Err(Error::ConstantSeries);
    }
    let edges: Vec<f64> = match mode {
        BinMode::EqualWidth => (0..=n_bins)
            .map(|i| {
                if i == n_bins {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / n_bins as f64
                }
            })
            .collect(),
        BinMode::EqualCount => {
            let n = sorted.len();
            let mut edges = vec![lo];
            for i in 1..n_bins {
                // first rank belonging to bin i
                let r = (i * n).div_ceil(n_bins);
                edges.push(0.5 * (sorted[r - 1] + sorted[r]));
            }
            edges.push(hi);
            edges
        }
    };
    if edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "bin edges are not strictly increasing (too many tied values)".into(),
        ));
    }
    let assignment = values.iter().map(|&x| bin_index(&edges, x)).collect();
    Ok(Binning { edges, assignment })
}

/// Binned drift/diffusion and a discrete memory kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GleModel {
    pub bin_edges: Vec<f64>,
    pub drift_per_bin: Vec<f64>,
    pub diffusion_per_bin: Vec<f64>,
    /// `kernel[k-1]` multiplies `x[t-k]`.
    pub kernel: Vec<f64>,
    pub step_h: f64,
}

impl GleModel {
    pub fn n_bins(&self) -> usize {
        self.drift_per_bin.len()
    }

    pub fn k_max(&self) -> usize {
        self.kernel.len()
    }

    pub fn bin_of(&self, x: f64) -> usize {
        bin_index(&self.bin_edges, x)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.drift_per_bin.len();
        if n == 0 || self.bin_edges.len() != n + 1 || self.diffusion_per_bin.len() != n {
            return Err(Error::InvalidArgument("inconsistent GLE model dimensions".into()));
        }
        if self.bin_edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("bin edges must be strictly increasing".into()));
        }
        if let Some(d) = self.diffusion_per_bin.iter().find(|d| !(**d > 0.0)) {
            return Err(Error::InvalidArgument(format!("diffusion {d} must be > 0")));
        }
        if !(self.step_h > 0.0) {
            return Err(Error::InvalidArgument("step_h must be > 0".into()));
        }
        Ok(())
    }

    /// Conditional mean of `x[t+1]` given `history` ending at `x[t]`.
    pub fn conditional_mean(&self, history: &[f64]) -> Result<f64> {
        let k = self.k_max();
        if history.len() < k + 1 {
            return Err(Error::TooShort {
                needed: k + 1,
                got: history.len(),
            });
        }
        let t = history.len() - 1;
        let x = history[t];
        let memory: f64 = self
            .kernel
            .iter()
            .enumerate()
            .map(|(j, c)| c * history[t - 1 - j])
            .sum();
        Ok(x + self.step_h * (self.drift_per_bin[self.bin_of(x)] + memory))
    }
}

/// Transition-by-transition log likelihood of `values` under `model`.
pub fn gle_log_likelihood(model: &GleModel, values: &[f64]) -> Result<f64> {
    model.validate()?;
    let k = model.k_max();
    if values.len() < k + 2 {
        return Err(Error::TooShort {
            needed: k + 2,
            got: values.len(),
        });
    }
    let h = model.step_h;
    let mut total = 0.0;
    for t in k..values.len() - 1 {
        let mean = model.conditional_mean(&values[..=t])?;
        let var = h * model.diffusion_per_bin[model.bin_of(values[t])];
        let r = values[t + 1] - mean;
        total += -0.5 * (LN_2PI + var.ln()) - 0.5 * r * r / var;
    }
    Ok(total)
}

/// Per-bin sufficient statistics of the transition likelihood; evaluation
/// cost is independent of the series length.
#[derive(Debug, Clone)]
pub struct GleStats {
    pub step_h: f64,
    pub k_max: usize,
    count: Vec<f64>,
    s_dd: Vec<f64>,
    s_d: Vec<f64>,
    s_l: Vec<Vec<f64>>,
    s_dl: Vec<Vec<f64>>,
    /// Row-major `k × k` per bin.
    s_ll: Vec<Vec<f64>>,
}

impl GleStats {
    pub fn new(values: &[f64], edges: &[f64], k_max: usize, step_h: f64) -> Result<Self> {
        if values.len() < k_max + 2 {
            return Err(Error::TooShort {
                needed: k_max + 2,
                got: values.len(),
            });
        }
        let n_bins = edges.len() - 1;
        let k = k_max;
        let mut st = GleStats {
            step_h,
            k_max,
            count: vec![0.0; n_bins],
            s_dd: vec![0.0; n_bins],
            s_d: vec![0.0; n_bins],
            s_l: vec![vec![0.0; k]; n_bins],
            s_dl: vec![vec![0.0; k]; n_bins],
            s_ll: vec![vec![0.0; k * k]; n_bins],
        };
        let mut lags = vec![0.0; k];
        for t in k..values.len() - 1 {
            let b = bin_index(edges, values[t]);
            let dx = values[t + 1] - values[t];
            for (j, l) in lags.iter_mut().enumerate() {
                *l = values[t - 1 - j];
            }
            st.count[b] += 1.0;
            st.s_dd[b] += dx * dx;
            st.s_d[b] += dx;
            for i in 0..k {
                st.s_l[b][i] += lags[i];
                st.s_dl[b][i] += dx * lags[i];
                for j in 0..=i {
                    st.s_ll[b][i * k + j] += lags[i] * lags[j];
                }
            }
        }
        for b in 0..n_bins {
            for i in 0..k {
                for j in 0..i {
                    st.s_ll[b][j * k + i] = st.s_ll[b][i * k + j];
                }
            }
        }
        Ok(st)
    }

    pub fn n_bins(&self) -> usize {
        self.count.len()
    }

    pub fn counts(&self) -> &[f64] {
        &self.count
    }

    /// Residual sum of squares in bin `b` for drift `d` and kernel `kernel`.
    fn rss(&self, b: usize, d: f64, kernel: &[f64]) -> f64 {
        let h = self.step_h;
        let k = self.k_max;
        let mut k_sl = 0.0;
        let mut k_sdl = 0.0;
        let mut quad = 0.0;
        let sll = &self.s_ll[b];
        for i in 0..k {
            k_sl += kernel[i] * self.s_l[b][i];
            k_sdl += kernel[i] * self.s_dl[b][i];
            let row = &sll[i * k..(i + 1) * k];
            let mut acc = 0.0;
            for j in 0..k {
                acc += row[j] * kernel[j];
            }
            quad += kernel[i] * acc;
        }
        let rss = self.s_dd[b] - 2.0 * h * (d * self.s_d[b] + k_sdl)
            + h * h * (d * d * self.count[b] + 2.0 * d * k_sl + quad);
        rss.max(0.0)
    }

    pub fn log_likelihood(&self, drift: &[f64], diffusion: &[f64], kernel: &[f64]) -> f64 {
        let h = self.step_h;
        let mut total = 0.0;
        for b in 0..self.n_bins() {
            if self.count[b] == 0.0 {
                continue;
            }
            let var = h * diffusion[b];
            total += -0.5 * self.count[b] * (LN_2PI + var.ln()) - 0.5 * self.rss(b, drift[b], kernel) / var;
        }
        total
    }
}

/// Prior ranges and sampler settings for [`fit_gle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GleFitConfig {
    pub n_bins: usize,
    pub bin_mode: BinMode,
    pub k_max: usize,
    pub step_h: f64,
    pub drift_bounds: (f64, f64),
    pub kernel_bounds: (f64, f64),
    /// Range of D2; sampled as `ln D2` with a flat (scale) prior.
    pub diffusion_bounds: (f64, f64),
    pub walkers: usize,
    pub steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for GleFitConfig {
    fn default() -> Self {
        GleFitConfig {
            n_bins: DEFAULT_BINS,
            bin_mode: BinMode::EqualWidth,
            k_max: 6,
            step_h: 1.0,
            drift_bounds: (-50.0, 50.0),
            kernel_bounds: (-50.0, 50.0),
            diffusion_bounds: (1e-12, 50.0),
            walkers: 100,
            steps: 100_000,
            burn_in: 450,
            thin: 450,
            seed: 0,
        }
    }
}

impl GleFitConfig {
    pub fn dim(&self) -> usize {
        2 * self.n_bins + self.k_max
    }

    /// Parameter names in sampling order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.n_bins).map(|b| format!("drift[{b}]")).collect();
        names.extend((0..self.n_bins).map(|b| format!("ln_diffusion[{b}]")));
        names.extend((1..=self.k_max).map(|k| format!("kernel[{k}]")));
        names
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_bins < 2 {
            problems.push(format!("n_bins = {} must be >= 2", self.n_bins));
        }
        if !(self.step_h > 0.0) {
            problems.push(format!("step_h = {} must be > 0", self.step_h));
        }
        for (name, (lo, hi)) in [
            ("drift_bounds", self.drift_bounds),
            ("kernel_bounds", self.kernel_bounds),
            ("diffusion_bounds", self.diffusion_bounds),
        ] {
            if !(lo < hi) {
                problems.push(format!("{name} = [{lo}, {hi}] is not ordered"));
            }
        }
        if !(self.diffusion_bounds.0 > 0.0) {
            problems.push("diffusion_bounds lower limit must be > 0".into());
        }
        if self.walkers < 2 * self.dim() || self.walkers % 2 == 1 {
            problems.push(format!(
                "walkers = {} must be even and >= 2 * dim = {}",
                self.walkers,
                2 * self.dim()
            ));
        }
        if self.thin == 0 || self.burn_in >= self.steps {
            problems.push(format!(
                "steps/burn_in/thin = {}/{}/{} leave no samples",
                self.steps, self.burn_in, self.thin
            ));
        } else if self.walkers * ((self.steps - self.burn_in) / self.thin) < crate::bayes::MIN_SUMMARY_SAMPLES {
            problems.push(format!(
                "walkers/steps/burn_in/thin = {}/{}/{}/{} retain fewer than {} samples",
                self.walkers,
                self.steps,
                self.burn_in,
                self.thin,
                crate::bayes::MIN_SUMMARY_SAMPLES
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// Result of a Bayesian GLE fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GleFit {
    pub config: GleFitConfig,
    pub bin_edges: Vec<f64>,
    pub bin_counts: Vec<usize>,
    /// Built from the per-coefficient marginal MAP values.
    pub map_model: GleModel,
    /// Built from posterior means.
    pub mean_model: GleModel,
    pub drift: Vec<Summary>,
    pub diffusion: Vec<Summary>,
    pub kernel: Vec<Summary>,
    pub acceptance_rate: f64,
    #[serde(skip)]
    pub ensemble: PosteriorEnsemble,
}

impl GleFit {
    /// Posterior means of the kernel coefficients.
    pub fn kernel_means(&self) -> Vec<f64> {
        self.kernel.iter().map(|s| s.mean).collect()
    }

    pub fn memory_aggregation(&self, plateau_tol: f64) -> MemoryAggregation {
        memory_aggregation(&self.kernel_means(), plateau_tol)
    }

    /// Writes the fit summary as JSON.
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Maximum-likelihood start: iteratively reweighted least squares of the
/// increments on bin indicators and lagged values.
fn least_squares_start(values: &[f64], edges: &[f64], cfg: &GleFitConfig) -> Vec<f64> {
    let k = cfg.k_max;
    let nb = edges.len() - 1;
    let h = cfg.step_h;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut bins = Vec::new();
    for t in k..values.len() - 1 {
        let b = bin_index(edges, values[t]);
        let mut row = vec![0.0; nb + k];
        row[b] = 1.0;
        for j in 0..k {
            row[nb + j] = values[t - 1 - j];
        }
        rows.push(row);
        y.push((values[t + 1] - values[t]) / h);
        bins.push(b);
    }
    let occupied: Vec<bool> = (0..nb).map(|b| bins.contains(&b)).collect();
    // drop empty-bin columns to keep the design non-singular
    let keep: Vec<usize> = (0..nb + k).filter(|&c| c >= nb || occupied[c]).collect();
    let reduced: Vec<Vec<f64>> = rows.iter().map(|r| keep.iter().map(|&c| r[c]).collect()).collect();
    let mut weights = vec![1.0; y.len()];
    let mut beta_full = vec![0.0; nb + k];
    let mut diffusion = vec![1.0; nb];
    for _ in 0..4 {
        let Some((beta, _)) = bayes::weighted_least_squares(&reduced, &y, &weights) else {
            break;
        };
        for (i, &c) in keep.iter().enumerate() {
            beta_full[c] = beta[i];
        }
        let mut rss = vec![0.0; nb];
        let mut cnt = vec![0.0; nb];
        for ((row, yi), &b) in rows.iter().zip(&y).zip(&bins) {
            let fit: f64 = row.iter().zip(&beta_full).map(|(a, c)| a * c).sum();
            // residual of the increment, variance h D2
            let r = h * (yi - fit);
            rss[b] += r * r;
            cnt[b] += 1.0;
        }
        let mut known: Vec<f64> = (0..nb)
            .filter(|&b| cnt[b] >= 2.0 && rss[b] > 0.0)
            .map(|b| rss[b] / (cnt[b] * h))
            .collect();
        known.sort_by(f64::total_cmp);
        let typical = known.get(known.len() / 2).copied().unwrap_or(1.0);
        for b in 0..nb {
            diffusion[b] = if cnt[b] >= 2.0 && rss[b] > 0.0 {
                (rss[b] / (cnt[b] * h)).max(1e-3 * typical)
            } else {
                typical
            };
        }
        for (w, &b) in weights.iter_mut().zip(&bins) {
            *w = 1.0 / diffusion[b];
        }
    }
    let (dlo, dhi) = cfg.diffusion_bounds;
    let (mlo, mhi) = cfg.drift_bounds;
    let (klo, khi) = cfg.kernel_bounds;
    let mut start = Vec::with_capacity(2 * nb + k);
    start.extend(beta_full[..nb].iter().map(|d| d.clamp(mlo, mhi)));
    start.extend(diffusion.iter().map(|d| d.clamp(dlo * 1.001, dhi * 0.999).ln()));
    start.extend(beta_full[nb..].iter().map(|c| c.clamp(klo, khi)));
    start
}

/// Samples the posterior of the binned GLE coefficients (flat priors inside
/// the configured ranges, scale prior on the diffusion) and summarises it.
pub fn fit_gle(values: &[f64], cfg: &GleFitConfig) -> Result<GleFit> {
    cfg.validate()?;
    if values.len() < cfg.k_max + 2 {
        return Err(Error::TooShort {
            needed: cfg.k_max + 2,
            got: values.len(),
        });
    }
    let binning = bin_series(values, cfg.n_bins, cfg.bin_mode)?;
    fit_gle_with_edges(values, &binning.edges, cfg)
}

/// [`fit_gle`] on caller-supplied bin edges; `cfg.n_bins` and `cfg.bin_mode`
/// are ignored. Values outside the edges fall into the edge bins.
pub fn fit_gle_with_edges(values: &[f64], edges: &[f64], cfg: &GleFitConfig) -> Result<GleFit> {
    let mut cfg = cfg.clone();
    cfg.n_bins = edges.len().saturating_sub(1);
    cfg.validate()?;
    if values.len() < cfg.k_max + 2 {
        return Err(Error::TooShort {
            needed: cfg.k_max + 2,
            got: values.len(),
        });
    }
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("bin edges must be strictly ascending".into()));
    }
    let binning = Binning {
        edges: edges.to_vec(),
        assignment: values.iter().map(|&x| bin_index(edges, x)).collect(),
    };
    let cfg = &cfg;
    let stats = GleStats::new(values, &binning.edges, cfg.k_max, cfg.step_h)?;
    let nb = cfg.n_bins;
    let k = cfg.k_max;

    let mut bounds = vec![cfg.drift_bounds; nb];
    bounds.extend(std::iter::repeat_n(
        (cfg.diffusion_bounds.0.ln(), cfg.diffusion_bounds.1.ln()),
        nb,
    ));
    bounds.extend(std::iter::repeat_n(cfg.kernel_bounds, k));
    let target = FnDensity::new(bounds, |theta: &[f64]| {
        let mut diffusion = [0.0f64; 64];
        let diffusion: &mut [f64] = if nb <= 64 {
            &mut diffusion[..nb]
        } else {
            return stats.log_likelihood(
                &theta[..nb],
                &theta[nb..2 * nb].iter().map(|l| l.exp()).collect::<Vec<_>>(),
                &theta[2 * nb..],
            );
        };
        for (d, l) in diffusion.iter_mut().zip(&theta[nb..2 * nb]) {
            *d = l.exp();
        }
        stats.log_likelihood(&theta[..nb], diffusion, &theta[2 * nb..])
    })?;

    let start = least_squares_start(values, &binning.edges, cfg);
    let init = laplace_init(&target, &start, 1.0);
    let ens_cfg = EnsembleConfig::new(cfg.walkers, cfg.steps, cfg.burn_in, cfg.thin, cfg.seed).with_init(init);
    let mut ensemble = run_ensemble_mcmc(&target, &ens_cfg)?;
    ensemble.param_names = cfg.param_names();

    let drift = (0..nb)
        .map(|b| summarize_values(&ensemble.marginal(b)))
        .collect::<Result<Vec<_>>>()?;
    let diffusion = (0..nb)
        .map(|b| summarize_values(&ensemble.map_draws(|d| d[nb + b].exp())))
        .collect::<Result<Vec<_>>>()?;
    let kernel = (0..k)
        .map(|j| summarize_values(&ensemble.marginal(2 * nb + j)))
        .collect::<Result<Vec<_>>>()?;

    let build = |pick: fn(&Summary) -> f64| GleModel {
        bin_edges: binning.edges.clone(),
        drift_per_bin: drift.iter().map(pick).collect(),
        diffusion_per_bin: diffusion.iter().map(pick).collect(),
        kernel: kernel.iter().map(pick).collect(),
        step_h: cfg.step_h,
    };
    Ok(GleFit {
        config: cfg.clone(),
        bin_counts: binning.counts(),
        map_model: build(|s| s.map),
        mean_model: build(|s| s.mean),
        bin_edges: binning.edges.clone(),
        drift,
        diffusion,
        kernel,
        acceptance_rate: ensemble.acceptance_rate,
        ensemble,
    })
}

/// Cumulative memory strength and its plateau.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryAggregation {
    pub k_values: Vec<usize>,
    pub cumulative: Vec<f64>,
    pub plateau_estimate: Option<usize>,
}

/// `K_k = Σ_{q<=k} kernel[q]`; the plateau is the smallest `k0` after which
/// every `K_k` stays within `tol * (max K - min K)` of `K_kmax`.
pub fn memory_aggregation(kernel_means: &[f64], plateau_tol: f64) -> MemoryAggregation {
    let k_max = kernel_means.len();
    let cumulative: Vec<f64> = kernel_means
        .iter()
        .scan(0.0, |acc, k| {
            *acc += k;
            Some(*acc)
        })
        .collect();
    let plateau_estimate = match cumulative.last() {
        None => None,
        Some(&last) => {
            let (lo, hi) = cumulative
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            let spread = hi - lo;
            if spread == 0.0 {
                Some(1)
            } else {
                let band = plateau_tol * spread;
                // scan backwards for the first lag leaving the band
                let k0 = cumulative
                    .iter()
                    .rposition(|v| (v - last).abs() > band)
                    .map_or(1, |i| i + 2);
                (k0 < k_max).then_some(k0)
            }
        }
    };
    MemoryAggregation {
        k_values: (1..=k_max).collect(),
        cumulative,
        plateau_estimate,
    }
}
