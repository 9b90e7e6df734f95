//! Affine-invariant ensemble sampling, posterior summaries and the prior
//! components shared by the Langevin models.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of histogram bins used for marginal MAP estimates.
pub const MAP_HISTOGRAM_BINS: usize = 50;

/// Minimum retained draws accepted by [`summarize`].
pub const MIN_SUMMARY_SAMPLES: usize = 100;

/// An unnormalised log posterior on a box.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize {
        self.bounds().len()
    }

    /// Per-parameter prior range `[lo, hi]`.
    fn bounds(&self) -> &[(f64, f64)];

    /// Log density up to a constant; `-inf` where the density vanishes.
    /// Only called with points inside `bounds`.
    fn log_density(&self, theta: &[f64]) -> f64;

    fn evaluate(&self, theta: &[f64]) -> f64 {
        let inside = theta
            .iter()
            .zip(self.bounds())
            .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi);
        if inside {
            let lp = self.log_density(theta);
            if lp.is_nan() {
                f64::NEG_INFINITY
            } else {
                lp
            }
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Closure-backed [`LogDensity`].
pub struct FnDensity<F> {
    bounds: Vec<(f64, f64)>,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnDensity<F> {
    pub fn new(bounds: Vec<(f64, f64)>, f: F) -> Result<Self> {
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "bounds for parameter {i} are not ordered: [{lo}, {hi}]"
                )));
            }
        }
        Ok(FnDensity { bounds, f })
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> LogDensity for FnDensity<F> {
    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        (self.f)(theta)
    }
}

/// How the walkers are placed before the first step.
#[derive(Debug, Clone, PartialEq)]
pub enum WalkerInit {
    /// Uniform over the (finite) bounds.
    Uniform,
    /// Independent Gaussian jitter around a centre.
    Ball { center: Vec<f64>, scale: Vec<f64> },
    /// Draws from `N(mean, L L^T)` with `L` lower triangular, row-major.
    Gaussian { mean: Vec<f64>, chol: Vec<f64> },
    /// Explicit starting points, one per walker.
    Positions(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub walkers: usize,
    pub steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Stretch-move scale `a`.
    pub stretch_scale: f64,
    pub init: WalkerInit,
}

impl EnsembleConfig {
    pub fn new(walkers: usize, steps: usize, burn_in: usize, thin: usize, seed: u64) -> Self {
        EnsembleConfig {
            walkers,
            steps,
            burn_in,
            thin,
            seed,
            stretch_scale: 2.0,
            init: WalkerInit::Uniform,
        }
    }

    pub fn with_init(mut self, init: WalkerInit) -> Self {
        self.init = init;
        self
    }

    fn kept_per_walker(&self) -> usize {
        self.steps.saturating_sub(self.burn_in) / self.thin.max(1)
    }
}

/// Retained draws of an ensemble run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEnsemble {
    pub dim: usize,
    pub walkers: usize,
    pub steps: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub acceptance_rate: f64,
    pub bounds: Vec<(f64, f64)>,
    #[serde(default)]
    pub param_names: Vec<String>,
    /// Flat `[walker][kept step][dim]`.
    #[serde(skip)]
    pub samples: Vec<f64>,
    /// Flat `[walker][kept step]`.
    #[serde(skip)]
    pub log_probs: Vec<f64>,
}

impl PosteriorEnsemble {
    pub fn kept_per_walker(&self) -> usize {
        self.steps.saturating_sub(self.n_burn) / self.thin.max(1)
    }

    pub fn retained(&self) -> usize {
        self.walkers * self.kept_per_walker()
    }

    pub fn draw(&self, index: usize) -> &[f64] {
        &self.samples[index * self.dim..(index + 1) * self.dim]
    }

    pub fn draws(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.dim)
    }

    /// Retained values of one parameter.
    pub fn marginal(&self, param: usize) -> Vec<f64> {
        self.draws().map(|d| d[param]).collect()
    }

    /// Applies `f` to every retained draw.
    pub fn map_draws(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.draws().map(f).collect()
    }

    /// The retained draw with the highest log posterior.
    pub fn best_draw(&self) -> Option<&[f64]> {
        let (i, _) = self.log_probs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
        Some(self.draw(i))
    }
}

fn walker_rngs(seed: u64, walkers: usize) -> Vec<ChaCha8Rng> {
    (0..walkers)
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(w as u64 + 1);
            rng
        })
        .collect()
}

fn draw_initial<R: Rng>(init: &WalkerInit, bounds: &[(f64, f64)], walker: usize, rng: &mut R) -> Result<Vec<f64>> {
    let dim = bounds.len();
    Ok(match init {
        WalkerInit::Uniform => bounds
            .iter()
            .map(|(lo, hi)| {
                if lo.is_finite() && hi.is_finite() {
                    Ok(lo + (hi - lo) * rng.random::<f64>())
                } else {
                    Err(Error::Sampler("uniform initialisation needs finite bounds".into()))
                }
            })
            .collect::<Result<_>>()?,
        WalkerInit::Ball { center, scale } => center
            .iter()
            .zip(scale)
            .map(|(c, s)| c + s * rng.sample::<f64, _>(StandardNormal))
            .collect(),
        WalkerInit::Gaussian { mean, chol } => {
            let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            (0..dim)
                .map(|i| mean[i] + (0..=i).map(|j| chol[i * dim + j] * z[j]).sum::<f64>())
                .collect()
        }
        WalkerInit::Positions(points) => points
            .get(walker)
            .cloned()
            .ok_or_else(|| Error::Sampler(format!("no starting point for walker {walker}")))?,
    })
}

fn check_init_shape(init: &WalkerInit, dim: usize, walkers: usize) -> Result<()> {
    let ok = match init {
        WalkerInit::Uniform => true,
        WalkerInit::Ball { center, scale } => center.len() == dim && scale.len() == dim,
        WalkerInit::Gaussian { mean, chol } => mean.len() == dim && chol.len() == dim * dim,
        WalkerInit::Positions(p) => p.len() == walkers && p.iter().all(|x| x.len() == dim),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Sampler("initialisation does not match dimension/walkers".into()))
    }
}

const INIT_ATTEMPTS: usize = 1000;

/// Goodman–Weare stretch-move ensemble sampler with the two half-ensembles
/// updated alternately. Walker `w` draws from stream `w + 1` of `seed`, so
/// results do not depend on thread scheduling.
pub fn run_ensemble_mcmc<T: LogDensity + ?Sized>(target: &T, cfg: &EnsembleConfig) -> Result<PosteriorEnsemble> {
    let dim = target.dim();
    let walkers = cfg.walkers;
    if dim == 0 {
        return Err(Error::Sampler("zero-dimensional target".into()));
    }
    if walkers < 2 * dim || !walkers.is_multiple_of(2) {
        return Err(Error::Sampler(format!(
            "need an even number of walkers >= 2*dim = {}, got {walkers}",
            2 * dim
        )));
    }
    if cfg.thin == 0 || cfg.burn_in >= cfg.steps {
        return Err(Error::Sampler(format!(
            "invalid schedule: steps {}, burn-in {}, thin {}",
            cfg.steps, cfg.burn_in, cfg.thin
        )));
    }
    if !(cfg.stretch_scale > 1.0) {
        return Err(Error::Sampler("stretch scale must exceed 1".into()));
    }
    check_init_shape(&cfg.init, dim, walkers)?;

    let bounds = target.bounds().to_vec();
    let mut rngs = walker_rngs(cfg.seed, walkers);
    let mut positions = vec![0.0; walkers * dim];
    let mut lps = vec![f64::NEG_INFINITY; walkers];
    let mut any_valid = false;
    for w in 0..walkers {
        for attempt in 0..INIT_ATTEMPTS {
            let p = draw_initial(&cfg.init, &bounds, w, &mut rngs[w])?;
            let lp = target.evaluate(&p);
            let last = attempt + 1 == INIT_ATTEMPTS || matches!(cfg.init, WalkerInit::Positions(_));
            if lp > f64::NEG_INFINITY || last {
                positions[w * dim..(w + 1) * dim].copy_from_slice(&p);
                lps[w] = lp;
                any_valid |= lp > f64::NEG_INFINITY;
                break;
            }
        }
    }
    if !any_valid {
        return Err(Error::NoValidStart);
    }

    let kept = cfg.kept_per_walker();
    let mut samples = vec![0.0; walkers * kept * dim];
    let mut kept_lps = vec![0.0; walkers * kept];
    let half = walkers / 2;
    let a = cfg.stretch_scale;
    let mut accepted = vec![0u64; walkers];
    let mut record = 0usize;

    for step in 0..cfg.steps {
        for active_half in 0..2 {
            let (lo, hi) = positions.split_at_mut(half * dim);
            let (active, other) = if active_half == 0 { (lo, &*hi) } else { (hi, &*lo) };
            let offset = active_half * half;
            let active_lps = &mut lps[offset..offset + half];
            let active_rngs = &mut rngs[offset..offset + half];
            let active_acc = &mut accepted[offset..offset + half];
            active
                .par_chunks_mut(dim)
                .zip(active_lps.par_iter_mut())
                .zip(active_rngs.par_iter_mut())
                .zip(active_acc.par_iter_mut())
                .for_each_init(
                    || vec![0.0; dim],
                    |proposal, (((x, lp), rng), acc)| {
                        let j = rng.random_range(0..half);
                        let partner = &other[j * dim..(j + 1) * dim];
                        let u: f64 = rng.random();
                        let z = ((a - 1.0) * u + 1.0).powi(2) / a;
                        for ((p, xi), pj) in proposal.iter_mut().zip(x.iter()).zip(partner) {
                            *p = pj + z * (xi - pj);
                        }
                        let lp_new = target.evaluate(proposal);
                        let log_accept = (dim as f64 - 1.0) * z.ln() + lp_new - *lp;
                        let r: f64 = rng.random();
                        if lp_new > f64::NEG_INFINITY && r.ln() < log_accept {
                            x.copy_from_slice(proposal);
                            *lp = lp_new;
                            *acc += 1;
                        }
                    },
                );
        }
        if step >= cfg.burn_in && (step - cfg.burn_in + 1).is_multiple_of(cfg.thin) && record < kept {
            for w in 0..walkers {
                let dst = (w * kept + record) * dim;
                samples[dst..dst + dim].copy_from_slice(&positions[w * dim..(w + 1) * dim]);
                kept_lps[w * kept + record] = lps[w];
            }
            record += 1;
        }
    }

    let total_accepted: u64 = accepted.iter().sum();
    Ok(PosteriorEnsemble {
        dim,
        walkers,
        steps: cfg.steps,
        n_burn: cfg.burn_in,
        thin: cfg.thin,
        seed: cfg.seed,
        acceptance_rate: total_accepted as f64 / (walkers * cfg.steps) as f64,
        bounds,
        param_names: Vec::new(),
        samples,
        log_probs: kept_lps,
    })
}

/// Gaussian walker initialisation from a local quadratic approximation of
/// the log density at `mode` (central finite-difference Hessian). Falls back
/// to a diagonal curvature when the Hessian is not negative definite.
pub fn laplace_init<T: LogDensity + ?Sized>(target: &T, mode: &[f64], inflate: f64) -> WalkerInit {
    let dim = mode.len();
    let bounds = target.bounds();
    let steps: Vec<f64> = mode
        .iter()
        .zip(bounds)
        .map(|(m, (lo, hi))| {
            let span = if (hi - lo).is_finite() { hi - lo } else { 1.0 };
            (1e-4 * m.abs().max(1e-2)).min(1e-3 * span)
        })
        .collect();
    let f0 = target.evaluate(mode);
    let eval_shift = |shifts: &[(usize, f64)]| {
        let mut p = mode.to_vec();
        for &(i, d) in shifts {
            p[i] += d;
        }
        target.evaluate(&p)
    };
    let mut hess = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        let hi = steps[i];
        let fp = eval_shift(&[(i, hi)]);
        let fm = eval_shift(&[(i, -hi)]);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let fpp = eval_shift(&[(i, hi), (j, hj)]);
            let fpm = eval_shift(&[(i, hi), (j, -hj)]);
            let fmp = eval_shift(&[(i, -hi), (j, hj)]);
            let fmm = eval_shift(&[(i, -hi), (j, -hj)]);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let precision = -hess;
    let chol = if precision.iter().all(|v| v.is_finite()) {
        precision.clone().cholesky().and_then(|c| {
            let cov = c.inverse();
            cov.cholesky().map(|l| l.l())
        })
    } else {
        None
    };
    match chol {
        Some(l) => {
            let mut flat = vec![0.0; dim * dim];
            for i in 0..dim {
                for j in 0..=i {
                    flat[i * dim + j] = l[(i, j)] * inflate;
                }
            }
            WalkerInit::Gaussian {
                mean: mode.to_vec(),
                chol: flat,
            }
        }
        None => {
            let scale = (0..dim)
                .map(|i| {
                    let c = precision[(i, i)];
                    let s = if c.is_finite() && c > 0.0 {
                        1.0 / c.sqrt()
                    } else {
                        steps[i] * 10.0
                    };
                    s * inflate
                })
                .collect();
            WalkerInit::Ball {
                center: mode.to_vec(),
                scale,
            }
        }
    }
}

/// Weighted least squares `argmin Σ w_i (y_i - x_i·β)^2` with its
/// `(XᵀWX)^{-1}`. Returns `None` for a singular design.
pub fn weighted_least_squares(rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let p = rows.first()?.len();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for ((row, yi), wi) in rows.iter().zip(y).zip(w) {
        for a in 0..p {
            xty[a] += wi * row[a] * yi;
            for b in 0..=a {
                xtx[(a, b)] += wi * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }
    let chol = xtx.cholesky()?;
    let beta = chol.solve(&xty);
    Some((beta.iter().copied().collect(), chol.inverse()))
}

/// Point estimates and 95% credible interval of one marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub map: f64,
    pub ci95: [f64; 2],
    pub histogram_bins: usize,
}

impl Summary {
    pub fn contains(&self, value: f64) -> bool {
        self.ci95[0] <= value && value <= self.ci95[1]
    }

    pub fn excludes_zero(&self) -> bool {
        !self.contains(0.0)
    }

    pub fn width(&self) -> f64 {
        self.ci95[1] - self.ci95[0]
    }
}

/// Linear-interpolation sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Mode of a marginal: 50-bin histogram, smoothed with a 5-tap binomial
/// filter, peak refined by a parabola through the neighbouring bins.
pub fn histogram_mode(values: &[f64], bins: usize) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(hi > lo) {
        return lo;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1.0;
    }
    const TAPS: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
    let smooth: Vec<f64> = (0..bins)
        .map(|i| {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (k, w) in TAPS.iter().enumerate() {
                let j = i as isize + k as isize - 2;
                if j >= 0 && (j as usize) < bins {
                    acc += w * counts[j as usize];
                    norm += w;
                }
            }
            acc / norm
        })
        .collect();
    let peak = smooth
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut offset = 0.0;
    if peak > 0 && peak + 1 < bins {
        let (l, c, r) = (smooth[peak - 1], smooth[peak], smooth[peak + 1]);
        let denom = l - 2.0 * c + r;
        if denom < 0.0 {
            offset = (0.5 * (l - r) / denom).clamp(-0.5, 0.5);
        }
    }
    lo + (peak as f64 + 0.5 + offset) * width
}

pub fn summarize_values(values: &[f64]) -> Result<Summary> {
    if values.len() < MIN_SUMMARY_SAMPLES {
        return Err(Error::Sampler(format!(
            "need at least {MIN_SUMMARY_SAMPLES} samples, got {}",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        map: histogram_mode(values, MAP_HISTOGRAM_BINS),
        ci95: [quantile_sorted(&sorted, 0.025), quantile_sorted(&sorted, 0.975)],
        histogram_bins: MAP_HISTOGRAM_BINS,
    })
}

/// Mean, marginal MAP and central 95% interval of one parameter.
pub fn summarize(ens: &PosteriorEnsemble, param_index: usize) -> Result<Summary> {
    if param_index >= ens.dim {
        return Err(Error::InvalidArgument(format!(
            "parameter {param_index} out of range for dimension {}",
            ens.dim
        )));
    }
    summarize_values(&ens.marginal(param_index))
}

#[derive(Serialize, Deserialize)]
struct ChainHeader {
    #[serde(flatten)]
    ensemble: PosteriorEnsemble,
    kept_per_walker: usize,
    layout: String,
    byte_order: String,
}

/// Persists retained draws as raw little-endian `f64` (`<stem>.bin`) plus a
/// JSON header (`<stem>.json`).
pub fn write_chains(ens: &PosteriorEnsemble, stem: impl AsRef<Path>) -> Result<()> {
    let stem = stem.as_ref();
    let bin = stem.with_extension("bin");
    let json = stem.with_extension("json");
    let mut w = BufWriter::new(File::create(&bin).map_err(|e| Error::io(&bin, e))?);
    for v in &ens.samples {
        w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(&bin, e))?;
    }
    w.flush().map_err(|e| Error::io(&bin, e))?;
    let header = ChainHeader {
        ensemble: ens.clone(),
        kept_per_walker: ens.kept_per_walker(),
        layout: "[walker][kept_step][dim]".into(),
        byte_order: "little-endian f64".into(),
    };
    let text = serde_json::to_string_pretty(&header)?;
    std::fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))
}

pub fn read_chains(stem: impl AsRef<Path>) -> Result<PosteriorEnsemble> {
    let stem = stem.as_ref();
    let bin = stem.with_extension("bin");
    let json = stem.with_extension("json");
    let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let header: ChainHeader = serde_json::from_str(&text)?;
    let mut ens = header.ensemble;
    let mut bytes = Vec::new();
    BufReader::new(File::open(&bin).map_err(|e| Error::io(&bin, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(&bin, e))?;
    ens.samples = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if ens.samples.len() != ens.retained() * ens.dim {
        return Err(Error::Sampler(format!(
            "chain file holds {} values, header implies {}",
            ens.samples.len(),
            ens.retained() * ens.dim
        )));
    }
    Ok(ens)
}

/// Prior components used by the resilience models.
pub mod priors {
    use serde::{Deserialize, Serialize};

    use crate::error::{Error, Result};

    const LN_2PI: f64 = 1.837_877_066_409_345_3;

    #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
    #[serde(tag = "kind", rename_all = "snake_case")]
    pub enum PriorKind {
        /// Rotation-invariant prior of a straight line on `(offset, slope)`.
        FlatLineInvariant,
        /// `1/θ` on a positive scale parameter.
        JeffreysScale,
        Gaussian {
            mu: f64,
            sigma: f64,
        },
        /// Straight-line invariant prior times a scale prior for the OU parameter.
        OuInvariant,
    }

    /// `-ln 2π - 1.5 ln(1 + slope²)`.
    pub fn flat_line_invariant(slope: f64) -> f64 {
        -LN_2PI - 1.5 * (1.0 + slope * slope).ln()
    }

    pub fn jeffreys_scale(theta: f64) -> f64 {
        if theta > 0.0 {
            -theta.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn gaussian(theta: f64, mu: f64, sigma: f64) -> f64 {
        let z = (theta - mu) / sigma;
        -0.5 * LN_2PI - sigma.ln() - 0.5 * z * z
    }

    /// `θ / (2π (1 + (−1/θ)²)^{3/2})` in log form.
    pub fn ou_invariant(theta5: f64) -> f64 {
        if theta5 > 0.0 {
            theta5.ln() - LN_2PI - 1.5 * (1.0 + 1.0 / (theta5 * theta5)).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Checked evaluation. `args` is `(θ0, θ1)` for the line prior and a
    /// single value otherwise.
    pub fn log_prior(kind: PriorKind, args: &[f64]) -> Result<f64> {
        let arity = if kind == PriorKind::FlatLineInvariant { 2 } else { 1 };
        if args.len() != arity {
            return Err(Error::InvalidArgument(format!(
                "{kind:?} takes {arity} argument(s), got {}",
                args.len()
            )));
        }
        match kind {
            PriorKind::FlatLineInvariant => Ok(flat_line_invariant(args[1])),
            PriorKind::JeffreysScale if args[0] <= 0.0 => Err(Error::InvalidArgument(format!(
                "Jeffreys prior needs a positive value, got {}",
                args[0]
            ))),
            PriorKind::JeffreysScale => Ok(jeffreys_scale(args[0])),
            PriorKind::Gaussian { sigma, .. } if !(sigma > 0.0) => Err(Error::InvalidArgument(format!(
                "Gaussian prior needs sigma > 0, got {sigma}"
            ))),
            PriorKind::Gaussian { mu, sigma } => Ok(gaussian(args[0], mu, sigma)),
            PriorKind::OuInvariant if args[0] <= 0.0 => Err(Error::InvalidArgument(format!(
                "OU prior needs theta5 > 0, got {}",
                args[0]
            ))),
            PriorKind::OuInvariant => Ok(ou_invariant(args[0])),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::priors::*;
    use super::*;

    #[test]
    fn prior_plug_in_values() {
        let line = log_prior(PriorKind::FlatLineInvariant, &[3.0, 0.0]).unwrap();
        assert!((line.exp() - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert_eq!(log_prior(PriorKind::JeffreysScale, &[1.0]).unwrap(), 0.0);
        assert!(log_prior(PriorKind::JeffreysScale, &[0.0]).is_err());
        assert!(log_prior(PriorKind::OuInvariant, &[-1.0]).is_err());
        assert!(log_prior(PriorKind::Gaussian { mu: 0.0, sigma: 0.0 }, &[1.0]).is_err());
        let g = log_prior(PriorKind::Gaussian { mu: 0.0, sigma: 4.0 }, &[0.0]).unwrap();
        assert!((g.exp() - 1.0 / (4.0 * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-15);
        // θ5 = 1: 1 / (2π 2^{3/2})
        let ou = ou_invariant(1.0).exp();
        assert!((ou - 1.0 / (2.0 * std::f64::consts::PI * 2f64.powf(1.5))).abs() < 1e-15);
    }

    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        // log-spaced grid copes with the 1/θ pole near a small lower bound
        let (llo, lhi) = (lo.ln(), hi.ln());
        let xs: Vec<f64> = (0..=n)
            .map(|i| (llo + (lhi - llo) * i as f64 / n as f64).exp())
            .collect();
        xs.windows(2).map(|w| 0.5 * (f(w[0]) + f(w[1])) * (w[1] - w[0])).sum()
    }

    #[test]
    fn priors_integrate_to_finite_values_over_their_ranges() {
        let scale = |f: fn(f64) -> f64| trapezoid(|x| f(x).exp(), 1e-6, 50.0, 200_000);
        let j = scale(jeffreys_scale);
        assert!(j.is_finite() && (j - (50.0f64 / 1e-6).ln()).abs() < 1e-3);
        let o = trapezoid(|x| ou_invariant(x).exp(), 0.01, 2000.0, 200_000);
        assert!(o.is_finite() && o > 0.0);
        let line: f64 = (0..=20_000)
            .map(|i| -50.0 + 100.0 * i as f64 / 20_000.0)
            .map(|s| flat_line_invariant(s).exp() * 100.0 / 20_000.0)
            .sum::<f64>()
            * 100.0;
        assert!(line.is_finite() && line > 0.0);
        let g: f64 = (0..=20_000)
            .map(|i| -50.0 + 100.0 * i as f64 / 20_000.0)
            .map(|x| gaussian(x, 0.0, 8.0).exp() * 100.0 / 20_000.0)
            .sum();
        assert!((g - 1.0).abs() < 1e-3);
    }

    #[test]
    fn quantiles_of_uniform_grid() {
        let values: Vec<f64> = (1..=1000).map(|i| i as f64 / 1000.0).collect();
        let s = summarize_values(&values).unwrap();
        assert!((s.ci95[0] - 0.025).abs() < 2e-3);
        assert!((s.ci95[1] - 0.975).abs() < 2e-3);
        assert!((s.mean - 0.5005).abs() < 1e-12);
    }

    #[test]
    fn degenerate_marginal() {
        let s = summarize_values(&vec![2.5; 400]).unwrap();
        assert_eq!((s.mean, s.map, s.ci95), (2.5, 2.5, [2.5, 2.5]));
        assert!(summarize_values(&[1.0; 10]).is_err());
    }

    #[test]
    fn normal_mode_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let s = summarize_values(&xs).unwrap();
        assert!(s.map.abs() < 0.1, "map {}", s.map);
        assert!((s.ci95[0] + 1.96).abs() < 0.05 && (s.ci95[1] - 1.96).abs() < 0.05);
    }

    #[test]
    fn sampler_rejects_bad_settings() {
        let t = FnDensity::new(vec![(-1.0, 1.0); 3], |_| 0.0).unwrap();
        assert!(run_ensemble_mcmc(&t, &EnsembleConfig::new(4, 10, 0, 1, 0)).is_err());
        assert!(run_ensemble_mcmc(&t, &EnsembleConfig::new(7, 10, 0, 1, 0)).is_err());
        assert!(run_ensemble_mcmc(&t, &EnsembleConfig::new(8, 10, 10, 1, 0)).is_err());
        let never = FnDensity::new(vec![(-1.0, 1.0); 1], |_| f64::NEG_INFINITY).unwrap();
        assert!(matches!(
            run_ensemble_mcmc(&never, &EnsembleConfig::new(4, 10, 0, 1, 0)),
            Err(Error::NoValidStart)
        ));
        assert!(FnDensity::new(vec![(1.0, 1.0)], |_| 0.0).is_err());
    }

    #[test]
    fn retained_count_matches_schedule() {
        let t = FnDensity::new(vec![(-5.0, 5.0); 2], |x: &[f64]| -0.5 * (x[0] * x[0] + x[1] * x[1])).unwrap();
        for (steps, burn, thin) in [(100, 10, 7), (50, 0, 1), (31, 30, 1), (64, 3, 64)] {
            let ens = run_ensemble_mcmc(&t, &EnsembleConfig::new(6, steps, burn, thin, 1)).unwrap();
            assert_eq!(ens.retained(), 6 * ((steps - burn) / thin));
            assert_eq!(ens.samples.len(), ens.retained() * 2);
            assert!(ens.acceptance_rate > 0.0 && ens.acceptance_rate < 1.0);
        }
    }

    #[test]
    fn invalid_proposals_never_accepted() {
        // half-plane support inside the box
        let t = FnDensity::new(vec![(-3.0, 3.0); 2], |x: &[f64]| {
            if x[0] + x[1] < 0.0 {
                f64::NEG_INFINITY
            } else {
                0.0
            }
        })
        .unwrap();
        let ens = run_ensemble_mcmc(&t, &EnsembleConfig::new(10, 500, 0, 1, 3)).unwrap();
        assert!(ens.draws().all(|d| d[0] + d[1] >= 0.0));
    }

    #[test]
    fn sampler_is_seed_deterministic() {
        let t = FnDensity::new(vec![(-5.0, 5.0); 2], |x: &[f64]| -0.5 * (x[0] * x[0] + x[1] * x[1])).unwrap();
        let cfg = EnsembleConfig::new(8, 200, 20, 2, 99);
        let a = run_ensemble_mcmc(&t, &cfg).unwrap();
        let b = run_ensemble_mcmc(&t, &cfg).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = run_ensemble_mcmc(&t, &EnsembleConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn chains_round_trip_through_disk() {
        let t = FnDensity::new(vec![(-5.0, 5.0); 2], |x: &[f64]| -0.5 * x[0] * x[0] - x[1].abs()).unwrap();
        let mut ens = run_ensemble_mcmc(&t, &EnsembleConfig::new(4, 40, 4, 3, 5)).unwrap();
        ens.param_names = vec!["a".into(), "b".into()];
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("chains");
        write_chains(&ens, &stem).unwrap();
        let back = read_chains(&stem).unwrap();
        assert_eq!(back.samples, ens.samples);
        assert_eq!(back.param_names, ens.param_names);
        assert_eq!(back.retained(), ens.retained());
    }

    #[test]
    fn laplace_init_recovers_gaussian_covariance() {
        // correlated Gaussian with covariance [[1, 0.8], [0.8, 1]]
        let t = FnDensity::new(vec![(-50.0, 50.0); 2], |x: &[f64]| {
            let det = 1.0 - 0.64;
            -0.5 * (x[0] * x[0] - 1.6 * x[0] * x[1] + x[1] * x[1]) / det
        })
        .unwrap();
        match laplace_init(&t, &[0.0, 0.0], 1.0) {
            WalkerInit::Gaussian { chol, .. } => {
                // L L^T = covariance
                let c00 = chol[0] * chol[0];
                let c10 = chol[2] * chol[0];
                let c11 = chol[2] * chol[2] + chol[3] * chol[3];
                assert!((c00 - 1.0).abs() < 1e-4 && (c10 - 0.8).abs() < 1e-4 && (c11 - 1.0).abs() < 1e-4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn weighted_least_squares_line() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 + 0.5 * i as f64).collect();
        let (beta, _) = weighted_least_squares(&rows, &y, &[1.0; 10]).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-12 && (beta[1] - 0.5).abs() < 1e-12);
        assert!(weighted_least_squares(&[vec![1.0, 1.0], vec![2.0, 2.0]], &[1.0, 2.0], &[1.0; 2]).is_none());
    }
}
