//! Bayesian Langevin (k = 0) and GLE (k = 3) fits of a weekly mean
//! correlation series, with posterior summaries of drift and memory kernel.
//!
//! Usage: `cargo run --release --example fit_gle -- [series.csv] [steps]`.

use langevin_corr::gle::{fit_gle, GleFitConfig};
use langevin_corr::market_data::{
    compute_returns, local_normalize, mean_correlation, read_series, WindowMode, DEFAULT_NORMALIZATION_WINDOW,
};
use langevin_corr::sde_sim::{simulate_factor_prices, FactorMarketSpec};

fn weekly_series() -> Result<Vec<f64>, Box<dyn std::error::Error>> {
    let spec = FactorMarketSpec {
        n_days: 5000,
        ..FactorMarketSpec::default()
    };
    let (pm, _) = simulate_factor_prices(&spec, 11)?;
    let r = local_normalize(&compute_returns(&pm)?, DEFAULT_NORMALIZATION_WINDOW)?;
    Ok(mean_correlation(&r, 5, 5, WindowMode::Trailing)?.values)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let values = match args.next() {
        Some(p) if p != "-" => read_series(p)?.values,
        _ => weekly_series()?,
    };
    let steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4000);
    println!("series length {}", values.len());

    for k_max in [0, 3] {
        let cfg = GleFitConfig {
            k_max,
            walkers: 64,
            steps,
            burn_in: steps / 2,
            thin: 10,
            seed: 5,
            ..GleFitConfig::default()
        };
        let fit = fit_gle(&values, &cfg)?;
        println!("\nk_max = {k_max}  acceptance {:.2}", fit.acceptance_rate);
        println!("  bin        count   drift mean [95% CI]              D2 mean");
        for b in 0..fit.bin_counts.len() {
            let d = &fit.drift[b];
            println!(
                "  [{:>6.3},{:>6.3}) {:>5}   {:>8.4} [{:>8.4}, {:>8.4}]   {:.5}",
                fit.bin_edges[b],
                fit.bin_edges[b + 1],
                fit.bin_counts[b],
                d.mean,
                d.ci95[0],
                d.ci95[1],
                fit.diffusion[b].mean
            );
        }
        for (k, s) in fit.kernel.iter().enumerate() {
            println!(
                "  K_{} = {:>8.4} [{:>8.4}, {:>8.4}]{}",
                k + 1,
                s.mean,
                s.ci95[0],
                s.ci95[1],
                if s.excludes_zero() { "  *" } else { "" }
            );
        }
    }
    Ok(())
}
