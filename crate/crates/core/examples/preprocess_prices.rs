//! Price panel to mean correlation series, for the weekly and the
//! overlapping 42-day window settings.
//!
//! Usage: `cargo run --release --example preprocess_prices -- [prices.csv]`.
//! Without an argument a synthetic one-factor panel is generated.

use langevin_corr::market_data::{
    compute_returns, load_prices, local_normalize, mean_correlation, write_prices, WindowMode,
    DEFAULT_MAX_MISSING_FRACTION, DEFAULT_NORMALIZATION_WINDOW,
};
use langevin_corr::sde_sim::{simulate_factor_prices, FactorMarketSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let (pm, _) = simulate_factor_prices(&FactorMarketSpec::default(), 7)?;
            let p = std::env::temp_dir().join("langevin_corr_prices.csv");
            write_prices(&pm, &p)?;
            println!("synthetic panel written to {}", p.display());
            p
        }
    };
    let prices = load_prices(&path, DEFAULT_MAX_MISSING_FRACTION)?;
    println!(
        "{} assets x {} dates, dropped {:?}",
        prices.n_assets(),
        prices.n_dates(),
        prices.dropped
    );
    let returns = local_normalize(&compute_returns(&prices)?, DEFAULT_NORMALIZATION_WINDOW)?;

    for (label, tau, shift, mode) in [
        ("weekly", 5, 5, WindowMode::Trailing),
        ("42-day overlapping", 42, 1, WindowMode::Centered),
    ] {
        let s = mean_correlation(&returns, tau, shift, mode)?;
        let n = s.len() as f64;
        let mean = s.values.iter().sum::<f64>() / n;
        let sd = (s.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let (lo, hi) = s
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        println!(
            "{label:<20} n={:>5} skipped={:>3} mean={mean:.4} sd={sd:.4} range=[{lo:.3}, {hi:.3}]",
            s.len(),
            s.skipped.len()
        );
    }
    Ok(())
}
