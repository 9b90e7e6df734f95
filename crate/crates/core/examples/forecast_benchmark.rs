//! One-step forecast comparison of the naive, Langevin and GLE predictors
//! over several training fractions.
//!
//! Usage: `cargo run --release --example forecast_benchmark -- [series.csv]`.

use langevin_corr::forecast::{run_forecast_benchmark, ForecastMethod, ForecastSettings, DEFAULT_ALPHAS};
use langevin_corr::market_data::read_series;
use langevin_corr::sde_sim::{simulate_langevin, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let values = match std::env::args().nth(1) {
        Some(p) => read_series(p)?.values,
        // Mean-reverting stand-in with a mild nonlinearity.
        None => {
            simulate_langevin(
                |x| -0.3 * x - 0.2 * x * x * x,
                |_| 0.05,
                &SimConfig::new(1.0, 1500, 3, 0.0),
            )?
            .x
        }
    };
    let methods = ForecastMethod::defaults();
    let settings = ForecastSettings::default();
    println!("{:<6} {:>6} {:>10} {:>10}", "alpha", "method", "rho2_in", "rho2_out");
    for alpha in DEFAULT_ALPHAS {
        let report = run_forecast_benchmark(&values, alpha, &methods, &settings)?;
        for m in &report.methods {
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
            println!(
                "{alpha:<6} {:>6} {:>10} {:>10}",
                m.method,
                fmt(m.rho2_in),
                fmt(m.rho2_out)
            );
            if let Some(e) = &m.error {
                println!("       error: {e}");
            }
        }
    }
    Ok(())
}
