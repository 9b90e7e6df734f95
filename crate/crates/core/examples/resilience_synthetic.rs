//! Drift-slope tracks of the Markov and two-scale models on the synthetic
//! benchmark with a ramped coupling.
//!
//! Usage: `cargo run --release --example resilience_synthetic -- [steps] [every]`
//! where `every` keeps one window in `every` to shorten the run.

use langevin_corr::resilience::{run_resilience, McmcSettings, ModelTag, ResilienceConfig};
use langevin_corr::sde_sim::{simulate_synthetic, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5000);
    let every: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);

    let cfg = SyntheticSpec::default_config(42);
    let traj = simulate_synthetic(&SyntheticSpec::default(), &cfg)?;

    for tag in [
        ModelTag::Markov,
        ModelTag::NonmarkovSlowHidden,
        ModelTag::NonmarkovFastHidden,
    ] {
        let mut rc = ResilienceConfig::new(tag);
        rc.step_h = cfg.step_h;
        rc.window_shift = 15 * every;
        rc.mcmc = McmcSettings {
            walkers: 50,
            steps,
            burn_in: 200,
            thin: 10,
        };
        let start = std::time::Instant::now();
        let track = run_resilience(&traj.x, &rc)?;
        let valid: Vec<usize> = track.valid().collect();
        let n = valid.len() as f64;
        let neg = valid.iter().filter(|&&i| track.zeta_mean[i] < 0.0).count() as f64 / n;
        let below = valid.iter().filter(|&&i| track.zeta_hi[i] < 0.0).count() as f64 / n;
        let covers = valid
            .iter()
            .filter(|&&i| track.zeta_lo[i] <= 0.0 && track.zeta_hi[i] >= 0.0)
            .count() as f64
            / n;
        let third = valid.len() / 3;
        let avg = |idx: &[usize]| idx.iter().map(|&i| track.noise_mean[i]).sum::<f64>() / idx.len() as f64;
        println!(
            "{:<24} windows={:>4} gaps={} zeta<0: {:.2}  CB<0: {:.2}  CB∋0: {:.2}  noise first/last third: {:.4} / {:.4}  ({:.1}s)",
            tag.as_str(),
            track.len(),
            track.gaps.len(),
            neg,
            below,
            covers,
            avg(&valid[..third]),
            avg(&valid[valid.len() - third..]),
            start.elapsed().as_secs_f64()
        );
        for &i in valid.iter().step_by((valid.len() / 6).max(1)) {
            println!(
                "    center {:>5}: zeta {:>9.3} [{:>9.3}, {:>9.3}]  noise {:.4}",
                track.window_centers[i], track.zeta_mean[i], track.zeta_lo[i], track.zeta_hi[i], track.noise_mean[i]
            );
        }
    }
    Ok(())
}
