//! Euler-Maruyama paths of an OU process, a GLE with memory and the
//! two-scale synthetic benchmark, written as CSV to the temp directory.

use langevin_corr::forecast::acf;
use langevin_corr::gle::GleModel;
use langevin_corr::sde_sim::{
    simulate_gle, simulate_langevin, simulate_langevin_ensemble, simulate_synthetic, write_trajectory, SimConfig,
    SyntheticSpec,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir();

    let ou = simulate_langevin(|x| -x, |_| 0.25, &SimConfig::new(0.1, 100_000, 1, 0.0))?;
    let var = ou.x.iter().map(|v| v * v).sum::<f64>() / ou.x.len() as f64;
    println!("OU: sample variance {var:.4} (continuous 0.125, Euler 0.1316)");
    write_trajectory(&ou, dir.join("ou.csv"))?;

    let paths = simulate_langevin_ensemble(|x| -x, |_| 0.25, &SimConfig::new(0.1, 50, 1, 2.0), 1000)?;
    let mean_end = paths.iter().map(|p| p[50]).sum::<f64>() / paths.len() as f64;
    println!(
        "OU ensemble: mean at t=5 {mean_end:.4} (exact {:.4})",
        2.0 * (-5.0f64).exp()
    );

    let gle = GleModel {
        bin_edges: vec![f64::NEG_INFINITY, f64::INFINITY],
        drift_per_bin: vec![0.0],
        diffusion_per_bin: vec![1.0],
        kernel: vec![-0.3, 0.1, 0.05],
        step_h: 1.0,
    };
    let g = simulate_gle(&gle, &SimConfig::new(1.0, 50_000, 2, 0.0))?;
    let r = acf(&g.x, 5)?;
    println!(
        "GLE: acf lags 1..5 = {:?}",
        r[1..].iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
    );
    write_trajectory(&g, dir.join("gle.csv"))?;

    let cfg = SyntheticSpec::default_config(42);
    let s = simulate_synthetic(&SyntheticSpec::default(), &cfg)?;
    println!(
        "synthetic: {} steps, x from {:.3} to {:.3}",
        s.x.len() - 1,
        s.x[0],
        s.x[s.x.len() - 1]
    );
    write_trajectory(&s, dir.join("synthetic.csv"))?;
    println!("trajectories written to {}", dir.display());
    Ok(())
}
