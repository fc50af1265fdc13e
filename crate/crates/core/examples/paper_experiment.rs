//! The 12-agent benchmark end to end: simulate, solve the oracle at every
//! sample, evaluate the checks and write the artifacts.
//!
//! `cargo run --release --example paper_experiment -- [out_dir] [seed]`

use tvswarm::cli::run_experiment;
use tvswarm::config::{paper_config, Overrides};
use tvswarm::report::{diagnostics_csv, trajectory_csv, trajectory_svg};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "paper_results".into());
    let seed = std::env::args().nth(2).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let mut config = paper_config(0);
    config.apply(&Overrides { seed: Some(seed), ..Default::default() });
    let scenario = config.to_scenario()?;
    let exp = run_experiment(&scenario, &config.thresholds)?;

    println!("{:>5} {:>11} {:>11} {:>11} {:>11}", "t", "W1", "consensus", "tracking", "max margin");
    for r in exp.trajectory.records.iter().step_by(10) {
        let d = r.diagnostics;
        println!("{:>5.1} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e}", d.t, d.w1, d.consensus_linf, d.tracking_max.unwrap_or(f64::NAN), d.margin_max);
    }
    print!("{}", exp.lemmas.table());
    if let Some(g) = &exp.gain {
        println!("gain audit: phi_bar {:.3}, min eig of inverse Hessian {:.3e}, required beta > {:.3e}, beta = {}", g.phi_bar, g.min_inverse_hessian_eigenvalue, g.bound, g.beta);
    }

    std::fs::create_dir_all(&out)?;
    std::fs::write(format!("{out}/trajectory.csv"), trajectory_csv(&exp.trajectory))?;
    std::fs::write(format!("{out}/diagnostics.csv"), diagnostics_csv(&exp.trajectory))?;
    std::fs::write(format!("{out}/trajectory.svg"), trajectory_svg(&exp.trajectory, &exp.oracle))?;
    println!("artifacts in {out}/");
    Ok(())
}
