//! Euler against RK4 on the benchmark. With `dt = 2e-4` explicit Euler
//! drifts into the barrier of the `cos t` constraint late in the run; RK4
//! and a finer Euler step stay feasible.
//!
//! `cargo run --release --example integrator_comparison`

use tvswarm::simulator::{paper_scenario, simulate, Scheme};

fn main() {
    for (scheme, dt) in [(Scheme::Rk4, 2e-4), (Scheme::Euler, 1e-4), (Scheme::Euler, 2e-4)] {
        let mut s = paper_scenario(0);
        s.integration.scheme = scheme;
        s.integration.dt = dt;
        s.integration.sample_stride = (0.1 / dt).round() as usize;
        let start = std::time::Instant::now();
        match simulate(&s) {
            Ok(t) => {
                let last = t.final_record().unwrap().diagnostics;
                println!(
                    "{scheme:?} dt={dt:e}: ok in {:.1}s, max margin {:.3e}, final consensus {:.3e}, halvings {}",
                    start.elapsed().as_secs_f64(),
                    t.max_margin,
                    last.consensus_linf,
                    t.halvings
                );
            }
            Err(e) => println!("{scheme:?} dt={dt:e}: failed after {:.1}s: {e}", start.elapsed().as_secs_f64()),
        }
    }
}
