//! Centralized reference optima of the benchmark: the barrier homotopy,
//! multipliers grouped by constraint, and the suboptimality bounds.

use tvswarm::oracle::{kkt_optimum, optimum_report};
use tvswarm::problem::paper_benchmark;
use tvswarm::BarrierSchedule;

fn main() {
    let (_, problems) = paper_benchmark();
    let schedule = BarrierSchedule::new(100.0, 0.1).unwrap();
    for t in [0.0, 5.0, 20.0] {
        let kkt = kkt_optimum(&problems, t, None).unwrap();
        println!("t = {t}: y* = ({:.6}, {:.6}), stationarity residual {:.2e}", kkt.y_star[0], kkt.y_star[1], kkt.stationarity_residual);
        for (rho, f) in &kkt.ladder {
            println!("    rho {rho:>8.0e}: sum f = {f:.9}");
        }
        for fam in &kkt.families {
            println!("    {} on {} agents: multiplier mass {:.4}", fam.constraint, fam.members.len(), fam.total_multiplier);
        }
        let r = optimum_report(&problems, &schedule, t, None, true).unwrap();
        let y_hat = r.y_hat.as_ref().unwrap();
        println!(
            "    barrier optimum ({:.6}, {:.6}), relaxed optimum ({:.6}, {:.6})",
            r.y_tilde[0], r.y_tilde[1], y_hat[0], y_hat[1]
        );
        println!("    objective gap {:.3e}, bounds {:.3e} + {:.3e}", r.objective_gap, r.barrier_bound, r.kkt_bound);
    }
}
