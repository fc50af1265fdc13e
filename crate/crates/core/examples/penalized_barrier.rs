//! The penalized objective of one benchmark agent as the barrier sharpens.

use nalgebra::DVector;
use tvswarm::barrier::{in_domain, penalized_jet};
use tvswarm::problem::{paper_benchmark, ScalarField};
use tvswarm::BarrierSchedule;

fn main() {
    let (_, problems) = paper_benchmark();
    let agent = problems.agent(0);
    let schedule = BarrierSchedule::new(100.0, 0.1).unwrap();
    let t = 0.0;
    println!("agent 1, constraint y − x − cos t ≤ 0, t = {t}");
    println!("{:>10} {:>12} {:>12} {:>12} {:>12}", "y", "g", "weight", "L", "λmax(∇²L)");
    for y in [-2.0, -0.5, 0.5, 0.9, 0.99, 1.0] {
        let x = DVector::from_column_slice(&[0.0, y]);
        let g = agent.constraints[0].jet(&x, t).value;
        if !in_domain(agent, &schedule, &x, t).inside {
            println!("{y:>10} {g:>12.4} outside the barrier domain");
            continue;
        }
        let jet = penalized_jet(agent, &schedule, &x, t).unwrap();
        let lmax = jet.hessian.symmetric_eigenvalues().max();
        println!("{y:>10} {g:>12.4} {:>12.4} {:>12.6} {:>12.4e}", jet.weights[0], jet.value, lmax);
    }
    for t in [0.0, 10.0, 20.0, 300.0] {
        let r = schedule.rho(t);
        println!("rho({t}) = {:.6e}, d rho/dt = {:.6e}", r.rho, r.rho_dot);
    }
}
