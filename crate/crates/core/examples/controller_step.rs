//! One evaluation of the distributed control law on the benchmark and one
//! guarded Euler step.

use tvswarm::controller::{evaluate_agent, Switching};
use tvswarm::simulator::{paper_scenario, step};

fn main() {
    let s = paper_scenario(0);
    let state = &s.init;
    let m = s.problems.dim();
    let mut total = nalgebra::DVector::zeros(m);
    println!("{:>5} {:>22} {:>22} {:>22}", "agent", "x", "phi", "u");
    for i in 0..state.x.len() {
        let nbrs = s.graph.neighbors(i).unwrap().iter().map(|&j| &state.x[j]);
        let e = evaluate_agent(s.problems.agent(i), &s.schedule, s.beta, &state.x[i], nbrs, state.t, Switching::Sign).unwrap();
        total += &e.control.sgn_vector;
        let fmt = |v: &nalgebra::DVector<f64>| format!("({:8.3}, {:8.3})", v[0], v[1]);
        println!("{:>5} {:>22} {:>22} {:>22}", i + 1, fmt(&state.x[i]), fmt(&e.control.phi), fmt(&e.control.u));
    }
    println!("network sum of switching vectors: {:?}", total.as_slice());
    let next = step(&s, state, 1e-3).unwrap();
    println!("after dt = 1e-3: agent 1 at ({:.4}, {:.4})", next.x[0][0], next.x[0][1]);
}
