//! The run-level checks on a small network with a strong and a weak
//! consensus gain.

use nalgebra::{DMatrix, DVector};
use tvswarm::cli::run_experiment;
use tvswarm::graph::Graph;
use tvswarm::metrics::Thresholds;
use tvswarm::problem::{AgentProblem, BuiltinField, ProblemSet, TimeFn};
use tvswarm::simulator::{IntegrationConfig, Scenario, SwarmState};
use tvswarm::BarrierSchedule;

fn scenario(beta: f64) -> Scenario {
    let agent = |c: f64, phase: f64, cap: f64| AgentProblem {
        objective: BuiltinField::quadratic_tracking(DMatrix::identity(2, 2), vec![TimeFn::Constant { value: c }, TimeFn::sinusoid(1.0, phase)]).unwrap(),
        constraints: vec![BuiltinField::QuadraticNorm { dim: 2, b: TimeFn::Constant { value: cap } }],
    };
    Scenario {
        graph: Graph::from_edge_list(4, &[(0, 1), (1, 2), (2, 3)]).unwrap(),
        problems: ProblemSet::new(vec![agent(1.0, 0.0, 9.0), agent(-1.0, 1.0, 16.0), agent(2.0, 2.0, 9.0), agent(0.0, 3.0, 25.0)]).unwrap(),
        schedule: BarrierSchedule::new(50.0, 0.2).unwrap(),
        beta,
        init: SwarmState { t: 0.0, x: [(1.0, 1.0), (-1.0, 0.5), (0.0, -2.0), (2.0, 0.0)].iter().map(|&(a, b)| DVector::from_column_slice(&[a, b])).collect() },
        integration: IntegrationConfig::euler(1e-4, 10.0, 1000),
        seed: 0,
    }
}

fn main() {
    for beta in [10.0, 0.05] {
        let exp = run_experiment(&scenario(beta), &Thresholds::default()).unwrap();
        println!("beta = {beta}");
        print!("{}", exp.lemmas.table());
        if let Some(g) = exp.gain {
            println!("sufficient gain from this run: beta > {:.3e} ({})\n", g.bound, if g.pass { "met" } else { "not met" });
        }
    }
}
