use nalgebra::DVector;
use tvswarm::cli::run_experiment;
use tvswarm::graph::Graph;
use tvswarm::metrics::{diagnostics, tracking_max, Thresholds};
use tvswarm::problem::{AgentProblem, BuiltinField, ProblemSet, TimeFn};
use tvswarm::simulator::{paper_scenario, simulate, IntegrationConfig, Scenario, SwarmState};
use tvswarm::BarrierSchedule;

fn short_paper(t_end: f64) -> Scenario {
    let mut s = paper_scenario(3);
    s.integration.t_end = t_end;
    s.integration.sample_stride = 100;
    s
}

#[test]
fn recorded_diagnostics_match_fresh_recomputation() {
    let s = short_paper(0.6);
    let traj = simulate(&s).unwrap();
    assert_eq!(traj.records.len(), 31);
    for r in &traj.records {
        let state = SwarmState { t: r.t, x: r.x.clone() };
        let d = diagnostics(&s.problems, &s.schedule, &s.graph, &state, s.beta, None).unwrap();
        assert!((d.w1 - r.diagnostics.w1).abs() <= 1e-12 * d.w1.max(1e-300), "t = {}", r.t);
        assert_eq!(d.consensus_linf, r.diagnostics.consensus_linf);
        assert_eq!(d.edge_l1, r.diagnostics.edge_l1);
        assert_eq!(d.margin_max, r.diagnostics.margin_max);
        assert!((d.phi_max - r.diagnostics.phi_max).abs() <= 1e-12 * d.phi_max);
    }
}

#[test]
fn weak_gain_breaks_consensus_but_not_feasibility() {
    let mut s = short_paper(3.0);
    s.beta = 0.01;
    let exp = run_experiment(&s, &Thresholds::default()).unwrap();
    assert!(!exp.lemmas.get("consensus").unwrap().pass);
    assert!(exp.lemmas.get("domain_invariance").unwrap().pass);
    assert!(exp.lemmas.get("gradient_sum_decay").unwrap().pass);
}

#[test]
fn single_agent_consensus_is_vacuous() {
    let agent = AgentProblem {
        objective: BuiltinField::quadratic_tracking(nalgebra::DMatrix::identity(1, 1), vec![TimeFn::sinusoid(1.0, 0.0)]).unwrap(),
        constraints: vec![BuiltinField::Affine { a: DVector::from_element(1, 1.0), b: TimeFn::Constant { value: 2.0 } }],
    };
    let s = Scenario {
        graph: Graph::from_edge_list(1, &[]).unwrap(),
        problems: ProblemSet::new(vec![agent]).unwrap(),
        schedule: BarrierSchedule::new(100.0, 0.1).unwrap(),
        beta: 1.0,
        init: SwarmState { t: 0.0, x: vec![DVector::from_element(1, -1.0)] },
        integration: IntegrationConfig::euler(1e-3, 6.0, 100),
        seed: 0,
    };
    let exp = run_experiment(&s, &Thresholds::default()).unwrap();
    assert!(exp.lemmas.all_pass(), "{}", exp.lemmas.table());
    assert_eq!(exp.gain.unwrap().bound, 0.0);
}

#[test]
fn tracking_respects_triangle_bound() {
    let s = short_paper(2.0);
    let exp = run_experiment(&s, &Thresholds::default()).unwrap();
    let last = exp.trajectory.final_record().unwrap();
    let ystar = &exp.oracle.last().unwrap().y_star;
    let t = tracking_max(&last.x, ystar);
    assert_eq!(Some(t), last.diagnostics.tracking_max);
    for xi in &last.x {
        assert!(t <= last.diagnostics.consensus_linf + (xi - ystar).norm() + 1e-12);
    }
}

#[test]
fn seeds_change_only_the_start() {
    let a = paper_scenario(1);
    let b = paper_scenario(2);
    assert_ne!(a.init, b.init);
    assert_eq!(paper_scenario(1).init, a.init);
    for x in &a.init.x {
        assert!((-10.0..=0.0).contains(&x[0]));
        assert_eq!(x[1], x[0] - 2.0);
    }
}
