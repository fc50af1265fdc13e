//! End-to-end acceptance run. Prints one PASS/FAIL line per check and exits
//! non-zero if any fails.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use tvswarm::audit::{derivative_audit, family_showcase, AuditSettings};
use tvswarm::cli::{cmd_run, run_experiment, Experiment, RunArgs, ScenarioArgs, TRAJECTORY_FILE};
use tvswarm::config::{Overrides, ScenarioConfig};
use tvswarm::graph::Graph;
use tvswarm::metrics::{default_w1_window, w1_decay_fit};
use tvswarm::oracle::{oracle_grid, time_grid};
use tvswarm::problem::{paper_benchmark, AgentProblem, BuiltinField, ProblemSet, TimeFn};
use tvswarm::report::trajectory_csv;
use tvswarm::simulator::{simulate, simulate_many, IntegrationConfig, Scenario, SwarmState, Trajectory};
use tvswarm::BarrierSchedule;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
}

fn paper_config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/paper.json")
}

fn paper_config() -> ScenarioConfig {
    ScenarioConfig::load(&paper_config_path()).expect("shipped config loads")
}

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = f();
    let o = Outcome { name, pass, detail, seconds: start.elapsed().as_secs_f64() };
    println!("{} {:<22} ({:.1}s) {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.seconds, o.detail);
    o
}

fn derivatives() -> (bool, String) {
    let schedule = BarrierSchedule::new(100.0, 0.1).unwrap();
    let settings = AuditSettings { samples: 100, step: 1e-5, seed: 11, ..Default::default() };
    let (_, benchmark) = paper_benchmark();
    let a = derivative_audit(&benchmark, &schedule, &settings).unwrap();
    let b = derivative_audit(&family_showcase(), &schedule, &settings).unwrap();
    (
        a.max_error < 1e-6 && b.max_error < 1e-6,
        format!("max rel err benchmark {:.2e}, all families {:.2e} (< 1e-6, 100 samples/agent)", a.max_error, b.max_error),
    )
}

fn unconstrained_trio() -> Scenario {
    let tracking = |q: [f64; 4], a: TimeFn, b: TimeFn| AgentProblem {
        objective: BuiltinField::quadratic_tracking(DMatrix::from_row_slice(2, 2, &q), vec![a, b]).unwrap(),
        constraints: vec![],
    };
    let problems = ProblemSet::new(vec![
        tracking([1.0, 0.0, 0.0, 2.0], TimeFn::sinusoid(1.0, 0.0), TimeFn::Constant { value: 1.0 }),
        tracking([2.0, 0.3, 0.3, 1.0], TimeFn::Linear { offset: 0.0, slope: 0.5 }, TimeFn::sinusoid(2.0, 0.5)),
        tracking([3.0, 0.0, 0.0, 1.0], TimeFn::Constant { value: -2.0 }, TimeFn::sinusoid(-1.0, 1.0)),
    ])
    .unwrap();
    let v = |a: f64, b: f64| DVector::from_column_slice(&[a, b]);
    Scenario {
        graph: Graph::from_edge_list(3, &[(0, 1), (1, 2)]).unwrap(),
        problems,
        schedule: BarrierSchedule::new(100.0, 0.1).unwrap(),
        beta: 10.0,
        init: SwarmState { t: 0.0, x: vec![v(4.0, -3.0), v(-2.0, 5.0), v(1.0, 1.0)] },
        integration: IntegrationConfig::euler(2e-4, 5.0, 50),
        seed: 0,
    }
}

fn w1_decay(paper: &Trajectory, trio: &Trajectory) -> (bool, String) {
    let fit = |t: &Trajectory| w1_decay_fit(t, default_w1_window(t));
    let (a, b) = (fit(paper), fit(trio));
    let ok = |r: &Result<f64, _>| matches!(r, Ok(s) if (s + 2.0_f64).abs() <= 0.1);
    (ok(&a) && ok(&b), format!("slope paper {a:?}, 3-agent unconstrained {b:?} (target -2 +/- 0.1)"))
}

fn reproduction(exp: &Experiment) -> (bool, String) {
    let late: Vec<_> = exp.trajectory.records.iter().filter(|r| r.t >= 15.0 - 1e-9).collect();
    let tracking = late.iter().map(|r| r.diagnostics.tracking_max.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    let consensus = late.iter().map(|r| r.diagnostics.consensus_linf).fold(0.0, f64::max);
    let margin = exp.trajectory.records.iter().map(|r| r.diagnostics.margin_max).fold(f64::NEG_INFINITY, f64::max);
    let worst_t = late
        .iter()
        .max_by(|a, b| a.diagnostics.consensus_linf.total_cmp(&b.diagnostics.consensus_linf))
        .map_or(f64::NAN, |r| r.t);
    let (a, b, c) = (tracking <= 0.1, consensus <= 1e-2, margin < 0.0);
    (
        a && b && c && exp.oracle_failures.is_empty(),
        format!(
            "t in [15,20]: max tracking {tracking:.3e} (<= 0.1: {a}), max consensus {consensus:.3e} at t={worst_t:.1} (<= 1e-2: {b}); max recorded margin {margin:.3e} (< 0: {c})"
        ),
    )
}

fn feasibility_seeds(sgn_log: &mut Vec<f64>) -> (bool, String) {
    let base = paper_config();
    let scenarios: Vec<Scenario> = (1..=10)
        .map(|seed| {
            let mut c = base.clone();
            c.apply(&Overrides { seed: Some(seed), ..Default::default() });
            c.to_scenario().unwrap()
        })
        .collect();
    let runs = simulate_many(&scenarios);
    let failures = runs.iter().filter(|r| r.is_err()).count();
    let worst = runs.iter().flatten().map(|t| t.max_margin).fold(f64::NEG_INFINITY, f64::max);
    sgn_log.extend(runs.iter().flatten().map(|t| t.max_sgn_residual));
    (failures == 0 && worst < 0.0, format!("10 seeds: {failures} step failures, worst margin over all steps {worst:.3e}"))
}

fn oracle_consistency() -> (bool, String) {
    let (_, problems) = paper_benchmark();
    let schedule = BarrierSchedule::new(100.0, 0.1).unwrap();
    let times = time_grid(20.0, 0.1);
    let rows = oracle_grid(&problems, &schedule, &times);
    let mut failures = 0;
    let mut violations = 0;
    let mut worst_slack = f64::INFINITY;
    for row in &rows {
        match row {
            Ok(r) => {
                let slack = r.bound() + 1e-6 - r.objective_gap.abs();
                worst_slack = worst_slack.min(slack);
                if slack < 0.0 {
                    violations += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    let first = rows[0].as_ref().ok();
    let y0 = first.map_or(f64::INFINITY, |r| r.y_star.norm());
    let mass = first
        .and_then(|r| r.families.iter().find(|f| f.members.iter().all(|&(i, _)| i >= 6)))
        .map_or(f64::NAN, |f| f.total_multiplier);
    (
        failures == 0 && violations == 0 && y0 <= 1e-4 && (mass - 234.0).abs() <= 0.5,
        format!(
            "{} samples, {failures} unsolved, {violations} bound violations (min slack {worst_slack:.3e}); |y*(0)| = {y0:.2e}; multiplier mass on y <= t family {mass:.4}",
            rows.len()
        ),
    )
}

fn dt_convergence(reference: &Experiment, sgn_log: &mut Vec<f64>) -> (bool, String) {
    let thresholds = paper_config().thresholds;
    let run = |dt: f64| {
        let mut c = paper_config();
        c.apply(&Overrides { dt: Some(dt), ..Default::default() });
        run_experiment(&c.to_scenario().unwrap(), &thresholds)
    };
    let coarse = run(4e-4);
    let fine = run(1e-4);
    let (Ok(coarse), Ok(fine)) = (coarse, fine) else {
        return (false, "a refinement run failed".into());
    };
    sgn_log.extend([coarse.trajectory.max_sgn_residual, fine.trajectory.max_sgn_residual]);
    let final_err = |e: &Experiment| e.trajectory.final_record().and_then(|r| r.diagnostics.tracking_max).unwrap_or(f64::NAN);
    let errs = [final_err(&coarse), final_err(reference), final_err(&fine)];
    let changes = [(errs[1] - errs[0]).abs() / errs[0], (errs[2] - errs[1]).abs() / errs[1]];
    let passes = |e: &Experiment| e.lemmas.checks.iter().map(|c| c.pass).collect::<Vec<_>>();
    let same = passes(&coarse) == passes(reference) && passes(reference) == passes(&fine);
    let summary = |e: &Experiment| {
        e.lemmas.checks.iter().filter(|c| !c.pass).map(|c| c.lemma.as_str()).collect::<Vec<_>>().join("+")
    };
    (
        changes.iter().all(|&c| c < 0.2) && same,
        format!(
            "t_end tracking error dt=4e-4/2e-4/1e-4: {:.3e}/{:.3e}/{:.3e}, relative change {:.0}%/{:.0}% (< 20%); failing checks [{}]/[{}]/[{}]",
            errs[0],
            errs[1],
            errs[2],
            100.0 * changes[0],
            100.0 * changes[1],
            summary(&coarse),
            summary(reference),
            summary(&fine)
        ),
    )
}

fn determinism(reference: &Trajectory) -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let args = RunArgs {
        scenario: ScenarioArgs { config: paper_config_path(), dt: None, t_end: None, seed: None, scheme: None, epsilon: None },
        out: dir.path().to_path_buf(),
    };
    let _ = cmd_run(&args).expect("run completes");
    let written = std::fs::read(dir.path().join(TRAJECTORY_FILE)).unwrap();
    let in_memory = trajectory_csv(reference);
    (written == in_memory.as_bytes(), format!("trajectory CSV {} bytes, identical across two runs: {}", written.len(), written == in_memory.as_bytes()))
}

fn main() {
    let mut outcomes = Vec::new();
    outcomes.push(timed("derivatives", derivatives));

    let config = paper_config();
    let start = Instant::now();
    let paper = run_experiment(&config.to_scenario().unwrap(), &config.thresholds).expect("paper scenario runs");
    let trio = simulate(&unconstrained_trio()).expect("3-agent scenario runs");
    println!("     (paper scenario + oracle: {:.1}s)", start.elapsed().as_secs_f64());

    outcomes.push(timed("w1_decay", || w1_decay(&paper.trajectory, &trio)));
    outcomes.push(timed("paper_reproduction", || reproduction(&paper)));
    let mut sgn = vec![paper.trajectory.max_sgn_residual, trio.max_sgn_residual];
    outcomes.push(timed("feasibility_seeds", || feasibility_seeds(&mut sgn)));
    outcomes.push(timed("oracle_consistency", oracle_consistency));
    outcomes.push(timed("dt_convergence", || dt_convergence(&paper, &mut sgn)));
    outcomes.push(timed("sgn_cancellation", || {
        // plus a run whose agents start in exact agreement
        let mut same = unconstrained_trio();
        same.init.x = vec![DVector::from_column_slice(&[0.5, 0.5]); 3];
        same.integration.t_end = 1.0;
        sgn.push(simulate(&same).unwrap().max_sgn_residual);
        let worst = sgn.iter().copied().fold(0.0, f64::max);
        (worst == 0.0, format!("max |sum of switching vectors| over every step of {} runs: {worst:e}", sgn.len()))
    }));
    outcomes.push(timed("determinism", || determinism(&paper.trajectory)));

    let failed: Vec<_> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name).collect();
    println!("{} of {} checks passed", outcomes.len() - failed.len(), outcomes.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
