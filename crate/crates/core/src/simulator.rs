//! Fixed-step integration of `ẋ_i = u_i` under the distributed controller.
//!
//! Steps are feasibility guarded: a step that would take any agent out of
//! its barrier domain is retried with half the step, at most
//! [`MAX_HALVINGS`] times per outer step.
//!
//! RK4 is available but the vector field is discontinuous across the
//! switching surfaces, so its nominal order does not hold there. Euler is the
//! default.

use nalgebra::{DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::{in_domain, BarrierSchedule};
use crate::controller::{evaluate_agent, AgentEvaluation, ControlError, Switching};
use crate::graph::Graph;
use crate::metrics::DiagnosticsRecord;
use crate::problem::{paper_benchmark, ProblemSet, ScalarField};

pub const MAX_HALVINGS: u32 = 20;

/// Agent and constraint indices are 0-based; messages print them 1-based.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("graph is not connected; the agent network must be connected")]
    Disconnected,
    #[error("graph has {graph} nodes but {problems} agent problems were given")]
    AgentCount { graph: usize, problems: usize },
    #[error("initial state of agent {} is not strictly feasible: constraint {} has g(x(0), 0) = {value} (must be < 0)", .agent + 1, .constraint + 1)]
    InfeasibleInit { agent: usize, constraint: usize, value: f64 },
    #[error("initial state has {found} agents or wrong dimension (expected {n} agents in R^{m})")]
    InitShape { n: usize, m: usize, found: usize },
    #[error("beta must be positive and finite, got {0}")]
    Beta(f64),
    #[error("invalid integration settings: {0}")]
    Integration(String),
}

/// Agent and constraint indices are 0-based; messages print them 1-based.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("step failed at t = {t}: agent {} constraint {} margin {margin:e} after {MAX_HALVINGS} halvings", .agent + 1, .constraint + 1)]
    Step { t: f64, agent: usize, constraint: usize, margin: f64 },
    #[error("control evaluation failed at t = {t} for agent {}: {source}", .agent + 1)]
    Control { t: f64, agent: usize, source: ControlError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    Rk4,
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(format!("unknown scheme `{other}` (expected euler or rk4)")),
        }
    }
}

fn default_scheme() -> Scheme {
    Scheme::Euler
}

fn default_dt() -> f64 {
    2e-4
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    /// 0 keeps the exact signum; ε > 0 replaces it with `clamp(z/ε, −1, 1)`.
    #[serde(default)]
    pub smoothing_epsilon: f64,
}

impl IntegrationConfig {
    pub fn euler(dt: f64, t_end: f64, sample_stride: usize) -> Self {
        Self { scheme: Scheme::Euler, dt, t_end, sample_stride, smoothing_epsilon: 0.0 }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::Integration(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if self.sample_stride == 0 {
            return bad("sample_stride must be at least 1".into());
        }
        if !(self.smoothing_epsilon >= 0.0 && self.smoothing_epsilon.is_finite()) {
            return bad(format!("smoothing_epsilon must be >= 0, got {}", self.smoothing_epsilon));
        }
        Ok(())
    }

    /// Number of outer steps; the last one is shortened when `t_end` is not a
    /// multiple of `dt`.
    pub fn step_count(&self) -> usize {
        let raw = self.t_end / self.dt;
        let rounded = raw.round();
        if (raw - rounded).abs() <= 1e-9 * rounded.max(1.0) {
            rounded as usize
        } else {
            raw.ceil() as usize
        }
    }

    fn time_of(&self, k: usize) -> f64 {
        if k >= self.step_count() {
            self.t_end
        } else {
            k as f64 * self.dt
        }
    }
}

/// Stacked agent states at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub t: f64,
    pub x: Vec<DVector<f64>>,
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: Graph,
    pub problems: ProblemSet,
    pub schedule: BarrierSchedule,
    pub beta: f64,
    pub init: SwarmState,
    pub integration: IntegrationConfig,
    pub seed: u64,
}

impl Scenario {
    /// Checks connectivity, shapes, gains and strict initial feasibility
    /// `g_i(x_i(0), 0) < 0`.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let n = self.graph.node_count();
        if self.problems.len() != n {
            return Err(ScenarioError::AgentCount { graph: n, problems: self.problems.len() });
        }
        if !self.graph.is_connected() {
            return Err(ScenarioError::Disconnected);
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(ScenarioError::Beta(self.beta));
        }
        self.integration.validate()?;
        let m = self.problems.dim();
        if self.init.x.len() != n || self.init.x.iter().any(|x| x.len() != m) {
            return Err(ScenarioError::InitShape { n, m, found: self.init.x.len() });
        }
        for (agent, (problem, x)) in self.problems.agents().iter().zip(&self.init.x).enumerate() {
            for (constraint, g) in problem.constraints.iter().enumerate() {
                let value = g.jet(x, self.init.t).value;
                if !(value < 0.0) {
                    return Err(ScenarioError::InfeasibleInit { agent, constraint, value });
                }
            }
        }
        Ok(())
    }

    pub fn switching(&self) -> Switching {
        Switching::from_epsilon(self.integration.smoothing_epsilon)
    }
}

/// Draws `s ~ U[low, high]` per agent and sets `x_i = s·direction + offset`.
pub fn random_line_init(n: usize, low: f64, high: f64, direction: &[f64], offset: &[f64], seed: u64) -> SwarmState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..n)
        .map(|_| {
            let s: f64 = rng.random_range(low..=high);
            DVector::from_iterator(direction.len(), direction.iter().zip(offset).map(|(d, o)| s * d + o))
        })
        .collect();
    SwarmState { t: 0.0, x }
}

/// The 12-agent benchmark with `β = 25`, `ρ(t) = 100·e^{0.1t}`,
/// `x(0) ~ U[−10, 0]`, `y(0) = x(0) − 2`, RK4 with `dt = 2e-4` to `t = 20`,
/// sampled every 0.1 s.
///
/// Explicit Euler at this step drifts into the barrier of the `cos t`
/// constraint near `t ≈ 19.8` (its `O(dt²)` error in `g` outpaces the
/// restoring term once `ρ` is large); RK4 and Euler with `dt ≤ 1e-4` do not.
pub fn paper_scenario(seed: u64) -> Scenario {
    let (graph, problems) = paper_benchmark();
    Scenario {
        init: random_line_init(graph.node_count(), -10.0, 0.0, &[1.0, 1.0], &[0.0, -2.0], seed),
        graph,
        problems,
        schedule: BarrierSchedule::new(100.0, 0.1).expect("valid schedule"),
        beta: 25.0,
        integration: IntegrationConfig { scheme: Scheme::Rk4, ..IntegrationConfig::euler(2e-4, 20.0, 500) },
        seed,
    }
}

/// One sample of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub phi: Vec<DVector<f64>>,
    /// `g_ij(x_i, t) − 1/ρ(t)` per agent and constraint.
    pub margins: Vec<Vec<f64>>,
    /// (λ_min, λ_max) of each agent's penalized Hessian.
    pub hessian_extrema: Vec<(f64, f64)>,
    /// Network-wide Σ_i Σ_j switch(x_i − x_j).
    pub sgn_sum: DVector<f64>,
    pub diagnostics: DiagnosticsRecord,
    pub assumption_sups: AssumptionSample,
}

/// Largest time-partials seen across agents at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct AssumptionSample {
    pub objective_time_gradient: f64,
    pub constraint_time_gradient: f64,
    pub constraint_time_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub steps: usize,
    pub halvings: usize,
    /// Largest |component| of the network-wide switching sum over every
    /// control evaluation of the run.
    pub max_sgn_residual: f64,
    /// Largest `g − 1/ρ` over every accepted state.
    pub max_margin: f64,
}

impl Trajectory {
    pub fn final_record(&self) -> Option<&Record> {
        self.records.last()
    }
}

fn evaluate_swarm(scenario: &Scenario, state: &SwarmState) -> Result<Vec<AgentEvaluation>, SimError> {
    let switching = scenario.switching();
    (0..state.x.len())
        .map(|i| {
            let neighbors = scenario.graph.neighbors(i).expect("agent index in range");
            evaluate_agent(
                scenario.problems.agent(i),
                &scenario.schedule,
                scenario.beta,
                &state.x[i],
                neighbors.iter().map(|&j| &state.x[j]),
                state.t,
                switching,
            )
            .map_err(|source| SimError::Control { t: state.t, agent: i, source })
        })
        .collect()
}

fn sgn_sum(evals: &[AgentEvaluation], m: usize) -> DVector<f64> {
    evals.iter().fold(DVector::zeros(m), |acc, e| acc + &e.control.sgn_vector)
}

/// The worst domain violation among all agents at `state`, if any.
fn first_violation(scenario: &Scenario, state: &SwarmState) -> (Option<(usize, usize, f64)>, f64) {
    let mut worst = f64::NEG_INFINITY;
    let mut violation = None;
    for (i, x) in state.x.iter().enumerate() {
        let check = in_domain(scenario.problems.agent(i), &scenario.schedule, x, state.t);
        for (j, &m) in check.margins.iter().enumerate() {
            worst = worst.max(m);
            if !(m < 0.0) && violation.is_none() {
                violation = Some((i, j, m));
            }
        }
    }
    (violation, worst)
}

fn axpy_states(base: &[DVector<f64>], h: f64, dir: &[DVector<f64>]) -> Vec<DVector<f64>> {
    base.iter().zip(dir).map(|(x, d)| x + d * h).collect()
}

fn velocities(evals: &[AgentEvaluation]) -> Vec<DVector<f64>> {
    evals.iter().map(|e| e.control.u.clone()).collect()
}

/// One trial substep of length `h`; `Err` carries the failing agent.
fn try_substep(
    scenario: &Scenario,
    state: &SwarmState,
    k1: &[DVector<f64>],
    h: f64,
    t_next: f64,
) -> Result<(SwarmState, f64), (usize, usize, f64)> {
    let x = match scenario.integration.scheme {
        Scheme::Euler => axpy_states(&state.x, h, k1),
        Scheme::Rk4 => {
            let stage = |x: Vec<DVector<f64>>, t: f64| -> Result<Vec<DVector<f64>>, (usize, usize, f64)> {
                let s = SwarmState { t, x };
                if let (Some(v), _) = first_violation(scenario, &s) {
                    return Err(v);
                }
                evaluate_swarm(scenario, &s).map(|e| velocities(&e)).map_err(|e| match e {
                    SimError::Control { agent, .. } => (agent, 0, f64::NAN),
                    _ => (0, 0, f64::NAN),
                })
            };
            let k2 = stage(axpy_states(&state.x, h / 2.0, k1), state.t + h / 2.0)?;
            let k3 = stage(axpy_states(&state.x, h / 2.0, &k2), state.t + h / 2.0)?;
            let k4 = stage(axpy_states(&state.x, h, &k3), t_next)?;
            state
                .x
                .iter()
                .enumerate()
                .map(|(i, x)| x + (&k1[i] + &k2[i] * 2.0 + &k3[i] * 2.0 + &k4[i]) * (h / 6.0))
                .collect()
        }
    };
    let next = SwarmState { t: t_next, x };
    match first_violation(scenario, &next) {
        (Some(v), _) => Err(v),
        (None, worst) => Ok((next, worst)),
    }
}

struct Advance {
    state: SwarmState,
    halvings: u32,
    max_margin: f64,
    max_sgn_residual: f64,
}

/// Advances `state` to `t_target`, reusing `evals` computed at `state`.
fn advance(scenario: &Scenario, state: &SwarmState, evals: &[AgentEvaluation], t_target: f64) -> Result<Advance, SimError> {
    let m = scenario.problems.dim();
    let mut current = state.clone();
    let mut k1 = velocities(evals);
    let mut h = t_target - state.t;
    let mut halvings = 0;
    let mut max_margin = f64::NEG_INFINITY;
    let mut max_sgn_residual = 0.0_f64;
    loop {
        let remaining = t_target - current.t;
        let last = h >= remaining;
        let h_try = if last { remaining } else { h };
        let t_next = if last { t_target } else { current.t + h_try };
        match try_substep(scenario, &current, &k1, h_try, t_next) {
            Ok((next, worst)) => {
                max_margin = max_margin.max(worst);
                current = next;
                if last {
                    break;
                }
                let e = evaluate_swarm(scenario, &current)?;
                max_sgn_residual = max_sgn_residual.max(sgn_sum(&e, m).amax());
                k1 = velocities(&e);
            }
            Err((agent, constraint, margin)) => {
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    return Err(SimError::Step { t: current.t, agent, constraint, margin });
                }
                h = h_try / 2.0;
            }
        }
    }
    Ok(Advance { state: current, halvings, max_margin, max_sgn_residual })
}

/// Advances the swarm by `dt` with the scenario's scheme and feasibility guard.
pub fn step(scenario: &Scenario, state: &SwarmState, dt: f64) -> Result<SwarmState, SimError> {
    let evals = evaluate_swarm(scenario, state)?;
    advance(scenario, state, &evals, state.t + dt).map(|a| a.state)
}

fn make_record(scenario: &Scenario, state: &SwarmState, evals: &[AgentEvaluation]) -> Record {
    let m = scenario.problems.dim();
    let rho = scenario.schedule.rho(state.t).rho;
    let mut margins = Vec::with_capacity(state.x.len());
    let mut sups = AssumptionSample::default();
    for (i, x) in state.x.iter().enumerate() {
        let agent = scenario.problems.agent(i);
        let f = agent.objective.jet(x, state.t);
        sups.objective_time_gradient = sups.objective_time_gradient.max(f.time_gradient.norm());
        let mut agent_margins = Vec::with_capacity(agent.constraints.len());
        for c in &agent.constraints {
            let g = c.jet(x, state.t);
            sups.constraint_time_gradient = sups.constraint_time_gradient.max(g.time_gradient.norm());
            sups.constraint_time_value = sups.constraint_time_value.max(g.time_value.abs());
            agent_margins.push(g.value - 1.0 / rho);
        }
        margins.push(agent_margins);
    }
    let hessian_extrema = evals
        .iter()
        .map(|e| {
            let eig = SymmetricEigen::new(e.jet.hessian.clone()).eigenvalues;
            (eig.min(), eig.max())
        })
        .collect();
    let grad_sum = evals.iter().fold(DVector::zeros(m), |acc, e| acc + &e.jet.gradient);
    let phi: Vec<_> = evals.iter().map(|e| e.control.phi.clone()).collect();
    let diagnostics = DiagnosticsRecord {
        t: state.t,
        w1: 0.5 * grad_sum.norm_squared(),
        consensus_linf: crate::metrics::consensus_linf(&state.x),
        edge_l1: crate::metrics::edge_l1(&scenario.graph, &state.x),
        phi_max: phi.iter().map(|p| p.norm()).fold(0.0, f64::max),
        margin_max: margins.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max),
        tracking_max: None,
    };
    Record {
        t: state.t,
        x: state.x.clone(),
        u: velocities(evals),
        phi,
        margins,
        hessian_extrema,
        sgn_sum: sgn_sum(evals, m),
        diagnostics,
        assumption_sups: sups,
    }
}

/// Integrates the scenario from its initial state to `t_end`.
pub fn simulate(scenario: &Scenario) -> Result<Trajectory, SimError> {
    scenario.validate()?;
    let cfg = scenario.integration;
    let m = scenario.problems.dim();
    let n_steps = cfg.step_count();
    let mut state = scenario.init.clone();
    let mut records = Vec::with_capacity(n_steps / cfg.sample_stride + 2);
    let mut halvings = 0usize;
    let mut max_margin = first_violation(scenario, &state).1;
    let mut max_sgn_residual = 0.0_f64;
    for k in 0..=n_steps {
        let evals = evaluate_swarm(scenario, &state)?;
        max_sgn_residual = max_sgn_residual.max(sgn_sum(&evals, m).amax());
        if k % cfg.sample_stride == 0 || k == n_steps {
            records.push(make_record(scenario, &state, &evals));
        }
        if k == n_steps {
            break;
        }
        let adv = advance(scenario, &state, &evals, cfg.time_of(k + 1))?;
        halvings += adv.halvings as usize;
        max_margin = max_margin.max(adv.max_margin);
        max_sgn_residual = max_sgn_residual.max(adv.max_sgn_residual);
        state = adv.state;
    }
    Ok(Trajectory { records, steps: n_steps, halvings, max_sgn_residual, max_margin })
}

/// Runs independent scenarios on the rayon pool, preserving input order.
pub fn simulate_many(scenarios: &[Scenario]) -> Vec<Result<Trajectory, SimError>> {
    scenarios.par_iter().map(simulate).collect()
}
