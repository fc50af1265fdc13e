//! Centralized reference solutions.
//!
//! * the barrier optimum `ỹ*(t) = argmin_y Σ_i L_i(y, t)` by damped Newton,
//! * the constrained optimum `y*(t)` by a warm-started barrier homotopy with
//!   multiplier estimates `ν_j = 1/(1 − ρ g_j)` at the last rung,
//! * the suboptimality bounds `Σ q_j / ρ` and `Σ ν_j / ρ`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::barrier::{in_domain_at, penalized_jet_at, BarrierError, BarrierSchedule, Rho};
use crate::controller::SpdFactor;
use crate::problem::{AgentProblem, BuiltinField, ProblemSet, ScalarField};

pub const GRADIENT_TOLERANCE: f64 = 1e-10;
pub const MAX_NEWTON_ITERATIONS: usize = 200;
pub const HOMOTOPY_LADDER: [f64; 4] = [1e2, 1e4, 1e6, 1e8];
/// Stationarity residual accepted for the last homotopy rung, relative to
/// the magnitude of the terms it balances.
pub const STATIONARITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("no strictly feasible point found at t = {t} (smallest max-violation {violation:e})")]
    InfeasibleStart { t: f64, violation: f64 },
    #[error("barrier homotopy did not converge at t = {t}, rho = {rho:e}: stationarity residual {residual:e}")]
    Unsolved { t: f64, rho: f64, residual: f64 },
    #[error("multipliers must be non-negative")]
    NegativeMultiplier,
    #[error(transparent)]
    Barrier(#[from] BarrierError),
}

/// Sum over agents of the penalized value, gradient and Hessian at a common `y`.
fn total_jet(problems: &ProblemSet, rho: Rho, y: &DVector<f64>, t: f64) -> Result<(f64, DVector<f64>, DMatrix<f64>), BarrierError> {
    let m = problems.dim();
    let mut value = 0.0;
    let mut grad = DVector::zeros(m);
    let mut hess = DMatrix::zeros(m, m);
    for agent in problems.agents() {
        let j = penalized_jet_at(agent, rho, y, t)?;
        value += j.value;
        grad += &j.gradient;
        hess += &j.hessian;
    }
    Ok((value, grad, hess))
}

fn strictly_inside(problems: &ProblemSet, rho: f64, y: &DVector<f64>, t: f64) -> bool {
    problems.agents().iter().all(|a| in_domain_at(a, rho, y, t).inside)
}

fn max_violation(problems: &ProblemSet, y: &DVector<f64>, t: f64) -> f64 {
    problems
        .agents()
        .iter()
        .flat_map(|a| a.constraints.iter().map(|c| c.jet(y, t).value))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Result of a fixed-ρ Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedOptimum {
    pub y: DVector<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// `‖Σ∇L_i‖ ≤ GRADIENT_TOLERANCE` was reached.
    pub converged: bool,
}

fn newton(problems: &ProblemSet, rho: f64, t: f64, start: DVector<f64>) -> Result<PenalizedOptimum, OracleError> {
    let rho = Rho::fixed(rho);
    let mut y = start;
    let (mut value, mut grad, mut hess) = total_jet(problems, rho, &y, t)?;
    let mut iterations = 0;
    while iterations < MAX_NEWTON_ITERATIONS && grad.norm() > GRADIENT_TOLERANCE {
        iterations += 1;
        let factor = SpdFactor::new(&hess).map_err(|_| OracleError::Unsolved { t, rho: rho.rho, residual: grad.norm() })?;
        let dir = -factor.solve(&grad);
        let slope = grad.dot(&dir);
        if -slope <= 1e-28 * (1.0 + value.abs()) {
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-16 {
            let trial = &y + &dir * step;
            if strictly_inside(problems, rho.rho, &trial, t) {
                if let Ok((v, g, h)) = total_jet(problems, rho, &trial, t) {
                    let armijo = v <= value + 1e-4 * step * slope;
                    // past the resolution of the value, accept full steps that shrink the gradient
                    if armijo || (step == 1.0 && g.norm() < grad.norm()) {
                        accepted = Some((trial, v, g, h));
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, v, g, h)) => {
                y = trial;
                value = v;
                grad = g;
                hess = h;
            }
            None => break,
        }
    }
    let gradient_norm = grad.norm();
    Ok(PenalizedOptimum { y, gradient_norm, iterations, converged: gradient_norm <= GRADIENT_TOLERANCE })
}

/// Finds `y` with every `g_j(y, t) < 0` by Newton on a soft maximum of the
/// constraints plus a proximal term around `hint`.
pub fn strictly_feasible_point(problems: &ProblemSet, t: f64, hint: &DVector<f64>) -> Result<DVector<f64>, OracleError> {
    let constraints: Vec<&BuiltinField> = problems.agents().iter().flat_map(|a| a.constraints.iter()).collect();
    let mut y = hint.clone();
    if constraints.is_empty() || max_violation(problems, &y, t) < 0.0 {
        return Ok(y);
    }
    let m = problems.dim();
    let tau = 1e-2;
    let soft_max = |y: &DVector<f64>, anchor: &DVector<f64>, eps: f64| {
        let jets: Vec<_> = constraints.iter().map(|c| c.jet(y, t)).collect();
        let top = jets.iter().map(|j| j.value).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = jets.iter().map(|j| ((j.value - top) / tau).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut grad = DVector::zeros(m);
        let mut hess = DMatrix::identity(m, m) * eps;
        let mut mean = DVector::zeros(m);
        for (j, w) in jets.iter().zip(&weights) {
            let p = w / total;
            grad.axpy(p, &j.gradient, 1.0);
            hess += &j.hessian * p;
            hess.ger(p / tau, &j.gradient, &j.gradient, 1.0);
            mean.axpy(p, &j.gradient, 1.0);
        }
        hess.ger(-1.0 / tau, &mean, &mean, 1.0);
        let d = y - anchor;
        let value = top + tau * total.ln() + 0.5 * eps * d.norm_squared();
        grad.axpy(eps, &d, 1.0);
        (value, grad, hess)
    };
    for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
        let anchor = y.clone();
        for _ in 0..MAX_NEWTON_ITERATIONS {
            if max_violation(problems, &y, t) < 0.0 {
                return Ok(y);
            }
            let (value, grad, hess) = soft_max(&y, &anchor, eps);
            let Ok(factor) = SpdFactor::new(&hess) else { break };
            let dir = -factor.solve(&grad);
            let slope = grad.dot(&dir);
            let mut step = 1.0;
            while step > 1e-12 && soft_max(&(&y + &dir * step), &anchor, eps).0 > value + 1e-4 * step * slope {
                step *= 0.5;
            }
            if step <= 1e-12 {
                break;
            }
            y += &dir * step;
        }
    }
    if max_violation(problems, &y, t) < 0.0 {
        Ok(y)
    } else {
        Err(OracleError::InfeasibleStart { t, violation: max_violation(problems, &y, t) })
    }
}

/// Moves `candidate` toward the strictly feasible `interior` until it lies
/// inside every barrier domain for `rho`.
fn pull_back(problems: &ProblemSet, rho: f64, t: f64, interior: &DVector<f64>, candidate: &DVector<f64>) -> DVector<f64> {
    let mut theta = 1.0;
    for _ in 0..400 {
        let y = interior + (candidate - interior) * theta;
        if strictly_inside(problems, rho, &y, t) {
            return y;
        }
        theta *= 0.9;
    }
    interior.clone()
}

/// Barrier optimum `argmin_y Σ_i L_i(y, t)` with the schedule's `ρ(t)`.
pub fn minimize_penalized(
    problems: &ProblemSet,
    schedule: &BarrierSchedule,
    t: f64,
    x0: Option<&DVector<f64>>,
) -> Result<PenalizedOptimum, OracleError> {
    let rho = schedule.rho(t).rho;
    let zero = DVector::zeros(problems.dim());
    let start = match x0 {
        Some(x) if strictly_inside(problems, rho, x, t) => x.clone(),
        Some(x) => {
            let interior = strictly_feasible_point(problems, t, x)?;
            pull_back(problems, rho, t, &interior, x)
        }
        None => strictly_feasible_point(problems, t, &zero)?,
    };
    newton(problems, rho, t, start)
}

/// Total multiplier mass on one distinct constraint shared by several agents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintFamily {
    pub constraint: String,
    /// `(agent, constraint slot)` pairs, 0-based.
    pub members: Vec<(usize, usize)>,
    pub total_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub t: f64,
    pub y_star: DVector<f64>,
    /// Per agent, per constraint.
    pub multipliers: Vec<Vec<f64>>,
    pub families: Vec<ConstraintFamily>,
    /// ‖Σ∇f_i + Σ ν_j ∇g_j‖ at `y_star`.
    pub stationarity_residual: f64,
    /// `(ρ, Σ f_i(ỹ*(ρ)))` for every rung.
    pub ladder: Vec<(f64, f64)>,
}

impl KktSolution {
    pub fn total_multiplier(&self) -> f64 {
        self.multipliers.iter().flatten().sum()
    }
}

pub fn total_objective(problems: &ProblemSet, y: &DVector<f64>, t: f64) -> f64 {
    problems.agents().iter().map(|a| a.objective.jet(y, t).value).sum()
}

fn group_families(agents: &[AgentProblem], multipliers: &[Vec<f64>]) -> Vec<ConstraintFamily> {
    let mut families: Vec<(BuiltinField, ConstraintFamily)> = Vec::new();
    for (i, agent) in agents.iter().enumerate() {
        for (j, c) in agent.constraints.iter().enumerate() {
            let nu = multipliers[i][j];
            match families.iter_mut().find(|(f, _)| f == c) {
                Some((_, fam)) => {
                    fam.members.push((i, j));
                    fam.total_multiplier += nu;
                }
                None => families.push((
                    c.clone(),
                    ConstraintFamily { constraint: c.to_string(), members: vec![(i, j)], total_multiplier: nu },
                )),
            }
        }
    }
    families.into_iter().map(|(_, f)| f).collect()
}

/// Constrained optimum by the barrier homotopy over [`HOMOTOPY_LADDER`].
pub fn kkt_optimum(problems: &ProblemSet, t: f64, hint: Option<&DVector<f64>>) -> Result<KktSolution, OracleError> {
    let m = problems.dim();
    let zero = DVector::zeros(m);
    let interior = strictly_feasible_point(problems, t, hint.unwrap_or(&zero))?;
    let mut y = hint.cloned().unwrap_or_else(|| interior.clone());
    let mut ladder = Vec::with_capacity(HOMOTOPY_LADDER.len());
    let mut last_rho = HOMOTOPY_LADDER[0];
    for &rho in &HOMOTOPY_LADDER {
        let start = pull_back(problems, rho, t, &interior, &y);
        y = newton(problems, rho, t, start)?.y;
        ladder.push((rho, total_objective(problems, &y, t)));
        last_rho = rho;
    }
    let rho = Rho::fixed(last_rho);
    let mut multipliers = Vec::with_capacity(problems.len());
    let mut residual_vec = DVector::zeros(m);
    let mut scale = 0.0_f64;
    for agent in problems.agents() {
        let jet = penalized_jet_at(agent, rho, &y, t)?;
        let f = agent.objective.jet(&y, t);
        residual_vec += &f.gradient;
        scale += f.gradient.norm();
        for (c, &w) in agent.constraints.iter().zip(&jet.weights) {
            let g = c.jet(&y, t);
            residual_vec.axpy(w, &g.gradient, 1.0);
            scale += w * g.gradient.norm();
        }
        multipliers.push(jet.weights);
    }
    let residual = residual_vec.norm();
    if !(residual <= STATIONARITY_TOLERANCE * (1.0 + scale)) {
        return Err(OracleError::Unsolved { t, rho: last_rho, residual });
    }
    Ok(KktSolution {
        t,
        y_star: y,
        families: group_families(problems.agents(), &multipliers),
        multipliers,
        stationarity_residual: residual,
        ladder,
    })
}

/// `(Σ_j q_j / ρ, Σ_jk ν_jk / ρ)`.
pub fn gap_bounds(problems: &ProblemSet, rho: f64, multipliers: &[Vec<f64>]) -> Result<(f64, f64), OracleError> {
    if multipliers.iter().flatten().any(|&v| v < 0.0) {
        return Err(OracleError::NegativeMultiplier);
    }
    let barrier = problems.total_constraints() as f64 / rho;
    let kkt = multipliers.iter().flatten().sum::<f64>() / rho;
    Ok((barrier, kkt))
}

/// Optimum of the relaxed problem `g_ij ≤ 1/ρ`.
pub fn relaxed_optimum(problems: &ProblemSet, rho: f64, t: f64, hint: Option<&DVector<f64>>) -> Result<KktSolution, OracleError> {
    let shifted: Vec<AgentProblem> = problems
        .agents()
        .iter()
        .map(|a| AgentProblem {
            objective: a.objective.clone(),
            constraints: a.constraints.iter().map(|c| c.shifted(1.0 / rho)).collect(),
        })
        .collect();
    let shifted = ProblemSet::new(shifted).expect("shifting keeps dimensions");
    kkt_optimum(&shifted, t, hint)
}

/// One row of the oracle table.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimumReport {
    pub t: f64,
    pub y_star: DVector<f64>,
    pub y_tilde: DVector<f64>,
    pub y_hat: Option<DVector<f64>>,
    pub multipliers: Vec<Vec<f64>>,
    pub families: Vec<ConstraintFamily>,
    /// `Σ f_i(ỹ*) − Σ f_i(y*)`
    pub objective_gap: f64,
    pub barrier_bound: f64,
    pub kkt_bound: f64,
    pub stationarity_residual: f64,
    pub y_tilde_converged: bool,
}

impl OptimumReport {
    pub fn bound(&self) -> f64 {
        self.barrier_bound + self.kkt_bound
    }
}

pub fn optimum_report(
    problems: &ProblemSet,
    schedule: &BarrierSchedule,
    t: f64,
    hint: Option<&DVector<f64>>,
    include_relaxed: bool,
) -> Result<OptimumReport, OracleError> {
    let kkt = kkt_optimum(problems, t, hint)?;
    let tilde = minimize_penalized(problems, schedule, t, Some(&kkt.y_star))?;
    let rho = schedule.rho(t).rho;
    let (barrier_bound, kkt_bound) = gap_bounds(problems, rho, &kkt.multipliers)?;
    let y_hat = if include_relaxed { Some(relaxed_optimum(problems, rho, t, Some(&kkt.y_star))?.y_star) } else { None };
    Ok(OptimumReport {
        t,
        objective_gap: total_objective(problems, &tilde.y, t) - total_objective(problems, &kkt.y_star, t),
        y_star: kkt.y_star,
        y_tilde: tilde.y,
        y_hat,
        multipliers: kkt.multipliers,
        families: kkt.families,
        barrier_bound,
        kkt_bound,
        stationarity_residual: kkt.stationarity_residual,
        y_tilde_converged: tilde.converged,
    })
}

/// Evenly spaced grid `0, step, 2·step, …` up to and including `t_end`.
pub fn time_grid(t_end: f64, step: f64) -> Vec<f64> {
    let n = (t_end / step + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

/// Reports at each time, each sample warm-started from the previous
/// successful one.
pub fn oracle_grid(problems: &ProblemSet, schedule: &BarrierSchedule, times: &[f64]) -> Vec<Result<OptimumReport, OracleError>> {
    let mut out = Vec::with_capacity(times.len());
    let mut warm: Option<DVector<f64>> = None;
    for &t in times {
        let row = optimum_report(problems, schedule, t, warm.as_ref(), false);
        if let Ok(r) = &row {
            warm = Some(r.y_star.clone());
        }
        out.push(row);
    }
    out
}

/// Independent cold-started samples on the rayon pool.
pub fn oracle_grid_parallel(problems: &ProblemSet, schedule: &BarrierSchedule, times: &[f64]) -> Vec<Result<OptimumReport, OracleError>> {
    times.par_iter().map(|&t| optimum_report(problems, schedule, t, None, false)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{paper_benchmark, TimeFn};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn tracking(c: &[f64]) -> AgentProblem {
        AgentProblem {
            objective: BuiltinField::quadratic_tracking(
                DMatrix::identity(c.len(), c.len()),
                c.iter().map(|&value| TimeFn::Constant { value }).collect(),
            )
            .unwrap(),
            constraints: vec![],
        }
    }

    #[test]
    fn unconstrained_mean() {
        let problems = ProblemSet::new(vec![tracking(&[1.0, 2.0]), tracking(&[3.0, -4.0]), tracking(&[-1.0, 5.0])]).unwrap();
        let s = BarrierSchedule::new(100.0, 0.1).unwrap();
        let opt = minimize_penalized(&problems, &s, 0.0, None).unwrap();
        assert!(opt.converged);
        assert!((opt.y - v(&[1.0, 1.0])).norm() < 1e-12);
    }

    #[test]
    fn symmetric_targets_give_origin() {
        let mut a = tracking(&[2.0, -1.0]);
        let mut b = tracking(&[-2.0, 1.0]);
        let g = BuiltinField::QuadraticNorm { dim: 2, b: TimeFn::Constant { value: 9.0 } };
        a.constraints.push(g.clone());
        b.constraints.push(g);
        let problems = ProblemSet::new(vec![a, b]).unwrap();
        let s = BarrierSchedule::new(100.0, 0.1).unwrap();
        let opt = minimize_penalized(&problems, &s, 0.0, Some(&v(&[0.5, 0.5]))).unwrap();
        assert!(opt.y.norm() < 1e-10);
    }

    #[test]
    fn benchmark_barrier_optimum_near_kkt_point() {
        let (_, problems) = paper_benchmark();
        let s = BarrierSchedule::new(100.0, 0.1).unwrap();
        let opt = minimize_penalized(&problems, &s, 0.0, None).unwrap();
        assert!(opt.converged, "{opt:?}");
        assert!(opt.y.norm() < 0.2);
    }

    #[test]
    fn benchmark_kkt_at_zero() {
        let (_, problems) = paper_benchmark();
        let kkt = kkt_optimum(&problems, 0.0, None).unwrap();
        assert!(kkt.y_star.norm() < 1e-4, "{}", kkt.y_star);
        let y_family = kkt.families.iter().find(|f| f.members[0].0 == 6).unwrap();
        assert!((y_family.total_multiplier - 234.0).abs() < 0.5, "{y_family:?}");
        assert_eq!(y_family.members.len(), 6);
        assert_eq!(kkt.families.len(), 2);
        // the relaxed feasible sets shrink along the ladder, so Σf rises toward Σf(y*) = 975
        assert!(kkt.ladder.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-8), "{:?}", kkt.ladder);
        assert!((kkt.ladder[3].1 - 975.0).abs() < 1e-4);
    }

    #[test]
    fn inactive_constraints_recover_unconstrained_point() {
        let mut a = tracking(&[1.0]);
        a.constraints.push(BuiltinField::Affine { a: v(&[1.0]), b: TimeFn::Constant { value: 10.0 } });
        let problems = ProblemSet::new(vec![a, tracking(&[3.0])]).unwrap();
        let kkt = kkt_optimum(&problems, 0.0, None).unwrap();
        assert!((kkt.y_star[0] - 2.0).abs() < 1e-6);
        assert!(kkt.total_multiplier() < 1e-6);
    }

    #[test]
    fn bounds() {
        let (_, problems) = paper_benchmark();
        let rho = 100.0 * 2f64.exp();
        let (barrier, kkt) = gap_bounds(&problems, rho, &vec![vec![0.0]; 12]).unwrap();
        assert!((barrier - 0.016_240).abs() < 1e-6);
        assert_eq!(kkt, 0.0);
        let (barrier, _) = gap_bounds(&problems, 1e12, &vec![vec![0.0]; 12]).unwrap();
        assert!((barrier - 1.2e-11).abs() < 1e-15);
        let free = ProblemSet::new(vec![tracking(&[0.0])]).unwrap();
        assert_eq!(gap_bounds(&free, 5.0, &[vec![]]).unwrap(), (0.0, 0.0));
        assert!(gap_bounds(&problems, 1.0, &vec![vec![-1.0]; 12]).is_err());
    }

    #[test]
    fn infeasible_start_reported() {
        let mut a = tracking(&[0.0]);
        a.constraints.push(BuiltinField::QuadraticNorm { dim: 1, b: TimeFn::Constant { value: -1.0 } });
        let problems = ProblemSet::new(vec![a]).unwrap();
        assert!(matches!(kkt_optimum(&problems, 0.0, None), Err(OracleError::InfeasibleStart { .. })));
    }

    #[test]
    fn grid_spacing() {
        let g = time_grid(20.0, 0.1);
        assert_eq!(g.len(), 201);
        assert_eq!(g[200], 20.0);
    }
}
