//! Log-barrier penalized objectives with an exponentially sharpening barrier.
//!
//! For agent `i` with constraints `g_j(x, t) ≤ 0`,
//!
//! ```text
//! L(x, t) = f(x, t) − (1/ρ(t)) Σ_j log(1 − ρ(t) g_j(x, t)),   ρ(t) = a1·exp(a2·t)
//! ```
//!
//! defined on the relaxed domain `g_j < 1/ρ`. Writing `w_j = 1/(1 − ρ g_j)`:
//!
//! ```text
//! ∇L     = ∇f + Σ w_j ∇g_j
//! ∇²L    = ∇²f + Σ w_j ∇²g_j + Σ ρ w_j² ∇g_j ∇g_jᵀ
//! ∂∇L/∂t = ∂∇f/∂t + Σ w_j ∂∇g_j/∂t + Σ ρ̇ g_j w_j² ∇g_j + Σ ρ w_j² ∇g_j ∂g_j/∂t
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fd;
use crate::problem::{compare, AgentProblem, DiscrepancyReport, FieldError, ScalarField};

pub const DEFAULT_RHO_MAX: f64 = 1e12;

/// Agent and constraint indices are 0-based; messages print them 1-based.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error("invalid barrier schedule: {0}")]
    InvalidSchedule(String),
    #[error("constraint {} outside the barrier domain at t = {t}: margin {margin:e}", .constraint + 1)]
    Domain { constraint: usize, margin: f64, t: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleSpec {
    a1: f64,
    a2: f64,
    #[serde(default = "default_rho_max")]
    rho_max: f64,
}

fn default_rho_max() -> f64 {
    DEFAULT_RHO_MAX
}

/// `ρ(t) = min(a1·exp(a2·t), rho_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleSpec", into = "ScheduleSpec")]
pub struct BarrierSchedule {
    a1: f64,
    a2: f64,
    rho_max: f64,
}

impl TryFrom<ScheduleSpec> for BarrierSchedule {
    type Error = BarrierError;

    fn try_from(spec: ScheduleSpec) -> Result<Self, BarrierError> {
        BarrierSchedule::with_clamp(spec.a1, spec.a2, spec.rho_max)
    }
}

impl From<BarrierSchedule> for ScheduleSpec {
    fn from(s: BarrierSchedule) -> Self {
        ScheduleSpec { a1: s.a1, a2: s.a2, rho_max: s.rho_max }
    }
}

/// Barrier sharpness and its time derivative at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rho {
    pub rho: f64,
    pub rho_dot: f64,
}

impl Rho {
    /// A frozen barrier parameter (ρ̇ = 0).
    pub fn fixed(rho: f64) -> Self {
        Self { rho, rho_dot: 0.0 }
    }
}

impl BarrierSchedule {
    pub fn new(a1: f64, a2: f64) -> Result<Self, BarrierError> {
        Self::with_clamp(a1, a2, DEFAULT_RHO_MAX)
    }

    pub fn with_clamp(a1: f64, a2: f64, rho_max: f64) -> Result<Self, BarrierError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(a1) || !ok(a2) {
            return Err(BarrierError::InvalidSchedule(format!("a1 and a2 must be positive, got a1 = {a1}, a2 = {a2}")));
        }
        if !(rho_max.is_finite() && rho_max >= a1) {
            return Err(BarrierError::InvalidSchedule(format!("rho_max = {rho_max} must be finite and at least a1 = {a1}")));
        }
        Ok(Self { a1, a2, rho_max })
    }

    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn a2(&self) -> f64 {
        self.a2
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    pub fn rho(&self, t: f64) -> Rho {
        let raw = self.a1 * (self.a2 * t).exp();
        if raw >= self.rho_max || !raw.is_finite() {
            Rho { rho: self.rho_max, rho_dot: 0.0 }
        } else {
            Rho { rho: raw, rho_dot: self.a2 * raw }
        }
    }
}

/// Derivative jet of the penalized objective.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedJet {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub time_gradient: DVector<f64>,
    /// ∂L/∂t, including the ρ̇ contribution.
    pub time_value: f64,
    /// `1/(1 − ρ g_j)` per constraint.
    pub weights: Vec<f64>,
}

pub fn penalized_jet(
    agent: &AgentProblem,
    schedule: &BarrierSchedule,
    x: &DVector<f64>,
    t: f64,
) -> Result<PenalizedJet, BarrierError> {
    penalized_jet_at(agent, schedule.rho(t), x, t)
}

/// Penalized jet for an explicit `(ρ, ρ̇)`.
pub fn penalized_jet_at(agent: &AgentProblem, rho: Rho, x: &DVector<f64>, t: f64) -> Result<PenalizedJet, BarrierError> {
    let f = crate::problem::evaluate_jet(&agent.objective, x, t)?;
    if agent.constraints.is_empty() {
        return Ok(PenalizedJet {
            value: f.value,
            gradient: f.gradient,
            hessian: f.hessian,
            time_gradient: f.time_gradient,
            time_value: f.time_value,
            weights: Vec::new(),
        });
    }
    let Rho { rho, rho_dot } = rho;
    let mut value = f.value;
    let mut gradient = f.gradient;
    let mut hessian = f.hessian;
    let mut time_gradient = f.time_gradient;
    let mut time_value = f.time_value;
    let mut weights = Vec::with_capacity(agent.constraints.len());
    for (j, constraint) in agent.constraints.iter().enumerate() {
        let g = crate::problem::evaluate_jet(constraint, x, t)?;
        let margin = g.value - 1.0 / rho;
        let slack = 1.0 - rho * g.value;
        if !(margin < 0.0 && slack > 0.0) {
            return Err(BarrierError::Domain { constraint: j, margin, t });
        }
        let w = 1.0 / slack;
        let log_slack = (-rho * g.value).ln_1p();
        value -= log_slack / rho;
        time_value += rho_dot / (rho * rho) * log_slack + w * (rho_dot * g.value + rho * g.time_value) / rho;
        gradient.axpy(w, &g.gradient, 1.0);
        hessian += &g.hessian * w;
        hessian.ger(rho * w * w, &g.gradient, &g.gradient, 1.0);
        time_gradient.axpy(w, &g.time_gradient, 1.0);
        time_gradient.axpy(rho_dot * g.value * w * w, &g.gradient, 1.0);
        time_gradient.axpy(rho * w * w * g.time_value, &g.gradient, 1.0);
        weights.push(w);
    }
    Ok(PenalizedJet { value, gradient, hessian, time_gradient, time_value, weights })
}

/// Result of the relaxed-domain test `g_j(x, t) < 1/ρ(t)` for every `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainCheck {
    pub inside: bool,
    /// `g_j(x, t) − 1/ρ(t)`
    pub margins: Vec<f64>,
}

impl DomainCheck {
    pub fn max_margin(&self) -> f64 {
        self.margins.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn in_domain(agent: &AgentProblem, schedule: &BarrierSchedule, x: &DVector<f64>, t: f64) -> DomainCheck {
    in_domain_at(agent, schedule.rho(t).rho, x, t)
}

pub fn in_domain_at(agent: &AgentProblem, rho: f64, x: &DVector<f64>, t: f64) -> DomainCheck {
    let margins: Vec<f64> = agent
        .constraints
        .iter()
        .map(|c| c.jet(x, t).value - 1.0 / rho)
        .collect();
    DomainCheck { inside: margins.iter().all(|&m| m < 0.0), margins }
}

/// Audits [`penalized_jet`] against central differences of its own value and
/// gradient. The step is `h` shrunk by the distance to the barrier boundary
/// so the difference stencil stays inside the domain.
pub fn check_penalized(
    agent: &AgentProblem,
    schedule: &BarrierSchedule,
    x: &DVector<f64>,
    t: f64,
    h: f64,
) -> Result<DiscrepancyReport, BarrierError> {
    let analytic = penalized_jet(agent, schedule, x, t)?;
    let Rho { rho, rho_dot } = schedule.rho(t);
    let mut scale = 1.0_f64;
    for c in &agent.constraints {
        let g = c.jet(x, t);
        let gap = 1.0 / rho - g.value;
        scale = scale.min(gap / g.gradient.norm().max(1e-300));
        scale = scale.min(gap / (g.time_value.abs() + rho_dot / (rho * rho)).max(1e-300));
    }
    let step = h * scale.clamp(1e-3, 1.0);
    let eval = |y: &DVector<f64>, s: f64| match penalized_jet(agent, schedule, y, s) {
        Ok(j) => (j.value, j.gradient),
        Err(_) => (f64::NAN, DVector::from_element(y.len(), f64::NAN)),
    };
    let numeric = fd::numeric_jet(eval, x, t, step);
    let as_jet = crate::problem::Jet {
        value: analytic.value,
        gradient: analytic.gradient,
        hessian: analytic.hessian,
        time_gradient: analytic.time_gradient,
        time_value: analytic.time_value,
    };
    let report = compare(&as_jet, &numeric);
    // NaN from a stencil point outside the domain must not read as a pass.
    let fix = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    Ok(DiscrepancyReport {
        gradient: fix(report.gradient),
        hessian: fix(report.hessian),
        time_gradient: fix(report.time_gradient),
        time_value: fix(report.time_value),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{paper_benchmark, BuiltinField, TimeFn};
    use approx::assert_abs_diff_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn schedule_values() {
        let s = BarrierSchedule::new(100.0, 0.1).unwrap();
        assert_eq!(s.rho(0.0).rho, 100.0);
        assert_abs_diff_eq!(s.rho(20.0).rho, 738.905_609_893_065, epsilon = 1e-9);
        assert_abs_diff_eq!(s.rho(20.0).rho_dot, 73.890_560_989_306_5, epsilon = 1e-9);
        assert_eq!(BarrierSchedule::new(1.0, 1.0).unwrap().rho(0.0).rho, 1.0);
    }

    #[test]
    fn schedule_validation_and_clamp() {
        assert!(BarrierSchedule::new(1.0, 0.0).is_err());
        assert!(BarrierSchedule::new(-1.0, 1.0).is_err());
        assert!(BarrierSchedule::with_clamp(10.0, 1.0, 5.0).is_err());
        let s = BarrierSchedule::with_clamp(1.0, 1.0, 1e3).unwrap();
        assert_eq!(s.rho(100.0), Rho { rho: 1e3, rho_dot: 0.0 });
        let s = BarrierSchedule::new(100.0, 0.1).unwrap();
        assert_eq!(s.rho(1e6), Rho { rho: DEFAULT_RHO_MAX, rho_dot: 0.0 });
    }

    #[test]
    fn schedule_json() {
        let s: BarrierSchedule = serde_json::from_str(r#"{"a1": 100, "a2": 0.1}"#).unwrap();
        assert_eq!(s.rho_max(), DEFAULT_RHO_MAX);
        assert!(serde_json::from_str::<BarrierSchedule>(r#"{"a1": 100, "a2": 0}"#).is_err());
        assert!(serde_json::from_str::<BarrierSchedule>(r#"{"a1": 1, "a2": 1, "rho": 3}"#).is_err());
    }

    #[test]
    fn no_constraints_is_objective_jet() {
        let (_, problems) = paper_benchmark();
        let mut agent = problems.agent(4).clone();
        agent.constraints.clear();
        let s = BarrierSchedule::new(100.0, 0.1).unwrap();
        let x = v(&[0.3, -4.0]);
        let p = penalized_jet(&agent, &s, &x, 1.7).unwrap();
        let f = agent.objective.jet(&x, 1.7);
        assert_eq!(p.value.to_bits(), f.value.to_bits());
        assert_eq!(p.gradient, f.gradient);
        assert_eq!(p.hessian, f.hessian);
        assert_eq!(p.time_gradient, f.time_gradient);
    }

    #[test]
    fn single_static_constraint_hand_values() {
        // m = 1, f = ½(x − 0.3)², g = x − b with b = 2, evaluated at x = b − 1 and ρ(0) = 1.
        let objective = BuiltinField::quadratic_tracking(
            DMatrix::from_element(1, 1, 1.0),
            vec![TimeFn::Constant { value: 0.3 }],
        )
        .unwrap();
        let constraint = BuiltinField::Affine { a: v(&[1.0]), b: TimeFn::Constant { value: 2.0 } };
        let agent = AgentProblem { objective: objective.clone(), constraints: vec![constraint] };
        let a2 = 1e-3;
        let s = BarrierSchedule::new(1.0, a2).unwrap();
        let x = v(&[1.0]);
        let f = objective.jet(&x, 0.0);
        let p = penalized_jet(&agent, &s, &x, 0.0).unwrap();
        assert_abs_diff_eq!(p.value, f.value - 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(p.gradient[0], f.gradient[0] + 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.hessian[(0, 0)], f.hessian[(0, 0)] + 0.25, epsilon = 1e-15);
        let rho_dot = a2 * 1.0;
        assert_abs_diff_eq!(p.time_gradient[0], f.time_gradient[0] - rho_dot / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn domain_margins() {
        let (_, problems) = paper_benchmark();
        let s = BarrierSchedule::new(100.0, 0.1).unwrap();
        // initial rule y = x − 2 gives g = −3 for agents 1–6 at t = 0
        let check = in_domain(problems.agent(0), &s, &v(&[-4.0, -6.0]), 0.0);
        assert!(check.inside);
        assert_abs_diff_eq!(check.margins[0], -3.01, epsilon = 1e-12);

        // agent 7: g = y − t; g = 0 is inside, g = 1/ρ is not
        let on_constraint = in_domain(problems.agent(6), &s, &v(&[0.0, 0.0]), 0.0);
        assert!(on_constraint.inside);
        assert_abs_diff_eq!(on_constraint.margins[0], -0.01, epsilon = 1e-15);
        let edge = in_domain(problems.agent(6), &s, &v(&[0.0, 0.01]), 0.0);
        assert_eq!(edge.margins[0], 0.0);
        assert!(!edge.inside);
        let err = penalized_jet(problems.agent(6), &s, &v(&[0.0, 0.01]), 0.0).unwrap_err();
        assert!(matches!(err, BarrierError::Domain { constraint: 0, .. }));
    }

    #[test]
    fn benchmark_penalized_matches_finite_differences() {
        let (_, problems) = paper_benchmark();
        let s = BarrierSchedule::new(100.0, 0.1).unwrap();
        for (i, agent) in problems.agents().iter().enumerate() {
            let t = 0.5 + i as f64;
            let x = v(&[-1.0 - 0.3 * i as f64, -3.0]);
            let report = check_penalized(agent, &s, &x, t, 1e-5).unwrap();
            assert!(report.max() < 1e-6, "agent {i}: {report:?}");
        }
    }
}
