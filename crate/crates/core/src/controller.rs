//! The per-agent control law
//!
//! ```text
//! u_i = −β [∇²L_i]⁻¹ Σ_{j ∈ N_i} sgn(x_i − x_j) + φ_i
//! φ_i = −[∇²L_i]⁻¹ (∇L_i + ∂∇L_i/∂t)
//! ```
//!
//! with the selection `sgn(0) = 0`, so the network-wide sum of the switching
//! vectors cancels exactly in floating point.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::barrier::{penalized_jet, BarrierError, BarrierSchedule, PenalizedJet};
use crate::problem::AgentProblem;
use crate::simulator::Trajectory;

/// Eigenvalue floor below which a penalized Hessian is treated as singular.
pub const EIGEN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error(transparent)]
    Barrier(#[from] BarrierError),
    #[error("penalized Hessian is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    Singular { min_eigenvalue: f64 },
    #[error("gain audit needs a non-empty trajectory")]
    EmptyTrajectory,
}

/// How the sign of a disagreement is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Switching {
    /// Exact signum with `sgn(0) = 0`.
    Sign,
    /// `clamp(z/ε, −1, 1)`, a boundary-layer approximation.
    Saturation(f64),
}

impl Switching {
    pub fn from_epsilon(epsilon: f64) -> Self {
        if epsilon > 0.0 {
            Switching::Saturation(epsilon)
        } else {
            Switching::Sign
        }
    }

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Switching::Sign => {
                if z > 0.0 {
                    1.0
                } else if z < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Switching::Saturation(eps) => (z / eps).clamp(-1.0, 1.0),
        }
    }
}

/// `Σ_j switch(x_i − x_j)` componentwise.
pub fn switching_vector<'a, I>(x_i: &DVector<f64>, neighbors: I, switching: Switching) -> DVector<f64>
where
    I: IntoIterator<Item = &'a DVector<f64>>,
{
    let mut s = DVector::zeros(x_i.len());
    for x_j in neighbors {
        for k in 0..x_i.len() {
            s[k] += switching.apply(x_i[k] - x_j[k]);
        }
    }
    s
}

/// Cholesky factor of a penalized Hessian, checked against [`EIGEN_TOLERANCE`].
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(h: &DMatrix<f64>) -> Result<Self, ControlError> {
        let singular = || ControlError::Singular { min_eigenvalue: SymmetricEigen::new(h.clone()).eigenvalues.min() };
        let chol = Cholesky::new(h.clone()).ok_or_else(singular)?;
        // λ_min ≥ 1/‖L⁻¹‖_F², exact check only when that bound is inconclusive
        let l_inv = chol
            .l_dirty()
            .solve_lower_triangular(&DMatrix::identity(h.nrows(), h.nrows()))
            .ok_or_else(singular)?;
        if 1.0 / l_inv.norm_squared() < EIGEN_TOLERANCE {
            let min = SymmetricEigen::new(h.clone()).eigenvalues.min();
            if min < EIGEN_TOLERANCE {
                return Err(ControlError::Singular { min_eigenvalue: min });
            }
        }
        Ok(Self { chol })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }
}

/// Output of the control law for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlInput {
    pub u: DVector<f64>,
    pub phi: DVector<f64>,
    pub consensus_term: DVector<f64>,
    /// Σ_j sgn(x_i − x_j)
    pub sgn_vector: DVector<f64>,
}

/// Control input together with the penalized jet it was computed from.
#[derive(Debug, Clone)]
pub struct AgentEvaluation {
    pub control: ControlInput,
    pub jet: PenalizedJet,
}

pub fn phi(agent: &AgentProblem, schedule: &BarrierSchedule, x: &DVector<f64>, t: f64) -> Result<DVector<f64>, ControlError> {
    let jet = penalized_jet(agent, schedule, x, t)?;
    let factor = SpdFactor::new(&jet.hessian)?;
    Ok(-factor.solve(&(&jet.gradient + &jet.time_gradient)))
}

pub fn control(
    agent: &AgentProblem,
    schedule: &BarrierSchedule,
    beta: f64,
    x_i: &DVector<f64>,
    neighbor_states: &[&DVector<f64>],
    t: f64,
) -> Result<ControlInput, ControlError> {
    evaluate_agent(agent, schedule, beta, x_i, neighbor_states.iter().copied(), t, Switching::Sign).map(|e| e.control)
}

/// Full per-agent evaluation used by the simulator.
pub fn evaluate_agent<'a, I>(
    agent: &AgentProblem,
    schedule: &BarrierSchedule,
    beta: f64,
    x_i: &DVector<f64>,
    neighbor_states: I,
    t: f64,
    switching: Switching,
) -> Result<AgentEvaluation, ControlError>
where
    I: IntoIterator<Item = &'a DVector<f64>>,
{
    let jet = penalized_jet(agent, schedule, x_i, t)?;
    let factor = SpdFactor::new(&jet.hessian)?;
    let sgn_vector = switching_vector(x_i, neighbor_states, switching);
    let phi = -factor.solve(&(&jet.gradient + &jet.time_gradient));
    let consensus_term = -factor.solve(&(&sgn_vector * beta));
    let u = &consensus_term + &phi;
    Ok(AgentEvaluation { control: ControlInput { u, phi, consensus_term, sgn_vector }, jet })
}

/// A posteriori check of the consensus gain condition
/// `β > 2 φ̄ m n² |E| / min λ_min[(∇²L_i)⁻¹]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainReport {
    /// max over samples and agents of ‖φ_i‖₂
    pub phi_bar: f64,
    /// min over samples and agents of λ_min[(∇²L_i)⁻¹] = 1 / λ_max[∇²L_i]
    pub min_inverse_hessian_eigenvalue: f64,
    pub bound: f64,
    pub beta: f64,
    pub pass: bool,
    pub note: &'static str,
}

const GAIN_NOTE: &str = "extrema taken over the recorded samples of this trajectory only";

pub fn gain_audit(trajectory: &Trajectory, beta: f64, edge_count: usize) -> Result<GainReport, ControlError> {
    let first = trajectory.records.first().ok_or(ControlError::EmptyTrajectory)?;
    let n = first.x.len();
    let m = first.x.first().map_or(0, |x| x.len());
    let mut phi_bar = 0.0_f64;
    let mut lambda_max = 0.0_f64;
    for record in &trajectory.records {
        for phi in &record.phi {
            phi_bar = phi_bar.max(phi.norm());
        }
        for &(_, hi) in &record.hessian_extrema {
            lambda_max = lambda_max.max(hi);
        }
    }
    let min_inv = 1.0 / lambda_max;
    let bound = if edge_count == 0 {
        0.0
    } else {
        2.0 * phi_bar * (m * n * n * edge_count) as f64 / min_inv
    };
    Ok(GainReport {
        phi_bar,
        min_inverse_hessian_eigenvalue: min_inv,
        bound,
        beta,
        pass: beta > bound,
        note: GAIN_NOTE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{BuiltinField, TimeFn};
    use approx::assert_abs_diff_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn scalar_tracking(target: TimeFn) -> AgentProblem {
        AgentProblem {
            objective: BuiltinField::quadratic_tracking(DMatrix::from_element(1, 1, 1.0), vec![target]).unwrap(),
            constraints: vec![],
        }
    }

    fn schedule() -> BarrierSchedule {
        BarrierSchedule::new(100.0, 0.1).unwrap()
    }

    #[test]
    fn phi_is_feed_forward_on_target() {
        // f = ½(x − sin t)²: φ = −(x − sin t) + cos t
        let agent = scalar_tracking(TimeFn::sinusoid(1.0, 0.0));
        for &t in &[0.0_f64, 0.4, 2.0] {
            let p = phi(&agent, &schedule(), &v(&[t.sin()]), t).unwrap();
            assert_abs_diff_eq!(p[0], t.cos(), epsilon = 1e-15);
            let p = phi(&agent, &schedule(), &v(&[0.25]), t).unwrap();
            assert_abs_diff_eq!(p[0], -(0.25 - t.sin()) + t.cos(), epsilon = 1e-15);
        }
    }

    #[test]
    fn phi_vanishes_at_static_minimizer() {
        let agent = scalar_tracking(TimeFn::Constant { value: 3.0 });
        assert_eq!(phi(&agent, &schedule(), &v(&[3.0]), 1.0).unwrap()[0], 0.0);
    }

    #[test]
    fn two_agent_hand_value() {
        let agent = scalar_tracking(TimeFn::Constant { value: 0.0 });
        let x2 = v(&[0.0]);
        let c = control(&agent, &schedule(), 2.0, &v(&[1.0]), &[&x2], 0.0).unwrap();
        assert_eq!(c.sgn_vector[0], 1.0);
        assert_eq!(c.phi[0], -1.0);
        assert_eq!(c.u[0], -3.0);
        assert_eq!(c.u, &c.consensus_term + &c.phi);
    }

    #[test]
    fn agreement_leaves_only_phi() {
        let agent = scalar_tracking(TimeFn::sinusoid(2.0, 0.3));
        let x = v(&[0.7]);
        let c = control(&agent, &schedule(), 5.0, &x, &[&x.clone(), &x.clone()], 1.0).unwrap();
        assert_eq!(c.sgn_vector[0], 0.0);
        assert_eq!(c.u, c.phi);
    }

    #[test]
    fn singular_hessian_rejected() {
        let agent = AgentProblem { objective: BuiltinField::Constant { dim: 2, value: 1.0 }, constraints: vec![] };
        let err = phi(&agent, &schedule(), &v(&[0.0, 0.0]), 0.0).unwrap_err();
        assert!(matches!(err, ControlError::Singular { .. }));
        let tiny = AgentProblem {
            objective: BuiltinField::quadratic_tracking(
                DMatrix::from_diagonal(&v(&[1.0, 1e-12])),
                vec![TimeFn::Constant { value: 0.0 }; 2],
            )
            .unwrap(),
            constraints: vec![],
        };
        assert!(matches!(phi(&tiny, &schedule(), &v(&[1.0, 1.0]), 0.0), Err(ControlError::Singular { .. })));
    }

    #[test]
    fn saturation_switching() {
        let s = Switching::from_epsilon(0.5);
        assert_eq!(s.apply(0.25), 0.5);
        assert_eq!(s.apply(-3.0), -1.0);
        assert_eq!(Switching::from_epsilon(0.0), Switching::Sign);
        assert_eq!(Switching::Sign.apply(0.0), 0.0);
        assert_eq!(Switching::Sign.apply(-0.0), 0.0);
    }
}
