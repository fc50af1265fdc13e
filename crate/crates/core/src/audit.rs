//! Randomized finite-difference audit of every field and penalized objective
//! in a problem set.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::barrier::{check_penalized, in_domain, BarrierError, BarrierSchedule};
use crate::problem::{check_jet, AgentProblem, BuiltinField, DiscrepancyReport, GradientFault, ProblemSet, ScalarField, TimeFn};

/// Draws per agent before giving up on finding an in-domain sample.
const MAX_DRAWS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("no in-domain sample found for agent {} after {MAX_DRAWS} draws", .agent + 1)]
    NoSample { agent: usize },
    #[error(transparent)]
    Barrier(#[from] BarrierError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditSettings {
    pub samples: usize,
    pub step: f64,
    pub seed: u64,
    pub t_range: (f64, f64),
    /// Samples are drawn from `[−half_width, half_width]^m`.
    pub half_width: f64,
    /// Scale every objective's analytic gradient by this factor.
    pub gradient_fault: Option<f64>,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self { samples: 100, step: 1e-5, seed: 0, t_range: (0.0, 20.0), half_width: 10.0, gradient_fault: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldAudit {
    /// 1-based.
    pub agent: usize,
    pub field: String,
    pub errors: DiscrepancyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeAudit {
    pub samples_per_agent: usize,
    pub step: f64,
    pub max_error: f64,
    pub fields: Vec<FieldAudit>,
}

impl DerivativeAudit {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_error < tolerance
    }
}

pub fn derivative_audit(problems: &ProblemSet, schedule: &BarrierSchedule, settings: &AuditSettings) -> Result<DerivativeAudit, AuditError> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let m = problems.dim();
    let (t0, t1) = settings.t_range;
    let mut fields = Vec::new();
    for (i, agent) in problems.agents().iter().enumerate() {
        let mut objective = DiscrepancyReport::zero();
        let mut constraints = vec![DiscrepancyReport::zero(); agent.constraints.len()];
        let mut penalized = DiscrepancyReport::zero();
        let mut drawn = 0;
        let mut accepted = 0;
        while accepted < settings.samples {
            if drawn == MAX_DRAWS {
                return Err(AuditError::NoSample { agent: i });
            }
            drawn += 1;
            let t = if t1 > t0 { rng.random_range(t0..=t1) } else { t0 };
            let x = DVector::from_fn(m, |_, _| rng.random_range(-settings.half_width..=settings.half_width));
            if !in_domain(agent, schedule, &x, t).inside {
                continue;
            }
            accepted += 1;
            let report = match settings.gradient_fault {
                Some(factor) => check_jet(&GradientFault { inner: agent.objective.clone(), factor }, &x, t, settings.step),
                None => check_jet(&agent.objective, &x, t, settings.step),
            };
            objective = objective.merge(report);
            for (c, acc) in agent.constraints.iter().zip(constraints.iter_mut()) {
                *acc = acc.merge(check_jet(c, &x, t, settings.step));
            }
            penalized = penalized.merge(check_penalized(agent, schedule, &x, t, settings.step)?);
        }
        fields.push(FieldAudit { agent: i + 1, field: format!("objective: {}", agent.objective.describe()), errors: objective });
        for (j, (c, errors)) in agent.constraints.iter().zip(constraints).enumerate() {
            fields.push(FieldAudit { agent: i + 1, field: format!("constraint {}: {}", j + 1, c.describe()), errors });
        }
        fields.push(FieldAudit { agent: i + 1, field: "penalized".into(), errors: penalized });
    }
    let max_error = fields.iter().map(|f| f.errors.max()).fold(0.0, f64::max);
    Ok(DerivativeAudit { samples_per_agent: settings.samples, step: settings.step, max_error, fields })
}

/// A planar problem set exercising every built-in field family and every
/// time profile.
pub fn family_showcase() -> ProblemSet {
    let q = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let sinusoid = TimeFn::Sinusoid { amplitude: 0.7, frequency: 1.3, phase: 0.4, offset: 0.2 };
    let linear = TimeFn::Linear { offset: -0.5, slope: 0.3 };
    let constant = TimeFn::Constant { value: 1.5 };
    let tracking = |a: TimeFn, b: TimeFn| BuiltinField::quadratic_tracking(q.clone(), vec![a, b]).expect("symmetric Q");
    let affine = |a: [f64; 2], b: TimeFn| BuiltinField::Affine { a: DVector::from_column_slice(&a), b };
    let agents = vec![
        AgentProblem {
            objective: tracking(sinusoid.clone(), linear.clone()),
            constraints: vec![affine([1.0, -2.0], sinusoid.clone()), BuiltinField::QuadraticNorm { dim: 2, b: TimeFn::Constant { value: 150.0 } }],
        },
        AgentProblem {
            objective: tracking(constant.clone(), sinusoid.clone()),
            constraints: vec![
                affine([0.5, 1.0], TimeFn::Linear { offset: 12.0, slope: 0.4 }),
                BuiltinField::QuadraticNorm { dim: 2, b: TimeFn::Sinusoid { amplitude: 5.0, frequency: 0.5, phase: 0.0, offset: 160.0 } },
            ],
        },
        AgentProblem {
            objective: tracking(linear, constant),
            constraints: vec![BuiltinField::Constant { dim: 2, value: -1.0 }, affine([-1.0, 0.0], TimeFn::Constant { value: 11.0 })],
        },
        AgentProblem { objective: BuiltinField::Constant { dim: 2, value: 3.0 }, constraints: vec![] },
    ];
    ProblemSet::new(agents).expect("showcase agents share m = 2")
}
