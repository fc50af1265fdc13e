//! Per-agent time-varying objectives and constraints with closed-form
//! derivative jets.
//!
//! Every field is a built-in family selected by name in scenario files:
//!
//! | `type`               | field                               |
//! |----------------------|-------------------------------------|
//! | `quadratic_tracking` | `½ (x − c(t))ᵀ Q (x − c(t))`        |
//! | `affine`             | `aᵀx − b(t)`                        |
//! | `quadratic_norm`     | `‖x‖² − b(t)`                       |
//! | `constant`           | `value`                             |
//!
//! Time profiles `c_k(t)` and `b(t)` are [`TimeFn`]s.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fd;
use crate::graph::{benchmark_graph, Graph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("{field} is not finite at x = {x:?}, t = {t}")]
    NonFinite { field: String, x: Vec<f64>, t: f64 },
    #[error("invalid field definition: {0}")]
    Invalid(String),
    #[error("agent {} has dimension {found}, expected {expected}", .agent + 1)]
    DimensionMismatch { agent: usize, expected: usize, found: usize },
}

/// Scalar time profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeFn {
    Constant {
        value: f64,
    },
    /// `offset + slope·t`
    Linear {
        #[serde(default)]
        offset: f64,
        slope: f64,
    },
    /// `offset + amplitude·sin(frequency·t + phase)`
    Sinusoid {
        amplitude: f64,
        #[serde(default = "unit")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl TimeFn {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeFn::Constant { value } => value,
            TimeFn::Linear { offset, slope } => offset + slope * t,
            TimeFn::Sinusoid { amplitude, frequency, phase, offset } => {
                offset + amplitude * (frequency * t + phase).sin()
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            TimeFn::Constant { .. } => 0.0,
            TimeFn::Linear { slope, .. } => slope,
            TimeFn::Sinusoid { amplitude, frequency, phase, .. } => {
                amplitude * frequency * (frequency * t + phase).cos()
            }
        }
    }

    /// `amplitude·sin(t + phase)` shorthand.
    pub fn sinusoid(amplitude: f64, phase: f64) -> Self {
        TimeFn::Sinusoid { amplitude, frequency: 1.0, phase, offset: 0.0 }
    }
}

/// Value, gradient, Hessian and time partials of a scalar field at `(x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    /// ∂∇f/∂t
    pub time_gradient: DVector<f64>,
    /// ∂f/∂t
    pub time_value: f64,
}

impl Jet {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.time_value.is_finite()
            && self.gradient.iter().all(|v| v.is_finite())
            && self.hessian.iter().all(|v| v.is_finite())
            && self.time_gradient.iter().all(|v| v.is_finite())
    }
}

/// A twice differentiable scalar field on ℝᵐ × time.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn jet(&self, x: &DVector<f64>, t: f64) -> Jet;
    fn describe(&self) -> String;
}

/// Evaluates a jet and rejects non-finite results.
pub fn evaluate_jet<F: ScalarField + ?Sized>(field: &F, x: &DVector<f64>, t: f64) -> Result<Jet, FieldError> {
    let jet = field.jet(x, t);
    if jet.is_finite() {
        Ok(jet)
    } else {
        Err(FieldError::NonFinite { field: field.describe(), x: x.iter().copied().collect(), t })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum FieldSpec {
    QuadraticTracking {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
        target: Vec<TimeFn>,
    },
    Affine {
        a: Vec<f64>,
        b: TimeFn,
    },
    QuadraticNorm {
        dim: usize,
        b: TimeFn,
    },
    Constant {
        dim: usize,
        value: f64,
    },
}

/// The built-in field families. Serialized through the `type`-tagged JSON
/// form described in the module docs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldSpec", into = "FieldSpec")]
pub enum BuiltinField {
    QuadraticTracking { q: DMatrix<f64>, target: Vec<TimeFn> },
    Affine { a: DVector<f64>, b: TimeFn },
    QuadraticNorm { dim: usize, b: TimeFn },
    Constant { dim: usize, value: f64 },
}

impl TryFrom<FieldSpec> for BuiltinField {
    type Error = FieldError;

    fn try_from(spec: FieldSpec) -> Result<Self, FieldError> {
        match spec {
            FieldSpec::QuadraticTracking { q, target } => {
                let m = q.len();
                if m == 0 || q.iter().any(|row| row.len() != m) {
                    return Err(FieldError::Invalid("Q must be a non-empty square matrix".into()));
                }
                if target.len() != m {
                    return Err(FieldError::Invalid(format!(
                        "target has {} components but Q is {m}x{m}",
                        target.len()
                    )));
                }
                let q = DMatrix::from_fn(m, m, |i, j| q[i][j]);
                BuiltinField::quadratic_tracking(q, target)
            }
            FieldSpec::Affine { a, b } => {
                if a.is_empty() {
                    return Err(FieldError::Invalid("affine coefficient vector is empty".into()));
                }
                Ok(BuiltinField::Affine { a: DVector::from_vec(a), b })
            }
            FieldSpec::QuadraticNorm { dim, b } => {
                if dim == 0 {
                    return Err(FieldError::Invalid("dimension must be positive".into()));
                }
                Ok(BuiltinField::QuadraticNorm { dim, b })
            }
            FieldSpec::Constant { dim, value } => {
                if dim == 0 {
                    return Err(FieldError::Invalid("dimension must be positive".into()));
                }
                Ok(BuiltinField::Constant { dim, value })
            }
        }
    }
}

impl From<BuiltinField> for FieldSpec {
    fn from(field: BuiltinField) -> Self {
        match field {
            BuiltinField::QuadraticTracking { q, target } => FieldSpec::QuadraticTracking {
                q: q.row_iter().map(|row| row.iter().copied().collect()).collect(),
                target,
            },
            BuiltinField::Affine { a, b } => FieldSpec::Affine { a: a.iter().copied().collect(), b },
            BuiltinField::QuadraticNorm { dim, b } => FieldSpec::QuadraticNorm { dim, b },
            BuiltinField::Constant { dim, value } => FieldSpec::Constant { dim, value },
        }
    }
}

impl BuiltinField {
    pub fn quadratic_tracking(q: DMatrix<f64>, target: Vec<TimeFn>) -> Result<Self, FieldError> {
        if !q.is_square() || q.nrows() != target.len() {
            return Err(FieldError::Invalid("Q must be square and match the target length".into()));
        }
        if q != q.transpose() {
            return Err(FieldError::Invalid("Q must be symmetric".into()));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(FieldError::Invalid("Q has non-finite entries".into()));
        }
        Ok(BuiltinField::QuadraticTracking { q, target })
    }

    /// The constraint `g − delta`, i.e. `g ≤ delta` rewritten as `≤ 0`.
    pub fn shifted(&self, delta: f64) -> Self {
        let shift = |b: &TimeFn| match *b {
            TimeFn::Constant { value } => TimeFn::Constant { value: value + delta },
            TimeFn::Linear { offset, slope } => TimeFn::Linear { offset: offset + delta, slope },
            TimeFn::Sinusoid { amplitude, frequency, phase, offset } => {
                TimeFn::Sinusoid { amplitude, frequency, phase, offset: offset + delta }
            }
        };
        match self {
            BuiltinField::Affine { a, b } => BuiltinField::Affine { a: a.clone(), b: shift(b) },
            BuiltinField::QuadraticNorm { dim, b } => BuiltinField::QuadraticNorm { dim: *dim, b: shift(b) },
            BuiltinField::Constant { dim, value } => BuiltinField::Constant { dim: *dim, value: value - delta },
            BuiltinField::QuadraticTracking { .. } => self.clone(),
        }
    }

    fn target(target: &[TimeFn], t: f64) -> (DVector<f64>, DVector<f64>) {
        let c = DVector::from_iterator(target.len(), target.iter().map(|f| f.value(t)));
        let dc = DVector::from_iterator(target.len(), target.iter().map(|f| f.derivative(t)));
        (c, dc)
    }
}

impl ScalarField for BuiltinField {
    fn dim(&self) -> usize {
        match self {
            BuiltinField::QuadraticTracking { q, .. } => q.nrows(),
            BuiltinField::Affine { a, .. } => a.len(),
            BuiltinField::QuadraticNorm { dim, .. } | BuiltinField::Constant { dim, .. } => *dim,
        }
    }

    fn jet(&self, x: &DVector<f64>, t: f64) -> Jet {
        let m = self.dim();
        match self {
            BuiltinField::QuadraticTracking { q, target } => {
                let (c, dc) = Self::target(target, t);
                let e = x - c;
                let gradient = q * &e;
                let time_gradient = -(q * &dc);
                Jet {
                    value: 0.5 * e.dot(&gradient),
                    time_value: -gradient.dot(&dc),
                    gradient,
                    hessian: q.clone(),
                    time_gradient,
                }
            }
            BuiltinField::Affine { a, b } => Jet {
                value: a.dot(x) - b.value(t),
                gradient: a.clone(),
                hessian: DMatrix::zeros(m, m),
                time_gradient: DVector::zeros(m),
                time_value: -b.derivative(t),
            },
            BuiltinField::QuadraticNorm { b, .. } => Jet {
                value: x.norm_squared() - b.value(t),
                gradient: 2.0 * x,
                hessian: DMatrix::identity(m, m) * 2.0,
                time_gradient: DVector::zeros(m),
                time_value: -b.derivative(t),
            },
            BuiltinField::Constant { value, .. } => Jet {
                value: *value,
                gradient: DVector::zeros(m),
                hessian: DMatrix::zeros(m, m),
                time_gradient: DVector::zeros(m),
                time_value: 0.0,
            },
        }
    }

    fn describe(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for BuiltinField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuiltinField::QuadraticTracking { q, .. } => write!(f, "quadratic_tracking(m={})", q.nrows()),
            BuiltinField::Affine { a, .. } => write!(f, "affine(a={:?})", a.as_slice()),
            BuiltinField::QuadraticNorm { dim, .. } => write!(f, "quadratic_norm(m={dim})"),
            BuiltinField::Constant { value, .. } => write!(f, "constant({value})"),
        }
    }
}

/// Wraps a field and multiplies its analytic gradient by `factor`, leaving
/// the value untouched. Used to show that the derivative audit catches a
/// wrong gradient.
#[derive(Debug, Clone)]
pub struct GradientFault<F> {
    pub inner: F,
    pub factor: f64,
}

impl<F: ScalarField> ScalarField for GradientFault<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn jet(&self, x: &DVector<f64>, t: f64) -> Jet {
        let mut jet = self.inner.jet(x, t);
        jet.gradient *= self.factor;
        jet
    }

    fn describe(&self) -> String {
        format!("{} (gradient x{})", self.inner.describe(), self.factor)
    }
}

/// Scaled errors between analytic jet components and central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscrepancyReport {
    pub gradient: f64,
    pub hessian: f64,
    pub time_gradient: f64,
    pub time_value: f64,
}

impl DiscrepancyReport {
    pub fn max(&self) -> f64 {
        self.gradient.max(self.hessian).max(self.time_gradient).max(self.time_value)
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            gradient: self.gradient.max(other.gradient),
            hessian: self.hessian.max(other.hessian),
            time_gradient: self.time_gradient.max(other.time_gradient),
            time_value: self.time_value.max(other.time_value),
        }
    }

    pub fn zero() -> Self {
        Self { gradient: 0.0, hessian: 0.0, time_gradient: 0.0, time_value: 0.0 }
    }
}

/// Compares an analytic jet with `jet_of(x, t)` central differences.
pub(crate) fn compare(analytic: &Jet, numeric: &fd::NumericJet) -> DiscrepancyReport {
    DiscrepancyReport {
        gradient: fd::scaled_error(analytic.gradient.as_slice(), numeric.gradient.as_slice()),
        hessian: fd::scaled_error(analytic.hessian.as_slice(), numeric.hessian.as_slice()),
        time_gradient: fd::scaled_error(analytic.time_gradient.as_slice(), numeric.time_gradient.as_slice()),
        time_value: fd::scaled_error(&[analytic.time_value], &[numeric.time_value]),
    }
}

/// Audits a field's analytic jet against central differences with step `h`.
pub fn check_jet<F: ScalarField + ?Sized>(field: &F, x: &DVector<f64>, t: f64, h: f64) -> DiscrepancyReport {
    assert!(h > 0.0, "finite-difference step must be positive");
    let analytic = field.jet(x, t);
    let numeric = fd::numeric_jet(
        |y, s| {
            let j = field.jet(y, s);
            (j.value, j.gradient)
        },
        x,
        t,
        h,
    );
    compare(&analytic, &numeric)
}

/// Objective and inequality constraints `g_j(x, t) ≤ 0` private to one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentProblem {
    pub objective: BuiltinField,
    #[serde(default)]
    pub constraints: Vec<BuiltinField>,
}

impl AgentProblem {
    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }
}

/// The per-agent problems of a network, all on the same ℝᵐ.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSet {
    agents: Vec<AgentProblem>,
    dim: usize,
}

impl ProblemSet {
    pub fn new(agents: Vec<AgentProblem>) -> Result<Self, FieldError> {
        let dim = agents
            .first()
            .map(AgentProblem::dim)
            .ok_or_else(|| FieldError::Invalid("problem set has no agents".into()))?;
        for (i, agent) in agents.iter().enumerate() {
            let found = agent.constraints.iter().map(|c| c.dim()).chain([agent.dim()]);
            for found in found {
                if found != dim {
                    return Err(FieldError::DimensionMismatch { agent: i, expected: dim, found });
                }
            }
        }
        Ok(Self { agents, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn agents(&self) -> &[AgentProblem] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &AgentProblem {
        &self.agents[i]
    }

    pub fn total_constraints(&self) -> usize {
        self.agents.iter().map(AgentProblem::constraint_count).sum()
    }

    /// All fields, objectives first then constraints, tagged `(agent, slot)`
    /// where slot `None` is the objective.
    pub fn fields(&self) -> impl Iterator<Item = (usize, Option<usize>, &BuiltinField)> {
        self.agents.iter().enumerate().flat_map(|(i, a)| {
            std::iter::once((i, None, &a.objective))
                .chain(a.constraints.iter().enumerate().map(move |(j, c)| (i, Some(j), c)))
        })
    }

    /// Samples objective Hessian eigenvalues at the given points and returns a
    /// message for every agent whose smallest eigenvalue is negative.
    pub fn convexity_warnings(&self, samples: &[(DVector<f64>, f64)]) -> Vec<String> {
        let mut out = Vec::new();
        for (i, agent) in self.agents.iter().enumerate() {
            for (x, t) in samples {
                let h = agent.objective.jet(x, *t).hessian;
                let min = SymmetricEigen::new(h).eigenvalues.min();
                if min < 0.0 {
                    out.push(format!("agent {}: objective Hessian eigenvalue {min:e} at t = {t}", i + 1));
                    break;
                }
            }
        }
        out
    }
}

/// The 12-agent planar benchmark: agent `i` (1-based) minimizes
/// `½(x + i sin t)² + (3/2)(y − i cos t)²`; agents 1–6 carry
/// `y − x − cos t ≤ 0`, agents 7–12 carry `y − t ≤ 0`.
pub fn paper_benchmark() -> (Graph, ProblemSet) {
    use std::f64::consts::FRAC_PI_2;
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
    let agents = (1..=12)
        .map(|i| {
            let i_f = i as f64;
            let objective = BuiltinField::quadratic_tracking(
                q.clone(),
                vec![TimeFn::sinusoid(-i_f, 0.0), TimeFn::sinusoid(i_f, FRAC_PI_2)],
            )
            .expect("benchmark objective is valid");
            let constraint = if i <= 6 {
                BuiltinField::Affine { a: DVector::from_vec(vec![-1.0, 1.0]), b: TimeFn::sinusoid(1.0, FRAC_PI_2) }
            } else {
                BuiltinField::Affine { a: DVector::from_vec(vec![0.0, 1.0]), b: TimeFn::Linear { offset: 0.0, slope: 1.0 } }
            };
            AgentProblem { objective, constraints: vec![constraint] }
        })
        .collect();
    (benchmark_graph(), ProblemSet::new(agents).expect("benchmark agents share m = 2"))
}
