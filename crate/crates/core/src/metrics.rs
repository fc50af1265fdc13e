//! Run diagnostics and the convergence checks evaluated over trajectories.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::{in_domain, penalized_jet, BarrierError, BarrierSchedule};
use crate::graph::Graph;
use crate::oracle::OptimumReport;
use crate::problem::ProblemSet;
use crate::simulator::{SwarmState, Trajectory};

/// W1 values at or below this are treated as numerically zero.
pub const W1_FLOOR: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("decay rate not measurable: {0}")]
    NotMeasurable(String),
    #[error(transparent)]
    Barrier(#[from] BarrierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// ½‖Σ_i ∇L_i(x_i, t)‖²
    pub w1: f64,
    /// max_ij ‖x_i − x_j‖₂
    pub consensus_linf: f64,
    /// Σ over edges of ‖x_i − x_j‖₁
    pub edge_l1: f64,
    /// max_i ‖φ_i‖₂
    pub phi_max: f64,
    /// max_ij g_ij − 1/ρ
    pub margin_max: f64,
    /// max_i ‖x_i − y*(t)‖₂ when a reference optimum is known
    pub tracking_max: Option<f64>,
}

pub fn consensus_linf(x: &[DVector<f64>]) -> f64 {
    let mut worst = 0.0_f64;
    for (i, a) in x.iter().enumerate() {
        for b in &x[i + 1..] {
            worst = worst.max((a - b).norm());
        }
    }
    worst
}

pub fn edge_l1(graph: &Graph, x: &[DVector<f64>]) -> f64 {
    graph.edges().iter().map(|&(i, j)| (&x[i] - &x[j]).lp_norm(1)).sum()
}

pub fn tracking_max(x: &[DVector<f64>], ystar: &DVector<f64>) -> f64 {
    x.iter().map(|xi| (xi - ystar).norm()).fold(0.0, f64::max)
}

/// Recomputes every diagnostic from raw states and fresh jets.
pub fn diagnostics(
    problems: &ProblemSet,
    schedule: &BarrierSchedule,
    graph: &Graph,
    state: &SwarmState,
    beta: f64,
    ystar: Option<&DVector<f64>>,
) -> Result<DiagnosticsRecord, MetricsError> {
    let m = problems.dim();
    let mut grad_sum = DVector::zeros(m);
    let mut phi_max = 0.0_f64;
    let mut margin_max = f64::NEG_INFINITY;
    for (i, x) in state.x.iter().enumerate() {
        let agent = problems.agent(i);
        let jet = penalized_jet(agent, schedule, x, state.t)?;
        grad_sum += &jet.gradient;
        let neighbors: Vec<&DVector<f64>> = graph.neighbors(i).unwrap_or(&[]).iter().map(|&j| &state.x[j]).collect();
        if let Ok(c) = crate::controller::control(agent, schedule, beta, x, &neighbors, state.t) {
            phi_max = phi_max.max(c.phi.norm());
        }
        margin_max = margin_max.max(in_domain(agent, schedule, x, state.t).max_margin());
    }
    Ok(DiagnosticsRecord {
        t: state.t,
        w1: 0.5 * grad_sum.norm_squared(),
        consensus_linf: consensus_linf(&state.x),
        edge_l1: edge_l1(graph, &state.x),
        phi_max,
        margin_max,
        tracking_max: ystar.map(|y| tracking_max(&state.x, y)),
    })
}

/// Ordinary least-squares slope and intercept.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Least-squares slope of `ln W1` against `t` over `[t_a, t_b]`. Samples
/// after W1 first reaches [`W1_FLOOR`] are excluded.
pub fn w1_decay_fit(trajectory: &Trajectory, window: (f64, f64)) -> Result<f64, MetricsError> {
    let (t_a, t_b) = window;
    let mut points = Vec::new();
    for r in &trajectory.records {
        if r.t < t_a || r.t > t_b {
            continue;
        }
        if r.diagnostics.w1 <= W1_FLOOR {
            break;
        }
        points.push((r.t, r.diagnostics.w1.ln()));
    }
    if points.len() < 2 {
        return Err(MetricsError::NotMeasurable(format!(
            "{} usable samples in [{t_a}, {t_b}] above the {W1_FLOOR:e} floor",
            points.len()
        )));
    }
    linear_fit(&points)
        .map(|(slope, _)| slope)
        .ok_or_else(|| MetricsError::NotMeasurable("degenerate time window".into()))
}

/// Default fit window `[0, min(5, t_floor)]`.
pub fn default_w1_window(trajectory: &Trajectory) -> (f64, f64) {
    let t_floor = trajectory
        .records
        .iter()
        .find(|r| r.diagnostics.w1 <= W1_FLOOR)
        .map_or(f64::INFINITY, |r| r.t);
    (0.0, t_floor.min(5.0))
}

/// Pass thresholds for [`lemma_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub w1_slope: f64,
    pub w1_slope_tolerance: f64,
    pub consensus: f64,
    pub tracking: f64,
    /// Allowed rise of the fitted φ trend across the final half, as a fraction
    /// of the largest φ seen in that half.
    pub phi_trend: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { w1_slope: -2.0, w1_slope_tolerance: 0.1, consensus: 1e-2, tracking: 0.1, phi_trend: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaCheck {
    pub lemma: String,
    pub pass: bool,
    pub evidence: serde_json::Value,
    pub threshold: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct LemmaReport {
    pub checks: Vec<LemmaCheck>,
}

impl LemmaReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, lemma: &str) -> Option<&LemmaCheck> {
        self.checks.iter().find(|c| c.lemma == lemma)
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<22} {:<5} {}\n", "check", "pass", "evidence");
        for c in &self.checks {
            out.push_str(&format!(
                "{:<22} {:<5} {}\n",
                c.lemma,
                if c.pass { "yes" } else { "NO" },
                c.evidence
            ));
        }
        out
    }
}

/// Fills `tracking_max` on every record whose time matches an oracle sample
/// within `1e-9`.
pub fn attach_tracking(trajectory: &mut Trajectory, oracle: &[OptimumReport]) {
    for r in &mut trajectory.records {
        if let Some(o) = oracle.iter().find(|o| (o.t - r.t).abs() <= 1e-9) {
            r.diagnostics.tracking_max = Some(tracking_max(&r.x, &o.y_star));
        }
    }
}

/// Evaluates the five run-level checks:
///
/// * `domain_invariance`: every margin negative
/// * `gradient_sum_decay`: fitted `ln W1` slope within tolerance of −2
/// * `consensus`: final pairwise spread below threshold
/// * `phi_bounded`: φ finite and not trending upward over the final half
/// * `tracking`: final distance to the oracle optimum below threshold
pub fn lemma_suite(trajectory: &Trajectory, oracle: &[OptimumReport], thresholds: &Thresholds) -> LemmaReport {
    use serde_json::json;
    let records = &trajectory.records;
    let mut checks = Vec::new();

    let recorded_max = records.iter().map(|r| r.diagnostics.margin_max).fold(f64::NEG_INFINITY, f64::max);
    checks.push(LemmaCheck {
        lemma: "domain_invariance".into(),
        pass: recorded_max < 0.0 && trajectory.max_margin < 0.0,
        evidence: json!({"max_recorded_margin": recorded_max, "max_margin_all_steps": trajectory.max_margin}),
        threshold: json!({"margin_below": 0.0}),
    });

    let window = default_w1_window(trajectory);
    let (pass, evidence) = match w1_decay_fit(trajectory, window) {
        Ok(slope) => (
            (slope - thresholds.w1_slope).abs() <= thresholds.w1_slope_tolerance,
            json!({"slope": slope, "window": [window.0, window.1]}),
        ),
        Err(e) => (false, json!({"error": e.to_string()})),
    };
    checks.push(LemmaCheck {
        lemma: "gradient_sum_decay".into(),
        pass,
        evidence,
        threshold: json!({"slope": thresholds.w1_slope, "tolerance": thresholds.w1_slope_tolerance}),
    });

    let final_consensus = records.last().map_or(f64::NAN, |r| r.diagnostics.consensus_linf);
    checks.push(LemmaCheck {
        lemma: "consensus".into(),
        pass: final_consensus <= thresholds.consensus,
        evidence: json!({"final_consensus_linf": final_consensus}),
        threshold: json!({"consensus_linf_at_most": thresholds.consensus}),
    });

    let t_end = records.last().map_or(0.0, |r| r.t);
    let half: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.t >= 0.5 * t_end)
        .map(|r| (r.t, r.diagnostics.phi_max))
        .collect();
    let sup = records.iter().map(|r| r.diagnostics.phi_max).fold(0.0, f64::max);
    let half_sup = half.iter().map(|p| p.1).fold(0.0, f64::max);
    let slope = linear_fit(&half).map_or(0.0, |(s, _)| s);
    let span = half.last().map_or(0.0, |p| p.0) - half.first().map_or(0.0, |p| p.0);
    let rise = slope * span;
    checks.push(LemmaCheck {
        lemma: "phi_bounded".into(),
        pass: sup.is_finite() && rise <= thresholds.phi_trend * half_sup,
        evidence: json!({"phi_sup": sup, "final_half_slope": slope, "final_half_rise": rise, "final_half_sup": half_sup}),
        threshold: json!({"max_rise_fraction": thresholds.phi_trend}),
    });

    let final_tracking = records.last().and_then(|r| {
        r.diagnostics
            .tracking_max
            .or_else(|| oracle.iter().find(|o| (o.t - r.t).abs() <= 1e-9).map(|o| tracking_max(&r.x, &o.y_star)))
    });
    checks.push(LemmaCheck {
        lemma: "tracking".into(),
        pass: final_tracking.is_some_and(|v| v <= thresholds.tracking),
        evidence: match final_tracking {
            Some(v) => json!({"final_tracking_max": v}),
            None => json!({"error": "no oracle sample at the final time"}),
        },
        threshold: json!({"tracking_at_most": thresholds.tracking}),
    });

    LemmaReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{AssumptionSample, Record};

    fn synthetic(w1: impl Fn(f64) -> f64) -> Trajectory {
        let records = (0..=50)
            .map(|k| {
                let t = k as f64 * 0.1;
                Record {
                    t,
                    x: vec![DVector::zeros(1)],
                    u: vec![DVector::zeros(1)],
                    phi: vec![DVector::zeros(1)],
                    margins: vec![vec![]],
                    hessian_extrema: vec![(1.0, 1.0)],
                    sgn_sum: DVector::zeros(1),
                    diagnostics: DiagnosticsRecord {
                        t,
                        w1: w1(t),
                        consensus_linf: 0.0,
                        edge_l1: 0.0,
                        phi_max: 1.0,
                        margin_max: f64::NEG_INFINITY,
                        tracking_max: None,
                    },
                    assumption_sups: AssumptionSample::default(),
                }
            })
            .collect();
        Trajectory { records, steps: 50, halvings: 0, max_sgn_residual: 0.0, max_margin: f64::NEG_INFINITY }
    }

    #[test]
    fn exact_exponential_slope() {
        let traj = synthetic(|t| (-2.0 * t).exp());
        let slope = w1_decay_fit(&traj, (0.0, 5.0)).unwrap();
        assert!((slope + 2.0).abs() < 1e-12);
    }

    #[test]
    fn floor_stops_the_fit() {
        let traj = synthetic(|t| if t < 1.0 { (-2.0 * t).exp() } else { 0.0 });
        assert!((w1_decay_fit(&traj, (0.0, 5.0)).unwrap() + 2.0).abs() < 1e-12);
        assert_eq!(default_w1_window(&traj), (0.0, 1.0));
        let flat = synthetic(|_| 0.0);
        assert!(matches!(w1_decay_fit(&flat, (0.0, 5.0)), Err(MetricsError::NotMeasurable(_))));
        assert!(w1_decay_fit(&traj, (7.0, 9.0)).is_err());
    }

    #[test]
    fn pair_disagreement() {
        let g = Graph::from_edge_list(2, &[(0, 1)]).unwrap();
        let x = vec![DVector::from_element(1, 1.0), DVector::from_element(1, 0.0)];
        assert_eq!(edge_l1(&g, &x), 1.0);
        assert_eq!(consensus_linf(&x), 1.0);
        assert_eq!(tracking_max(&x, &DVector::zeros(1)), 1.0);
    }

    #[test]
    fn single_agent_consensus_is_vacuous() {
        let traj = synthetic(|t| (-2.0 * t).exp());
        let report = lemma_suite(&traj, &[], &Thresholds::default());
        assert!(report.get("consensus").unwrap().pass);
        assert!(report.get("gradient_sum_decay").unwrap().pass);
        assert!(report.get("phi_bounded").unwrap().pass);
        // no oracle sample → tracking cannot pass
        assert!(!report.get("tracking").unwrap().pass);
        assert!(report.table().contains("tracking"));
    }

    #[test]
    fn growing_phi_fails() {
        let mut traj = synthetic(|t| (-2.0 * t).exp());
        for r in &mut traj.records {
            r.diagnostics.phi_max = 1.0 + r.t * r.t;
        }
        let report = lemma_suite(&traj, &[], &Thresholds::default());
        assert!(!report.get("phi_bounded").unwrap().pass);
    }
}
