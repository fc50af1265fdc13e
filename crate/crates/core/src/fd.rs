//! Central finite differences used to audit analytic derivative jets.

use nalgebra::{DMatrix, DVector};

/// Max elementwise deviation scaled by `max(1, max |analytic|)`.
pub fn scaled_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    debug_assert_eq!(analytic.len(), numeric.len());
    let scale = analytic.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
    diff / scale
}

/// Numeric derivatives of a (value, gradient) oracle at `(x, t)`.
#[derive(Debug, Clone)]
pub struct NumericJet {
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub time_gradient: DVector<f64>,
    pub time_value: f64,
}

/// Differentiates `eval(x, t) -> (value, gradient)` with step `h` in every
/// coordinate and in time.
pub fn numeric_jet<F>(eval: F, x: &DVector<f64>, t: f64, h: f64) -> NumericJet
where
    F: Fn(&DVector<f64>, f64) -> (f64, DVector<f64>),
{
    let m = x.len();
    let mut gradient = DVector::zeros(m);
    let mut hessian = DMatrix::zeros(m, m);
    let mut probe = x.clone();
    for k in 0..m {
        probe[k] = x[k] + h;
        let (fp, gp) = eval(&probe, t);
        probe[k] = x[k] - h;
        let (fm, gm) = eval(&probe, t);
        probe[k] = x[k];
        gradient[k] = (fp - fm) / (2.0 * h);
        hessian.set_column(k, &((gp - gm) / (2.0 * h)));
    }
    let (fp, gp) = eval(x, t + h);
    let (fm, gm) = eval(x, t - h);
    NumericJet {
        gradient,
        hessian,
        time_gradient: (gp - gm) / (2.0 * h),
        time_value: (fp - fm) / (2.0 * h),
    }
}
