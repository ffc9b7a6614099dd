//! Central-difference verification harness for hand-written backward passes.

use crate::error::{Result, SgnError};

/// An operation exposing a forward map and its vector-Jacobian product,
/// both over flat input/output vectors.
pub trait DiffOp {
    fn forward(&self, input: &[f64]) -> Vec<f64>;
    /// Returns `d⟨forward(x), cotangent⟩ / dx`.
    fn vjp(&self, input: &[f64], cotangent: &[f64]) -> Vec<f64>;
}

impl<F, G> DiffOp for (F, G)
where
    F: Fn(&[f64]) -> Vec<f64>,
    G: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    fn forward(&self, input: &[f64]) -> Vec<f64> {
        (self.0)(input)
    }
    fn vjp(&self, input: &[f64], cotangent: &[f64]) -> Vec<f64> {
        (self.1)(input, cotangent)
    }
}

/// Compare the implemented backward against central differences of
/// `⟨forward(x), u⟩` for a fixed cotangent `u`. Returns the worst relative
/// error over all input elements.
pub fn finite_diff_check(op: &dyn DiffOp, input: &[f64], cotangent: &[f64], eps: f64) -> Result<f64> {
    assert!(eps > 0.0, "eps must be positive");
    let base = op.forward(input);
    if !base.iter().all(|x| x.is_finite()) {
        return Err(SgnError::Numerical("non-finite forward output in gradient check".into()));
    }
    assert_eq!(base.len(), cotangent.len(), "cotangent length must match output");
    let analytic = op.vjp(input, cotangent);
    assert_eq!(analytic.len(), input.len(), "vjp length must match input");

    let inner = |y: &[f64]| -> f64 { y.iter().zip(cotangent).map(|(a, b)| a * b).sum() };
    let mut worst = 0.0f64;
    let mut x = input.to_vec();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let plus = inner(&op.forward(&x));
        x[i] = orig - eps;
        let minus = inner(&op.forward(&x));
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(SgnError::Numerical("non-finite forward output in gradient check".into()));
        }
        let fd = (plus - minus) / (2.0 * eps);
        let an = analytic[i];
        let denom = fd.abs().max(an.abs()).max(1e-8);
        worst = worst.max((fd - an).abs() / denom);
    }
    Ok(worst)
}
