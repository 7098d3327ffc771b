//! Exact analytic formulas used as oracles by the measurement harnesses.

use crate::error::{Error, Result};
use statrs::function::gamma::gamma;

/// Covariance of one Brownian-sheet component at parameter points `s`, `t`:
/// the product over axes of `min(s_k, t_k)`.
pub fn covariance(s: &[f64], t: &[f64]) -> Result<f64> {
    if s.len() != t.len() {
        return Err(Error::Domain(format!(
            "dimension mismatch: {} vs {}",
            s.len(),
            t.len()
        )));
    }
    for (k, (&a, &b)) in s.iter().zip(t).enumerate() {
        if a < 0.0 || b < 0.0 {
            return Err(Error::Domain(format!(
                "negative component at axis {k}: ({a}, {b})"
            )));
        }
    }
    Ok(s.iter().zip(t).map(|(&a, &b)| a.min(b)).product())
}

/// Hausdorff dimension of the zero set of an (N, d) sheet: `max(N - d/2, 0)`.
pub fn ehm_dimension(n_params: usize, d: usize) -> f64 {
    (n_params as f64 - d as f64 / 2.0).max(0.0)
}

/// Probability that planar Brownian motion started at distance `a_norm`
/// exits the annulus `r < |x| < R` through the outer circle.
pub fn davis(a_norm: f64, r: f64, big_r: f64) -> Result<f64> {
    if !(0.0 < r && r < a_norm && a_norm < big_r) {
        return Err(Error::Domain(format!(
            "need 0 < r < |a| < R, got r={r}, |a|={a_norm}, R={big_r}"
        )));
    }
    Ok((a_norm.ln() - r.ln()) / (big_r.ln() - r.ln()))
}

/// Ordered-simplex power integral
/// `∫_{0=s_0≤s_1≤…≤s_{2m}≤1} Π (s_j - s_{j-1})^{-b_j} ds`
/// evaluated as `Π Γ(1-b_j) / Γ(1 + 2m - Σ b_j)`.
pub fn gamma_simplex(b: &[f64]) -> Result<f64> {
    if b.is_empty() || b.len() % 2 != 0 {
        return Err(Error::Domain(format!(
            "need a nonempty even-length exponent family, got {}",
            b.len()
        )));
    }
    let sum: f64 = b.iter().sum();
    let tail = 1.0 + b.len() as f64 - sum;
    for &bj in b {
        if bj >= 1.0 {
            return Err(Error::Domain(format!("exponent {bj} must be < 1")));
        }
    }
    if tail <= 0.0 {
        return Err(Error::Domain(format!(
            "gamma pole: 1 + 2m - sum(b) = {tail} must be positive"
        )));
    }
    let numer: f64 = b.iter().map(|&bj| gamma(1.0 - bj)).product();
    Ok(numer / gamma(tail))
}
