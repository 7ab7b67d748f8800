//! Pieces shared by the penalized Poisson IWLS fits.

use serde::{Deserialize, Serialize};

/// Iteration control for penalized IWLS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IwlsControl {
    pub max_iter: usize,
    /// Convergence threshold on the largest absolute coefficient change.
    pub tol: f64,
    /// Largest number of step halvings per iteration.
    pub max_halvings: usize,
}

impl Default for IwlsControl {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-7,
            max_halvings: 10,
        }
    }
}

/// Guard for `exp` of the linear predictor.
pub(crate) const ETA_MAX: f64 = 700.0;

pub(crate) fn safe_exp(eta: f64) -> f64 {
    eta.min(ETA_MAX).exp()
}

/// Poisson deviance `2 Σ y ln(y / μ)`; cells with `y = 0` contribute 0.
///
/// The usual `−2 Σ (y − μ)` term is left out. For fits whose penalty leaves
/// constants unpenalized, `Σ μ̂ = Σ y` at convergence, so both conventions
/// give the same value there.
pub fn poisson_deviance<'a>(pairs: impl IntoIterator<Item = (&'a f64, &'a f64)>) -> f64 {
    pairs
        .into_iter()
        .map(|(&y, &mu)| {
            if y > 0.0 {
                2.0 * y * (y / mu).ln()
            } else {
                0.0
            }
        })
        .sum()
}

/// Full Poisson deviance including `−2 Σ (y − μ)`; the IWLS objective.
pub(crate) fn full_deviance<'a>(pairs: impl IntoIterator<Item = (&'a f64, &'a f64)>) -> f64 {
    pairs
        .into_iter()
        .map(|(&y, &mu)| {
            let base = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
            2.0 * (base - (y - mu))
        })
        .sum()
}

/// Accepts a candidate objective value, allowing for rounding near the optimum.
pub(crate) fn accept_step(candidate: f64, current: f64) -> bool {
    candidate.is_finite() && candidate <= current + 1e-10 * current.abs().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deviance_terms() {
        let y = [0.0, 2.0, 3.0];
        let mu = [0.5, 2.0, 1.5];
        let dev = poisson_deviance(y.iter().zip(mu.iter()));
        assert!((dev - 2.0 * 3.0 * 2f64.ln()).abs() < 1e-14);
        let full = full_deviance(y.iter().zip(mu.iter()));
        assert!((full - (dev - 2.0 * (0.0 - 0.5 + 0.0 + 1.5))).abs() < 1e-14);
    }
}
