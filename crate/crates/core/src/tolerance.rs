//! Floating-point comparison policy.
//!
//! Every comparison of network-function values, coordinates, and identity
//! sides goes through [`Tolerance`], which uses the mixed absolute/relative
//! form `|a - b| <= tol * (1 + max(|a|, |b|))`.

use serde::{Deserialize, Serialize};

/// Default tolerance for network-function comparisons.
pub const DEFAULT_PHI_TOL: f64 = 1e-9;
/// Round-trip tolerance for `grad_conjugate(grad(x)) = x`.
pub const DEFAULT_ROUNDTRIP_TOL: f64 = 1e-7;
/// Fenchel-identity tolerance for closed-form generators.
pub const DEFAULT_FENCHEL_TOL: f64 = 1e-9;
/// Relative error allowed between analytic and finite-difference gradients.
pub const DEFAULT_GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance(pub f64);

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance(DEFAULT_PHI_TOL)
    }
}

impl Tolerance {
    pub fn new(tol: f64) -> Option<Self> {
        (tol.is_finite() && tol > 0.0).then_some(Tolerance(tol))
    }

    /// `DIVNET_TOL` when set to a positive number, else the default.
    pub fn from_env() -> Self {
        std::env::var("DIVNET_TOL")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .and_then(Tolerance::new)
            .unwrap_or_default()
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn close(self, a: f64, b: f64) -> bool {
        relative_residual(a, b) <= self.0
    }

    /// Componentwise [`Tolerance::close`]; vectors of different length never match.
    pub fn close_vec(self, a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(&x, &y)| self.close(x, y))
    }
}

/// `|a - b| / (1 + max(|a|, |b|))`; NaN inputs give an infinite residual.
pub fn relative_residual(a: f64, b: f64) -> f64 {
    let r = (a - b).abs() / (1.0 + a.abs().max(b.abs()));
    if r.is_nan() {
        f64::INFINITY
    } else {
        r
    }
}
