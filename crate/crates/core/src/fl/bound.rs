use crate::error::{Error, Result};

/// Inputs to the convergence bound on `E[F(w_T) − F(w*)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Smoothness constant.
    pub mu: f64,
    /// Strong-convexity constant.
    pub lambda: f64,
    pub t: usize,
    pub l_s: f64,
    pub d: usize,
    pub m: f64,
    pub k: usize,
    /// `Σ_k |h_k|² β_k P_k`.
    pub noise_power_sum: f64,
    pub sigma_z2: f64,
}

/// `(2μ / (λ² T)) · (L_s² + d / (m² K²) · [Σ_k |h_k|² β_k P_k + σ_z²])`
pub fn convergence_bound(b: &BoundInputs) -> Result<f64> {
    if b.t == 0 {
        return Err(Error::domain("iteration count T must be at least 1"));
    }
    if b.k == 0 {
        return Err(Error::EmptySystem);
    }
    if !(b.m > 0.0 && b.m.is_finite()) {
        return Err(Error::DegenerateAlignment(b.m));
    }
    for (name, v) in [("mu", b.mu), ("lambda", b.lambda), ("L_s", b.l_s)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    if b.d == 0 {
        return Err(Error::domain("dimension d must be at least 1"));
    }
    for (name, v) in [("noise power sum", b.noise_power_sum), ("sigma_z2", b.sigma_z2)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be nonnegative, got {v}")));
        }
    }
    let k = b.k as f64;
    let lead = 2.0 * b.mu / (b.lambda * b.lambda * b.t as f64);
    let noise = b.d as f64 / (b.m * b.m * k * k) * (b.noise_power_sum + b.sigma_z2);
    Ok(lead * (b.l_s * b.l_s + noise))
}
