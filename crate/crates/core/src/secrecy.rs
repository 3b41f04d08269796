//! Secrecy capacity of a victim user against a passive eavesdropper.
//!
//! The victim's signal factor `S = √(α_a P_a)/L_s` enters the SNR expressions
//! exactly as an amplitude-like factor, and the eavesdropper's noise floor is
//! `σ_z² + σ_a²` with no channel gain applied to `σ_a²`.
//!
//! [`monte_carlo_secrecy`] averages the capacity over Rayleigh fading. All
//! sweep points reuse the same fading draws (common random numbers), so
//! comparisons between points are free of sampling noise in the channel.

use rayon::prelude::*;

use crate::channel::{db_to_linear, eavesdropper_gain, rayleigh_gain, FadingMode};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecrecyInputs {
    pub alpha_a: f64,
    pub p_a: f64,
    pub l_s: f64,
    pub h2_a: f64,
    pub h2_ev: f64,
    pub sigma_z2: f64,
    /// Victim's artificial-noise power seen by the eavesdropper.
    pub sigma_a2: f64,
    /// Residual variance at the server, `M²σ_A² + σ_z²`.
    pub sigma_zprime2: f64,
}

impl SecrecyInputs {
    pub fn signal_factor(&self) -> f64 {
        (self.alpha_a * self.p_a).sqrt() / self.l_s
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("alpha_a", self.alpha_a),
            ("p_a", self.p_a),
            ("h2_a", self.h2_a),
            ("h2_ev", self.h2_ev),
            ("sigma_z2", self.sigma_z2),
            ("sigma_a2", self.sigma_a2),
            ("sigma_zprime2", self.sigma_zprime2),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !(self.l_s > 0.0 && self.l_s.is_finite()) {
            return Err(Error::domain(format!("L_s must be positive, got {}", self.l_s)));
        }
        if self.sigma_zprime2 == 0.0 {
            return Err(Error::domain("server residual variance is zero"));
        }
        if self.sigma_z2 + self.sigma_a2 == 0.0 {
            return Err(Error::domain("eavesdropper noise floor is zero"));
        }
        if self.sigma_zprime2 < self.sigma_z2 {
            return Err(Error::domain(format!(
                "residual variance {} below channel noise {}",
                self.sigma_zprime2, self.sigma_z2
            )));
        }
        Ok(())
    }
}

/// SNRs and capacities (bits per channel use) for one channel state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SecrecyPoint {
    pub snr_s: f64,
    pub c_s: f64,
    pub snr_ev: f64,
    pub c_ev: f64,
    pub c: f64,
}

pub fn secrecy_point(inputs: &SecrecyInputs) -> Result<SecrecyPoint> {
    inputs.validate()?;
    Ok(eval(
        inputs.signal_factor(),
        inputs.h2_a,
        inputs.h2_ev,
        inputs.sigma_zprime2,
        inputs.sigma_z2 + inputs.sigma_a2,
    ))
}

#[inline]
fn eval(s: f64, h2: f64, h2_ev: f64, server_noise: f64, ev_noise: f64) -> SecrecyPoint {
    let rx_s = s * h2;
    let rx_ev = s * h2_ev;
    let c_s = (rx_s + server_noise).log2() - server_noise.log2();
    let c_ev = (rx_ev + ev_noise).log2() - ev_noise.log2();
    SecrecyPoint {
        snr_s: rx_s / server_noise,
        c_s,
        snr_ev: rx_ev / ev_noise,
        c_ev,
        c: (c_s - c_ev).max(0.0),
    }
}

/// Where the eavesdropper's artificial-noise power comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EavesdropperNoise {
    /// `σ_a²` is taken from the sweep grid as given.
    Literal,
    /// `σ_a² = (1 − α) · P · v` with `v` the grid value: the victim spends
    /// its remaining power on noise of per-entry variance `v`.
    Linked,
}

/// Grid of scenarios to evaluate. Every combination of the listed values is
/// one sweep point. Powers and noise levels are given in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct SecrecySweep {
    pub alphas: Vec<f64>,
    pub powers_db: Vec<f64>,
    pub delta_hs: Vec<f64>,
    pub sigma_a2_db: Vec<f64>,
    pub sigma_agg2_db: Vec<f64>,
    /// `M²` in `σ_z'² = M²σ_A² + σ_z²`.
    pub residual_gain2: f64,
    pub sigma_z2: f64,
    pub l_s: f64,
    pub fading: FadingMode,
    pub eavesdropper_noise: EavesdropperNoise,
}

impl SecrecySweep {
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &p_db in &self.powers_db {
            for &sigma_agg2_db in &self.sigma_agg2_db {
                for &sigma_a2_db in &self.sigma_a2_db {
                    for &delta_h in &self.delta_hs {
                        for &alpha in &self.alphas {
                            out.push(SweepPoint {
                                alpha,
                                p_db,
                                delta_h,
                                sigma_a2_db,
                                sigma_agg2_db,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let grids: [(&'static str, &Vec<f64>); 5] = [
            ("alpha grid", &self.alphas),
            ("power grid", &self.powers_db),
            ("delta_h grid", &self.delta_hs),
            ("sigma_a2 grid", &self.sigma_a2_db),
            ("sigma_A2 grid", &self.sigma_agg2_db),
        ];
        for (name, g) in grids {
            if g.is_empty() {
                return Err(Error::EmptySweep(name));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("{name} contains a non-finite value")));
            }
        }
        if self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::domain("alpha values must lie in [0, 1]"));
        }
        if self.delta_hs.iter().any(|d| *d < 0.0) {
            return Err(Error::domain("delta_h values must be nonnegative"));
        }
        if !(self.residual_gain2 >= 0.0 && self.residual_gain2.is_finite()) {
            return Err(Error::domain("residual gain must be nonnegative"));
        }
        if !(self.sigma_z2 > 0.0) {
            return Err(Error::domain("channel noise variance must be positive"));
        }
        if !(self.l_s > 0.0) {
            return Err(Error::domain("L_s must be positive"));
        }
        if let FadingMode::Fixed(g) = &self.fading {
            if g.is_empty() {
                return Err(Error::domain("fixed fading needs at least one gain"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub p_db: f64,
    pub delta_h: f64,
    pub sigma_a2_db: f64,
    pub sigma_agg2_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepResult {
    pub point: SweepPoint,
    pub mean: SecrecyPoint,
}

/// Per-point constants hoisted out of the sample loop.
#[derive(Clone, Copy)]
struct Resolved {
    s: f64,
    delta_h: f64,
    server_noise: f64,
    ev_noise: f64,
}

fn resolve(sweep: &SecrecySweep, p: &SweepPoint) -> Resolved {
    let power = db_to_linear(p.p_db);
    let grid_a2 = db_to_linear(p.sigma_a2_db);
    let sigma_a2 = match sweep.eavesdropper_noise {
        EavesdropperNoise::Literal => grid_a2,
        EavesdropperNoise::Linked => (1.0 - p.alpha) * power * grid_a2,
    };
    Resolved {
        s: (p.alpha * power).sqrt() / sweep.l_s,
        delta_h: p.delta_h,
        server_noise: sweep.residual_gain2 * db_to_linear(p.sigma_agg2_db) + sweep.sigma_z2,
        ev_noise: sweep.sigma_z2 + sigma_a2,
    }
}

fn accumulate(acc: &mut [f64; 5], p: &SecrecyPoint) {
    acc[0] += p.snr_s;
    acc[1] += p.c_s;
    acc[2] += p.snr_ev;
    acc[3] += p.c_ev;
    acc[4] += p.c;
}

/// Mean secrecy metrics per sweep point over `n_samples` fading draws of the
/// victim's server-link gain. Fixed fading uses the first configured gain
/// and needs no sampling.
pub fn monte_carlo_secrecy(
    sweep: &SecrecySweep,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<SweepResult>> {
    sweep.validate()?;
    if n_samples == 0 {
        return Err(Error::domain("at least one sample is required"));
    }
    let points = sweep.points();
    let resolved: Vec<Resolved> = points.iter().map(|p| resolve(sweep, p)).collect();

    if let FadingMode::Fixed(gains) = &sweep.fading {
        let h2 = gains[0];
        return Ok(points
            .into_iter()
            .zip(&resolved)
            .map(|(point, r)| SweepResult {
                point,
                mean: eval(r.s, h2, eavesdropper_gain(h2, r.delta_h), r.server_noise, r.ev_noise),
            })
            .collect());
    }

    let batches: Vec<_> = rng::batches(n_samples).collect();
    let partial: Vec<Vec<[f64; 5]>> = batches
        .par_iter()
        .map(|&(b, _, len)| {
            let mut r = rng::stream(seed, &[b]);
            let gains: Vec<f64> = (0..len).map(|_| rayleigh_gain(&mut r)).collect();
            resolved
                .iter()
                .map(|rp| {
                    let mut acc = [0.0; 5];
                    for &h2 in &gains {
                        let pt = eval(rp.s, h2, eavesdropper_gain(h2, rp.delta_h), rp.server_noise, rp.ev_noise);
                        accumulate(&mut acc, &pt);
                    }
                    acc
                })
                .collect()
        })
        .collect();

    let n = n_samples as f64;
    Ok(points
        .into_iter()
        .enumerate()
        .map(|(i, point)| {
            let mut sum = [0.0; 5];
            for batch in &partial {
                for (s, v) in sum.iter_mut().zip(batch[i]) {
                    *s += v;
                }
            }
            SweepResult {
                point,
                mean: SecrecyPoint {
                    snr_s: sum[0] / n,
                    c_s: sum[1] / n,
                    snr_ev: sum[2] / n,
                    c_ev: sum[3] / n,
                    c: sum[4] / n,
                },
            }
        })
        .collect())
}
