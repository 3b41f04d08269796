//! Fading channels for the server link and the eavesdropper link.
//!
//! Channel coefficients are complex circularly-symmetric Gaussians with unit
//! variance, so the power gain `|h|²` is exponential with unit mean. Phase is
//! assumed corrected at the transmitter and only magnitudes enter the rest of
//! the crate. The eavesdropper sees the server gain reduced by a fixed gap,
//! `|h_e|² = (|h|² - Δh)⁺`.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};

/// Converts a decibel power quantity to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

#[derive(Debug, Clone, PartialEq)]
pub enum FadingMode {
    /// Fresh Rayleigh draw for every user on every realization.
    Rayleigh,
    /// Deterministic per-user power gains.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    fading: FadingMode,
    sigma_z2: f64,
    delta_h: f64,
}

impl ChannelConfig {
    pub fn new(fading: FadingMode, sigma_z2: f64, delta_h: f64) -> Result<Self> {
        if !(sigma_z2 > 0.0 && sigma_z2.is_finite()) {
            return Err(Error::domain(format!(
                "channel noise variance must be positive, got {sigma_z2}"
            )));
        }
        if !(delta_h >= 0.0 && delta_h.is_finite()) {
            return Err(Error::domain(format!(
                "gain gap delta_h must be nonnegative, got {delta_h}"
            )));
        }
        if let FadingMode::Fixed(gains) = &fading {
            if let Some(g) = gains.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
                return Err(Error::domain(format!("fixed gains must be >= 0, got {g}")));
            }
        }
        Ok(Self {
            fading,
            sigma_z2,
            delta_h,
        })
    }

    /// Unit-variance receiver noise, Rayleigh fading.
    pub fn rayleigh(delta_h: f64) -> Result<Self> {
        Self::new(FadingMode::Rayleigh, 1.0, delta_h)
    }

    pub fn fading(&self) -> &FadingMode {
        &self.fading
    }

    pub fn sigma_z2(&self) -> f64 {
        self.sigma_z2
    }

    pub fn delta_h(&self) -> f64 {
        self.delta_h
    }

    pub fn with_delta_h(&self, delta_h: f64) -> Result<Self> {
        Self::new(self.fading.clone(), self.sigma_z2, delta_h)
    }
}

/// Per-user power gains for one channel use.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Server-link gains `|h_k|²`.
    pub h2: Vec<f64>,
    /// Eavesdropper-link gains `|h_k^(e)|²`.
    pub h2_ev: Vec<f64>,
}

impl ChannelRealization {
    /// Builds a realization from server gains, deriving the eavesdropper
    /// gains with the gap rule.
    pub fn from_server_gains(h2: Vec<f64>, delta_h: f64) -> Self {
        let h2_ev = h2.iter().map(|&g| eavesdropper_gain(g, delta_h)).collect();
        Self { h2, h2_ev }
    }

    pub fn users(&self) -> usize {
        self.h2.len()
    }
}

#[inline]
pub fn eavesdropper_gain(h2: f64, delta_h: f64) -> f64 {
    (h2 - delta_h).max(0.0)
}

/// One Rayleigh power gain: `|h|²` with `h = a + jb`, `a, b ~ N(0, 1/2)`.
#[inline]
pub fn rayleigh_gain<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    0.5 * (re * re + im * im)
}

/// Draws gains for `users` users.
pub fn sample_channel<R: Rng + ?Sized>(
    config: &ChannelConfig,
    users: usize,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let h2 = sample_gains(&config.fading, users, rng)?;
    Ok(ChannelRealization::from_server_gains(h2, config.delta_h))
}

/// Server-link gains only. Consumes the generator exactly like
/// [`sample_channel`].
pub fn sample_gains<R: Rng + ?Sized>(
    fading: &FadingMode,
    users: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if users == 0 {
        return Err(Error::EmptySystem);
    }
    match fading {
        FadingMode::Rayleigh => Ok((0..users).map(|_| rayleigh_gain(rng)).collect()),
        FadingMode::Fixed(gains) => {
            if gains.len() != users {
                return Err(Error::DimensionMismatch {
                    expected: users,
                    got: gains.len(),
                });
            }
            Ok(gains.clone())
        }
    }
}

/// Additive white Gaussian noise with per-entry variance `sigma2`.
pub fn awgn<R: Rng + ?Sized>(dim: usize, sigma2: f64, rng: &mut R) -> Result<Vec<f64>> {
    let mut out = vec![0.0; dim];
    add_awgn(&mut out, sigma2, rng)?;
    Ok(out)
}

/// Adds AWGN in place.
pub fn add_awgn<R: Rng + ?Sized>(buf: &mut [f64], sigma2: f64, rng: &mut R) -> Result<()> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::domain(format!(
            "noise variance must be nonnegative, got {sigma2}"
        )));
    }
    if sigma2 == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::domain(e.to_string()))?;
    for x in buf.iter_mut() {
        *x += normal.sample(rng);
    }
    Ok(())
}
