//! Pairwise cancellable random artificial noise.
//!
//! Users are matched into pairs that share a secret `(μ, σ²₊, σ²₋)`. The
//! positive-role user masks its gradient with `N(+μ, σ²₊)` noise and its
//! partner with `N(-μ, σ²₋)`, so the means cancel in the over-the-air sum and
//! only a zero-mean residual of variance `σ_A² = Σ (σ²₊ + σ²₋)` survives.
//!
//! This module also computes the transmit power split: the alignment constant
//! `m` and gradient shares `α_k` from channel inversion, and the noise shares
//! `β_k` either fixed or derived from a local differential privacy target.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Relative tolerance used when checking `|h_k|·√(α_k P_k)/L_s = m`.
pub const ALIGNMENT_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Positive,
    Negative,
}

/// Noise parameters shared by the two users of a pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSecret {
    pub mu: f64,
    pub sigma2_pos: f64,
    pub sigma2_neg: f64,
}

impl PairSecret {
    pub fn new(mu: f64, sigma2_pos: f64, sigma2_neg: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::domain(format!("secret mean must be finite, got {mu}")));
        }
        for s in [sigma2_pos, sigma2_neg] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::domain(format!(
                    "secret variance must be nonnegative, got {s}"
                )));
            }
        }
        Ok(Self {
            mu,
            sigma2_pos,
            sigma2_neg,
        })
    }

    pub fn mean(&self, role: Role) -> f64 {
        match role {
            Role::Positive => self.mu,
            Role::Negative => -self.mu,
        }
    }

    pub fn variance(&self, role: Role) -> f64 {
        match role {
            Role::Positive => self.sigma2_pos,
            Role::Negative => self.sigma2_neg,
        }
    }
}

/// Ranges from which each pair draws its secret, uniformly and per run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecretDistribution {
    pub mu: (f64, f64),
    pub sigma2: (f64, f64),
}

impl SecretDistribution {
    /// Every pair gets the same secret.
    pub fn constant(mu: f64, sigma2: f64) -> Self {
        Self {
            mu: (mu, mu),
            sigma2: (sigma2, sigma2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (m0, m1) = self.mu;
        let (s0, s1) = self.sigma2;
        if !(m0.is_finite() && m1.is_finite() && m0 <= m1) {
            return Err(Error::domain(format!("bad secret mean range [{m0}, {m1}]")));
        }
        if !(s0 >= 0.0 && s1.is_finite() && s0 <= s1) {
            return Err(Error::domain(format!(
                "bad secret variance range [{s0}, {s1}]"
            )));
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PairSecret> {
        self.validate()?;
        let pick = |(lo, hi): (f64, f64), rng: &mut R| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        };
        let mu = pick(self.mu, rng);
        let s_pos = pick(self.sigma2, rng);
        let s_neg = pick(self.sigma2, rng);
        PairSecret::new(mu, s_pos, s_neg)
    }

    pub fn draw_all<R: Rng + ?Sized>(&self, pairs: usize, rng: &mut R) -> Result<Vec<PairSecret>> {
        (0..pairs).map(|_| self.draw(rng)).collect()
    }
}

/// A perfect matching of users, each pair listed as `(positive, negative)`.
/// User indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairing {
    pairs: Vec<(usize, usize)>,
    users: usize,
}

impl Pairing {
    /// Pairs `(0, 1), (2, 3), ...`.
    pub fn sequential(users: usize) -> Result<Self> {
        check_pairable(users)?;
        Ok(Self {
            pairs: (0..users / 2).map(|i| (2 * i, 2 * i + 1)).collect(),
            users,
        })
    }

    pub fn from_pairs(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let users = 2 * pairs.len();
        check_pairable(users)?;
        let mut seen = vec![false; users];
        for &(p, n) in &pairs {
            for u in [p, n] {
                if u >= users || std::mem::replace(&mut seen[u], true) {
                    return Err(Error::domain(format!(
                        "pairs must partition 0..{users}; user {u} is out of range or repeated"
                    )));
                }
            }
        }
        Ok(Self { pairs, users })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// Role of every user, indexed by user.
    pub fn roles(&self) -> Vec<Role> {
        let mut roles = vec![Role::Positive; self.users];
        for &(_, n) in &self.pairs {
            roles[n] = Role::Negative;
        }
        roles
    }

    /// Pair index of every user, indexed by user.
    pub fn pair_of(&self) -> Vec<usize> {
        let mut idx = vec![0; self.users];
        for (i, &(p, n)) in self.pairs.iter().enumerate() {
            idx[p] = i;
            idx[n] = i;
        }
        idx
    }
}

fn check_pairable(users: usize) -> Result<()> {
    if users == 0 {
        return Err(Error::EmptySystem);
    }
    if users % 2 != 0 {
        return Err(Error::OddUserCount(users));
    }
    Ok(())
}

/// Random perfect matching with random role assignment.
pub fn form_pairs<R: Rng + ?Sized>(users: usize, rng: &mut R) -> Result<Pairing> {
    check_pairable(users)?;
    let mut order: Vec<usize> = (0..users).collect();
    order.shuffle(rng);
    let pairs = order.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    Ok(Pairing { pairs, users })
}

/// Fills `buf` with i.i.d. draws of the role's noise.
pub fn fill_pcran<R: Rng + ?Sized>(
    secret: &PairSecret,
    role: Role,
    buf: &mut [f64],
    rng: &mut R,
) -> Result<()> {
    let mean = secret.mean(role);
    let var = secret.variance(role);
    if var == 0.0 {
        buf.fill(mean);
        return Ok(());
    }
    let normal = Normal::new(mean, var.sqrt()).map_err(|e| Error::domain(e.to_string()))?;
    for x in buf.iter_mut() {
        *x = normal.sample(rng);
    }
    Ok(())
}

pub fn draw_pcran<R: Rng + ?Sized>(
    secret: &PairSecret,
    role: Role,
    dim: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::domain("noise dimension must be at least 1"));
    }
    let mut out = vec![0.0; dim];
    fill_pcran(secret, role, &mut out, rng)?;
    Ok(out)
}

/// Channel-inversion result: common received gradient amplitude `m` and the
/// per-user gradient power shares.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub m: f64,
    pub alpha: Vec<f64>,
}

fn check_gains(h2: &[f64], power: &[f64]) -> Result<()> {
    if h2.is_empty() {
        return Err(Error::EmptySystem);
    }
    if h2.len() != power.len() {
        return Err(Error::DimensionMismatch {
            expected: h2.len(),
            got: power.len(),
        });
    }
    for (k, (&g, &p)) in h2.iter().zip(power).enumerate() {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::domain(format!("power of user {k} must be positive, got {p}")));
        }
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::DegenerateChannel { user: k });
        }
    }
    Ok(())
}

/// Index and value of the smallest effective gain `|h_q|² P_q`. First index
/// wins ties.
fn worst_user(h2: &[f64], power: &[f64]) -> (usize, f64) {
    h2.iter()
        .zip(power)
        .map(|(g, p)| g * p)
        .enumerate()
        .fold((0, f64::INFINITY), |best, (k, v)| if v < best.1 { (k, v) } else { best })
}

/// Channel inversion that maximizes the aligned gradient power:
/// `m = √(min_q |h_q|² P_q) / L_s` and `α_k = min_q(|h_q|² P_q) / (|h_k|² P_k)`.
pub fn compute_alignment(h2: &[f64], power: &[f64], l_s: f64) -> Result<Alignment> {
    compute_alignment_with_budget(h2, power, l_s, 1.0)
}

/// Channel inversion where the worst user spends only `signal_share` of its
/// power on the gradient. With `signal_share = 1` this is
/// [`compute_alignment`]; smaller shares leave at least `1 - signal_share`
/// of every user's power for artificial noise.
pub fn compute_alignment_with_budget(
    h2: &[f64],
    power: &[f64],
    l_s: f64,
    signal_share: f64,
) -> Result<Alignment> {
    check_gains(h2, power)?;
    if !(l_s > 0.0 && l_s.is_finite()) {
        return Err(Error::domain(format!("gradient bound L_s must be positive, got {l_s}")));
    }
    if !(signal_share > 0.0 && signal_share <= 1.0) {
        return Err(Error::domain(format!(
            "signal share must lie in (0, 1], got {signal_share}"
        )));
    }
    let (_, worst) = worst_user(h2, power);
    let m = (signal_share * worst).sqrt() / l_s;
    let alpha = h2
        .iter()
        .zip(power)
        .map(|(g, p)| (signal_share * worst / (g * p)).min(1.0))
        .collect();
    Ok(Alignment { m, alpha })
}

/// Per-user transmit power split.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub power: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub m: f64,
    pub l_s: f64,
}

impl PowerAllocation {
    /// Validates the allocation against the channel gains it was built for.
    pub fn new(
        h2: &[f64],
        power: Vec<f64>,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        m: f64,
        l_s: f64,
    ) -> Result<Self> {
        check_gains(h2, &power)?;
        for v in [&alpha, &beta] {
            if v.len() != h2.len() {
                return Err(Error::DimensionMismatch {
                    expected: h2.len(),
                    got: v.len(),
                });
            }
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::DegenerateAlignment(m));
        }
        if !(l_s > 0.0 && l_s.is_finite()) {
            return Err(Error::domain(format!("gradient bound L_s must be positive, got {l_s}")));
        }
        for k in 0..h2.len() {
            let (a, b) = (alpha[k], beta[k]);
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::domain(format!("alpha[{k}] = {a} outside [0, 1]")));
            }
            if !(b >= 0.0 && b <= 1.0 - a + 1e-12) {
                return Err(Error::domain(format!(
                    "beta[{k}] = {b} outside [0, 1 - alpha] = [0, {}]",
                    1.0 - a
                )));
            }
            let mk = (h2[k] * a * power[k]).sqrt() / l_s;
            if ((mk - m) / m).abs() > ALIGNMENT_RTOL {
                return Err(Error::domain(format!(
                    "user {k} arrives with gradient amplitude {mk}, expected m = {m}"
                )));
            }
        }
        Ok(Self {
            power,
            alpha,
            beta,
            m,
            l_s,
        })
    }

    /// Builds the allocation from channel inversion plus the given noise
    /// shares, clamping each `β_k` into `[0, 1 - α_k]`.
    pub fn from_alignment(
        h2: &[f64],
        power: Vec<f64>,
        l_s: f64,
        alignment: Alignment,
        beta: &[f64],
    ) -> Result<Self> {
        if beta.len() != h2.len() {
            return Err(Error::DimensionMismatch {
                expected: h2.len(),
                got: beta.len(),
            });
        }
        let beta = beta
            .iter()
            .zip(&alignment.alpha)
            .map(|(&b, &a)| b.clamp(0.0, 1.0 - a))
            .collect();
        Self::new(h2, power, alignment.alpha, beta, alignment.m, l_s)
    }

    pub fn users(&self) -> usize {
        self.power.len()
    }

    /// Received artificial-noise power `Σ_k |h_k|² β_k P_k`.
    pub fn noise_power_sum(&self, h2: &[f64]) -> f64 {
        h2.iter()
            .zip(&self.beta)
            .zip(&self.power)
            .map(|((g, b), p)| g * b * p)
            .sum()
    }
}

/// Total noise budget demanded by an `(ε, δ)` local DP target:
/// `Ψ = max_p (min_q |h_q|² P_q / ε_p) · ln(1.25/δ) − σ_z²`.
pub fn dp_noise_budget(
    h2: &[f64],
    power: &[f64],
    eps: &[f64],
    delta: f64,
    sigma_z2: f64,
) -> Result<f64> {
    check_gains(h2, power)?;
    if eps.len() != h2.len() {
        return Err(Error::DimensionMismatch {
            expected: h2.len(),
            got: eps.len(),
        });
    }
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::domain(format!("epsilon must be positive, got {e}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    let (_, worst) = worst_user(h2, power);
    let demand = eps
        .iter()
        .map(|e| worst / e)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(demand * (1.25 / delta).ln() - sigma_z2)
}

/// Outcome of the sequential noise-power allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaAllocation {
    pub psi: f64,
    /// Received noise power granted to each user, `Z_k`.
    pub z: Vec<f64>,
    /// `Z_k / (|h_k|² P_k)` before the power constraint is applied.
    pub beta_raw: Vec<f64>,
    /// Noise shares clamped into `[0, 1 - α_k]`.
    pub beta: Vec<f64>,
    /// Users whose share was cut by the clamp.
    pub clamped: Vec<bool>,
}

/// Hands out the budget `psi` in user order:
/// `Z_k = min(cap_k, (Ψ − Σ_{p<k} U_p)⁺)` with `U_p = Z_p`, then
/// `β_k = Z_k / (|h_k|² P_k)` clamped to `[0, 1 − α_k]`.
pub fn allocate_beta(
    psi: f64,
    caps: &[f64],
    h2: &[f64],
    power: &[f64],
    alpha: &[f64],
) -> Result<BetaAllocation> {
    check_gains(h2, power)?;
    for v in [caps, alpha] {
        if v.len() != h2.len() {
            return Err(Error::DimensionMismatch {
                expected: h2.len(),
                got: v.len(),
            });
        }
    }
    if let Some(c) = caps.iter().find(|c| !(**c >= 0.0)) {
        return Err(Error::domain(format!("noise caps must be nonnegative, got {c}")));
    }
    if !psi.is_finite() {
        return Err(Error::domain(format!("noise budget must be finite, got {psi}")));
    }

    let k = h2.len();
    let mut z = Vec::with_capacity(k);
    let mut used = 0.0;
    for &cap in caps {
        let zk = cap.min((psi - used).max(0.0));
        used += zk;
        z.push(zk);
    }
    let beta_raw: Vec<f64> = z
        .iter()
        .zip(h2.iter().zip(power))
        .map(|(zk, (g, p))| zk / (g * p))
        .collect();
    let (beta, clamped) = beta_raw
        .iter()
        .zip(alpha)
        .map(|(&b, &a)| {
            let hi = (1.0 - a).max(0.0);
            (b.clamp(0.0, hi), b > hi)
        })
        .unzip();
    Ok(BetaAllocation {
        psi,
        z,
        beta_raw,
        beta,
        clamped,
    })
}

/// Noise shares meeting a local `(ε, δ)` DP level.
#[allow(clippy::too_many_arguments)]
pub fn optimize_beta_dp(
    h2: &[f64],
    power: &[f64],
    alpha: &[f64],
    eps: &[f64],
    delta: f64,
    sigma_z2: f64,
    caps: &[f64],
) -> Result<BetaAllocation> {
    let psi = dp_noise_budget(h2, power, eps, delta, sigma_z2)?;
    allocate_beta(psi, caps, h2, power, alpha)
}

/// How users scale their artificial noise before transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseShaping {
    /// Every user scales its noise so that it reaches the server with the
    /// common amplitude `c = min_k |h_k|√(β_k P_k)`. The pair means then
    /// cancel exactly.
    #[default]
    PreEqualized,
    /// Noise is sent at full `√(β_k P_k)` amplitude; means cancel only when
    /// paired users happen to have equal effective gains.
    Raw,
}

/// Amplitude `|h_k|√(β_k P_k)` at which user k's unscaled noise arrives.
pub fn noise_gains(h2: &[f64], alloc: &PowerAllocation) -> Vec<f64> {
    h2.iter()
        .zip(&alloc.beta)
        .zip(&alloc.power)
        .map(|((g, b), p)| (g * b * p).sqrt())
        .collect()
}

/// Per-user factor applied to the drawn noise vector before transmission.
pub fn noise_scales(h2: &[f64], alloc: &PowerAllocation, shaping: NoiseShaping) -> Vec<f64> {
    let gains = noise_gains(h2, alloc);
    match shaping {
        NoiseShaping::Raw => vec![1.0; gains.len()],
        NoiseShaping::PreEqualized => {
            let target = gains.iter().copied().fold(f64::INFINITY, f64::min);
            gains
                .iter()
                .map(|&g| if g > 0.0 { target / g } else { 0.0 })
                .collect()
        }
    }
}

/// Predicted statistics of the aggregated artificial noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseStats {
    /// Front factor `M` in `A_t = M · Σ_k n_k` (after post-processing by
    /// `1/(mK)`). Under pre-equalization this is `c/(mK)`; in raw mode it is
    /// the RMS-equivalent factor.
    pub front_factor: f64,
    /// Aggregated variance `σ_A² = Σ_pairs (σ²₊ + σ²₋)`.
    pub sigma_a2: f64,
    /// Residual variance at the receiver, before post-processing:
    /// `(mK·M)² σ_A² + σ_z²`.
    pub sigma_zprime2: f64,
    /// Per-coordinate mean of the noise sum at the receiver. Exactly zero
    /// under pre-equalization.
    pub residual_mean: f64,
    pub sigma_z2: f64,
    pub m: f64,
    pub users: usize,
}

impl NoiseStats {
    /// Per-coordinate variance of `ŝ − (1/K)Σ s_k`.
    pub fn estimate_variance(&self) -> f64 {
        self.sigma_zprime2 / (self.m * self.users as f64).powi(2)
    }

    /// Per-coordinate bias of `ŝ`.
    pub fn estimate_bias(&self) -> f64 {
        self.residual_mean / (self.m * self.users as f64)
    }
}

pub fn aggregate_noise_stats(
    pairing: &Pairing,
    secrets: &[PairSecret],
    h2: &[f64],
    alloc: &PowerAllocation,
    sigma_z2: f64,
    shaping: NoiseShaping,
) -> Result<NoiseStats> {
    let k = pairing.users();
    if h2.len() != k || alloc.users() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: h2.len().min(alloc.users()),
        });
    }
    if secrets.len() != pairing.pairs().len() {
        return Err(Error::DimensionMismatch {
            expected: pairing.pairs().len(),
            got: secrets.len(),
        });
    }
    let gains = noise_gains(h2, alloc);
    let scales = noise_scales(h2, alloc, shaping);
    let eff: Vec<f64> = gains.iter().zip(&scales).map(|(g, s)| g * s).collect();

    let sigma_a2: f64 = secrets.iter().map(|s| s.sigma2_pos + s.sigma2_neg).sum();
    let mut noise_var = 0.0;
    let mut residual_mean = 0.0;
    for (&(p, n), s) in pairing.pairs().iter().zip(secrets) {
        noise_var += eff[p].powi(2) * s.sigma2_pos + eff[n].powi(2) * s.sigma2_neg;
        residual_mean += (eff[p] - eff[n]) * s.mu;
    }
    let mk = alloc.m * k as f64;
    let front_factor = match shaping {
        NoiseShaping::PreEqualized => eff.iter().copied().fold(f64::INFINITY, f64::min) / mk,
        NoiseShaping::Raw if sigma_a2 > 0.0 => (noise_var / sigma_a2).sqrt() / mk,
        NoiseShaping::Raw => (eff.iter().map(|g| g * g).sum::<f64>() / k as f64).sqrt() / mk,
    };
    Ok(NoiseStats {
        front_factor,
        sigma_a2,
        sigma_zprime2: noise_var + sigma_z2,
        residual_mean,
        sigma_z2,
        m: alloc.m,
        users: k,
    })
}

/// How each user's noise share `β_k` is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum BetaPolicy {
    /// Same share for every user, clamped into `[0, 1 − α_k]`.
    Fixed(f64),
    /// Derived from an `(ε, δ)` target with per-user noise caps.
    Dp {
        eps: Vec<f64>,
        delta: f64,
        caps: Vec<f64>,
    },
}

/// Everything a user population needs to set up its masked uplink.
#[derive(Debug, Clone, PartialEq)]
pub struct PcranConfig {
    /// Per-user maximum transmit power (linear).
    pub power: Vec<f64>,
    pub l_s: f64,
    /// Gradient power share of the worst user; 1 gives plain channel inversion.
    pub signal_share: f64,
    pub beta: BetaPolicy,
    pub secrets: SecretDistribution,
    pub shaping: NoiseShaping,
    /// Pair users at random; otherwise `(0,1), (2,3), ...`.
    pub random_pairing: bool,
}

impl PcranConfig {
    /// Power allocation for a given channel.
    pub fn allocate(&self, h2: &[f64], sigma_z2: f64) -> Result<PowerAllocation> {
        let alignment = compute_alignment_with_budget(h2, &self.power, self.l_s, self.signal_share)?;
        let beta = match &self.beta {
            BetaPolicy::Fixed(b) => vec![*b; h2.len()],
            BetaPolicy::Dp { eps, delta, caps } => {
                optimize_beta_dp(h2, &self.power, &alignment.alpha, eps, *delta, sigma_z2, caps)?.beta
            }
        };
        PowerAllocation::from_alignment(h2, self.power.clone(), self.l_s, alignment, &beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn close(a: f64, b: f64, rtol: f64) -> bool {
        (a - b).abs() <= rtol * b.abs().max(1e-300)
    }

    #[test]
    fn two_users_form_one_pair() {
        let p = form_pairs(2, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(p.pairs().len(), 1);
        let (a, b) = p.pairs()[0];
        let mut v = [a, b];
        v.sort();
        assert_eq!(v, [0, 1]);
        let roles = p.roles();
        assert_ne!(roles[0], roles[1]);
    }

    #[test]
    fn pairing_partitions_users() {
        for seed in 0..20 {
            let p = form_pairs(10, &mut rng::stream(seed, &[])).unwrap();
            let mut all: Vec<usize> = p.pairs().iter().flat_map(|&(a, b)| [a, b]).collect();
            all.sort();
            assert_eq!(all, (0..10).collect::<Vec<_>>());
            assert!(Pairing::from_pairs(p.pairs().to_vec()).is_ok());
        }
        let a = form_pairs(8, &mut rng::stream(4, &[])).unwrap();
        let b = form_pairs(8, &mut rng::stream(4, &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn odd_or_empty_user_count_rejected() {
        let mut r = rng::stream(0, &[]);
        assert!(matches!(form_pairs(3, &mut r), Err(Error::OddUserCount(3))));
        assert!(matches!(form_pairs(0, &mut r), Err(Error::EmptySystem)));
        assert!(Pairing::from_pairs(vec![(0, 0)]).is_err());
        assert!(Pairing::from_pairs(vec![(0, 3), (1, 2)]).is_ok());
    }

    #[test]
    fn zero_variance_noise_is_the_mean() {
        let s = PairSecret::new(0.5, 0.0, 0.0).unwrap();
        let mut r = rng::stream(0, &[]);
        assert_eq!(draw_pcran(&s, Role::Positive, 2, &mut r).unwrap(), vec![0.5, 0.5]);
        assert_eq!(draw_pcran(&s, Role::Negative, 2, &mut r).unwrap(), vec![-0.5, -0.5]);
        assert!(draw_pcran(&s, Role::Positive, 0, &mut r).is_err());
        assert!(PairSecret::new(0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn paired_draws_cancel_in_mean() {
        let s = PairSecret::new(0.5, 1.0, 1.0).unwrap();
        let mut r = rng::stream(9, &[]);
        let n = 1_000_000;
        let a = draw_pcran(&s, Role::Positive, n, &mut r).unwrap();
        let b = draw_pcran(&s, Role::Negative, n, &mut r).unwrap();
        let mean = a.iter().zip(&b).map(|(x, y)| x + y).sum::<f64>() / n as f64;
        // Sum has variance 2, so the standard error is sqrt(2/n).
        assert!(mean.abs() < 5.0 * (2.0 / n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn positive_role_moments() {
        let s = PairSecret::new(2.0, 4.0, 1.0).unwrap();
        let xs = draw_pcran(&s, Role::Positive, 1_000_000, &mut rng::stream(2, &[])).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(close(mean, 2.0, 0.01), "mean {mean}");
        assert!(close(var, 4.0, 0.01), "var {var}");
    }

    #[test]
    fn alignment_examples() {
        let a = compute_alignment(&[4.0, 9.0], &[1.0, 1.0], 1.0).unwrap();
        assert_eq!(a.m, 2.0);
        assert_eq!(a.alpha[0], 1.0);
        assert!(close(a.alpha[1], 4.0 / 9.0, 1e-15));

        let a = compute_alignment(&[1.0], &[1.0], 1.0).unwrap();
        assert_eq!((a.m, a.alpha.clone()), (1.0, vec![1.0]));

        let a = compute_alignment(&[4.0, 4.0], &[1.0, 1.0], 2.0).unwrap();
        assert_eq!((a.m, a.alpha.clone()), (1.0, vec![1.0, 1.0]));
    }

    #[test]
    fn alignment_rejects_dead_channel() {
        assert!(matches!(
            compute_alignment(&[1.0, 0.0], &[1.0, 1.0], 1.0),
            Err(Error::DegenerateChannel { user: 1 })
        ));
        assert!(compute_alignment(&[1.0], &[1.0], 0.0).is_err());
        assert!(compute_alignment(&[], &[], 1.0).is_err());
    }

    #[test]
    fn budgeted_alignment_caps_worst_user_share() {
        let h2 = [0.5, 2.0, 1.0];
        let p = [1000.0; 3];
        let a = compute_alignment_with_budget(&h2, &p, 1.0, 0.5).unwrap();
        assert!(close(a.alpha[0], 0.5, 1e-15));
        assert!(close(a.m, (0.5f64 * 500.0).sqrt(), 1e-15));
        let alloc =
            PowerAllocation::from_alignment(&h2, p.to_vec(), 1.0, a, &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(alloc.beta, vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn single_user_weak_privacy_needs_no_noise() {
        let out = optimize_beta_dp(&[1.0], &[1.0], &[1.0], &[10.0], 0.25, 1.0, &[5.0]).unwrap();
        assert!(close(out.psi, 0.1 * 5f64.ln() - 1.0, 1e-15));
        assert!(out.psi < 0.0);
        assert_eq!(out.beta, vec![0.0]);
    }

    #[test]
    fn sequential_waterfilling() {
        let out = allocate_beta(5.0, &[3.0, 3.0], &[1.0, 1.0], &[1.0, 1.0], &[0.0, 0.5]).unwrap();
        assert_eq!(out.z, vec![3.0, 2.0]);
        assert_eq!(out.beta_raw, vec![3.0, 2.0]);
        assert_eq!(out.beta, vec![1.0, 0.5]);
        assert_eq!(out.clamped, vec![true, true]);

        let out = allocate_beta(5.0, &[0.0, 0.0], &[1.0, 1.0], &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(out.beta, vec![0.0, 0.0]);
    }

    #[test]
    fn aggregated_variance_sums_pairs() {
        let pairing = Pairing::sequential(4).unwrap();
        let secrets = [
            PairSecret::new(5.0, 1.0, 2.0).unwrap(),
            PairSecret::new(-5.0, 3.0, 4.0).unwrap(),
        ];
        let h2 = [1.0, 2.0, 3.0, 4.0];
        let power = vec![1.0; 4];
        let al = compute_alignment(&h2, &power, 1.0).unwrap();
        let beta: Vec<f64> = al.alpha.iter().map(|a| 1.0 - a).collect();
        let alloc = PowerAllocation::from_alignment(&h2, power, 1.0, al, &beta).unwrap();
        let stats =
            aggregate_noise_stats(&pairing, &secrets, &h2, &alloc, 1.0, NoiseShaping::default())
                .unwrap();
        assert_eq!(stats.sigma_a2, 10.0);
        assert_eq!(stats.residual_mean, 0.0);
        assert!(stats.sigma_zprime2 >= 1.0);

        let quiet = [PairSecret::new(0.3, 0.0, 0.0).unwrap(); 2];
        let stats =
            aggregate_noise_stats(&pairing, &quiet, &h2, &alloc, 1.0, NoiseShaping::default())
                .unwrap();
        assert_eq!(stats.sigma_a2, 0.0);
        assert_eq!(stats.sigma_zprime2, 1.0);
    }

    #[test]
    fn raw_noise_leaves_mean_residual_when_gains_differ() {
        let pairing = Pairing::sequential(2).unwrap();
        let secrets = [PairSecret::new(1.0, 1.0, 1.0).unwrap()];
        let h2 = [1.0, 4.0];
        let power = vec![1.0, 1.0];
        let al = compute_alignment_with_budget(&h2, &power, 1.0, 0.5).unwrap();
        let alloc = PowerAllocation::from_alignment(&h2, power, 1.0, al, &[0.5, 0.5]).unwrap();
        let eq = aggregate_noise_stats(&pairing, &secrets, &h2, &alloc, 1.0, NoiseShaping::PreEqualized)
            .unwrap();
        let raw = aggregate_noise_stats(&pairing, &secrets, &h2, &alloc, 1.0, NoiseShaping::Raw).unwrap();
        assert_eq!(eq.residual_mean, 0.0);
        // gains √0.5 and 2√0.5 → residual (√0.5 − 2√0.5)·μ
        assert!(close(raw.residual_mean, -(0.5f64).sqrt(), 1e-12));
        assert!(raw.sigma_zprime2 > eq.sigma_zprime2);
    }

    proptest::proptest! {
        #[test]
        fn alignment_is_consistent(
            gains in proptest::collection::vec((1e-3f64..20.0, 1.0f64..2000.0), 1..12),
            l_s in 0.1f64..10.0,
        ) {
            let (h2, p): (Vec<f64>, Vec<f64>) = gains.into_iter().unzip();
            let a = compute_alignment(&h2, &p, l_s).unwrap();
            for k in 0..h2.len() {
                proptest::prop_assert!(a.alpha[k] > 0.0 && a.alpha[k] <= 1.0);
                let mk = h2[k].sqrt() * (a.alpha[k] * p[k]).sqrt() / l_s;
                proptest::prop_assert!(((mk - a.m) / a.m).abs() <= ALIGNMENT_RTOL);
            }
        }

        #[test]
        fn beta_allocation_is_feasible(
            users in proptest::collection::vec((1e-2f64..10.0, 1.0f64..1000.0, 0.0f64..50.0, 0.1f64..20.0), 1..10),
            delta in 1e-6f64..0.99,
            sigma_z2 in 0.0f64..5.0,
        ) {
            let h2: Vec<f64> = users.iter().map(|u| u.0).collect();
            let p: Vec<f64> = users.iter().map(|u| u.1).collect();
            let caps: Vec<f64> = users.iter().map(|u| u.2).collect();
            let eps: Vec<f64> = users.iter().map(|u| u.3).collect();
            let al = compute_alignment(&h2, &p, 1.0).unwrap();
            let out = optimize_beta_dp(&h2, &p, &al.alpha, &eps, delta, sigma_z2, &caps).unwrap();
            let used: f64 = out.z.iter().sum();
            proptest::prop_assert!(used <= out.psi.max(0.0) * (1.0 + 1e-12) + 1e-12);
            for k in 0..h2.len() {
                proptest::prop_assert!(out.beta[k] >= 0.0 && out.beta[k] <= 1.0 - al.alpha[k]);
            }
        }
    }
}
