//! Over-the-air aggregation: transmit frames, superposition on the multiple
//! access channel, and the server-side estimate of the mean gradient.
//!
//! All signals are real baseband vectors; phase is assumed corrected at each
//! transmitter. A single receiver noise vector is added per round.

use rand::Rng;

use crate::channel::{add_awgn, sample_channel, ChannelConfig};
use crate::error::{Error, Result};
use crate::pcran::{
    aggregate_noise_stats, fill_pcran, form_pairs, noise_scales, NoiseShaping, NoiseStats,
    PairSecret, Pairing, PcranConfig, PowerAllocation, Role,
};

/// Slack allowed when checking `‖s_k‖ ≤ L_s` on an already clipped vector.
const CLIP_SLACK: f64 = 1e-9;

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales `g` onto the ball of radius `l_s` if it lies outside.
pub fn clip_gradient(g: &[f64], l_s: f64) -> Vec<f64> {
    let mut out = g.to_vec();
    clip_in_place(&mut out, l_s);
    out
}

pub fn clip_in_place(g: &mut [f64], l_s: f64) {
    let n = norm(g);
    if n > l_s {
        let s = l_s / n;
        g.iter_mut().for_each(|x| *x *= s);
    }
}

/// One user's contribution as seen at the server:
/// `|h_k| (√(α_k P_k)/L_s · s_k + √(β_k P_k) · n_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitFrame {
    pub payload: Vec<f64>,
}

pub fn build_transmit(
    s_k: &[f64],
    n_k: &[f64],
    k: usize,
    alloc: &PowerAllocation,
    h2: &[f64],
) -> Result<TransmitFrame> {
    if s_k.len() != n_k.len() {
        return Err(Error::DimensionMismatch {
            expected: s_k.len(),
            got: n_k.len(),
        });
    }
    if k >= alloc.users() || k >= h2.len() {
        return Err(Error::domain(format!("user index {k} out of range")));
    }
    let n = norm(s_k);
    if n > alloc.l_s * (1.0 + CLIP_SLACK) {
        return Err(Error::Unclipped {
            user: k,
            norm: n,
            bound: alloc.l_s,
        });
    }
    let h = h2[k].sqrt();
    let sig = h * (alloc.alpha[k] * alloc.power[k]).sqrt() / alloc.l_s;
    let noi = h * (alloc.beta[k] * alloc.power[k]).sqrt();
    let payload = s_k
        .iter()
        .zip(n_k)
        .map(|(s, n)| {
            let y = sig * s + noi * n;
            if y.is_finite() {
                Ok(y)
            } else {
                Err(Error::domain(format!("non-finite payload for user {k}")))
            }
        })
        .collect::<Result<_>>()?;
    Ok(TransmitFrame { payload })
}

/// Received signal: the elementwise sum of all payloads plus receiver noise.
pub fn superpose(frames: &[TransmitFrame], z: &[f64]) -> Result<Vec<f64>> {
    if frames.is_empty() {
        return Err(Error::NoTransmitters);
    }
    let mut r = z.to_vec();
    for f in frames {
        if f.payload.len() != r.len() {
            return Err(Error::DimensionMismatch {
                expected: r.len(),
                got: f.payload.len(),
            });
        }
        r.iter_mut().zip(&f.payload).for_each(|(a, b)| *a += b);
    }
    Ok(r)
}

/// Server-side estimate of the mean gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateEstimate {
    pub s_hat: Vec<f64>,
    pub noise_stats: Option<NoiseStats>,
}

/// Post-processing `ŝ = r / (mK)`.
pub fn postprocess(r: &[f64], m: f64, users: usize) -> Result<AggregateEstimate> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::DegenerateAlignment(m));
    }
    if users == 0 {
        return Err(Error::EmptySystem);
    }
    let scale = 1.0 / (m * users as f64);
    Ok(AggregateEstimate {
        s_hat: r.iter().map(|x| x * scale).collect(),
        noise_stats: None,
    })
}

/// A configured uplink: channel gains, power split and noise secrets fixed
/// for the duration of an experiment. Each call to [`AirCompLink::round`]
/// performs one aggregation.
#[derive(Debug, Clone)]
pub struct AirCompLink {
    h2: Vec<f64>,
    alloc: PowerAllocation,
    roles: Vec<Role>,
    user_secret: Vec<PairSecret>,
    scales: Vec<f64>,
    sigma_z2: f64,
    stats: NoiseStats,
}

impl AirCompLink {
    pub fn new(
        h2: Vec<f64>,
        alloc: PowerAllocation,
        pairing: &Pairing,
        secrets: &[PairSecret],
        sigma_z2: f64,
        shaping: NoiseShaping,
    ) -> Result<Self> {
        if !(sigma_z2 >= 0.0 && sigma_z2.is_finite()) {
            return Err(Error::domain(format!(
                "noise variance must be nonnegative, got {sigma_z2}"
            )));
        }
        let stats = aggregate_noise_stats(pairing, secrets, &h2, &alloc, sigma_z2, shaping)?;
        let pair_of = pairing.pair_of();
        let user_secret = pair_of.iter().map(|&i| secrets[i]).collect();
        let scales = noise_scales(&h2, &alloc, shaping);
        Ok(Self {
            h2,
            alloc,
            roles: pairing.roles(),
            user_secret,
            scales,
            sigma_z2,
            stats,
        })
    }

    /// Draws a channel, pairing and secrets for `users` users and derives
    /// the power allocation.
    pub fn build<R: Rng + ?Sized>(
        channel: &ChannelConfig,
        pcran: &PcranConfig,
        users: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if pcran.power.len() != users {
            return Err(Error::DimensionMismatch {
                expected: users,
                got: pcran.power.len(),
            });
        }
        let realization = sample_channel(channel, users, rng)?;
        let pairing = if pcran.random_pairing {
            form_pairs(users, rng)?
        } else {
            Pairing::sequential(users)?
        };
        let secrets = pcran.secrets.draw_all(pairing.pairs().len(), rng)?;
        let alloc = pcran.allocate(&realization.h2, channel.sigma_z2())?;
        Self::new(
            realization.h2,
            alloc,
            &pairing,
            &secrets,
            channel.sigma_z2(),
            pcran.shaping,
        )
    }

    /// Same link with the receiver noise replaced.
    pub fn with_receiver_noise(mut self, sigma_z2: f64) -> Result<Self> {
        if !(sigma_z2 >= 0.0 && sigma_z2.is_finite()) {
            return Err(Error::domain(format!(
                "noise variance must be nonnegative, got {sigma_z2}"
            )));
        }
        self.stats.sigma_zprime2 += sigma_z2 - self.sigma_z2;
        self.stats.sigma_z2 = sigma_z2;
        self.sigma_z2 = sigma_z2;
        Ok(self)
    }

    pub fn users(&self) -> usize {
        self.h2.len()
    }

    pub fn h2(&self) -> &[f64] {
        &self.h2
    }

    pub fn allocation(&self) -> &PowerAllocation {
        &self.alloc
    }

    pub fn noise_stats(&self) -> &NoiseStats {
        &self.stats
    }

    /// Clips each user's gradient, masks it with its pair noise, transmits,
    /// and returns the server's estimate.
    pub fn round<R: Rng + ?Sized>(
        &self,
        gradients: &[Vec<f64>],
        rng: &mut R,
    ) -> Result<AggregateEstimate> {
        if gradients.len() != self.users() {
            return Err(Error::DimensionMismatch {
                expected: self.users(),
                got: gradients.len(),
            });
        }
        let dim = gradients[0].len();
        let mut noise = vec![0.0; dim];
        let mut frames = Vec::with_capacity(self.users());
        for (k, g) in gradients.iter().enumerate() {
            if g.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: g.len(),
                });
            }
            let s = clip_gradient(g, self.alloc.l_s);
            fill_pcran(&self.user_secret[k], self.roles[k], &mut noise, rng)?;
            let scale = self.scales[k];
            noise.iter_mut().for_each(|x| *x *= scale);
            frames.push(build_transmit(&s, &noise, k, &self.alloc, &self.h2)?);
        }
        let mut z = vec![0.0; dim];
        add_awgn(&mut z, self.sigma_z2, rng)?;
        let r = superpose(&frames, &z)?;
        let mut est = postprocess(&r, self.alloc.m, self.users())?;
        est.noise_stats = Some(self.stats);
        Ok(est)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcran::{compute_alignment, compute_alignment_with_budget};
    use crate::rng;

    fn alloc_for(h2: &[f64], power: Vec<f64>, beta: &[f64]) -> PowerAllocation {
        let al = compute_alignment_with_budget(h2, &power, 1.0, 0.5).unwrap();
        PowerAllocation::from_alignment(h2, power, 1.0, al, beta).unwrap()
    }

    #[test]
    fn clipping() {
        assert_eq!(clip_gradient(&[0.3, 0.4], 1.0), vec![0.3, 0.4]);
        assert_eq!(clip_gradient(&[2.0, 0.0], 1.0), vec![1.0, 0.0]);
        assert_eq!(clip_gradient(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
        let c = clip_gradient(&[3.0, -4.0, 12.0], 2.0);
        assert!((norm(&c) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_part_is_m_times_s() {
        // h2·P = 4 with a single user: m = 2 under full signal share.
        let h2 = [4.0];
        let al = compute_alignment(&h2, &[1.0], 1.0).unwrap();
        let alloc = PowerAllocation::from_alignment(&h2, vec![1.0], 1.0, al, &[0.0]).unwrap();
        let f = build_transmit(&[1.0], &[123.0], 0, &alloc, &h2).unwrap();
        assert_eq!(f.payload, vec![2.0]);
    }

    #[test]
    fn zero_inputs_give_zero_payload() {
        let h2 = [1.0, 2.0];
        let alloc = alloc_for(&h2, vec![10.0, 10.0], &[0.5, 0.5]);
        let f = build_transmit(&[0.0, 0.0], &[0.0, 0.0], 1, &alloc, &h2).unwrap();
        assert_eq!(f.payload, vec![0.0, 0.0]);
    }

    #[test]
    fn no_signal_share_sends_only_noise() {
        let h2 = [4.0];
        let alloc = PowerAllocation {
            power: vec![1.0],
            alpha: vec![0.0],
            beta: vec![1.0],
            m: 1.0,
            l_s: 1.0,
        };
        let f = build_transmit(&[0.7], &[0.5], 0, &alloc, &h2).unwrap();
        assert_eq!(f.payload, vec![1.0]);
    }

    #[test]
    fn unclipped_gradient_rejected() {
        let h2 = [1.0];
        let alloc = alloc_for(&h2, vec![1.0], &[0.0]);
        assert!(matches!(
            build_transmit(&[2.0], &[0.0], 0, &alloc, &h2),
            Err(Error::Unclipped { .. })
        ));
    }

    #[test]
    fn superposition() {
        let f = |v: Vec<f64>| TransmitFrame { payload: v };
        assert_eq!(superpose(&[f(vec![1.0]), f(vec![3.0])], &[0.0]).unwrap(), vec![4.0]);
        assert!(matches!(superpose(&[], &[0.0]), Err(Error::NoTransmitters)));
        assert_eq!(superpose(&[f(vec![0.0, 0.0])], &[0.5, -1.0]).unwrap(), vec![0.5, -1.0]);
        assert!(superpose(&[f(vec![1.0]), f(vec![1.0, 2.0])], &[0.0]).is_err());
    }

    #[test]
    fn postprocess_checks_alignment() {
        assert!(matches!(postprocess(&[1.0], 0.0, 1), Err(Error::DegenerateAlignment(_))));
        assert!(postprocess(&[1.0], 1.0, 0).is_err());
        assert_eq!(postprocess(&[4.0], 1.0, 2).unwrap().s_hat, vec![2.0]);
    }

    #[test]
    fn noiseless_unequal_channels_give_exact_mean() {
        // h2·P = [4, 9]; α rescales the stronger user so both arrive with m.
        let h2 = [4.0, 9.0];
        let al = compute_alignment(&h2, &[1.0, 1.0], 1.0).unwrap();
        let alloc = PowerAllocation::from_alignment(&h2, vec![1.0, 1.0], 1.0, al, &[0.0, 0.0]).unwrap();
        let frames = [
            build_transmit(&[1.0], &[0.0], 0, &alloc, &h2).unwrap(),
            build_transmit(&[1.0], &[0.0], 1, &alloc, &h2).unwrap(),
        ];
        let r = superpose(&frames, &[0.0]).unwrap();
        let est = postprocess(&r, alloc.m, 2).unwrap();
        assert!((est.s_hat[0] - 1.0).abs() < 1e-15);

        // Same with gradients 1 and 3 under L_s = 3.
        let al = compute_alignment(&h2, &[1.0, 1.0], 3.0).unwrap();
        let alloc = PowerAllocation::from_alignment(&h2, vec![1.0, 1.0], 3.0, al, &[0.0, 0.0]).unwrap();
        let frames = [
            build_transmit(&[1.0], &[0.0], 0, &alloc, &h2).unwrap(),
            build_transmit(&[3.0], &[0.0], 1, &alloc, &h2).unwrap(),
        ];
        let est = postprocess(&superpose(&frames, &[0.0]).unwrap(), alloc.m, 2).unwrap();
        assert!((est.s_hat[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn link_round_without_noise_is_exact() {
        let h2 = vec![0.3, 1.7, 0.9, 2.2];
        let alloc = alloc_for(&h2, vec![1000.0; 4], &[0.0; 4]);
        let pairing = Pairing::sequential(4).unwrap();
        let secrets = [PairSecret::new(3.0, 5.0, 5.0).unwrap(); 2];
        let link = AirCompLink::new(h2, alloc, &pairing, &secrets, 0.0, NoiseShaping::default()).unwrap();
        let grads = vec![vec![0.1, 0.2], vec![-0.3, 0.0], vec![0.5, 0.5], vec![0.0, -0.1]];
        let est = link.round(&grads, &mut rng::stream(0, &[])).unwrap();
        let truth = [0.075, 0.15];
        for (a, b) in est.s_hat.iter().zip(truth) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn link_estimate_is_unbiased_with_predicted_variance() {
        let h2 = vec![0.4, 1.3, 0.8, 2.5];
        let alloc = alloc_for(&h2, vec![100.0; 4], &[0.5; 4]);
        let pairing = Pairing::sequential(4).unwrap();
        let secrets = [
            PairSecret::new(1.5, 0.5, 2.0).unwrap(),
            PairSecret::new(-0.7, 1.0, 0.25).unwrap(),
        ];
        let link = AirCompLink::new(h2, alloc, &pairing, &secrets, 1.0, NoiseShaping::default()).unwrap();
        let grads = vec![vec![0.2], vec![-0.4], vec![0.6], vec![0.1]];
        let truth = 0.125;
        let n = 200_000;
        let mut r = rng::stream(21, &[]);
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let e = link.round(&grads, &mut r).unwrap().s_hat[0] - truth;
            s1 += e;
            s2 += e * e;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let want = link.noise_stats().estimate_variance();
        assert!(mean.abs() <= 5.0 * (want / n as f64).sqrt(), "bias {mean}");
        assert!((var / want - 1.0).abs() < 0.02, "var {var} vs {want}");
    }

    proptest::proptest! {
        #[test]
        fn superpose_is_linear(
            a in proptest::collection::vec(-10.0f64..10.0, 3),
            b in proptest::collection::vec(-10.0f64..10.0, 3),
            c in -3.0f64..3.0,
        ) {
            let zero = [0.0; 3];
            let fa = TransmitFrame { payload: a.clone() };
            let fb = TransmitFrame { payload: b.clone() };
            let sum = superpose(&[fa.clone(), fb.clone()], &zero).unwrap();
            let ra = superpose(&[fa], &zero).unwrap();
            let rb = superpose(&[fb], &zero).unwrap();
            let scaled = superpose(&[TransmitFrame { payload: a.iter().map(|x| c * x).collect() }], &zero).unwrap();
            for i in 0..3 {
                proptest::prop_assert!((sum[i] - (ra[i] + rb[i])).abs() < 1e-12);
                proptest::prop_assert!((scaled[i] - c * ra[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn clipped_norm_is_bounded(g in proptest::collection::vec(-100.0f64..100.0, 1..20), l_s in 0.01f64..10.0) {
            proptest::prop_assert!(norm(&clip_gradient(&g, l_s)) <= l_s * (1.0 + 1e-12));
        }
    }
}
