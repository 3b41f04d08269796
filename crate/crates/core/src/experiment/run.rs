use rayon::prelude::*;

use super::{Experiment, ExperimentConfig, ResultTable};
use crate::aircomp::{clip_gradient, AirCompLink};
use crate::channel::sample_gains;
use crate::error::{Error, Result};
use crate::fl::{
    convergence_bound, train_with_link, BoundInputs, LearningRate, SyntheticTask, TaskSpec,
    TrainOptions,
};
use crate::pcran::{form_pairs, BetaPolicy, Pairing, PcranConfig, SecretDistribution};
use crate::rng::{self, SimRng};
use crate::secrecy::{monte_carlo_secrecy, SecrecySweep};

// Stream tags. Keys never include the alpha/beta pair, so compared
// configurations see the same data, channels and noise.
const TASK: u64 = 1;
const LINK: u64 = 2;
const ROUNDS: u64 = 3;
const NOISE: u64 = 4;
const GRADS: u64 = 5;

fn sweep(cfg: &ExperimentConfig, alphas: Vec<f64>, delta_hs: Vec<f64>) -> SecrecySweep {
    SecrecySweep {
        alphas,
        powers_db: cfg.powers.iter().map(|l| l.db).collect(),
        delta_hs,
        sigma_a2_db: cfg.sigma_a2.iter().map(|l| l.db).collect(),
        sigma_agg2_db: cfg.sigma_agg2.iter().map(|l| l.db).collect(),
        residual_gain2: cfg.residual_gain2,
        sigma_z2: cfg.sigma_z2,
        l_s: cfg.l_s,
        fading: cfg.fading.clone(),
        eavesdropper_noise: cfg.eavesdropper_noise,
    }
}

/// Mean secrecy capacity against the signal share, per power and gain gap.
pub fn fig3(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let sw = sweep(cfg, cfg.alphas.clone(), cfg.delta_h.clone());
    let mut table = ResultTable::new(&["alpha", "P_db", "delta_h", "mean_c"]);
    for r in monte_carlo_secrecy(&sw, cfg.samples, cfg.seed)? {
        table.push(vec![r.point.alpha, r.point.p_db, r.point.delta_h, r.mean.c])?;
    }
    Ok(table)
}

/// Mean secrecy capacity against transmit power, per residual noise level.
pub fn fig4(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let alpha = cfg.single("alphas", &cfg.alphas)?;
    let delta_h = cfg.single("delta_h", &cfg.delta_h)?;
    let sw = sweep(cfg, vec![alpha], vec![delta_h]);
    let mut table = ResultTable::new(&["P_db", "sigma_A2_db", "mean_c"]);
    for r in monte_carlo_secrecy(&sw, cfg.samples, cfg.seed)? {
        table.push(vec![r.point.p_db, r.point.sigma_agg2_db, r.mean.c])?;
    }
    Ok(table)
}

fn secrets(cfg: &ExperimentConfig) -> SecretDistribution {
    SecretDistribution {
        mu: cfg.secret_mu,
        sigma2: cfg.secret_sigma2,
    }
}

fn beta_policy(cfg: &ExperimentConfig, beta: f64) -> BetaPolicy {
    match &cfg.dp {
        Some(dp) => BetaPolicy::Dp {
            eps: dp.eps.clone(),
            delta: dp.delta,
            caps: dp.caps.clone(),
        },
        None => BetaPolicy::Fixed(beta),
    }
}

/// Channel, pairing, secrets and power split for `users` users.
fn build_link(
    cfg: &ExperimentConfig,
    users: usize,
    alpha: f64,
    beta: f64,
    rng: &mut SimRng,
) -> Result<AirCompLink> {
    let h2 = sample_gains(&cfg.fading, users, rng)?;
    let pairing = if cfg.random_pairing {
        form_pairs(users, rng)?
    } else {
        Pairing::sequential(users)?
    };
    let dist = secrets(cfg);
    let pair_secrets = dist.draw_all(pairing.pairs().len(), rng)?;
    let pcran = PcranConfig {
        power: vec![cfg.powers[0].linear; users],
        l_s: cfg.l_s,
        signal_share: alpha,
        beta: beta_policy(cfg, beta),
        secrets: dist,
        shaping: cfg.shaping,
        random_pairing: cfg.random_pairing,
    };
    let alloc = pcran.allocate(&h2, cfg.sigma_z2)?;
    AirCompLink::new(h2, alloc, &pairing, &pair_secrets, cfg.sigma_z2, cfg.shaping)
}

fn task_spec(cfg: &ExperimentConfig, users: usize) -> TaskSpec {
    TaskSpec {
        users,
        points_per_user: cfg.points_per_user,
        dim: cfg.d,
        reg_lambda: cfg.reg_lambda,
        label_noise: cfg.label_noise,
        weight_scale: cfg.weight_scale,
    }
}

struct Run {
    loss: Vec<f64>,
    gap: Vec<f64>,
    bound: Vec<f64>,
}

fn run_seed(cfg: &ExperimentConfig, users: usize, alpha: f64, beta: f64, s: u64) -> Result<Run> {
    let key = [users as u64, s];
    let task = SyntheticTask::generate(
        &task_spec(cfg, users),
        &mut rng::stream(cfg.seed, &[TASK, key[0], key[1]]),
    )?;
    let link = build_link(
        cfg,
        users,
        alpha,
        beta,
        &mut rng::stream(cfg.seed, &[LINK, key[0], key[1]]),
    )?;
    let opts = TrainOptions {
        iterations: cfg.t,
        schedule: LearningRate::InverseTime,
        divergence_factor: cfg.divergence_factor,
    };
    let state = train_with_link(
        &task,
        &link,
        &opts,
        &mut rng::stream(cfg.seed, &[ROUNDS, key[0], key[1]]),
    )?;
    let alloc = link.allocation();
    let bound = (1..=cfg.t)
        .map(|t| {
            convergence_bound(&BoundInputs {
                mu: task.mu(),
                lambda: cfg.reg_lambda,
                t,
                l_s: cfg.l_s,
                d: cfg.d,
                m: alloc.m,
                k: users,
                noise_power_sum: alloc.noise_power_sum(link.h2()),
                sigma_z2: cfg.sigma_z2,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Run {
        loss: state.loss_history,
        gap: state.gap_history,
        bound,
    })
}

/// Per-iteration averages over `cfg.seeds` independent runs.
fn averaged(cfg: &ExperimentConfig, users: usize, alpha: f64, beta: f64) -> Result<Run> {
    let runs: Vec<Run> = (0..cfg.seeds as u64)
        .into_par_iter()
        .map(|s| {
            run_seed(cfg, users, alpha, beta, s).map_err(|e| {
                e.context(format!("K = {users}, alpha = {alpha}, beta = {beta}, run {s}"))
            })
        })
        .collect::<Result<_>>()?;
    let n = runs.len() as f64;
    let mean = |pick: fn(&Run) -> &Vec<f64>| -> Vec<f64> {
        let mut acc = vec![0.0; cfg.t];
        for r in &runs {
            acc.iter_mut().zip(pick(r)).for_each(|(a, v)| *a += v);
        }
        acc.into_iter().map(|a| a / n).collect()
    };
    Ok(Run {
        loss: mean(|r| &r.loss),
        gap: mean(|r| &r.gap),
        bound: mean(|r| &r.bound),
    })
}

/// One fig5 curve: seed-averaged loss, optimality gap and bound for a user
/// count and power split. Entry `i` belongs to iteration `t = i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig5Curve {
    pub users: usize,
    pub alpha: f64,
    pub beta: f64,
    pub loss: Vec<f64>,
    pub gap: Vec<f64>,
    pub bound: Vec<f64>,
}

pub fn fig5(cfg: &ExperimentConfig) -> Result<Vec<Fig5Curve>> {
    let mut curves = Vec::new();
    for &users in &cfg.users {
        for (&alpha, &beta) in cfg.alphas.iter().zip(&cfg.betas) {
            let run = averaged(cfg, users, alpha, beta)?;
            curves.push(Fig5Curve {
                users,
                alpha,
                beta,
                loss: run.loss,
                gap: run.gap,
                bound: run.bound,
            });
        }
    }
    Ok(curves)
}

pub(crate) fn fig5_table(curves: &[Fig5Curve]) -> Result<ResultTable> {
    let mut table = ResultTable::new(&["t", "K", "beta", "bound", "simulated_loss"]);
    for c in curves {
        for (i, (b, g)) in c.bound.iter().zip(&c.gap).enumerate() {
            table.push(vec![(i + 1) as f64, c.users as f64, c.beta, *b, *g])?;
        }
    }
    Ok(table)
}

/// Seed-averaged training history.
pub fn train(cfg: &ExperimentConfig) -> Result<ResultTable> {
    debug_assert_eq!(cfg.experiment, Experiment::Train);
    let run = averaged(cfg, cfg.users[0], cfg.alphas[0], cfg.betas[0])?;
    let mut table = ResultTable::new(&["t", "loss", "gap"]);
    for (i, (l, g)) in run.loss.iter().zip(&run.gap).enumerate() {
        table.push(vec![(i + 1) as f64, *l, *g])?;
    }
    Ok(table)
}

/// Empirical statistics of the aggregation error `ŝ − (1/K)Σ s_k` next to
/// the values the link predicts.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCheck {
    pub rounds: usize,
    pub dim: usize,
    pub predicted_bias: f64,
    pub predicted_variance: f64,
    /// Per-coordinate mean error.
    pub coord_mean: Vec<f64>,
    /// Standard error of each coordinate mean.
    pub coord_std_error: Vec<f64>,
    /// Variance pooled over coordinates and rounds.
    pub variance: f64,
    pub excess_kurtosis: f64,
}

impl NoiseCheck {
    /// Largest `|mean − predicted| / std_error` over coordinates.
    pub fn max_mean_z(&self) -> f64 {
        self.coord_mean
            .iter()
            .zip(&self.coord_std_error)
            .map(|(m, se)| (m - self.predicted_bias).abs() / se)
            .fold(0.0, f64::max)
    }

    pub fn variance_rel_error(&self) -> f64 {
        (self.variance - self.predicted_variance).abs() / self.predicted_variance
    }

    pub(crate) fn table(&self) -> Result<ResultTable> {
        let mut table = ResultTable::new(&[
            "rounds",
            "dim",
            "predicted_bias",
            "empirical_bias",
            "max_mean_z",
            "predicted_variance",
            "empirical_variance",
            "variance_rel_error",
            "excess_kurtosis",
        ]);
        let pooled_mean = self.coord_mean.iter().sum::<f64>() / self.dim as f64;
        table.push(vec![
            self.rounds as f64,
            self.dim as f64,
            self.predicted_bias,
            pooled_mean,
            self.max_mean_z(),
            self.predicted_variance,
            self.variance,
            self.variance_rel_error(),
            self.excess_kurtosis,
        ])?;
        Ok(table)
    }
}

/// Pushes `cfg.samples` rounds of fixed gradients through one link.
pub fn noise_check(cfg: &ExperimentConfig) -> Result<NoiseCheck> {
    let users = cfg.users[0];
    let link = build_link(
        cfg,
        users,
        cfg.alphas[0],
        cfg.betas[0],
        &mut rng::stream(cfg.seed, &[LINK, users as u64, 0]),
    )?;
    let stats = *link.noise_stats();
    if !(stats.estimate_variance() > 0.0) {
        return Err(Error::domain(
            "noise check needs a noisy link (positive predicted variance)",
        ));
    }
    let dim = cfg.d;
    let mut grng = rng::stream(cfg.seed, &[GRADS]);
    let grads: Vec<Vec<f64>> = (0..users)
        .map(|_| crate::channel::awgn(dim, 1.0, &mut grng))
        .collect::<Result<_>>()?;
    let mut target = vec![0.0; dim];
    for g in &grads {
        let s = clip_gradient(g, cfg.l_s);
        target.iter_mut().zip(&s).for_each(|(t, v)| *t += v / users as f64);
    }

    // Per batch: per-coordinate sums of e and e², then pooled Σe³, Σe⁴.
    let batches: Vec<_> = rng::batches(cfg.samples).collect();
    let partial: Vec<(Vec<f64>, Vec<f64>, f64, f64)> = batches
        .par_iter()
        .map(|&(b, _, len)| {
            let mut r = rng::stream(cfg.seed, &[NOISE, b]);
            let mut s1 = vec![0.0; dim];
            let mut s2 = vec![0.0; dim];
            let (mut s3, mut s4) = (0.0, 0.0);
            for _ in 0..len {
                let est = link.round(&grads, &mut r)?;
                for j in 0..dim {
                    let e = est.s_hat[j] - target[j];
                    let e2 = e * e;
                    s1[j] += e;
                    s2[j] += e2;
                    s3 += e2 * e;
                    s4 += e2 * e2;
                }
            }
            Ok((s1, s2, s3, s4))
        })
        .collect::<Result<_>>()?;

    let mut s1 = vec![0.0; dim];
    let mut s2 = vec![0.0; dim];
    let (mut s3, mut s4) = (0.0, 0.0);
    for (a, b, c, d) in &partial {
        s1.iter_mut().zip(a).for_each(|(x, y)| *x += y);
        s2.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        s3 += c;
        s4 += d;
    }
    let n = cfg.samples as f64;
    let coord_mean: Vec<f64> = s1.iter().map(|x| x / n).collect();
    let coord_std_error = s2
        .iter()
        .zip(&coord_mean)
        .map(|(q, m)| ((q / n - m * m) * n / (n - 1.0).max(1.0) / n).sqrt())
        .collect();

    let total = n * dim as f64;
    let m1 = s1.iter().sum::<f64>() / total;
    let r2 = s2.iter().sum::<f64>() / total;
    let r3 = s3 / total;
    let r4 = s4 / total;
    let var = r2 - m1 * m1;
    let c4 = r4 - 4.0 * m1 * r3 + 6.0 * m1 * m1 * r2 - 3.0 * m1.powi(4);
    Ok(NoiseCheck {
        rounds: cfg.samples,
        dim,
        predicted_bias: stats.estimate_bias(),
        predicted_variance: stats.estimate_variance(),
        coord_mean,
        coord_std_error,
        variance: var * total / (total - 1.0).max(1.0),
        excess_kurtosis: c4 / (var * var) - 3.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::run_experiment;

    fn cfg(e: Experiment, json: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(json, Some(e)).unwrap()
    }

    #[test]
    fn fig3_zero_alpha_column_is_zero() {
        let c = cfg(Experiment::Fig3, r#"{"samples": 2000}"#);
        let t = run_experiment(&c).unwrap();
        assert_eq!(t.rows.len(), 11 * 2 * 2);
        for row in t.rows.iter().filter(|r| r[0] == 0.0) {
            assert_eq!(row[3], 0.0);
        }
    }

    #[test]
    fn fig5_noiseless_bound_is_lead_term() {
        let c = cfg(
            Experiment::Fig5,
            r#"{"users": 2, "alphas": 0.5, "betas": 0.0, "sigma_z2": 0, "seeds": 1, "T": 20, "d": 5}"#,
        );
        let curves = fig5(&c).unwrap();
        let task = SyntheticTask::generate(
            &task_spec(&c, 2),
            &mut rng::stream(c.seed, &[TASK, 2, 0]),
        )
        .unwrap();
        for (i, b) in curves[0].bound.iter().enumerate() {
            let t = (i + 1) as f64;
            let lead = 2.0 * task.mu() * c.l_s * c.l_s / (c.reg_lambda * c.reg_lambda * t);
            assert_eq!(*b, lead);
        }
    }

    #[test]
    fn train_table_shape() {
        let c = cfg(Experiment::Train, r#"{"users": 2, "T": 15, "d": 4}"#);
        let t = run_experiment(&c).unwrap();
        assert_eq!(t.columns, vec!["t", "loss", "gap"]);
        assert_eq!(t.rows.len(), 15);
        assert_eq!(t.rows[14][0], 15.0);
    }

    #[test]
    fn dp_train_runs() {
        let c = cfg(
            Experiment::Train,
            r#"{"users": 2, "T": 10, "d": 3, "dp": {"eps": [1, 2], "delta": 0.01, "caps": [1e9, 1e9]}}"#,
        );
        assert!(run_experiment(&c).is_ok());
    }

    #[test]
    fn noise_check_matches_prediction() {
        let c = cfg(
            Experiment::NoiseCheck,
            r#"{"users": 4, "d": 6, "samples": 40000, "secret_sigma2_db": [0, 10]}"#,
        );
        let n = noise_check(&c).unwrap();
        assert!(n.max_mean_z() < 5.0, "{n:?}");
        assert!(n.variance_rel_error() < 0.03, "{n:?}");
    }

    #[test]
    fn divergence_is_reported_with_context() {
        let c = cfg(
            Experiment::Train,
            r#"{"users": 2, "T": 50, "d": 4, "divergence_factor": 1e-9}"#,
        );
        let err = run_experiment(&c).unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("train experiment"), "{msg}");
        assert!(msg.contains("diverged"), "{msg}");
    }
}
