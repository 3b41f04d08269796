use rand::Rng;

use super::task::{dot, SyntheticTask};
use crate::aircomp::AirCompLink;
use crate::channel::ChannelConfig;
use crate::error::{Error, Result};
use crate::pcran::PcranConfig;

/// Training aborts once the loss exceeds this multiple of the initial loss.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    /// `η_t = 1/(λ t)` for `t = 1, 2, ...`, with `λ` the task's regularization.
    InverseTime,
    Constant(f64),
}

impl LearningRate {
    pub fn at(&self, t: usize, reg_lambda: f64) -> f64 {
        match *self {
            LearningRate::InverseTime => 1.0 / (reg_lambda * t as f64),
            LearningRate::Constant(eta) => eta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub iterations: usize,
    pub schedule: LearningRate,
    pub divergence_factor: f64,
}

impl TrainOptions {
    pub fn new(iterations: usize, schedule: LearningRate) -> Self {
        Self {
            iterations,
            schedule,
            divergence_factor: DIVERGENCE_FACTOR,
        }
    }
}

/// Model after training together with its per-iteration history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub w: Vec<f64>,
    /// Number of updates applied.
    pub t: usize,
    /// Learning rate of the last update.
    pub eta: f64,
    pub initial_loss: f64,
    /// `F(w_t)` for `t = 1..=T`.
    pub loss_history: Vec<f64>,
    /// `F(w_t) − F(w*)` for `t = 1..=T`.
    pub gap_history: Vec<f64>,
    /// Empirical `mean_t ‖ŝ_t‖²`, the second moment the analysis assumes bounded.
    pub second_moment: f64,
}

impl TrainState {
    fn start(task: &SyntheticTask, iterations: usize) -> Self {
        let w = vec![0.0; task.dim()];
        Self {
            initial_loss: task.global_loss(&w),
            w,
            t: 0,
            eta: 0.0,
            loss_history: Vec::with_capacity(iterations),
            gap_history: Vec::with_capacity(iterations),
            second_moment: 0.0,
        }
    }

    fn step(
        &mut self,
        task: &SyntheticTask,
        opts: &TrainOptions,
        direction: &[f64],
    ) -> Result<()> {
        self.t += 1;
        self.eta = opts.schedule.at(self.t, task.reg_lambda());
        self.w
            .iter_mut()
            .zip(direction)
            .for_each(|(w, s)| *w -= self.eta * s);
        self.second_moment += (dot(direction, direction) - self.second_moment) / self.t as f64;

        let loss = task.global_loss(&self.w);
        let limit = opts.divergence_factor * self.initial_loss.max(f64::MIN_POSITIVE);
        if !loss.is_finite() || loss > limit {
            return Err(Error::Diverged {
                iteration: self.t,
                loss,
                limit,
            });
        }
        self.loss_history.push(loss);
        self.gap_history.push((loss - task.loss_star()).max(0.0));
        Ok(())
    }
}

fn check_options(opts: &TrainOptions) -> Result<()> {
    if opts.iterations == 0 {
        return Err(Error::domain("at least one iteration is required"));
    }
    if let LearningRate::Constant(eta) = opts.schedule {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::domain(format!("learning rate must be positive, got {eta}")));
        }
    }
    if !(opts.divergence_factor > 0.0) {
        return Err(Error::domain("divergence factor must be positive"));
    }
    Ok(())
}

/// Gradient descent where every aggregation goes through `link`.
pub fn train_with_link<R: Rng + ?Sized>(
    task: &SyntheticTask,
    link: &AirCompLink,
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<TrainState> {
    check_options(opts)?;
    if link.users() != task.users().len() {
        return Err(Error::DimensionMismatch {
            expected: task.users().len(),
            got: link.users(),
        });
    }
    let mut state = TrainState::start(task, opts.iterations);
    for _ in 0..opts.iterations {
        let grads = task.local_gradients(&state.w);
        let est = link.round(&grads, rng)?;
        state.step(task, opts, &est.s_hat)?;
    }
    Ok(state)
}

/// Samples a channel and noise setup, then trains over it.
pub fn train_over_air<R: Rng + ?Sized>(
    task: &SyntheticTask,
    channel: &ChannelConfig,
    pcran: &PcranConfig,
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<TrainState> {
    let link = AirCompLink::build(channel, pcran, task.users().len(), rng)?;
    train_with_link(task, &link, opts, rng)
}

/// Reference gradient descent on the pooled dataset, with no channel, no
/// clipping and no noise.
pub fn train_centralized(task: &SyntheticTask, opts: &TrainOptions) -> Result<TrainState> {
    check_options(opts)?;
    let total: usize = task.users().iter().map(|d| d.len()).sum();
    let mut state = TrainState::start(task, opts.iterations);
    let mut g = vec![0.0; task.dim()];
    for _ in 0..opts.iterations {
        g.iter_mut().for_each(|x| *x = 0.0);
        for ds in task.users() {
            for (u, v) in ds.features.iter().zip(&ds.labels) {
                let r = dot(u, &state.w) - v;
                g.iter_mut().zip(u).for_each(|(gi, ui)| *gi += r * ui);
            }
        }
        for (gi, wi) in g.iter_mut().zip(&state.w) {
            *gi = *gi / total as f64 + task.reg_lambda() * wi;
        }
        state.step(task, opts, &g)?;
    }
    Ok(state)
}
