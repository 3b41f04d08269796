//! JSON experiment configuration.
//!
//! A config file is a single JSON object. Every key is optional and unknown
//! keys are rejected. Missing values are filled with defaults that depend on
//! the experiment. Quantities given in dB are converted to linear scale once,
//! here, and both forms are kept so outputs can report the dB coordinates.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::channel::{db_to_linear, FadingMode};
use crate::error::{Error, Result};
use crate::fl::DIVERGENCE_FACTOR;
use crate::pcran::NoiseShaping;
use crate::secrecy::EavesdropperNoise;

/// Monte Carlo sample count used when none is configured.
pub const DEFAULT_SAMPLES: usize = 100_000;
/// Sample count of the full-fidelity runs.
pub const FULL_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Fig3,
    Fig4,
    Fig5,
    Train,
    NoiseCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Fig3,
        Experiment::Fig4,
        Experiment::Fig5,
        Experiment::Train,
        Experiment::NoiseCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig3 => "fig3",
            Experiment::Fig4 => "fig4",
            Experiment::Fig5 => "fig5",
            Experiment::Train => "train",
            Experiment::NoiseCheck => "noise-check",
        }
    }

    /// Whether the experiment runs training or aggregation rounds, which
    /// need users in cancelling pairs.
    fn needs_pairs(self) -> bool {
        matches!(self, Experiment::Fig5 | Experiment::Train | Experiment::NoiseCheck)
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown experiment '{s}' (expected one of fig3, fig4, fig5, train, noise-check)"
                ))
            })
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ShapingName {
    PreEqualized,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum EavesdropperName {
    Literal,
    Linked,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDp {
    eps: OneOrMany<f64>,
    delta: f64,
    caps: OneOrMany<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<Experiment>,
    seed: Option<u64>,
    samples: Option<usize>,
    seeds: Option<usize>,
    users: Option<OneOrMany<usize>>,
    powers_db: Option<OneOrMany<f64>>,
    alphas: Option<OneOrMany<f64>>,
    betas: Option<OneOrMany<f64>>,
    sigma_a2_db: Option<OneOrMany<f64>>,
    #[serde(rename = "sigma_A2_db")]
    sigma_agg2_db: Option<OneOrMany<f64>>,
    delta_h: Option<OneOrMany<f64>>,
    sigma_z2: Option<f64>,
    #[serde(rename = "L_s")]
    l_s: Option<f64>,
    d: Option<usize>,
    #[serde(rename = "T")]
    t: Option<usize>,
    reg_lambda: Option<f64>,
    points_per_user: Option<usize>,
    label_noise: Option<f64>,
    weight_scale: Option<f64>,
    secret_mu: Option<[f64; 2]>,
    secret_sigma2_db: Option<[f64; 2]>,
    fixed_gains: Option<Vec<f64>>,
    shaping: Option<ShapingName>,
    random_pairing: Option<bool>,
    eavesdropper_noise: Option<EavesdropperName>,
    residual_gain2: Option<f64>,
    divergence_factor: Option<f64>,
    dp: Option<RawDp>,
    output: Option<PathBuf>,
}

/// A value configured in dB together with its linear equivalent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub db: f64,
    pub linear: f64,
}

impl Level {
    pub fn from_db(db: f64) -> Self {
        Self {
            db,
            linear: db_to_linear(db),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpConfig {
    pub eps: Vec<f64>,
    pub delta: f64,
    pub caps: Vec<f64>,
}

/// Validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    /// Monte Carlo samples (fig3, fig4) or aggregation rounds (noise-check).
    pub samples: usize,
    /// Independent training runs averaged by fig5 and train.
    pub seeds: usize,
    pub users: Vec<usize>,
    pub powers: Vec<Level>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Artificial-noise power seen by the eavesdropper.
    pub sigma_a2: Vec<Level>,
    /// Aggregated artificial-noise variance left at the server.
    pub sigma_agg2: Vec<Level>,
    pub delta_h: Vec<f64>,
    pub sigma_z2: f64,
    pub l_s: f64,
    pub d: usize,
    pub t: usize,
    pub reg_lambda: f64,
    pub points_per_user: usize,
    pub label_noise: f64,
    pub weight_scale: f64,
    /// Range of the pair means.
    pub secret_mu: (f64, f64),
    /// Range of the pair variances, linear.
    pub secret_sigma2: (f64, f64),
    pub fading: FadingMode,
    pub shaping: NoiseShaping,
    pub random_pairing: bool,
    pub eavesdropper_noise: EavesdropperNoise,
    pub residual_gain2: f64,
    pub divergence_factor: f64,
    pub dp: Option<DpConfig>,
    pub output: Option<PathBuf>,
}

fn alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 20.0).collect()
}

fn db_grid(lo: i32, hi: i32, step: i32) -> Vec<f64> {
    (lo..=hi).step_by(step as usize).map(f64::from).collect()
}

fn or<T>(v: Option<OneOrMany<T>>, default: Vec<T>) -> Vec<T> {
    v.map(OneOrMany::into_vec).unwrap_or(default)
}

impl ExperimentConfig {
    /// Reads and validates a config file. `experiment` comes from the command
    /// line; when the file also names one, the two must agree.
    pub fn load(path: &Path, experiment: Option<Experiment>) -> Result<Self> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::ConfigMissing(path.to_path_buf()))
            }
            Err(e) => return Err(e.into()),
        };
        Self::from_json(&text, experiment)
    }

    pub fn from_json(text: &str, experiment: Option<Experiment>) -> Result<Self> {
        let raw: RawConfig =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Self::resolve(raw, experiment)
    }

    /// All defaults for `experiment`.
    pub fn defaults(experiment: Experiment) -> Self {
        Self::resolve(RawConfig::default(), Some(experiment))
            .expect("built-in defaults are valid")
    }

    fn resolve(raw: RawConfig, cli: Option<Experiment>) -> Result<Self> {
        let experiment = match (raw.experiment, cli) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::InvalidConfig(format!(
                    "config names experiment '{a}' but '{b}' was requested"
                )))
            }
            (Some(e), _) | (None, Some(e)) => e,
            (None, None) => {
                return Err(Error::InvalidConfig("no experiment selected".into()))
            }
        };
        use Experiment::*;

        let users = or(
            raw.users,
            match experiment {
                Fig5 => vec![2, 10, 20],
                _ => vec![10],
            },
        );
        let powers_db = or(
            raw.powers_db,
            match experiment {
                Fig3 => vec![25.0, 30.0],
                Fig4 => db_grid(0, 30, 5),
                _ => vec![30.0],
            },
        );
        let alphas = or(
            raw.alphas,
            match experiment {
                Fig3 => alpha_grid(),
                Fig5 => vec![0.5, 0.3],
                _ => vec![0.5],
            },
        );
        let betas = or(
            raw.betas,
            match experiment {
                Fig5 => vec![0.5, 0.7],
                _ => vec![0.5],
            },
        );
        let sigma_agg2_db = or(
            raw.sigma_agg2_db,
            match experiment {
                Fig4 => db_grid(0, 30, 10),
                _ => vec![0.0],
            },
        );
        let delta_h = or(
            raw.delta_h,
            match experiment {
                Fig3 => vec![0.0, 0.5],
                Fig4 => vec![0.5],
                _ => vec![0.0],
            },
        );
        let secret_sigma2_db = raw.secret_sigma2_db.unwrap_or([0.0, 0.0]);

        let cfg = Self {
            experiment,
            seed: raw.seed.unwrap_or(0),
            samples: raw.samples.unwrap_or(DEFAULT_SAMPLES),
            seeds: raw.seeds.unwrap_or(match experiment {
                Fig5 => 50,
                _ => 1,
            }),
            users,
            powers: powers_db.into_iter().map(Level::from_db).collect(),
            alphas,
            betas,
            sigma_a2: or(raw.sigma_a2_db, vec![25.0])
                .into_iter()
                .map(Level::from_db)
                .collect(),
            sigma_agg2: sigma_agg2_db.into_iter().map(Level::from_db).collect(),
            delta_h,
            sigma_z2: raw.sigma_z2.unwrap_or(1.0),
            l_s: raw.l_s.unwrap_or(1.0),
            d: raw.d.unwrap_or(30),
            t: raw.t.unwrap_or(1000),
            reg_lambda: raw.reg_lambda.unwrap_or(1e-3),
            points_per_user: raw.points_per_user.unwrap_or(50),
            label_noise: raw.label_noise.unwrap_or(0.1),
            weight_scale: raw.weight_scale.unwrap_or(3.0),
            secret_mu: raw.secret_mu.map(|[a, b]| (a, b)).unwrap_or((0.5, 0.5)),
            secret_sigma2: (
                db_to_linear(secret_sigma2_db[0]),
                db_to_linear(secret_sigma2_db[1]),
            ),
            fading: match raw.fixed_gains {
                Some(g) => FadingMode::Fixed(g),
                None => FadingMode::Rayleigh,
            },
            shaping: match raw.shaping {
                Some(ShapingName::Raw) => NoiseShaping::Raw,
                _ => NoiseShaping::PreEqualized,
            },
            random_pairing: raw.random_pairing.unwrap_or(true),
            eavesdropper_noise: match raw.eavesdropper_noise {
                Some(EavesdropperName::Linked) => EavesdropperNoise::Linked,
                _ => EavesdropperNoise::Literal,
            },
            residual_gain2: raw.residual_gain2.unwrap_or(1.0),
            divergence_factor: raw.divergence_factor.unwrap_or(DIVERGENCE_FACTOR),
            dp: raw.dp.map(|dp| DpConfig {
                eps: dp.eps.into_vec(),
                delta: dp.delta,
                caps: dp.caps.into_vec(),
            }),
            output: raw.output,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Result<Self> {
        self.samples = samples;
        self.validate()?;
        Ok(self)
    }

    /// The single value of a grid that the experiment does not sweep.
    pub(crate) fn single<T: Copy>(&self, name: &str, grid: &[T]) -> Result<T> {
        match grid {
            [v] => Ok(*v),
            _ => Err(Error::InvalidConfig(format!(
                "{} takes exactly one {name} value, got {}",
                self.experiment,
                grid.len()
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidConfig(msg));
        let grids: [(&str, usize); 8] = [
            ("users", self.users.len()),
            ("powers_db", self.powers.len()),
            ("alphas", self.alphas.len()),
            ("betas", self.betas.len()),
            ("sigma_a2_db", self.sigma_a2.len()),
            ("sigma_A2_db", self.sigma_agg2.len()),
            ("delta_h", self.delta_h.len()),
            ("samples/seeds", self.samples.min(self.seeds)),
        ];
        for (name, len) in grids {
            if len == 0 {
                return invalid(format!("{name} must not be empty or zero"));
            }
        }
        let all_values = self
            .powers
            .iter()
            .chain(&self.sigma_a2)
            .chain(&self.sigma_agg2)
            .flat_map(|l| [l.db, l.linear])
            .chain(self.alphas.iter().copied())
            .chain(self.betas.iter().copied())
            .chain(self.delta_h.iter().copied());
        if all_values.clone().any(|v| !v.is_finite()) {
            return invalid("grid values must be finite".into());
        }
        if self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return invalid("alphas must lie in [0, 1]".into());
        }
        if self.betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return invalid("betas must lie in [0, 1]".into());
        }
        if self.delta_h.iter().any(|d| *d < 0.0) {
            return invalid("delta_h values must be nonnegative".into());
        }
        if !(self.sigma_z2 >= 0.0 && self.sigma_z2.is_finite()) {
            return invalid(format!("sigma_z2 must be nonnegative, got {}", self.sigma_z2));
        }
        if !(self.l_s > 0.0 && self.l_s.is_finite()) {
            return invalid(format!("L_s must be positive, got {}", self.l_s));
        }
        if !(self.reg_lambda > 0.0 && self.reg_lambda.is_finite()) {
            return invalid(format!("reg_lambda must be positive, got {}", self.reg_lambda));
        }
        if self.d == 0 || self.t == 0 || self.points_per_user == 0 {
            return invalid("d, T and points_per_user must be at least 1".into());
        }
        if !(self.divergence_factor > 0.0) {
            return invalid("divergence_factor must be positive".into());
        }
        let (mu_lo, mu_hi) = self.secret_mu;
        let (s_lo, s_hi) = self.secret_sigma2;
        if !(mu_lo <= mu_hi && mu_lo.is_finite() && mu_hi.is_finite()) {
            return invalid("secret_mu must be an ordered finite range".into());
        }
        if !(s_lo <= s_hi && s_hi.is_finite()) {
            return invalid("secret_sigma2_db must be an ordered finite range".into());
        }

        if self.experiment.needs_pairs() {
            if let Some(k) = self.users.iter().find(|k| **k == 0 || *k % 2 == 1) {
                return invalid(format!(
                    "{} needs a positive even number of users to form cancelling pairs, got K = {k}",
                    self.experiment
                ));
            }
        }
        match self.experiment {
            Experiment::Fig3 => {
                self.single("sigma_a2_db", &self.sigma_a2)?;
                self.single("sigma_A2_db", &self.sigma_agg2)?;
            }
            Experiment::Fig4 => {
                self.single("alphas", &self.alphas)?;
                self.single("delta_h", &self.delta_h)?;
                self.single("sigma_a2_db", &self.sigma_a2)?;
            }
            Experiment::Fig5 | Experiment::Train | Experiment::NoiseCheck => {
                if self.alphas.len() != self.betas.len() {
                    return invalid(format!(
                        "alphas and betas are paired and need equal lengths, got {} and {}",
                        self.alphas.len(),
                        self.betas.len()
                    ));
                }
                if self.alphas.iter().any(|a| *a <= 0.0) {
                    return invalid("training needs a positive gradient share alpha".into());
                }
                self.single("powers_db", &self.powers)?;
                if self.experiment != Experiment::Fig5 {
                    self.single("users", &self.users)?;
                    self.single("alphas", &self.alphas)?;
                }
            }
        }
        if let Some(dp) = &self.dp {
            if self.experiment == Experiment::Fig5 {
                return invalid("fig5 compares fixed betas; drop the dp block".into());
            }
            if !matches!(self.experiment, Experiment::Train | Experiment::NoiseCheck) {
                return invalid(format!("{} does not use a dp block", self.experiment));
            }
            let k = self.users[0];
            if dp.eps.len() != k || dp.caps.len() != k {
                return invalid(format!("dp eps and caps need one entry per user ({k})"));
            }
            if !(dp.delta > 0.0 && dp.delta < 1.0) {
                return invalid(format!("dp delta must lie in (0, 1), got {}", dp.delta));
            }
        }
        if let FadingMode::Fixed(g) = &self.fading {
            if g.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return invalid("fixed_gains must be finite and nonnegative".into());
            }
            if self.experiment.needs_pairs() && self.users.iter().any(|k| *k != g.len()) {
                return invalid("fixed_gains needs one gain per user".into());
            }
            if g.is_empty() {
                return invalid("fixed_gains must not be empty".into());
            }
        }
        Ok(())
    }
}
