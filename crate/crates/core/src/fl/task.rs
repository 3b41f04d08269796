use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// One user's private data: feature rows and their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Mean gradient of `½(u·w − v)² + (λ/2)‖w‖²` over the dataset.
    pub fn gradient(&self, w: &[f64], reg_lambda: f64) -> Vec<f64> {
        let mut g = vec![0.0; w.len()];
        for (u, v) in self.features.iter().zip(&self.labels) {
            let r = dot(u, w) - v;
            g.iter_mut().zip(u).for_each(|(gi, ui)| *gi += r * ui);
        }
        let n = self.len() as f64;
        g.iter_mut()
            .zip(w)
            .for_each(|(gi, wi)| *gi = *gi / n + reg_lambda * wi);
        g
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Parameters of a generated ridge-regression task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskSpec {
    pub users: usize,
    pub points_per_user: usize,
    pub dim: usize,
    pub reg_lambda: f64,
    /// Standard deviation of the additive label noise.
    pub label_noise: f64,
    /// Per-coordinate standard deviation of the ground-truth weights.
    pub weight_scale: f64,
}

/// Ridge regression split across users, with its curvature constants and
/// exact minimizer.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    d: usize,
    users: Vec<Dataset>,
    reg_lambda: f64,
    mu: f64,
    w_star: Vec<f64>,
    loss_star: f64,
}

impl SyntheticTask {
    pub fn new(d: usize, users: Vec<Dataset>, reg_lambda: f64) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::EmptySystem);
        }
        if d == 0 {
            return Err(Error::domain("model dimension must be at least 1"));
        }
        if !(reg_lambda > 0.0 && reg_lambda.is_finite()) {
            return Err(Error::domain(format!(
                "regularization must be positive, got {reg_lambda}"
            )));
        }
        let n = users[0].len();
        if n == 0 {
            return Err(Error::domain("user datasets must be nonempty"));
        }
        for ds in &users {
            if ds.len() != n || ds.features.len() != n {
                return Err(Error::domain("all users must hold the same number of points"));
            }
            if let Some(u) = ds.features.iter().find(|u| u.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: u.len(),
                });
            }
        }

        // Normal equations of the pooled objective: (C + λI) w* = b.
        let total = (n * users.len()) as f64;
        let mut cov = DMatrix::<f64>::zeros(d, d);
        let mut rhs = DVector::<f64>::zeros(d);
        for ds in &users {
            for (u, v) in ds.features.iter().zip(&ds.labels) {
                let u = DVector::from_column_slice(u);
                cov.ger(1.0 / total, &u, &u, 1.0);
                rhs.axpy(v / total, &u, 1.0);
            }
        }
        let lambda_max = cov.clone().symmetric_eigen().eigenvalues.max();
        let mut hessian = cov;
        for i in 0..d {
            hessian[(i, i)] += reg_lambda;
        }
        let w_star = hessian
            .cholesky()
            .ok_or_else(|| Error::domain("task Hessian is not positive definite"))?
            .solve(&rhs);

        let mut task = Self {
            d,
            users,
            reg_lambda,
            mu: lambda_max.max(0.0) + reg_lambda,
            w_star: w_star.as_slice().to_vec(),
            loss_star: 0.0,
        };
        task.loss_star = task.global_loss(&task.w_star.clone());
        Ok(task)
    }

    /// Gaussian features, labels from a random linear model plus noise.
    pub fn generate<R: Rng + ?Sized>(spec: &TaskSpec, rng: &mut R) -> Result<Self> {
        if spec.points_per_user == 0 {
            return Err(Error::domain("points_per_user must be at least 1"));
        }
        if !(spec.weight_scale >= 0.0 && spec.weight_scale.is_finite()) {
            return Err(Error::domain("weight scale must be nonnegative"));
        }
        if !(spec.label_noise >= 0.0 && spec.label_noise.is_finite()) {
            return Err(Error::domain("label noise must be nonnegative"));
        }
        let scale = spec.weight_scale;
        let w_true: Vec<f64> = (0..spec.dim)
            .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect();
        let users = (0..spec.users)
            .map(|_| {
                let features: Vec<Vec<f64>> = (0..spec.points_per_user)
                    .map(|_| (0..spec.dim).map(|_| StandardNormal.sample(rng)).collect())
                    .collect();
                let labels = features
                    .iter()
                    .map(|u| {
                        let eps: f64 = StandardNormal.sample(rng);
                        dot(u, &w_true) + spec.label_noise * eps
                    })
                    .collect();
                Dataset { features, labels }
            })
            .collect();
        Self::new(spec.dim, users, spec.reg_lambda)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn users(&self) -> &[Dataset] {
        &self.users
    }

    pub fn reg_lambda(&self) -> f64 {
        self.reg_lambda
    }

    /// Smoothness constant: largest eigenvalue of the feature covariance plus `λ`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn loss_star(&self) -> f64 {
        self.loss_star
    }

    /// Global objective `F(w)`: mean regularized squared error over all points.
    pub fn global_loss(&self, w: &[f64]) -> f64 {
        let total: usize = self.users.iter().map(Dataset::len).sum();
        let resid: f64 = self
            .users
            .iter()
            .flat_map(|ds| ds.features.iter().zip(&ds.labels))
            .map(|(u, v)| 0.5 * (dot(u, w) - v).powi(2))
            .sum();
        resid / total as f64 + 0.5 * self.reg_lambda * dot(w, w)
    }

    pub fn local_gradient(&self, w: &[f64], user: usize) -> Vec<f64> {
        self.users[user].gradient(w, self.reg_lambda)
    }

    pub fn local_gradients(&self, w: &[f64]) -> Vec<Vec<f64>> {
        self.users
            .iter()
            .map(|ds| ds.gradient(w, self.reg_lambda))
            .collect()
    }

    /// `F(w) − F(w*)`, floored at zero against rounding.
    pub fn gap(&self, w: &[f64]) -> f64 {
        (self.global_loss(w) - self.loss_star).max(0.0)
    }
}
