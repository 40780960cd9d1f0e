use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, State};
use crate::data::RatingScale;
use crate::error::{Error, Result};
use crate::persist::{Reader, Writer};
use crate::scalar::{clamp, dot, Scalar};

const MAGIC: &[u8; 8] = b"IRSMFSM\0";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfHyper {
    pub dim: usize,
    pub lr: f64,
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MfHyper {
    fn default() -> Self {
        MfHyper {
            dim: 64,
            lr: 0.01,
            l2: 0.001,
            epochs: 20,
            seed: 0,
        }
    }
}

/// Biased matrix factorization: `mu + b_u + b_i + p_u . q_i`, clamped to the
/// rating scale. Static: the rating ignores the state's events.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixFactorization<T> {
    pub global_mean: T,
    pub user_bias: Vec<T>,
    pub item_bias: Vec<T>,
    /// Row-major `num_users x dim`.
    pub user_factors: Vec<T>,
    /// Row-major `num_items x dim`.
    pub item_factors: Vec<T>,
    pub dim: usize,
    pub scale: RatingScale,
}

impl<T: Scalar> MatrixFactorization<T> {
    /// A model with zero biases and factors.
    pub fn zeros(num_users: usize, num_items: usize, dim: usize, global_mean: T, scale: RatingScale) -> Self {
        MatrixFactorization {
            global_mean,
            user_bias: vec![T::zero(); num_users],
            item_bias: vec![T::zero(); num_items],
            user_factors: vec![T::zero(); num_users * dim],
            item_factors: vec![T::zero(); num_items * dim],
            dim,
            scale,
        }
    }

    pub fn num_users(&self) -> usize {
        self.user_bias.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_bias.len()
    }

    pub fn user_vec(&self, u: usize) -> &[T] {
        &self.user_factors[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item_vec(&self, i: usize) -> &[T] {
        &self.item_factors[i * self.dim..(i + 1) * self.dim]
    }

    /// Unclamped score.
    pub fn raw_score(&self, user: usize, item: usize) -> T {
        self.global_mean + self.user_bias[user] + self.item_bias[item] + dot(self.user_vec(user), self.item_vec(item))
    }

    pub fn predict(&self, user: usize, item: usize) -> T {
        clamp(self.raw_score(user, item), T::of(self.scale.min), T::of(self.scale.max))
    }

    /// Per-sample SGD on squared error with L2 shrinkage. The global mean is
    /// fixed to the mean training rating; factors start uniform in
    /// `(-0.05, 0.05)`; sample order is reshuffled every epoch.
    pub fn train(
        samples: &[(usize, usize, f64)],
        num_users: usize,
        num_items: usize,
        scale: RatingScale,
        hyper: &MfHyper,
    ) -> Result<Self> {
        if hyper.dim == 0 {
            return Err(Error::InvalidArgument("latent dimension must be >= 1".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no training ratings".into()));
        }
        if let Some(&(u, i, _)) = samples.iter().find(|(u, i, _)| *u >= num_users || *i >= num_items) {
            return Err(Error::InvalidArgument(format!("sample ({u}, {i}) out of bounds")));
        }
        let mean = samples.iter().map(|s| s.2).sum::<f64>() / samples.len() as f64;
        let d = hyper.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let mut model = Self::zeros(num_users, num_items, d, T::of(mean), scale);
        for x in model.user_factors.iter_mut().chain(model.item_factors.iter_mut()) {
            *x = T::of(rng.gen_range(-0.05..0.05));
        }

        let lr = T::of(hyper.lr);
        let l2 = T::of(hyper.l2);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut p_old = vec![T::zero(); d];
        for epoch in 0..hyper.epochs {
            order.shuffle(&mut rng);
            for (pos, &idx) in order.iter().enumerate() {
                let (u, i, r) = samples[idx];
                let err = T::of(r) - model.raw_score(u, i);
                if !err.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("matrix factorization epoch {epoch}, sample {pos} (user {u}, item {i})"),
                    });
                }
                let (bu, bi) = (model.user_bias[u], model.item_bias[i]);
                model.user_bias[u] = bu + lr * (err - l2 * bu);
                model.item_bias[i] = bi + lr * (err - l2 * bi);
                let (pu, qi) = (u * d, i * d);
                p_old.copy_from_slice(&model.user_factors[pu..pu + d]);
                for k in 0..d {
                    let p = p_old[k];
                    let q = model.item_factors[qi + k];
                    model.user_factors[pu + k] += lr * (err * q - l2 * p);
                    model.item_factors[qi + k] += lr * (err * p - l2 * q);
                }
            }
        }
        Ok(model)
    }

    /// Root mean squared error of clamped predictions.
    pub fn rmse(&self, pairs: &[(usize, usize, f64)]) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("rmse over an empty evaluation set".into()));
        }
        let sse: f64 = pairs
            .iter()
            .map(|&(u, i, r)| {
                let e = self.predict(u, i).as_f64() - r;
                e * e
            })
            .sum();
        Ok((sse / pairs.len() as f64).sqrt())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC);
        w.u8(T::TAG);
        w.u64(self.dim as u64);
        w.f64(self.scale.min);
        w.f64(self.scale.max);
        w.f64(self.scale.positive_threshold);
        w.scalar(self.global_mean);
        w.scalars(&self.user_bias);
        w.scalars(&self.item_bias);
        w.scalars(&self.user_factors);
        w.scalars(&self.item_factors);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, MAGIC, "matrix factorization model")?;
        let tag = r.u8()?;
        if tag != T::TAG {
            return Err(Error::Format(format!("model scalar width {tag} does not match {}", T::TAG)));
        }
        let dim = r.usize()?;
        let scale = RatingScale {
            min: r.f64()?,
            max: r.f64()?,
            positive_threshold: r.f64()?,
        };
        scale.validate().map_err(|e| Error::Format(e.to_string()))?;
        let global_mean = r.scalar()?;
        let user_bias: Vec<T> = r.scalars()?;
        let item_bias: Vec<T> = r.scalars()?;
        let user_factors: Vec<T> = r.scalars()?;
        let item_factors: Vec<T> = r.scalars()?;
        r.expect_len(user_factors.len(), user_bias.len() * dim, "user_factors")?;
        r.expect_len(item_factors.len(), item_bias.len() * dim, "item_factors")?;
        r.finish()?;
        Ok(MatrixFactorization {
            global_mean,
            user_bias,
            item_bias,
            user_factors,
            item_factors,
            dim,
            scale,
        })
    }
}

impl<T: Scalar> Environment<T> for MatrixFactorization<T> {
    fn num_users(&self) -> usize {
        self.num_users()
    }

    fn num_items(&self) -> usize {
        self.num_items()
    }

    fn scale(&self) -> RatingScale {
        self.scale
    }

    fn rate(&self, state: &State<T>, item: usize) -> T {
        self.predict(state.user, item)
    }

    fn rate_all(&self, state: &State<T>, out: &mut [T]) {
        let u = state.user;
        let (lo, hi) = (T::of(self.scale.min), T::of(self.scale.max));
        let base = self.global_mean + self.user_bias[u];
        let pu = self.user_vec(u);
        for (i, o) in out.iter_mut().enumerate() {
            *o = clamp(base + self.item_bias[i] + dot(pu, self.item_vec(i)), lo, hi);
        }
    }
}
