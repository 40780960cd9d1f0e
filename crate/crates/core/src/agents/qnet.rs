//! Windowed-embedding value model with hand-written gradients.
//!
//! `phi(s)` concatenates the feedback-weighted mean and the plain mean of
//! the embeddings of the last `window` items in `s`; the score of item `a`
//! is `phi(s)^T W e_a + c_a`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::transitions::Transition;
use crate::data::RatingScale;
use crate::error::{Error, Result};
use crate::persist::{Reader, Writer};
use crate::scalar::{clamp, dot, Scalar};

const MAGIC: &[u8; 8] = b"IRSQNET\0";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValueHyper {
    pub dim: usize,
    pub history_window: usize,
    pub gamma: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub grad_clip: f64,
    pub target_sync_interval: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for ValueHyper {
    fn default() -> Self {
        ValueHyper {
            dim: 32,
            history_window: 50,
            gamma: 0.95,
            lr: 0.001,
            weight_decay: 0.00001,
            batch_size: 256,
            epochs: 10,
            grad_clip: 5.0,
            target_sync_interval: 500,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

impl ValueHyper {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!(
                "discount factor must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if self.dim == 0 || self.history_window == 0 || self.batch_size == 0 || self.target_sync_interval == 0 {
            return Err(Error::InvalidArgument(
                "dim, history_window, batch_size and target_sync_interval must be >= 1".into(),
            ));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) || !(self.grad_clip > 0.0) || !(self.init_scale >= 0.0) {
            return Err(Error::InvalidArgument(
                "lr and grad_clip must be > 0; weight_decay and init_scale >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// One regression example: score `(events, action)` towards `target`.
#[derive(Clone, Copy, Debug)]
pub struct Sample<'a, T> {
    pub events: &'a [(usize, T)],
    pub action: usize,
    pub target: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Loss<T> {
    /// Mean squared error over the batch.
    pub mse: T,
    /// `weight_decay / 2 * |theta|^2`.
    pub l2: T,
}

impl<T: Scalar> Loss<T> {
    pub fn total(&self) -> T {
        self.mse + self.l2
    }
}

/// All parameters live in one flat vector: item embeddings
/// (`num_items x dim`), the head matrix (`2 dim x dim`), then item biases.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork<T> {
    pub params: Vec<T>,
    pub num_items: usize,
    pub dim: usize,
    pub window: usize,
    pub gamma: f64,
    pub scale: RatingScale,
    /// Training-split popularity, carried so one file holds every policy input.
    pub popularity: Vec<u64>,
}

impl<T: Scalar> QNetwork<T> {
    /// Embeddings and head uniform in `(-init_scale, init_scale)`, biases set
    /// to `bias_init`.
    pub fn new(
        num_items: usize,
        scale: RatingScale,
        popularity: Vec<u64>,
        hyper: &ValueHyper,
        bias_init: f64,
    ) -> Result<Self> {
        hyper.validate()?;
        if popularity.len() != num_items {
            return Err(Error::InvalidArgument("popularity table length differs from item count".into()));
        }
        let d = hyper.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let a = hyper.init_scale;
        let mut params = Vec::with_capacity(Self::param_len(num_items, d));
        for _ in 0..num_items * d + 2 * d * d {
            params.push(T::of(if a > 0.0 { rng.gen_range(-a..a) } else { 0.0 }));
        }
        params.extend(std::iter::repeat_n(T::of(bias_init), num_items));
        Ok(QNetwork {
            params,
            num_items,
            dim: d,
            window: hyper.history_window,
            gamma: hyper.gamma,
            scale,
            popularity,
        })
    }

    pub fn param_len(num_items: usize, dim: usize) -> usize {
        num_items * dim + 2 * dim * dim + num_items
    }

    fn head_offset(&self) -> usize {
        self.num_items * self.dim
    }

    fn bias_offset(&self) -> usize {
        self.head_offset() + 2 * self.dim * self.dim
    }

    pub fn embedding(&self, item: usize) -> &[T] {
        &self.params[item * self.dim..(item + 1) * self.dim]
    }

    pub fn head(&self) -> &[T] {
        &self.params[self.head_offset()..self.bias_offset()]
    }

    pub fn bias(&self) -> &[T] {
        &self.params[self.bias_offset()..]
    }

    fn window_of<'a>(&self, events: &'a [(usize, T)]) -> &'a [(usize, T)] {
        &events[events.len().saturating_sub(self.window)..]
    }

    fn feedback_weight(&self, rating: T) -> T {
        let lo = T::of(self.scale.min);
        let span = T::of(self.scale.max - self.scale.min);
        clamp((rating - lo) / span, T::zero(), T::one())
    }

    /// `phi(s)`, length `2 * dim`; all zeros for an empty state.
    pub fn features(&self, events: &[(usize, T)]) -> Vec<T> {
        let d = self.dim;
        let mut phi = vec![T::zero(); 2 * d];
        let win = self.window_of(events);
        if win.is_empty() {
            return phi;
        }
        let inv_n = T::one() / T::of(win.len() as f64);
        for &(item, rating) in win {
            let w = self.feedback_weight(rating) * inv_n;
            for (k, e) in self.embedding(item).iter().enumerate() {
                phi[k] += w * *e;
                phi[d + k] += inv_n * *e;
            }
        }
        phi
    }

    /// `z = W^T phi`, length `dim`.
    pub fn project(&self, phi: &[T]) -> Vec<T> {
        let d = self.dim;
        let head = self.head();
        let mut z = vec![T::zero(); d];
        for (j, p) in phi.iter().enumerate() {
            if *p == T::zero() {
                continue;
            }
            for (zk, w) in z.iter_mut().zip(&head[j * d..(j + 1) * d]) {
                *zk += *p * *w;
            }
        }
        z
    }

    pub fn score(&self, events: &[(usize, T)], item: usize) -> T {
        let z = self.project(&self.features(events));
        dot(&z, self.embedding(item)) + self.bias()[item]
    }

    /// Scores for all items; `out.len()` must equal `num_items`.
    pub fn score_all(&self, events: &[(usize, T)], out: &mut [T]) {
        let z = self.project(&self.features(events));
        let bias = self.bias();
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&z, self.embedding(i)) + bias[i];
        }
    }

    pub fn max_score(&self, events: &[(usize, T)]) -> T {
        let z = self.project(&self.features(events));
        let bias = self.bias();
        (0..self.num_items)
            .map(|i| dot(&z, self.embedding(i)) + bias[i])
            .fold(T::neg_infinity(), T::max)
    }

    /// Objective `mean (q - target)^2 + wd/2 |theta|^2` and its gradient,
    /// written into `grad` (overwritten, same layout as `params`).
    pub fn loss_and_grad(&self, batch: &[Sample<'_, T>], weight_decay: f64, grad: &mut [T]) -> Loss<T> {
        assert_eq!(grad.len(), self.params.len());
        let d = self.dim;
        let (head_off, bias_off) = (self.head_offset(), self.bias_offset());
        let wd = T::of(weight_decay);
        let mut l2 = T::zero();
        for (g, p) in grad.iter_mut().zip(&self.params) {
            *g = wd * *p;
            l2 += *p * *p;
        }
        let l2 = wd * l2 / T::of(2.0);
        if batch.is_empty() {
            return Loss { mse: T::zero(), l2 };
        }

        let inv_b = T::one() / T::of(batch.len() as f64);
        let two = T::of(2.0);
        let mut sse = T::zero();
        let mut g_phi = vec![T::zero(); 2 * d];
        for s in batch {
            let phi = self.features(s.events);
            let z = self.project(&phi);
            let e_a = self.embedding(s.action);
            let q = dot(&z, e_a) + self.bias()[s.action];
            let err = q - s.target;
            sse += err * err;
            let c = two * err * inv_b;

            grad[bias_off + s.action] += c;
            for k in 0..d {
                grad[s.action * d + k] += c * z[k];
            }
            let head = self.head();
            for j in 0..2 * d {
                let row = &head[j * d..(j + 1) * d];
                g_phi[j] = c * dot(row, e_a);
                let cp = c * phi[j];
                if cp != T::zero() {
                    for k in 0..d {
                        grad[head_off + j * d + k] += cp * e_a[k];
                    }
                }
            }
            let win = self.window_of(s.events);
            if !win.is_empty() {
                let inv_n = T::one() / T::of(win.len() as f64);
                for &(item, rating) in win {
                    let w = self.feedback_weight(rating) * inv_n;
                    let row = &mut grad[item * d..(item + 1) * d];
                    for k in 0..d {
                        row[k] += w * g_phi[k] + inv_n * g_phi[d + k];
                    }
                }
            }
        }
        Loss { mse: sse * inv_b, l2 }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC);
        w.u8(T::TAG);
        w.u64(self.num_items as u64);
        w.u64(self.dim as u64);
        w.u64(self.window as u64);
        w.f64(self.gamma);
        w.f64(self.scale.min);
        w.f64(self.scale.max);
        w.f64(self.scale.positive_threshold);
        w.u64s(&self.popularity);
        w.scalars(&self.params);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, MAGIC, "value model")?;
        let tag = r.u8()?;
        if tag != T::TAG {
            return Err(Error::Format(format!("model scalar width {tag} does not match {}", T::TAG)));
        }
        let num_items = r.usize()?;
        let dim = r.usize()?;
        let window = r.usize()?;
        let gamma = r.f64()?;
        let scale = RatingScale {
            min: r.f64()?,
            max: r.f64()?,
            positive_threshold: r.f64()?,
        };
        scale.validate().map_err(|e| Error::Format(e.to_string()))?;
        let popularity = r.u64s()?;
        let params: Vec<T> = r.scalars()?;
        r.expect_len(popularity.len(), num_items, "popularity")?;
        r.expect_len(params.len(), Self::param_len(num_items, dim), "params")?;
        r.finish()?;
        Ok(QNetwork {
            params,
            num_items,
            dim,
            window,
            gamma,
            scale,
            popularity,
        })
    }
}

/// Bootstrapped regression target: the reward, plus `gamma` times the best
/// target-model score at the next state unless the step is terminal.
pub fn q_target<T: Scalar>(tr: &Transition<'_, T>, target: &QNetwork<T>, gamma: T) -> T {
    if tr.terminal || gamma == T::zero() {
        tr.reward
    } else {
        tr.reward + gamma * target.max_score(tr.next_state)
    }
}
