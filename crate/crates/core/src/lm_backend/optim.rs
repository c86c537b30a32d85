use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state for a fixed list of parameter tensors.
///
/// Moment buffers are created lazily on the first step and their shapes are
/// pinned from then on.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update in place: `params[i] -= lr * m̂ / (sqrt(v̂) + eps)`.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::DimensionMismatch {
                context: "adam tensor count",
                expected: params.len(),
                got: grads.len(),
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::DimensionMismatch {
                    context: "adam tensor length",
                    expected: p.len(),
                    got: g.len(),
                });
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len()
            || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
        {
            return Err(Error::InvalidConfig(
                "parameter shapes changed between optimizer steps".into(),
            ));
        }

        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let lr = T::lit(c.learning_rate);
        let eps = T::lit(c.eps);
        let t = self.step as i32;
        let bias1 = T::one() - b1.powi(t);
        let bias2 = T::one() - b2.powi(t);

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + (T::one() - b1) * gj;
                v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Scales every gradient so the joint L2 norm is at most `max_norm`.
pub fn clip_global_norm<T: Scalar>(grads: &mut [&mut [T]], max_norm: T) -> T {
    let norm = grads.iter().flat_map(|g| g.iter()).map(|&x| x * x).sum::<T>().sqrt();
    if norm > max_norm && norm > T::zero() {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= k;
            }
        }
    }
    norm
}
