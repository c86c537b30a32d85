use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::template::{Prompt, TriggerTemplate, Triggers};
use crate::dataset::{derive_rng, Triple};
use crate::error::{Error, Result};
use crate::lm_backend::{Adam, AdamConfig, GradRequest, MaskedEncoder};
use crate::tape::{Matrix, Tape, Var};
use crate::training::{batched_triples, objective_gradient, objective_loss, IndexedTriples, TrainConfig};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PTuningConfig {
    pub epochs: usize,
    /// Adam step size for the trigger encoder.
    pub learning_rate: f64,
}

impl Default for PTuningConfig {
    fn default() -> Self {
        PTuningConfig {
            epochs: 2,
            learning_rate: 1e-3,
        }
    }
}

/// Produces the `n` continuous trigger vectors: trainable inputs, a
/// single-layer bidirectional LSTM of hidden size `d`, then a two-layer
/// feedforward projection `2d → d → d` added to the mask embedding. The
/// last layer starts at zero, so training starts from the all-mask template.
#[derive(Clone, Debug, PartialEq)]
pub struct TriggerEncoder<T> {
    /// inputs, then per direction `w_ih, w_hh, b`, then `w1, b1, w2, b2`.
    pub params: Vec<Matrix<T>>,
    base: Vec<T>,
}

const INPUTS: usize = 0;
const FORWARD: usize = 1;
const BACKWARD: usize = 4;
const MLP: usize = 7;

impl<T: Scalar> TriggerEncoder<T> {
    pub fn new(n: usize, mask_embedding: &[T], rng: &mut impl Rng) -> Self {
        let d = mask_embedding.len();
        let bound = 1.0 / (d as f64).sqrt();
        let mut uniform =
            |r: usize, c: usize, b: f64| Matrix::from_shape_fn((r, c), |_| T::lit(rng.random_range(-b..b)));
        let mut params = Vec::new();
        params.push(Matrix::zeros((n, d)));
        for _ in 0..2 {
            params.push(uniform(d, 4 * d, bound));
            params.push(uniform(d, 4 * d, bound));
            params.push(uniform(1, 4 * d, bound));
        }
        let b1 = 1.0 / ((2 * d) as f64).sqrt();
        params.push(uniform(2 * d, d, b1));
        params.push(uniform(1, d, b1));
        params.push(Matrix::zeros((d, d)));
        params.push(Matrix::zeros((1, d)));
        TriggerEncoder {
            params,
            base: mask_embedding.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.params[INPUTS].nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lstm(tape: &mut Tape<T>, xs: &[Var], w_ih: Var, w_hh: Var, b: Var, d: usize) -> Vec<Var> {
        let mut h = tape.leaf(Matrix::zeros((1, d)), false);
        let mut c = tape.leaf(Matrix::zeros((1, d)), false);
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            let xi = tape.matmul(x, w_ih);
            let hh = tape.matmul(h, w_hh);
            let z = tape.add(xi, hh);
            let gates = tape.add_row(z, b);
            let i = tape.slice_cols(gates, 0, d);
            let i = tape.sigmoid(i);
            let f = tape.slice_cols(gates, d, d);
            let f = tape.sigmoid(f);
            let g = tape.slice_cols(gates, 2 * d, d);
            let g = tape.tanh(g);
            let o = tape.slice_cols(gates, 3 * d, d);
            let o = tape.sigmoid(o);
            let fc = tape.mul(f, c);
            let ig = tape.mul(i, g);
            c = tape.add(fc, ig);
            let tc = tape.tanh(c);
            h = tape.mul(o, tc);
            out.push(h);
        }
        out
    }

    /// Records the encoder; returns the parameter leaves and the `n × d` output.
    pub fn record(&self, tape: &mut Tape<T>) -> (Vec<Var>, Var) {
        let d = self.base.len();
        let p: Vec<Var> = self.params.iter().map(|m| tape.leaf(m.clone(), true)).collect();
        let xs: Vec<Var> = (0..self.len()).map(|t| tape.slice_rows(p[INPUTS], t, 1)).collect();
        let fwd = Self::lstm(tape, &xs, p[FORWARD], p[FORWARD + 1], p[FORWARD + 2], d);
        let rev: Vec<Var> = xs.iter().rev().copied().collect();
        let mut bwd = Self::lstm(tape, &rev, p[BACKWARD], p[BACKWARD + 1], p[BACKWARD + 2], d);
        bwd.reverse();
        let rows: Vec<Var> = fwd.iter().zip(&bwd).map(|(&f, &b)| tape.concat_cols(&[f, b])).collect();
        let h = tape.concat_rows(&rows);
        let z = tape.matmul(h, p[MLP]);
        let z = tape.add_row(z, p[MLP + 1]);
        let z = tape.relu(z);
        let y = tape.matmul(z, p[MLP + 2]);
        let y = tape.add_row(y, p[MLP + 3]);
        let base = tape.row(&self.base, false);
        (p, tape.add_row(y, base))
    }

    pub fn vectors(&self) -> Vec<Arc<[T]>> {
        if self.is_empty() {
            return Vec::new();
        }
        let mut tape = Tape::new();
        let (_, out) = self.record(&mut tape);
        tape.value(out).rows().into_iter().map(|r| r.to_vec().into()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct PTuningOutcome<T> {
    pub template: TriggerTemplate<T>,
    pub encoder: Option<TriggerEncoder<T>>,
    /// `L_t` over the full training objective before and after optimization.
    pub initial_loss: T,
    pub final_loss: T,
    /// Per-batch `L_t`, measured before each update.
    pub loss_history: Vec<T>,
}

/// Learns continuous trigger vectors with the LM frozen. Only the trigger
/// encoder's weights are updated.
pub fn ptuning_optimize<T, M>(
    template: &TriggerTemplate<T>,
    model: &M,
    train: &[Triple],
    config: &PTuningConfig,
    train_config: &TrainConfig,
) -> Result<PTuningOutcome<T>>
where
    T: Scalar,
    M: MaskedEncoder<T> + ?Sized,
{
    template.validate()?;
    if !matches!(template.triggers, Triggers::Continuous(_)) {
        return Err(Error::InvalidTemplate("P-tuning needs continuous triggers".into()));
    }
    if config.epochs == 0 {
        return Err(Error::InvalidConfig("P-tuning needs at least one epoch".into()));
    }
    if config.learning_rate.is_nan() || config.learning_rate <= 0.0 {
        return Err(Error::InvalidConfig("P-tuning learning rate must be positive".into()));
    }
    if train.is_empty() {
        return Err(Error::EmptyInput("P-tuning training triples"));
    }
    train_config.validate()?;
    let settings = train_config.objective();
    let full = train_config.objective_set(train);
    let loss_of = |t: &TriggerTemplate<T>, set: &IndexedTriples| -> Result<T> {
        Ok(objective_loss(model, &Prompt::Trigger(t.clone()), set, &settings, None)?.triplet)
    };
    let initial_loss = loss_of(template, &full)?;
    if template.is_empty() {
        return Ok(PTuningOutcome {
            template: template.clone(),
            encoder: None,
            initial_loss,
            final_loss: initial_loss,
            loss_history: Vec::new(),
        });
    }

    let shape = template.shape();
    let label = format!("{}/{}/{}", shape.pi, shape.tau, shape.gamma);
    let mut rng = derive_rng(train_config.seed, &["ptuning", &label]);
    let mask = model.input_embeddings().row(model.vocab().mask_id()).to_vec();
    let mut encoder = TriggerEncoder::new(template.len(), &mask, &mut rng);
    init_inputs(&mut encoder, &mut rng);
    let mut opt = Adam::new(AdamConfig::with_learning_rate(config.learning_rate));
    let d = model.hidden_dim();
    let mut history = Vec::new();

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut derive_rng(
            train_config.seed,
            &["ptuning", &label, &epoch.to_string()],
        ));
        for chunk in order.chunks(train_config.batch_size) {
            let batch: Vec<Triple> = chunk.iter().map(|&i| train[i].clone()).collect();
            let set = IndexedTriples::new(&batched_triples(&batch, batch.len(), train_config.augment));
            let mut tape = Tape::new();
            let (leaves, out) = encoder.record(&mut tape);
            let current = TriggerTemplate {
                triggers: Triggers::Continuous(tape.value(out).rows().into_iter().map(|r| r.to_vec().into()).collect()),
                ..template.clone()
            };
            let g = objective_gradient(
                model,
                &Prompt::Trigger(current),
                &set,
                &settings,
                None,
                &GradRequest::overrides(),
            )?;
            history.push(g.loss.triplet);
            let mut seed = Matrix::zeros((template.len(), d));
            for per_input in &g.encoder.overrides {
                for (k, v) in per_input.iter().enumerate() {
                    seed.row_mut(k).iter_mut().zip(v).for_each(|(s, &x)| *s += x);
                }
            }
            let mut grads = tape.backward_with(out, seed);
            let grads: Vec<Matrix<T>> = leaves
                .iter()
                .zip(&encoder.params)
                .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Matrix::zeros(p.dim())))
                .collect();
            let mut params: Vec<&mut [T]> = encoder
                .params
                .iter_mut()
                .map(|p| p.as_slice_mut().expect("contiguous"))
                .collect();
            let views: Vec<&[T]> = grads.iter().map(|g| g.as_slice().expect("contiguous")).collect();
            opt.step(&mut params, &views)?;
        }
    }

    let template = TriggerTemplate {
        triggers: Triggers::Continuous(encoder.vectors()),
        ..template.clone()
    };
    let final_loss = loss_of(&template, &full)?;
    Ok(PTuningOutcome {
        template,
        encoder: Some(encoder),
        initial_loss,
        final_loss,
        loss_history: history,
    })
}

fn init_inputs<T: Scalar>(encoder: &mut TriggerEncoder<T>, rng: &mut impl Rng) {
    let normal = Normal::new(0.0, 0.02).expect("valid std");
    encoder.params[INPUTS].mapv_inplace(|_| T::lit(normal.sample(rng)));
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn initial_vectors_equal_the_mask_embedding() {
        let mask = [0.5, -0.25, 1.0];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut enc = TriggerEncoder::<f64>::new(4, &mask, &mut rng);
        init_inputs(&mut enc, &mut rng);
        for v in enc.vectors() {
            assert_eq!(&*v, &mask);
        }
    }

    #[test]
    fn encoder_gradient_matches_finite_differences() {
        let mask = [0.1, 0.2];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut enc = TriggerEncoder::<f64>::new(3, &mask, &mut rng);
        init_inputs(&mut enc, &mut rng);
        // Make the last layer non-zero so every weight receives gradient.
        enc.params[MLP + 2].mapv_inplace(|_| rng.random_range(-0.5..0.5));
        let weights = Matrix::from_shape_fn((3, 2), |(i, j)| (i as f64 + 1.0) * if j == 0 { 1.0 } else { -0.5 });
        let f = |e: &TriggerEncoder<f64>| {
            let mut tape = Tape::new();
            let (_, out) = e.record(&mut tape);
            (tape.value(out) * &weights).sum()
        };
        let mut tape = Tape::new();
        let (leaves, out) = enc.record(&mut tape);
        let grads = tape.backward_with(out, weights.clone());
        let h = 1e-6;
        for (pi, &leaf) in leaves.iter().enumerate() {
            let g = grads.get(leaf).unwrap();
            for idx in [0, g.len() / 2, g.len() - 1] {
                let mut up = enc.clone();
                up.params[pi].as_slice_mut().unwrap()[idx] += h;
                let mut down = enc.clone();
                down.params[pi].as_slice_mut().unwrap()[idx] -= h;
                let fd = (f(&up) - f(&down)) / (2.0 * h);
                let a = g.as_slice().unwrap()[idx];
                assert!((fd - a).abs() < 1e-6, "param {pi}[{idx}]: {fd} vs {a}");
            }
        }
    }
}
