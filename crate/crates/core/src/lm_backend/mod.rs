//! Masked-language-model encoder abstraction.
//!
//! [`MaskedEncoder`] is the only thing a backend implements: a vocabulary, a
//! parameter list and a differentiable forward pass over input embeddings.
//! Encoding, gradients and optimizer updates are written once on top of it
//! in this module, so any checkpoint that can express its forward pass on a
//! [`Tape`] plugs into the rest of the pipeline unchanged.
//!
//! Each input is encoded independently over its content positions only, so
//! results never depend on how inputs are grouped into batches. Padding
//! positions receive zero output vectors.

mod checkpoint;
mod optim;
mod reference;
mod vocab;

use std::sync::Arc;

use ndarray::Axis;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use optim::{clip_global_norm, Adam, AdamConfig};
pub use reference::{EncoderConfig, ReferenceEncoder};
pub use vocab::{EncodedInput, SlotMap, TokenId, Vocabulary, BOS, EOS, MASK, PAD, REFERENCE_VOCAB_SIZE, UNK};

use crate::error::{Error, Result};
use crate::tape::{Matrix, Tape, Var};
use crate::Scalar;

/// A differentiable encoder: maps an `n × d` matrix of input embeddings to
/// `n × d` contextual vectors.
pub trait MaskedEncoder<T: Scalar>: Send + Sync {
    fn vocab(&self) -> &Vocabulary;
    fn hidden_dim(&self) -> usize;
    fn max_positions(&self) -> usize;
    fn parameters(&self) -> &[Arc<Matrix<T>>];
    fn parameters_mut(&mut self) -> &mut [Arc<Matrix<T>>];
    /// Index in [`Self::parameters`] of the `|V| × d` input embedding table.
    fn embedding_table(&self) -> usize;
    /// Records the forward pass. `params` are tape leaves for
    /// [`Self::parameters`] in order; `inputs` holds one row per content position.
    fn forward(&self, tape: &mut Tape<T>, params: &[Var], inputs: Var) -> Var;

    fn input_embeddings(&self) -> &Matrix<T> {
        &self.parameters()[self.embedding_table()]
    }
}

/// An encoded prompt plus optional per-position input-embedding overrides.
/// Overridden positions ignore their token id's embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput<T> {
    pub encoded: EncodedInput,
    pub overrides: Vec<(usize, Arc<[T]>)>,
}

impl<T> From<EncodedInput> for ModelInput<T> {
    fn from(encoded: EncodedInput) -> Self {
        ModelInput {
            encoded,
            overrides: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextualOutput<T> {
    /// One row per input position; padding rows are zero.
    pub vectors: Matrix<T>,
    pub content_mask: Vec<bool>,
}

/// What [`forward_backward`] should differentiate with respect to.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GradRequest {
    pub parameters: bool,
    /// Sum over the batch of the gradient wrt the input embedding at trigger slot `j`.
    pub trigger_slot: Option<usize>,
    /// Gradient wrt every override vector of every input.
    pub overrides: bool,
}

impl GradRequest {
    pub fn parameters() -> Self {
        GradRequest {
            parameters: true,
            ..Default::default()
        }
    }

    pub fn trigger_slot(j: usize) -> Self {
        GradRequest {
            trigger_slot: Some(j),
            ..Default::default()
        }
    }

    pub fn overrides() -> Self {
        GradRequest {
            overrides: true,
            ..Default::default()
        }
    }

    fn needs_inputs(&self) -> bool {
        self.trigger_slot.is_some() || self.overrides
    }
}

#[derive(Clone, Debug)]
pub struct LossGradient<T> {
    pub loss: T,
    /// Same order and shapes as [`MaskedEncoder::parameters`].
    pub parameters: Option<Vec<Matrix<T>>>,
    pub trigger_slot: Option<Vec<T>>,
    /// `overrides[i][k]` is the gradient for the `k`-th override of input `i`.
    pub overrides: Vec<Vec<Vec<T>>>,
}

fn validate<T: Scalar, M: MaskedEncoder<T> + ?Sized>(model: &M, input: &ModelInput<T>) -> Result<Vec<usize>> {
    let enc = &input.encoded;
    if enc.token_ids.len() != enc.content_mask.len() {
        return Err(Error::DimensionMismatch {
            context: "content mask length",
            expected: enc.token_ids.len(),
            got: enc.content_mask.len(),
        });
    }
    let vocab_size = model.vocab().len();
    if let Some((position, &id)) = enc.token_ids.iter().enumerate().find(|(_, &id)| id >= vocab_size) {
        return Err(Error::TokenOutOfRange {
            position,
            id,
            vocab_size,
        });
    }
    let content = enc.content_positions();
    if content.is_empty() {
        return Err(Error::EmptyInput("encode"));
    }
    if content.len() > model.max_positions() {
        return Err(Error::DimensionMismatch {
            context: "sequence length",
            expected: model.max_positions(),
            got: content.len(),
        });
    }
    for (pos, v) in &input.overrides {
        if !enc.content_mask.get(*pos).copied().unwrap_or(false) {
            return Err(Error::InvalidConfig(format!("override at non-content position {pos}")));
        }
        if v.len() != model.hidden_dim() {
            return Err(Error::DimensionMismatch {
                context: "override vector",
                expected: model.hidden_dim(),
                got: v.len(),
            });
        }
    }
    Ok(content)
}

struct Recorded<T> {
    tape: Tape<T>,
    params: Vec<Var>,
    inputs: Var,
    output: Var,
    content: Vec<usize>,
}

fn record<T: Scalar, M: MaskedEncoder<T> + ?Sized>(
    model: &M,
    input: &ModelInput<T>,
    content: Vec<usize>,
    params_grad: bool,
    inputs_grad: bool,
) -> Recorded<T> {
    let mut tape = Tape::new();
    let params: Vec<Var> = model
        .parameters()
        .iter()
        .map(|p| tape.shared_leaf(Arc::clone(p), params_grad))
        .collect();
    let ids: Vec<usize> = content.iter().map(|&p| input.encoded.token_ids[p]).collect();
    let row_of = |pos: usize| content.binary_search(&pos).expect("validated content position");
    let inputs = if params_grad {
        let gathered = tape.gather(params[model.embedding_table()], &ids);
        if input.overrides.is_empty() {
            gathered
        } else {
            let rows = input
                .overrides
                .iter()
                .map(|(pos, v)| (row_of(*pos), tape.row(v, false)))
                .collect();
            tape.set_rows(gathered, rows)
        }
    } else {
        let mut m = model.input_embeddings().select(Axis(0), &ids);
        for (pos, v) in &input.overrides {
            m.row_mut(row_of(*pos))
                .iter_mut()
                .zip(v.iter())
                .for_each(|(dst, &src)| *dst = src);
        }
        tape.leaf(m, inputs_grad)
    };
    let output = model.forward(&mut tape, &params, inputs);
    Recorded {
        tape,
        params,
        inputs,
        output,
        content,
    }
}

fn scatter<T: Scalar>(rec: &Recorded<T>, input: &EncodedInput) -> ContextualOutput<T> {
    let out = rec.tape.value(rec.output);
    let mut vectors = Matrix::zeros((input.len(), out.ncols()));
    for (row, &pos) in rec.content.iter().enumerate() {
        vectors.row_mut(pos).assign(&out.row(row));
    }
    ContextualOutput {
        vectors,
        content_mask: input.content_mask.clone(),
    }
}

/// Contextual vectors for every input. Deterministic and independent of
/// batch composition.
pub fn encode<T: Scalar, M: MaskedEncoder<T> + ?Sized>(
    model: &M,
    batch: &[ModelInput<T>],
) -> Result<Vec<ContextualOutput<T>>> {
    let contents = batch.iter().map(|i| validate(model, i)).collect::<Result<Vec<_>>>()?;
    Ok(batch
        .par_iter()
        .zip(contents)
        .map(|(input, content)| {
            let rec = record(model, input, content, false, false);
            scatter(&rec, &input.encoded)
        })
        .collect())
}

/// Number of inputs whose tapes are alive at once during [`forward_backward`].
const BACKWARD_CHUNK: usize = 32;

/// Encodes `batch`, evaluates `loss` on the outputs and backpropagates.
///
/// `loss` returns the scalar value and its gradient with respect to each
/// output's `vectors` (padding rows are ignored). Gradient contributions
/// are summed in input order, so results are bitwise reproducible.
pub fn forward_backward<T, M, F>(
    model: &M,
    batch: &[ModelInput<T>],
    wrt: &GradRequest,
    loss: F,
) -> Result<LossGradient<T>>
where
    T: Scalar,
    M: MaskedEncoder<T> + ?Sized,
    F: FnOnce(&[ContextualOutput<T>]) -> Result<(T, Vec<Matrix<T>>)>,
{
    let contents = batch.iter().map(|i| validate(model, i)).collect::<Result<Vec<_>>>()?;
    if let Some(j) = wrt.trigger_slot {
        if let Some(input) = batch.iter().position(|b| b.encoded.slot_map.triggers.len() <= j) {
            return Err(Error::NotATriggerSlot { input, slot: j });
        }
    }
    let needs_inputs = wrt.needs_inputs();
    let recorded: Vec<Recorded<T>> = batch
        .par_iter()
        .zip(contents)
        .map(|(input, content)| record(model, input, content, wrt.parameters, needs_inputs))
        .collect();
    let outputs: Vec<ContextualOutput<T>> = recorded
        .iter()
        .zip(batch)
        .map(|(r, i)| scatter(r, &i.encoded))
        .collect();
    let (value, seeds) = loss(&outputs)?;
    drop(outputs);
    if seeds.len() != batch.len() {
        return Err(Error::DimensionMismatch {
            context: "loss gradient count",
            expected: batch.len(),
            got: seeds.len(),
        });
    }

    let d = model.hidden_dim();
    let mut param_grads: Option<Vec<Matrix<T>>> = wrt
        .parameters
        .then(|| model.parameters().iter().map(|p| Matrix::zeros(p.dim())).collect());
    let mut slot_grad = wrt.trigger_slot.map(|_| vec![T::zero(); d]);
    let mut override_grads = Vec::new();

    let items: Vec<_> = recorded.into_iter().zip(seeds).zip(batch).collect();
    for chunk in items.chunks(BACKWARD_CHUNK) {
        let partial: Vec<_> = chunk
            .par_iter()
            .map(|((rec, seed), input)| {
                let mut local_seed = Matrix::zeros(rec.tape.value(rec.output).dim());
                for (row, &pos) in rec.content.iter().enumerate() {
                    local_seed.row_mut(row).assign(&seed.row(pos));
                }
                let mut grads = rec.tape.backward_with(rec.output, local_seed);
                let params: Option<Vec<Option<Matrix<T>>>> = wrt
                    .parameters
                    .then(|| rec.params.iter().map(|&p| grads.take(p)).collect());
                let input_grad = grads
                    .get(rec.inputs)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(rec.tape.value(rec.inputs).dim()));
                let row_of = |pos: usize| rec.content.binary_search(&pos).expect("content");
                let slot = wrt.trigger_slot.map(|j| {
                    let pos = input.encoded.slot_map.triggers[j];
                    input_grad.row(row_of(pos)).to_vec()
                });
                let overrides: Vec<Vec<T>> = if wrt.overrides {
                    input
                        .overrides
                        .iter()
                        .map(|(pos, _)| input_grad.row(row_of(*pos)).to_vec())
                        .collect()
                } else {
                    Vec::new()
                };
                (params, slot, overrides)
            })
            .collect();
        for (params, slot, overrides) in partial {
            if let (Some(acc), Some(params)) = (param_grads.as_mut(), params) {
                for (a, g) in acc.iter_mut().zip(params) {
                    if let Some(g) = g {
                        *a += &g;
                    }
                }
            }
            if let (Some(acc), Some(slot)) = (slot_grad.as_mut(), slot) {
                acc.iter_mut().zip(slot).for_each(|(a, g)| *a += g);
            }
            if wrt.overrides {
                override_grads.push(overrides);
            }
        }
    }
    Ok(LossGradient {
        loss: value,
        parameters: param_grads,
        trigger_slot: slot_grad,
        overrides: override_grads,
    })
}

/// Gradient of a loss written as tape operations over the encoder outputs.
/// The closure receives one `len × d` variable per input.
pub fn loss_gradient<T, M, F>(model: &M, batch: &[ModelInput<T>], wrt: &GradRequest, loss: F) -> Result<LossGradient<T>>
where
    T: Scalar,
    M: MaskedEncoder<T> + ?Sized,
    F: FnOnce(&mut Tape<T>, &[Var]) -> Var,
{
    forward_backward(model, batch, wrt, |outputs| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = outputs.iter().map(|o| tape.leaf(o.vectors.clone(), true)).collect();
        let out = loss(&mut tape, &vars);
        let mut grads = tape.backward(out);
        let seeds = vars
            .iter()
            .zip(outputs)
            .map(|(&v, o)| grads.take(v).unwrap_or_else(|| Matrix::zeros(o.vectors.dim())))
            .collect();
        Ok((tape.scalar(out), seeds))
    })
}

/// One optimizer step on the model parameters, in place.
pub fn apply_update<T: Scalar, M: MaskedEncoder<T> + ?Sized>(
    model: &mut M,
    gradients: &[Matrix<T>],
    optimizer: &mut Adam<T>,
) -> Result<()> {
    let expected: Vec<_> = model.parameters().iter().map(|p| p.dim()).collect();
    let got: Vec<_> = gradients.iter().map(|g| g.dim()).collect();
    if expected != got {
        return Err(Error::ShapeMismatch {
            context: "apply_update",
            expected,
            got,
        });
    }
    let mut params: Vec<&mut [T]> = model
        .parameters_mut()
        .iter_mut()
        .map(|p| Arc::make_mut(p).as_slice_mut().expect("parameters are contiguous"))
        .collect();
    let grads: Vec<&[T]> = gradients
        .iter()
        .map(|g| g.as_slice().expect("gradients are contiguous"))
        .collect();
    optimizer.step(&mut params, &grads)
}

/// Little-endian bytes of every parameter in order.
pub fn parameter_blob<T: Scalar, M: MaskedEncoder<T> + ?Sized>(model: &M) -> Vec<u8> {
    let mut out = Vec::new();
    for p in model.parameters() {
        for &v in p.iter() {
            v.write_le(&mut out);
        }
    }
    out
}

/// SHA-256 of [`parameter_blob`], hex encoded.
pub fn parameter_hash<T: Scalar, M: MaskedEncoder<T> + ?Sized>(model: &M) -> String {
    hex_digest(&parameter_blob(model))
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
