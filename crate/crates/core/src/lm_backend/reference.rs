use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::vocab::Vocabulary;
use super::MaskedEncoder;
use crate::tape::{Matrix, Tape, Var};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_positions: usize,
    pub layer_norm_eps: f64,
    /// Standard deviation of the Gaussian weight initialisation.
    pub init_std: f64,
}

impl Default for EncoderConfig {
    /// Two layers, `d = 32`, four heads, 256-token vocabulary.
    fn default() -> Self {
        EncoderConfig {
            vocab_size: super::vocab::REFERENCE_VOCAB_SIZE,
            hidden_dim: 32,
            layers: 2,
            heads: 4,
            ffn_dim: 128,
            max_positions: 128,
            layer_norm_eps: 1e-5,
            init_std: 0.02,
        }
    }
}

const EMBED_PARAMS: usize = 4;
const LAYER_PARAMS: usize = 16;

/// Small post-norm transformer encoder with learned token and position
/// embeddings.
///
/// Parameter order: token embeddings, position embeddings, embedding norm
/// gain and bias, then per layer `wq bq wk bk wv bv wo bo ln1_g ln1_b w1 b1
/// w2 b2 ln2_g ln2_b`. Weight matrices are stored `in × out` and applied as
/// `x · W`.
#[derive(Clone, Debug)]
pub struct ReferenceEncoder<T> {
    config: EncoderConfig,
    vocab: Vocabulary,
    params: Vec<Arc<Matrix<T>>>,
}

impl<T: Scalar> ReferenceEncoder<T> {
    /// Deterministic initialisation from `seed`: Gaussian weights, zero biases,
    /// unit norm gains.
    pub fn new(config: EncoderConfig, vocab: Vocabulary, seed: u64) -> crate::Result<Self> {
        validate_config(&config, &vocab)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, config.init_std).expect("finite std");
        let mut gauss = |rows: usize, cols: usize| {
            let data = (0..rows * cols).map(|_| T::lit(normal.sample(&mut rng))).collect();
            Arc::new(Matrix::from_shape_vec((rows, cols), data).expect("shape"))
        };
        let (d, f) = (config.hidden_dim, config.ffn_dim);
        let zeros = |n: usize| Arc::new(Matrix::<T>::zeros((1, n)));
        let ones = |n: usize| Arc::new(Matrix::<T>::from_elem((1, n), T::one()));

        let mut params = vec![
            gauss(config.vocab_size, d),
            gauss(config.max_positions, d),
            ones(d),
            zeros(d),
        ];
        for _ in 0..config.layers {
            params.extend([
                gauss(d, d),
                zeros(d),
                gauss(d, d),
                zeros(d),
                gauss(d, d),
                zeros(d),
                gauss(d, d),
                zeros(d),
                ones(d),
                zeros(d),
                gauss(d, f),
                zeros(f),
                gauss(f, d),
                zeros(d),
                ones(d),
                zeros(d),
            ]);
        }
        Ok(ReferenceEncoder { config, vocab, params })
    }

    /// The reference model: default config, reference vocabulary.
    pub fn reference(seed: u64) -> Self {
        Self::new(EncoderConfig::default(), Vocabulary::reference(), seed).expect("default config is valid")
    }

    pub fn from_parts(config: EncoderConfig, vocab: Vocabulary, params: Vec<Matrix<T>>) -> crate::Result<Self> {
        validate_config(&config, &vocab)?;
        let shapes = expected_shapes(&config);
        let got: Vec<_> = params.iter().map(|p| p.dim()).collect();
        if shapes != got {
            return Err(crate::Error::ShapeMismatch {
                context: "reference encoder parameters",
                expected: shapes,
                got,
            });
        }
        Ok(ReferenceEncoder {
            config,
            vocab,
            params: params.into_iter().map(Arc::new).collect(),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }
}

fn validate_config(config: &EncoderConfig, vocab: &Vocabulary) -> crate::Result<()> {
    let bad = |m: &str| Err(crate::Error::InvalidConfig(m.to_string()));
    if config.hidden_dim == 0 || config.heads == 0 || !config.hidden_dim.is_multiple_of(config.heads) {
        return bad("hidden_dim must be a positive multiple of heads");
    }
    if config.vocab_size != vocab.len() {
        return bad("vocab_size disagrees with the vocabulary");
    }
    if config.max_positions == 0 || config.ffn_dim == 0 {
        return bad("max_positions and ffn_dim must be positive");
    }
    Ok(())
}

pub(crate) fn expected_shapes(config: &EncoderConfig) -> Vec<(usize, usize)> {
    let (d, f) = (config.hidden_dim, config.ffn_dim);
    let mut shapes = vec![(config.vocab_size, d), (config.max_positions, d), (1, d), (1, d)];
    for _ in 0..config.layers {
        shapes.extend([
            (d, d),
            (1, d),
            (d, d),
            (1, d),
            (d, d),
            (1, d),
            (d, d),
            (1, d),
            (1, d),
            (1, d),
            (d, f),
            (1, f),
            (f, d),
            (1, d),
            (1, d),
            (1, d),
        ]);
    }
    shapes
}

impl<T: Scalar> MaskedEncoder<T> for ReferenceEncoder<T> {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    fn max_positions(&self) -> usize {
        self.config.max_positions
    }

    fn parameters(&self) -> &[Arc<Matrix<T>>] {
        &self.params
    }

    fn parameters_mut(&mut self) -> &mut [Arc<Matrix<T>>] {
        &mut self.params
    }

    fn embedding_table(&self) -> usize {
        0
    }

    fn forward(&self, tape: &mut Tape<T>, params: &[Var], inputs: Var) -> Var {
        let c = &self.config;
        let eps = T::lit(c.layer_norm_eps);
        let n = tape.value(inputs).nrows();
        let positions: Vec<usize> = (0..n).collect();
        let pos = tape.gather(params[1], &positions);
        let x = tape.add(inputs, pos);
        let mut x = tape.layer_norm(x, params[2], params[3], eps);

        let head_dim = c.hidden_dim / c.heads;
        let scale = T::one() / T::from_usize_lossy(head_dim).sqrt();
        for layer in 0..c.layers {
            let p = &params[EMBED_PARAMS + layer * LAYER_PARAMS..][..LAYER_PARAMS];
            let q = tape.matmul(x, p[0]);
            let q = tape.add_row(q, p[1]);
            let k = tape.matmul(x, p[2]);
            let k = tape.add_row(k, p[3]);
            let v = tape.matmul(x, p[4]);
            let v = tape.add_row(v, p[5]);
            let heads: Vec<Var> = (0..c.heads)
                .map(|h| {
                    let qh = tape.slice_cols(q, h * head_dim, head_dim);
                    let kh = tape.slice_cols(k, h * head_dim, head_dim);
                    let vh = tape.slice_cols(v, h * head_dim, head_dim);
                    let scores = tape.matmul_t(qh, kh);
                    let scores = tape.scale(scores, scale);
                    let attn = tape.softmax_rows(scores);
                    tape.matmul(attn, vh)
                })
                .collect();
            let ctx = tape.concat_cols(&heads);
            let attn_out = tape.matmul(ctx, p[6]);
            let attn_out = tape.add_row(attn_out, p[7]);
            let res = tape.add(x, attn_out);
            x = tape.layer_norm(res, p[8], p[9], eps);

            let hidden = tape.matmul(x, p[10]);
            let hidden = tape.add_row(hidden, p[11]);
            let hidden = tape.gelu(hidden);
            let ffn = tape.matmul(hidden, p[12]);
            let ffn = tape.add_row(ffn, p[13]);
            let res = tape.add(x, ffn);
            x = tape.layer_norm(res, p[14], p[15], eps);
        }
        x
    }
}
