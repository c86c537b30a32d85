//! Checkpoint directory layout:
//!
//! - `vocab.txt`: one token per line, line number = token id.
//! - `params.bin`: magic `RELEMB-CKPT\n`, then little-endian `u32` version,
//!   scalar width in bytes (4 or 8), hidden size, layers, heads, ffn size,
//!   max positions, vocabulary size, an `f64` layer-norm epsilon, an `f64`
//!   init std, the `u32` tensor count, and per tensor `u32` rows, `u32` cols
//!   and row-major values at the declared width.

use std::fs;
use std::path::Path;

use super::reference::{expected_shapes, EncoderConfig, ReferenceEncoder};
use super::vocab::Vocabulary;
use super::MaskedEncoder;
use crate::error::{Error, Result};
use crate::tape::Matrix;
use crate::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 12] = b"RELEMB-CKPT\n";
pub(crate) const VOCAB_FILE: &str = "vocab.txt";
pub(crate) const PARAMS_FILE: &str = "params.bin";

pub fn save_checkpoint<T: Scalar>(model: &ReferenceEncoder<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut vocab = model.vocab().tokens().join("\n");
    vocab.push('\n');
    let vocab_path = dir.join(VOCAB_FILE);
    fs::write(&vocab_path, vocab).map_err(|e| Error::io(&vocab_path, e))?;

    let c = model.config();
    let mut blob = MAGIC.to_vec();
    let mut put = |v: usize| blob.extend_from_slice(&(v as u32).to_le_bytes());
    put(CHECKPOINT_VERSION as usize);
    put(T::BYTES);
    for v in [
        c.hidden_dim,
        c.layers,
        c.heads,
        c.ffn_dim,
        c.max_positions,
        c.vocab_size,
    ] {
        put(v);
    }
    blob.extend_from_slice(&c.layer_norm_eps.to_le_bytes());
    blob.extend_from_slice(&c.init_std.to_le_bytes());
    let params = model.parameters();
    blob.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        blob.extend_from_slice(&(p.nrows() as u32).to_le_bytes());
        blob.extend_from_slice(&(p.ncols() as u32).to_le_bytes());
        for &v in p.iter() {
            v.write_le(&mut blob);
        }
    }
    let params_path = dir.join(PARAMS_FILE);
    fs::write(&params_path, blob).map_err(|e| Error::io(&params_path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let out = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or_else(|| Error::Checkpoint("truncated parameter blob".into()))?;
        self.at += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Loads a checkpoint, converting stored values to `T` when the stored width differs.
pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<ReferenceEncoder<T>> {
    let vocab_path = dir.join(VOCAB_FILE);
    let text = fs::read_to_string(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
    let vocab = Vocabulary::new(text.lines().map(str::to_string).collect())?;

    let params_path = dir.join(PARAMS_FILE);
    let bytes = fs::read(&params_path).map_err(|e| Error::io(&params_path, e))?;
    let mut r = Reader { bytes: &bytes, at: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let width = r.u32()?;
    if width != 4 && width != 8 {
        return Err(Error::Checkpoint(format!("unsupported scalar width {width}")));
    }
    let config = EncoderConfig {
        hidden_dim: r.u32()?,
        layers: r.u32()?,
        heads: r.u32()?,
        ffn_dim: r.u32()?,
        max_positions: r.u32()?,
        vocab_size: r.u32()?,
        layer_norm_eps: r.f64()?,
        init_std: r.f64()?,
    };
    let count = r.u32()?;
    if count != expected_shapes(&config).len() {
        return Err(Error::Checkpoint(format!("unexpected tensor count {count}")));
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let (rows, cols) = (r.u32()?, r.u32()?);
        let raw = r.take(rows * cols * width)?;
        let data: Vec<T> = raw
            .chunks_exact(width)
            .map(|c| {
                if width == 8 {
                    T::lit(f64::read_le(c))
                } else {
                    T::lit(f32::read_le(c) as f64)
                }
            })
            .collect();
        params.push(Matrix::from_shape_vec((rows, cols), data).expect("shape"));
    }
    if r.at != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes in parameter blob".into()));
    }
    ReferenceEncoder::from_parts(config, vocab, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm_backend::parameter_hash;

    #[test]
    fn save_then_load_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let m = ReferenceEncoder::<f64>::reference(3);
        save_checkpoint(&m, dir.path()).unwrap();
        let back: ReferenceEncoder<f64> = load_checkpoint(dir.path()).unwrap();
        assert_eq!(parameter_hash(&m), parameter_hash(&back));
        assert_eq!(back.vocab(), m.vocab());
        let lines = fs::read_to_string(dir.path().join(VOCAB_FILE)).unwrap();
        assert_eq!(lines.lines().count(), 256);
    }

    #[test]
    fn corrupted_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = ReferenceEncoder::<f32>::reference(3);
        save_checkpoint(&m, dir.path()).unwrap();
        let path = dir.path().join(PARAMS_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint::<f32>(dir.path()), Err(Error::Checkpoint(_))));
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(load_checkpoint::<f32>(dir.path()).is_err());
    }

    #[test]
    fn f32_checkpoint_loads_as_f64() {
        let dir = tempfile::tempdir().unwrap();
        let m = ReferenceEncoder::<f32>::reference(3);
        save_checkpoint(&m, dir.path()).unwrap();
        let back: ReferenceEncoder<f64> = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back.parameters()[0][[4, 5]], m.parameters()[0][[4, 5]] as f64);
    }
}
