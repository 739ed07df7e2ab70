//! `SIMRPRM1` encoder parameter file.
//!
//! ```text
//! magic        8 bytes  "SIMRPRM1"
//! dim          u32 LE
//! buckets      u32 LE
//! feature_dim  u32 LE
//! hash_seed    u64 LE
//! adapter      u8       0 or 1
//! rank         u32 LE   (0 without adapter)
//! alpha        f64 LE
//! dropout      f64 LE
//! tensors      for each present tensor, in order text.base, image.base,
//!              text.down, text.up, image.down, image.up:
//!              rows u32 LE, cols u32 LE, rows × cols f32 LE (row-major)
//! ```

use std::fs;
use std::path::Path;

use crate::encoder::{AdapterConfig, EncoderConfig, EncoderParams, LowRankAdapter, Tensor};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const PARAMS_MAGIC: &[u8; 8] = b"SIMRPRM1";

pub fn encode_params(params: &EncoderParams) -> Result<Vec<u8>> {
    params.validate()?;
    let c = &params.config;
    let mut out = Vec::new();
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&(c.dim as u32).to_le_bytes());
    out.extend_from_slice(&(c.buckets as u32).to_le_bytes());
    out.extend_from_slice(&(c.feature_dim as u32).to_le_bytes());
    out.extend_from_slice(&c.hash_seed.to_le_bytes());
    let a = c.adapter.unwrap_or(AdapterConfig {
        rank: 0,
        alpha: 0.0,
        dropout: 0.0,
    });
    out.push(u8::from(c.adapter.is_some()));
    out.extend_from_slice(&(a.rank as u32).to_le_bytes());
    out.extend_from_slice(&a.alpha.to_le_bytes());
    out.extend_from_slice(&a.dropout.to_le_bytes());
    for t in Tensor::ALL {
        if let Some(m) = params.tensor(t) {
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for &v in m.as_slice() {
                let x = v as f32;
                if !x.is_finite() {
                    return Err(Error::NonFinite(format!("parameter tensor {}", t.name())));
                }
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Truncated(format!("params file ends inside {what}")))?;
        self.pos = end;
        Ok(s.try_into().unwrap())
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(what)?) as usize)
    }

    fn matrix(&mut self, t: Tensor) -> Result<Matrix> {
        let rows = self.u32(t.name())?;
        let cols = self.u32(t.name())?;
        let n = rows
            .checked_mul(cols)
            .filter(|n| {
                n.checked_mul(4)
                    .is_some_and(|b| b <= self.bytes.len() - self.pos)
            })
            .ok_or_else(|| Error::Truncated(format!("params file ends inside {}", t.name())))?;
        let data = self.bytes[self.pos..self.pos + 4 * n]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        self.pos += 4 * n;
        Ok(Matrix::from_vec(rows, cols, data))
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<EncoderParams> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 8] = r.take("magic")?;
    if &magic != PARAMS_MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(PARAMS_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let dim = r.u32("config")?;
    let buckets = r.u32("config")?;
    let feature_dim = r.u32("config")?;
    let hash_seed = u64::from_le_bytes(r.take("config")?);
    let [flag] = r.take::<1>("config")?;
    let rank = r.u32("config")?;
    let alpha = f64::from_le_bytes(r.take("config")?);
    let dropout = f64::from_le_bytes(r.take("config")?);
    let adapter = match flag {
        0 => None,
        1 => Some(AdapterConfig {
            rank,
            alpha,
            dropout,
        }),
        other => return Err(Error::invalid(format!("bad adapter flag {other}"))),
    };
    let config = EncoderConfig {
        dim,
        buckets,
        feature_dim,
        hash_seed,
        adapter,
    };
    config.validate()?;
    let text = r.matrix(Tensor::TextBase)?;
    let image = r.matrix(Tensor::ImageBase)?;
    let mut adapters = None;
    if let Some(a) = &adapter {
        let mut read = |down_t, up_t| -> Result<LowRankAdapter> {
            Ok(LowRankAdapter {
                down: r.matrix(down_t)?,
                up: r.matrix(up_t)?,
                alpha: a.alpha,
                dropout: a.dropout,
            })
        };
        let text_a = read(Tensor::TextDown, Tensor::TextUp)?;
        let image_a = read(Tensor::ImageDown, Tensor::ImageUp)?;
        adapters = Some((text_a, image_a));
    }
    if r.pos != bytes.len() {
        return Err(Error::invalid("trailing bytes in params file"));
    }
    let (text_adapter, image_adapter) = match adapters {
        Some((t, i)) => (Some(t), Some(i)),
        None => (None, None),
    };
    let params = EncoderParams {
        config,
        text,
        image,
        text_adapter,
        image_adapter,
    };
    params.validate()?;
    Ok(params)
}

pub fn save_params(params: &EncoderParams, path: &Path) -> Result<()> {
    let bytes = encode_params(params)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<EncoderParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_params(&bytes)
}

/// Rounds every tensor to `f32` precision, i.e. what a save/load cycle
/// yields.
pub fn round_to_file_precision(params: &mut EncoderParams) {
    for t in Tensor::ALL {
        if let Some(m) = params.tensor_mut(t) {
            m.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = f64::from(*v as f32));
        }
    }
}
