//! `SIMMEREM` embedding dump.
//!
//! ```text
//! magic    8 bytes  "SIMMEREM"
//! version  u32 LE   1
//! dim      u32 LE
//! count    u32 LE
//! entries  count × { id_len u16 LE, id UTF-8 bytes, dim × f32 LE }
//! ```
//!
//! Values are held as `f64` in memory and rounded to the nearest `f32` on
//! save, so anything that was loaded from a dump saves back byte-for-byte.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::encoder::EmbeddingVector;
use crate::error::{Error, Result};

pub const DUMP_MAGIC: &[u8; 8] = b"SIMMEREM";
pub const DUMP_VERSION: u32 = 1;
pub const DUMP_HEADER_LEN: usize = 20;

/// Tag given to dumps read from disk; the format does not store one.
pub const LOADED_SOURCE_TAG: &str = "external";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDump {
    dim: usize,
    entries: Vec<EmbeddingVector>,
    pub source_tag: String,
}

impl EmbeddingDump {
    pub fn new(
        dim: usize,
        source_tag: impl Into<String>,
        entries: Vec<EmbeddingVector>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dump dimension must be positive"));
        }
        if entries.len() > u32::MAX as usize {
            return Err(Error::invalid("too many entries for a dump"));
        }
        let mut ids = HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: e.dim(),
                    context: format!("dump entry {:?}", e.id),
                });
            }
            if e.id.len() > u16::MAX as usize {
                return Err(Error::invalid(format!(
                    "id longer than 65535 bytes: {:?}",
                    e.id
                )));
            }
            if e.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("dump entry {:?}", e.id)));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(Error::DuplicateId {
                    id: e.id.clone(),
                    line: 0,
                });
            }
        }
        Ok(Self {
            dim,
            entries,
            source_tag: source_tag.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[EmbeddingVector] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn into_entries(self) -> Vec<EmbeddingVector> {
        self.entries
    }
}

pub fn encode_dump(dump: &EmbeddingDump) -> Result<Vec<u8>> {
    let per_entry: usize = dump.entries.iter().map(|e| 2 + e.id.len()).sum();
    let mut out = Vec::with_capacity(DUMP_HEADER_LEN + per_entry + 4 * dump.dim * dump.len());
    out.extend_from_slice(DUMP_MAGIC);
    out.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    out.extend_from_slice(&(dump.dim as u32).to_le_bytes());
    out.extend_from_slice(&(dump.len() as u32).to_le_bytes());
    for e in &dump.entries {
        out.extend_from_slice(&(e.id.len() as u16).to_le_bytes());
        out.extend_from_slice(e.id.as_bytes());
        for &v in &e.values {
            let x = v as f32;
            if !x.is_finite() {
                return Err(Error::NonFinite(format!(
                    "dump entry {:?} (value {v} overflows f32)",
                    e.id
                )));
            }
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "needed {n} bytes for {what} at offset {}, {} left",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
}

pub fn decode_dump(bytes: &[u8]) -> Result<EmbeddingDump> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(8, "magic")?;
    if magic != DUMP_MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(DUMP_MAGIC).into_owned(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = cur.u32("version")?;
    if version != DUMP_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dim = cur.u32("dim")? as usize;
    let count = cur.u32("count")? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let id_len = cur.u16("id length")? as usize;
        let id = std::str::from_utf8(cur.take(id_len, "id")?)
            .map_err(|_| Error::invalid(format!("entry {i}: id is not UTF-8")))?
            .to_string();
        let raw = cur.take(4 * dim, "values")?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("dump entry {id:?}")));
        }
        entries.push(EmbeddingVector { id, values });
    }
    if cur.pos != bytes.len() {
        return Err(Error::invalid(format!(
            "{} trailing bytes after {count} entries",
            bytes.len() - cur.pos
        )));
    }
    EmbeddingDump::new(dim, LOADED_SOURCE_TAG, entries)
}

pub fn save_dump(dump: &EmbeddingDump, path: &Path) -> Result<()> {
    let bytes = encode_dump(dump)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_dump(path: &Path) -> Result<EmbeddingDump> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dump(&bytes)
}
