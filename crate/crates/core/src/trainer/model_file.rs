//! Binary model file.
//!
//! Little-endian throughout:
//!
//! ```text
//! "GMKL"  u32 version  u32 V  u32 C  u32 D
//! u64 config_len  <config_len bytes of UTF-8 JSON TrainConfig>
//! V × { u32 len  <len bytes UTF-8 token>  u64 count }
//! f32 scores[V·C]  f32 means[V·C·D]  f32 log_vars[V·C·D]
//! u64 FNV-1a-64 of every preceding byte
//! ```
//!
//! Only the center table is stored.

use std::fs;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

use super::bank::{ParamTable, ParameterBank};
use super::config::TrainConfig;

pub const MAGIC: &[u8; 4] = b"GMKL";
pub const VERSION: u32 = 1;

/// A trained (or freshly initialized) model: what the file holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    pub bank: ParameterBank<f32>,
}

impl Model {
    pub fn new(config: TrainConfig, vocab: Vocabulary, bank: ParameterBank<f32>) -> Result<Self> {
        if bank.vocab_len() != vocab.len() {
            return Err(Error::usage(format!(
                "bank has {} words, vocabulary has {}",
                bank.vocab_len(),
                vocab.len()
            )));
        }
        if bank.n_components() != config.components || bank.dim() != config.dim {
            return Err(Error::usage("bank shape disagrees with config"));
        }
        Ok(Model { config, vocab, bank })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let table = self.bank.center();
        let json = serde_json::to_vec(&self.config).map_err(|e| Error::Format(e.to_string()))?;
        let mut out = Vec::with_capacity(64 + json.len() + 4 * (table.means().len() * 2 + table.scores().len()));
        out.extend_from_slice(MAGIC);
        for x in [VERSION, u32_of(self.vocab.len())?, u32_of(table.n_components())?, u32_of(table.dim())?] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (tok, count) in self.vocab.tokens().iter().zip(self.vocab.counts()) {
            out.extend_from_slice(&u32_of(tok.len())?.to_le_bytes());
            out.extend_from_slice(tok.as_bytes());
            out.extend_from_slice(&count.to_le_bytes());
        }
        for arr in [table.scores(), table.means(), table.log_vars()] {
            for x in arr {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let checksum = fnv1a(&out);
        out.extend_from_slice(&checksum.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 16 + 8 + 8 {
            return Err(Error::Format(format!("file too short ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        let actual = fnv1a(body);
        if stored != actual {
            return Err(Error::Format(format!(
                "checksum mismatch: stored {stored:#018x}, computed {actual:#018x}"
            )));
        }

        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let (v, c, d) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let json_len = r.u64()? as usize;
        let config: TrainConfig =
            serde_json::from_slice(r.take(json_len)?).map_err(|e| Error::Format(format!("config: {e}")))?;
        if config.components != c || config.dim != d {
            return Err(Error::Format(format!(
                "header C={c} D={d} disagrees with config C={} D={}",
                config.components, config.dim
            )));
        }
        let mut entries = Vec::with_capacity(v);
        for _ in 0..v {
            let len = r.u32()? as usize;
            let tok = std::str::from_utf8(r.take(len)?)
                .map_err(|e| Error::Format(format!("token is not UTF-8: {e}")))?
                .to_string();
            entries.push((tok, r.u64()?));
        }
        let vocab = Vocabulary::from_counts(entries).map_err(|e| Error::Format(e.to_string()))?;
        if vocab.len() != v {
            return Err(Error::Format("vocabulary size mismatch".into()));
        }
        let scores = r.f32s(v * c)?;
        let means = r.f32s(v * c * d)?;
        let log_vars = r.f32s(v * c * d)?;
        if r.pos != body.len() {
            return Err(Error::Format(format!("{} trailing bytes", body.len() - r.pos)));
        }
        if scores.iter().chain(&means).chain(&log_vars).any(|x| !x.is_finite()) {
            return Err(Error::Format("non-finite parameter".into()));
        }
        let table = ParamTable::from_arrays(v, c, d, scores, means, log_vars).map_err(|e| Error::Format(e.to_string()))?;
        Model::new(config, vocab, ParameterBank::tied(table)).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn mixture(&self, id: usize) -> crate::MixtureEmbedding {
        self.bank.mixture(id)
    }
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = model.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Model::from_bytes(&bytes)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn u32_of(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("{n} does not fit in u32")))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("array too large".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect())
    }
}
