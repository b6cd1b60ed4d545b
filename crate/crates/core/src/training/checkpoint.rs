//! Versioned binary checkpoint.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "VGCKPT" 0x00 version(u8)
//! u64 len, config JSON
//! u64 len, vocab JSON
//! u64 epoch, f64 best_metric, u64 adam_step
//! rng: 32-byte seed, u64 stream, u128 word position
//! u64 tensor count, then per tensor:
//!   u64 len, name (UTF-8), u64 ndim, u64 dims[ndim], f64 data[prod(dims)]
//! ```
//!
//! Tensor names are `param/<name>`, `adam.m/<name>`, `adam.v/<name>` and
//! `embedding_table`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use thiserror::Error;

use super::adam::AdamState;
use crate::config::RunConfig;
use crate::embedding::{EmbeddingTable, Vocab};
use crate::model::{ModelError, ModelParams};

const MAGIC: &[u8; 7] = b"VGCKPT\0";
const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn bad<T>(msg: impl Into<String>) -> Result<T, CheckpointError> {
    Err(CheckpointError::Format(msg.into()))
}

/// Exact position of a ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub vocab: Vocab,
    pub table: EmbeddingTable,
    pub params: ModelParams,
    pub adam: AdamState,
    pub epoch: u64,
    /// Validation F1 of this snapshot.
    pub best_metric: f64,
    pub rng: RngState,
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }

    fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.u64(b.len() as u64)?;
        self.0.write_all(b)
    }

    fn tensor(&mut self, name: &str, shape: &[usize], data: &[f64]) -> std::io::Result<()> {
        self.bytes(name.as_bytes())?;
        self.u64(shape.len() as u64)?;
        for &d in shape {
            self.u64(d as u64)?;
        }
        for v in data {
            self.0.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return bad("unexpected end of file");
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, CheckpointError> {
        let n = self.u64()?;
        if n > self.buf.len() as u64 * 8 + 64 {
            return bad(format!("implausible length {n}"));
        }
        Ok(n as usize)
    }

    fn bytes(&mut self) -> Result<&'a [u8], CheckpointError> {
        let n = self.len()?;
        self.take(n)
    }

    fn str(&mut self) -> Result<&'a str, CheckpointError> {
        std::str::from_utf8(self.bytes()?).or_else(|_| bad("invalid UTF-8"))
    }

    fn tensor(&mut self) -> Result<(String, Vec<usize>, Vec<f64>), CheckpointError> {
        let name = self.str()?.to_string();
        let ndim = self.len()?;
        let shape = (0..ndim).map(|_| self.len()).collect::<Result<Vec<_>, _>>()?;
        let count: usize = shape.iter().product();
        let raw = self.take(count.checked_mul(8).ok_or_else(|| CheckpointError::Format("tensor too large".into()))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok((name, shape, data))
    }
}

impl Checkpoint {
    pub fn write_to(&self, w: impl Write) -> Result<(), CheckpointError> {
        let mut w = Writer(w);
        w.0.write_all(MAGIC)?;
        w.0.write_all(&[VERSION])?;
        w.bytes(serde_json::to_string(&self.config).expect("serializable").as_bytes())?;
        w.bytes(serde_json::to_string(&self.vocab).expect("serializable").as_bytes())?;
        w.u64(self.epoch)?;
        w.0.write_all(&self.best_metric.to_le_bytes())?;
        w.u64(self.adam.step)?;
        w.0.write_all(&self.rng.seed)?;
        w.u64(self.rng.stream)?;
        w.0.write_all(&self.rng.word_pos.to_le_bytes())?;

        let mut tensors: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
        for (prefix, p) in [("param", &self.params), ("adam.m", &self.adam.m), ("adam.v", &self.adam.v)] {
            p.for_each(|name, shape, data, _| tensors.push((format!("{prefix}/{name}"), shape.to_vec(), data.to_vec())));
        }
        let t = self.table.matrix();
        tensors.push(("embedding_table".into(), t.shape().to_vec(), t.iter().copied().collect()));

        w.u64(tensors.len() as u64)?;
        for (name, shape, data) in &tensors {
            w.tensor(name, shape, data)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf: bytes };
        if r.take(MAGIC.len())? != MAGIC {
            return bad("bad magic");
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return bad(format!("unsupported version {version}"));
        }
        let config: RunConfig =
            serde_json::from_slice(r.bytes()?).or_else(|e| bad(format!("config: {e}")))?;
        let vocab: Vocab = serde_json::from_slice(r.bytes()?).or_else(|e| bad(format!("vocab: {e}")))?;
        let epoch = r.u64()?;
        let best_metric = r.f64()?;
        let step = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));

        let count = r.len()?;
        let tensors = (0..count).map(|_| r.tensor()).collect::<Result<Vec<_>, _>>()?;
        if !r.buf.is_empty() {
            return bad("trailing bytes");
        }

        let mut template = ModelParams::zeros(&config)?;
        if config.finetune_embeddings {
            let table = tensors.iter().find(|t| t.0 == "param/embedding");
            if let Some((_, shape, _)) = table {
                if shape.len() != 2 {
                    return bad("embedding must be 2-D");
                }
                template.embedding = Some(Array2::zeros((shape[0], shape[1])));
            }
        }
        let expected = template.tensors();
        let mut it = tensors.into_iter();
        let mut load = |prefix: &str| -> Result<ModelParams, CheckpointError> {
            let mut data = Vec::with_capacity(expected.len());
            for info in &expected {
                let (name, shape, values) = it.next().ok_or_else(|| CheckpointError::Format("missing tensors".into()))?;
                if name != format!("{prefix}/{}", info.name) || shape != info.shape {
                    return bad(format!("expected {prefix}/{} {:?}, found {name} {shape:?}", info.name, info.shape));
                }
                data.push(values);
            }
            let mut p = template.clone();
            p.load_vecs(&data).map_err(CheckpointError::Format)?;
            Ok(p)
        };
        let params = load("param")?;
        let m = load("adam.m")?;
        let v = load("adam.v")?;
        let (name, shape, values) = it.next().ok_or_else(|| CheckpointError::Format("missing embedding table".into()))?;
        if name != "embedding_table" || shape.len() != 2 {
            return bad(format!("expected embedding_table, found {name}"));
        }
        if it.next().is_some() {
            return bad("unexpected extra tensors");
        }
        let table = EmbeddingTable::new(
            Array2::from_shape_vec((shape[0], shape[1]), values).or_else(|e| bad(e.to_string()))?,
        );
        Ok(Checkpoint {
            config,
            vocab,
            table,
            params,
            adam: AdamState { m, v, step },
            epoch,
            best_metric,
            rng: RngState { seed, stream, word_pos },
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
