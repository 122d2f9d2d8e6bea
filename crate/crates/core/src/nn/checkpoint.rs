//! Binary checkpoint: magic `IMLECKPT`, little-endian `u32` format version,
//! `u64` header length, a JSON header (kind, network spec, seed, step count,
//! parameter names and shapes), then every parameter array in declaration
//! order as little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::network::{Autoencoder, Generator, NetworkSpec};
use super::params::{ParamShape, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"IMLECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Autoencoder,
    Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: CheckpointKind,
    network: NetworkSpec,
    seed: u64,
    step: u64,
    params: Vec<ParamShape>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub kind: CheckpointKind,
    pub network: NetworkSpec,
    pub seed: u64,
    pub step: u64,
    pub params: ParamStore<T>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            kind: self.kind,
            network: self.network.clone(),
            seed: self.seed,
            step: self.step,
            params: self.params.shapes(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::with_capacity(self.params.scalar_count() * 8);
        for p in self.params.iter() {
            for v in p.value.data() {
                buf.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}"
            )));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 24 {
            return Err(Error::Checkpoint(format!(
                "header length {len} is implausible"
            )));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header =
            serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut params = ParamStore::new();
        for shape in &header.params {
            let mut bytes = vec![0u8; shape.rows * shape.cols * 8];
            r.read_exact(&mut bytes)?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
                .collect();
            params.insert(
                shape.name.clone(),
                Matrix::from_vec(shape.rows, shape.cols, data)?,
            )?;
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Checkpoint("trailing bytes after parameters".into()));
        }
        Ok(Self {
            kind: header.kind,
            network: header.network,
            seed: header.seed,
            step: header.step,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn from_autoencoder(ae: &Autoencoder<T>, seed: u64, step: u64) -> Self {
        Self {
            kind: CheckpointKind::Autoencoder,
            network: ae.spec.clone(),
            seed,
            step,
            params: ae.params.clone(),
        }
    }

    pub fn from_generator(g: &Generator<T>, seed: u64, step: u64) -> Self {
        Self {
            kind: CheckpointKind::Generator,
            network: g.spec.clone(),
            seed,
            step,
            params: g.params.clone(),
        }
    }

    pub fn into_autoencoder(self) -> Result<Autoencoder<T>> {
        if self.kind != CheckpointKind::Autoencoder {
            return Err(Error::Checkpoint(format!(
                "expected an autoencoder checkpoint, found {:?}",
                self.kind
            )));
        }
        Autoencoder::from_params(self.network, self.params)
    }

    pub fn into_generator(self) -> Result<Generator<T>> {
        if self.kind != CheckpointKind::Generator {
            return Err(Error::Checkpoint(format!(
                "expected a generator checkpoint, found {:?}",
                self.kind
            )));
        }
        Generator::from_params(self.network, self.params)
    }
}
