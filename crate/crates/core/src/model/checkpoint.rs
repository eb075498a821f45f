//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes  "C2LNCKPT"
//! version    u32
//! length     u64      total file length including the trailer
//! precision  u8       0 = f64, 1 = f32
//! config     str      JSON model configuration
//! metadata   u32 count, then (str key, str value) pairs
//! tensors    u32 count, then (str name, u32 rows, u32 cols, values)
//! trailer    32 bytes SHA-256 of everything before it
//! ```
//!
//! Integers are little endian; `str` is a u32 byte length followed by UTF-8.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{CheckpointError, Error, Result};
use crate::numeric::Matrix;

use super::config::ModelConfig;
use super::params::ModelParams;

pub const MAGIC: &[u8; 8] = b"C2LNCKPT";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;
const TRAILER_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    pub fn bytes(self) -> usize {
        match self {
            Precision::F64 => 8,
            Precision::F32 => 4,
        }
    }
}

/// Weight storage in MiB for `count` scalars.
pub fn storage_mib(count: usize, precision: Precision) -> f64 {
    (count * precision.bytes()) as f64 / (1024.0 * 1024.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    /// Free-form string pairs, e.g. the scaler digest and training epoch.
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ModelParams) -> Self {
        Self { config, params, metadata: BTreeMap::new() }
    }

    pub fn to_bytes(&self, precision: Precision) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&0u64.to_le_bytes());
        out.push(match precision {
            Precision::F64 => 0,
            Precision::F32 => 1,
        });
        put_str(&mut out, &serde_json::to_string(&self.config).expect("config serializes"));
        put_u32(&mut out, self.metadata.len());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        let leaves = self.params.leaves();
        put_u32(&mut out, leaves.len());
        self.params.for_each(&mut |name, m| {
            put_str(&mut out, name);
            put_u32(&mut out, m.rows());
            put_u32(&mut out, m.cols());
            for &v in m.data() {
                match precision {
                    Precision::F64 => out.extend_from_slice(&v.to_le_bytes()),
                    Precision::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                }
            }
        });
        let total = (out.len() + TRAILER_LEN) as u64;
        out[12..20].copy_from_slice(&total.to_le_bytes());
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < MAGIC.len() {
            return Err(CheckpointError::Truncated { offset: bytes.len(), needed: MAGIC.len() - bytes.len() });
        }
        if &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(CheckpointError::Truncated { offset: bytes.len(), needed: HEADER_LEN - bytes.len() });
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version { found: version, supported: FORMAT_VERSION });
        }
        let total = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        if bytes.len() < total {
            return Err(CheckpointError::Truncated { offset: bytes.len(), needed: total - bytes.len() });
        }
        if bytes.len() != total || total < HEADER_LEN + TRAILER_LEN {
            return Err(CheckpointError::Malformed(format!("length field {total}, file has {} bytes", bytes.len())));
        }
        let (body, trailer) = bytes.split_at(total - TRAILER_LEN);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(CheckpointError::Checksum);
        }

        let mut r = Reader { bytes: body, pos: HEADER_LEN };
        let precision = match r.take(1)?[0] {
            0 => Precision::F64,
            1 => Precision::F32,
            p => return Err(CheckpointError::Malformed(format!("unknown precision tag {p}"))),
        };
        let config: ModelConfig = serde_json::from_str(&r.string()?)
            .map_err(|e| CheckpointError::Malformed(format!("config: {e}")))?;
        let mut metadata = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            metadata.insert(k, r.string()?);
        }
        let count = r.u32()?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name = r.string()?;
            let (rows, cols) = (r.u32()?, r.u32()?);
            let raw = r.take(rows * cols * precision.bytes())?;
            let data = match precision {
                Precision::F64 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
                Precision::F32 => {
                    raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect()
                }
            };
            tensors.insert(name, Matrix::from_vec(rows, cols, data).expect("length matches"));
        }
        if r.pos != body.len() {
            return Err(CheckpointError::Malformed(format!("{} trailing bytes", body.len() - r.pos)));
        }

        let mut params = ModelParams::zeros(&config);
        let mut problem = None;
        params.for_each_mut(&mut |name, slot| match tensors.remove(name) {
            Some(m) if m.shape() == slot.shape() => *slot = m,
            Some(m) => {
                problem.get_or_insert(format!("{name} is {:?}, config implies {:?}", m.shape(), slot.shape()));
            }
            None => {
                problem.get_or_insert(format!("missing tensor {name}"));
            }
        });
        if let Some(extra) = tensors.keys().next() {
            problem.get_or_insert(format!("unexpected tensor {extra}"));
        }
        match problem {
            Some(p) => Err(CheckpointError::Malformed(p)),
            None => Ok(Self { config, params, metadata }),
        }
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint, precision: Precision) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ckpt.to_bytes(precision)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Checkpoint::from_bytes(&bytes)?)
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(CheckpointError::Malformed(format!("record at offset {} runs past the body", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CheckpointError::Malformed("invalid UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let cfg = ModelConfig { hidden: 6, harmonics: 2, seed: 3, ..Default::default() };
        let mut c = Checkpoint::new(cfg.clone(), ModelParams::init(&cfg));
        c.metadata.insert("scaler_digest".into(), "abc123".into());
        c
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        assert_eq!(Checkpoint::from_bytes(&c.to_bytes(Precision::F64)).unwrap(), c);
    }

    #[test]
    fn f32_round_trip_is_close() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes(Precision::F32)).unwrap();
        for (a, b) in c.params.leaves().iter().zip(back.params.leaves()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-7 * x.abs().max(1e-30));
            }
        }
    }

    #[test]
    fn distinct_failures() {
        let bytes = sample().to_bytes(Precision::F64);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::BadMagic)));

        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::Version { found: 9, supported: 1 })));

        let mut bad = bytes.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::Checksum)));

        let cut = &bytes[..bytes.len() - 10];
        assert!(matches!(Checkpoint::from_bytes(cut), Err(CheckpointError::Truncated { needed: 10, .. })));
        assert!(matches!(Checkpoint::from_bytes(&bytes[..4]), Err(CheckpointError::Truncated { .. })));
    }

    #[test]
    fn storage_of_default_model() {
        let n = ModelConfig::default().param_count_formula();
        let mib = storage_mib(n, Precision::F32);
        assert!((mib - 0.6155).abs() < 1e-4);
        assert!((mib - 0.62).abs() / 0.62 < 0.01);
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("c2l-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.ckpt");
        let c = sample();
        save_checkpoint(&path, &c, Precision::F64).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), c);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
