//! Binary checkpoint: magic, format version, a JSON config block, then every
//! tensor as `name, rows, cols, little-endian f64 values`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, ModelConfig, PiNet};
use crate::error::{Error, Result};
use crate::nn::{Tensor2, PRNG_ALGORITHM};
use crate::skeleton::NormStats;

pub const MAGIC: &[u8; 8] = b"PINETCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: PiNet,
    pub stats: NormStats,
    pub seed: u64,
    pub prng: String,
    /// Optimizer updates applied so far.
    pub step: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    seed: u64,
    prng: String,
    step: u64,
    num_tensors: usize,
}

impl Checkpoint {
    pub fn new(model: PiNet, stats: NormStats, seed: u64, step: u64) -> Self {
        Self {
            model,
            stats,
            seed,
            prng: PRNG_ALGORITHM.to_string(),
            step,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let store = self.model.store();
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.model.config().clone(),
            seed: self.seed,
            prng: self.prng.clone(),
            step: self.step,
            num_tensors: store.len() + 2,
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(32 + header.len() + 8 * store.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let dim = self.stats.dim();
        let mean = Tensor2::from_vec(1, dim, self.stats.mean.clone())?;
        let std = Tensor2::from_vec(1, dim, self.stats.std.clone())?;
        let tensors = store
            .iter()
            .map(|p| (p.name.as_str(), &p.value))
            .chain([("norm.mean", &mean), ("norm.std", &std)]);
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(len)?)
            .map_err(|e| Error::Checkpoint(format!("config block: {e}")))?;
        if header.format_version != version {
            return Err(Error::Checkpoint("header version disagrees with preamble".into()));
        }
        let (arch, mut store) = Architecture::build(&header.config)?;
        if header.num_tensors != store.len() + 2 {
            return Err(Error::Checkpoint(format!(
                "{} tensors stored, configuration needs {}",
                header.num_tensors,
                store.len() + 2
            )));
        }
        for p in store.iter_mut() {
            let t = r.tensor(&p.name, Some(p.value.shape()))?;
            p.value = t;
        }
        let dim = header.config.input_dim();
        let mean = r.tensor("norm.mean", Some((1, dim)))?.into_vec();
        let std = r.tensor("norm.std", Some((1, dim)))?.into_vec();
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint {
            model: PiNet::from_parts(arch, store),
            stats: NormStats::new(mean, std)?,
            seed: header.seed,
            prng: header.prng,
            step: header.step,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn tensor(&mut self, want_name: &str, want_shape: Option<(usize, usize)>) -> Result<Tensor2> {
        let n = self.u32()? as usize;
        let name = std::str::from_utf8(self.take(n)?).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        if name != want_name {
            return Err(Error::Checkpoint(format!("expected tensor {want_name}, found {name}")));
        }
        let shape = (self.u32()? as usize, self.u32()? as usize);
        if want_shape.is_some_and(|s| s != shape) {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has shape {shape:?}, expected {:?}",
                want_shape.unwrap()
            )));
        }
        let raw = self.take(8 * shape.0 * shape.1)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor2::from_vec(shape.0, shape.1, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Checkpoint {
        let cfg = ModelConfig {
            num_joints: 3,
            hidden: 4,
            gru_layers: 2,
            mlp_hidden: vec![5],
            ..Default::default()
        };
        let stats = NormStats::new(vec![0.5; 9], vec![2.0; 9]).unwrap();
        Checkpoint::new(PiNet::init(&cfg, 3).unwrap(), stats, 3, 17)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = small();
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_version_and_shape_mismatch() {
        let bytes = small().to_bytes().unwrap();
        let mut v = bytes.clone();
        v[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&v), Err(Error::Checkpoint(m)) if m.contains("version")));

        // first tensor's row count lives right after its name
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let t0 = 16 + hlen;
        let nlen = u32::from_le_bytes(bytes[t0..t0 + 4].try_into().unwrap()) as usize;
        let mut s = bytes.clone();
        s[t0 + 4 + nlen] += 1;
        assert!(matches!(Checkpoint::from_bytes(&s), Err(Error::Checkpoint(m)) if m.contains("shape")));

        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"NOTACKPT").is_err());
    }
}
