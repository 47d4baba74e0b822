//! Versioned binary container of named arrays plus a text manifest.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "GZATCKPT"
//! version      u32      currently 1
//! manifest     u32 length, then UTF-8 `key = value` text
//! entry count  u32
//! entry        u16 name length, name (UTF-8),
//!              u8 dtype (0 = f32, 1 = f64), u8 rank, u64 × rank dims,
//!              element data in row-major order
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::backbone::I3d;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::kv::{format_kv, parse_kv, require};
use crate::nn::Parameters;
use crate::real::{DType, Real};
use crate::training::Sgd;

pub const MAGIC: &[u8; 8] = b"GZATCKPT";
pub const FORMAT_VERSION: u32 = 1;
const MAX_RANK: usize = 8;

/// Prefix of optimizer momentum buffer entries.
pub const MOMENTUM_PREFIX: &str = "momentum/";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    /// Little-endian element bytes.
    pub data: Vec<u8>,
}

impl NamedArray {
    pub fn from_array<T: Real>(name: impl Into<String>, a: &ArrayD<T>) -> Self {
        let mut data = Vec::with_capacity(a.len() * T::DTYPE.size());
        for &v in a.as_standard_layout().iter() {
            v.write_le(&mut data);
        }
        Self {
            name: name.into(),
            dtype: T::DTYPE,
            shape: a.shape().to_vec(),
            data,
        }
    }

    pub fn to_array<T: Real>(&self) -> Result<ArrayD<T>> {
        if self.dtype != T::DTYPE {
            return Err(Error::Format(format!(
                "entry {} stores {}, requested {}",
                self.name,
                self.dtype.name(),
                T::DTYPE.name()
            )));
        }
        let values: Vec<T> = self.data.chunks_exact(self.dtype.size()).map(T::read_le).collect();
        ArrayD::from_shape_vec(IxDyn(&self.shape), values).map_err(|e| Error::Format(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub manifest: BTreeMap<String, String>,
    pub entries: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn entry(&self, name: &str) -> Option<&NamedArray> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn iteration(&self) -> Result<u64> {
        require(&self.manifest, "iteration")
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let manifest = format_kv(self.manifest.iter().map(|(k, v)| (k.as_str(), v.clone())));
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.dtype.code());
            out.push(e.shape.len() as u8);
            for &d in &e.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&e.data);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let mlen = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(mlen)?).map_err(|_| Error::Format("manifest is not UTF-8".into()))?;
        let manifest = parse_kv(text)?;
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let nlen = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| Error::Format("entry name is not UTF-8".into()))?
                .to_string();
            let dtype = DType::from_code(r.u8()?).ok_or_else(|| Error::Format(format!("{name}: unknown dtype")))?;
            let rank = r.u8()? as usize;
            if rank > MAX_RANK {
                return Err(Error::Format(format!("{name}: rank {rank} too large")));
            }
            let mut shape = Vec::with_capacity(rank);
            let mut len: usize = 1;
            for _ in 0..rank {
                let d = usize::try_from(r.u64()?).map_err(|_| Error::Format("dimension overflow".into()))?;
                len = len
                    .checked_mul(d)
                    .ok_or_else(|| Error::Format(format!("{name}: size overflow")))?;
                shape.push(d);
            }
            let nbytes = len
                .checked_mul(dtype.size())
                .ok_or_else(|| Error::Format(format!("{name}: size overflow")))?;
            let data = r.take(nbytes)?.to_vec();
            if entries.iter().any(|e: &NamedArray| e.name == name) {
                return Err(Error::Format(format!("duplicate entry {name}")));
            }
            entries.push(NamedArray {
                name,
                dtype,
                shape,
                data,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { manifest, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.encode()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Snapshot of model parameters, momentum buffers, iteration and the
    /// run configuration.
    pub fn capture<T: Real>(model: &I3d<T>, optimizer: Option<&Sgd<T>>, iteration: u64, config: &RunConfig) -> Self {
        let mut manifest = parse_kv(&config.to_text()).expect("config text is well-formed");
        manifest.insert("iteration".into(), iteration.to_string());
        manifest.insert("dtype".into(), T::DTYPE.name().into());
        manifest.insert("format_version".into(), FORMAT_VERSION.to_string());
        let mut entries = Vec::new();
        model.visit("", &mut |name, a| {
            entries.push(NamedArray::from_array(name, &a.to_owned()))
        });
        if let Some(opt) = optimizer {
            for (name, buf) in opt.buffers() {
                entries.push(NamedArray::from_array(format!("{MOMENTUM_PREFIX}{name}"), buf));
            }
        }
        Self { manifest, entries }
    }

    /// The run configuration stored in the manifest.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (k, v) in &self.manifest {
            if crate::config::KEYS.contains(&k.as_str()) {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn restore_model<T: Real>(&self) -> Result<I3d<T>> {
        let cfg = self.run_config()?;
        let mut model = I3d::<T>::init(cfg.backbone, 0)?;
        let mut err = None;
        model.visit_mut("", &mut |name, mut dst| {
            if err.is_some() {
                return;
            }
            match self.entry(&name).map(|e| e.to_array::<T>()) {
                Some(Ok(src)) if src.shape() == dst.shape() => dst.assign(&src),
                Some(Ok(src)) => {
                    err = Some(Error::Format(format!(
                        "{name}: stored shape {:?}, model expects {:?}",
                        src.shape(),
                        dst.shape()
                    )))
                }
                Some(Err(e)) => err = Some(e),
                None => err = Some(Error::Format(format!("missing entry {name}"))),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(model),
        }
    }

    pub fn restore_optimizer<T: Real>(&self, model: &I3d<T>, momentum: f64, weight_decay: f64) -> Result<Sgd<T>> {
        let mut opt = Sgd::new(model, momentum, weight_decay);
        for (name, buf) in opt.buffers_mut() {
            let key = format!("{MOMENTUM_PREFIX}{name}");
            let e = self
                .entry(&key)
                .ok_or_else(|| Error::Format(format!("missing entry {key}")))?;
            let src = e.to_array::<T>()?;
            if src.shape() != buf.shape() {
                return Err(Error::Format(format!("{key}: shape mismatch")));
            }
            buf.assign(&src);
        }
        Ok(opt)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
