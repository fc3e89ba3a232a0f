//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! "LRN1"  u32 version=1
//! u32 len, config text (key=value lines, then iteration=N)
//! u32 tensor count
//!   per tensor: u16 name len, name, u8 rank, u32 dims[rank], f32 payload
//! u64 FNV-1a of every preceding byte
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::optim::OptState;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::{ModelParams, Param, ParamSet};
use crate::ops::BnState;
use crate::tensor::{Dims, Tensor4};

pub const MAGIC: &[u8; 4] = b"LRN1";
pub const VERSION: u32 = 1;

const MEAN_PIXEL: &str = "data.mean_pixel";
const OPT_PREFIX: &str = "opt.";
const RUNNING_MEAN: &str = ".running_mean";
const RUNNING_VAR: &str = ".running_var";

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub params: ModelParams<f32>,
    pub opt: OptState<f32>,
    /// Per-channel mean subtracted from every input image.
    pub mean_pixel: [f32; 3],
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn push_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let text = format!("{}iteration={}\n", self.config.to_text(), self.opt.iteration);
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());

        let mut tensors: Vec<(String, Vec<usize>, &[f32])> = Vec::new();
        for (k, p) in &self.params.values {
            tensors.push((k.clone(), p.shape(), p.as_slice()));
        }
        for (k, s) in &self.params.bn {
            tensors.push((format!("{k}{RUNNING_MEAN}"), vec![s.channels()], &s.running_mean));
            tensors.push((format!("{k}{RUNNING_VAR}"), vec![s.channels()], &s.running_var));
        }
        for (k, p) in &self.opt.velocity {
            tensors.push((format!("{OPT_PREFIX}{k}"), p.shape(), p.as_slice()));
        }
        tensors.push((MEAN_PIXEL.to_string(), vec![3], &self.mean_pixel));

        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, shape, data) in &tensors {
            push_tensor(&mut out, name, shape, data);
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::codec(0, "bad checkpoint magic"));
        }
        if bytes.len() < 16 {
            return Err(Error::codec(bytes.len(), "truncated checkpoint"));
        }
        let body = bytes.len() - 8;
        let stored = u64::from_le_bytes(bytes[body..].try_into().expect("8 bytes"));
        let mut r = Reader { bytes: &bytes[..body], pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::codec(4, format!("unsupported checkpoint version {version}")));
        }
        if fnv1a(&bytes[..body]) != stored {
            return Err(Error::codec(body, "checkpoint checksum mismatch"));
        }

        let len = r.u32()? as usize;
        let text_at = r.pos;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::codec(text_at, "config block is not UTF-8"))?;
        let mut config = RunConfig::default();
        let mut iteration = None;
        let mut rest = String::new();
        for line in text.lines() {
            match line.strip_prefix("iteration=") {
                Some(v) => {
                    iteration = Some(v.trim().parse::<u64>().map_err(|_| {
                        Error::codec(text_at, format!("bad iteration line {line:?}"))
                    })?)
                }
                None => {
                    rest.push_str(line);
                    rest.push('\n');
                }
            }
        }
        config
            .apply_text(&rest)
            .map_err(|e| Error::codec(text_at, e.to_string()))?;
        config.validate()?;
        let iteration = iteration.ok_or_else(|| Error::codec(text_at, "missing iteration line"))?;

        let count = r.u32()? as usize;
        let mut values = ParamSet::new();
        let mut velocity = ParamSet::new();
        let mut running: BTreeMap<String, (Option<Vec<f32>>, Option<Vec<f32>>)> = BTreeMap::new();
        let mut mean_pixel = None;
        for _ in 0..count {
            let at = r.pos;
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::codec(at, "tensor name is not UTF-8"))?
                .to_string();
            let rank = r.u8()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n * 4)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let param = || -> Result<Param<f32>> {
                match *shape.as_slice() {
                    [a, b, c, d] => Ok(Param::Tensor(Tensor4::from_vec(Dims::new(a, b, c, d), data.clone())?)),
                    [_] => Ok(Param::Vector(data.clone())),
                    _ => Err(Error::codec(at, format!("tensor {name} has unsupported rank {rank}"))),
                }
            };
            if name == MEAN_PIXEL {
                let m: [f32; 3] = data
                    .as_slice()
                    .try_into()
                    .map_err(|_| Error::codec(at, "mean pixel must have 3 entries"))?;
                mean_pixel = Some(m);
            } else if let Some(k) = name.strip_prefix(OPT_PREFIX) {
                velocity.insert(k.to_string(), param()?);
            } else if let Some(k) = name.strip_suffix(RUNNING_MEAN) {
                running.entry(k.to_string()).or_default().0 = Some(data);
            } else if let Some(k) = name.strip_suffix(RUNNING_VAR) {
                running.entry(k.to_string()).or_default().1 = Some(data);
            } else {
                values.insert(name.clone(), param()?);
            }
        }
        if r.pos != body {
            return Err(Error::codec(r.pos, "trailing bytes before checksum"));
        }

        let momentum = config.model.bn_momentum as f32;
        let eps = config.model.bn_eps as f32;
        let mut bn = BTreeMap::new();
        for (k, (m, v)) in running {
            match (m, v) {
                (Some(running_mean), Some(running_var)) => {
                    bn.insert(
                        k,
                        BnState {
                            running_mean,
                            running_var,
                            momentum,
                            eps,
                        },
                    );
                }
                _ => return Err(Error::codec(body, format!("incomplete running stats for {k}"))),
            }
        }
        let params = ModelParams { values, bn };
        params.check_against(&config.model)?;
        let opt = OptState { velocity, iteration };
        if opt.velocity.len() != params.values.len()
            || params
                .values
                .iter()
                .any(|(k, p)| opt.velocity.get(k).map(|v| v.shape()) != Some(p.shape()))
        {
            return Err(Error::dim("momentum buffers do not match the parameters"));
        }
        Ok(Self {
            config,
            params,
            opt,
            mean_pixel: mean_pixel.ok_or_else(|| Error::codec(body, "missing mean pixel"))?,
        })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes())
            .and_then(|_| f.sync_all())
            .map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::codec(self.pos, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
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
}
