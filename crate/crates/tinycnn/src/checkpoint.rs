//! `SGNN` checkpoint format.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! magic "SGNN" | version | input h | input w | input c | layer count
//! per layer:   kind | ndims | dims...
//! payload:     every parameter as f32 LE, layer order, weights before bias
//! ```
//!
//! Kinds: 0 conv2d `[kernel, in, out]`, 1 relu, 2 maxpool2, 3 flatten,
//! 4 gap, 5 dense `[in, out]`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Conv2d, Dense, Layer};
use crate::network::Sequential;

pub const MAGIC: &[u8; 4] = b"SGNN";
pub const VERSION: u32 = 1;

/// Human-readable summary written next to the binary checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub format: String,
    pub version: u32,
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSummary>,
    pub param_count: usize,
    pub param_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub kind: String,
    pub shape: Vec<usize>,
    pub params: usize,
}

fn layer_code(layer: &Layer<f32>) -> (u32, Vec<usize>) {
    match layer {
        Layer::Conv2d(c) => (0, vec![c.kernel, c.in_channels, c.out_channels]),
        Layer::Relu => (1, vec![]),
        Layer::MaxPool2 => (2, vec![]),
        Layer::Flatten => (3, vec![]),
        Layer::GlobalAvgPool => (4, vec![]),
        Layer::Dense(d) => (5, vec![d.inputs, d.outputs]),
    }
}

pub fn summary(net: &Sequential<f32>) -> CheckpointSummary {
    CheckpointSummary {
        format: "SGNN".into(),
        version: VERSION,
        input_shape: net.input_shape,
        layers: net
            .layers
            .iter()
            .map(|l| LayerSummary {
                kind: l.name().into(),
                shape: layer_code(l).1,
                params: l.param_count(),
            })
            .collect(),
        param_count: net.param_count(),
        param_sha256: net.param_hash(),
    }
}

pub fn encode(net: &Sequential<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 4 * net.param_count());
    let put = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    out.extend_from_slice(MAGIC);
    put(&mut out, VERSION as usize);
    for d in net.input_shape {
        put(&mut out, d);
    }
    put(&mut out, net.layers.len());
    for layer in &net.layers {
        let (code, dims) = layer_code(layer);
        put(&mut out, code as usize);
        put(&mut out, dims.len());
        for d in dims {
            put(&mut out, d);
        }
    }
    for p in net.params() {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let b = self.take(4 * n)?;
        Ok(b.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Sequential<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let input_shape = [r.u32()?, r.u32()?, r.u32()?];
    let n_layers = r.u32()?;
    let mut table = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let code = r.u32()?;
        let ndims = r.u32()?;
        let dims = (0..ndims).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        table.push((code, dims));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for (code, dims) in table {
        let layer = match (code, dims.as_slice()) {
            (0, &[k, i, o]) => {
                let mut c = Conv2d::zeros(k, i, o);
                c.weights = r.f32s(k * k * i * o)?;
                c.bias = r.f32s(o)?;
                Layer::Conv2d(c)
            }
            (1, []) => Layer::Relu,
            (2, []) => Layer::MaxPool2,
            (3, []) => Layer::Flatten,
            (4, []) => Layer::GlobalAvgPool,
            (5, &[i, o]) => {
                let mut d = Dense::zeros(i, o);
                d.weights = r.f32s(i * o)?;
                d.bias = r.f32s(o)?;
                Layer::Dense(d)
            }
            (code, dims) => {
                return Err(Error::Checkpoint(format!("bad layer entry: kind {code}, dims {dims:?}")));
            }
        };
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Sequential::new(input_shape, layers))
}

/// Writes `<path>` (binary) and `<path>.json` (summary).
pub fn save(net: &Sequential<f32>, path: &Path) -> Result<()> {
    fs::write(path, encode(net))?;
    let json = serde_json::to_string_pretty(&summary(net)).map_err(|e| Error::Checkpoint(e.to_string()))?;
    fs::write(json_twin(path), json + "\n")?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Sequential<f32>> {
    decode(&fs::read(path)?)
}

pub fn json_twin(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    name.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{cnn3x32, CnnSpec};

    #[test]
    fn encode_decode_is_lossless() {
        let net = cnn3x32::<f32>(
            CnnSpec {
                input_size: 16,
                channels: 3,
                hidden: 5,
            },
            11,
        );
        let back = decode(&encode(&net)).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.param_hash(), net.param_hash());
    }

    #[test]
    fn corrupt_headers_are_rejected() {
        let net = cnn3x32::<f32>(
            CnnSpec {
                input_size: 8,
                channels: 1,
                hidden: 1,
            },
            0,
        );
        let mut bytes = encode(&net);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode(&bytes).is_err());
    }
}
