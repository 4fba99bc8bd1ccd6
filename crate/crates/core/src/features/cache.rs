//! Binary feature cache: `SGFQ` header, row-major f32 payload, then the
//! frame ids as a JSON array.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureKind;

const MAGIC: &[u8; 4] = b"SGFQ";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 4;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCache {
    pub kind: FeatureKind,
    pub frame_ids: Vec<String>,
    /// One row of `kind.dim()` values per frame.
    pub rows: Vec<Vec<f32>>,
}

impl FeatureCache {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let dim = self.kind.dim();
        if self.rows.len() != self.frame_ids.len() || self.rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("feature cache rows do not match kind or ids".into()));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * dim * self.rows.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.kind.code().to_le_bytes());
        out.extend_from_slice(&(self.rows.len() as u64).to_le_bytes());
        out.extend_from_slice(&(dim as u32).to_le_bytes());
        for v in self.rows.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(serde_json::to_string(&self.frame_ids).expect("ids serialize").as_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Data(format!("feature cache: {m}"));
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(bad("bad magic or truncated header"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        if u32_at(4) != VERSION {
            return Err(bad("unsupported version"));
        }
        let kind = FeatureKind::from_code(u32_at(8)).ok_or_else(|| bad("unknown feature kind"))?;
        let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let dim = u32_at(20) as usize;
        if dim != kind.dim() {
            return Err(bad("dimension does not match kind"));
        }
        let payload_end = HEADER_LEN + 4 * dim * count;
        if bytes.len() < payload_end {
            return Err(bad("truncated payload"));
        }
        let rows = bytes[HEADER_LEN..payload_end]
            .chunks_exact(4 * dim)
            .map(|row| {
                row.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                    .collect()
            })
            .collect();
        let frame_ids: Vec<String> =
            serde_json::from_slice(&bytes[payload_end..]).map_err(|e| bad(&format!("frame index: {e}")))?;
        if frame_ids.len() != count {
            return Err(bad("frame index length differs from row count"));
        }
        Ok(Self { kind, frame_ids, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
