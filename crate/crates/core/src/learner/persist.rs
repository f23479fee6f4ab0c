//! Binary model files: magic, version, shape header, then little-endian
//! `f64` payloads.
//!
//! ```text
//! magic "SSAMODEL" | version u32
//! conv_filters conv_kernel fc1 fc2 fc3 k_len n_features n_nodes  (u32 each)
//! node ids (u32 × n_nodes)
//! n_theta u64 | theta (f64 × n_theta)
//! n_scale u64 | mean (f64 × n_scale) | std (f64 × n_scale)
//! ```

use super::{ModelParams, ModelSpec, Scaler};
use crate::error::LearnerError;

pub const MODEL_MAGIC: &[u8; 8] = b"SSAMODEL";
pub const MODEL_VERSION: u32 = 1;

pub fn persist_model(params: &ModelParams) -> Vec<u8> {
    let s = &params.spec;
    let mut out = Vec::with_capacity(64 + 8 * (params.theta.len() + 2 * params.scaler.mean.len()));
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    let header = [
        s.conv_filters,
        s.conv_kernel,
        s.fc_sizes[0],
        s.fc_sizes[1],
        s.fc_sizes[2],
        s.k_len,
        s.n_features,
        s.agg_nodes.len(),
    ];
    for v in header.into_iter().chain(s.agg_nodes.iter().copied()) {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.theta.len() as u64).to_le_bytes());
    for x in &params.theta {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend_from_slice(&(params.scaler.mean.len() as u64).to_le_bytes());
    for x in params.scaler.mean.iter().chain(&params.scaler.std) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LearnerError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(LearnerError::Truncated {
            needed: self.pos.saturating_add(n),
            have: self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, LearnerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, LearnerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: u64) -> Result<Vec<f64>, LearnerError> {
        let bytes = usize::try_from(n)
            .ok()
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| LearnerError::Inconsistent(format!("length {n} too large")))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn restore_model(bytes: &[u8]) -> Result<ModelParams, LearnerError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).map_err(|_| LearnerError::BadMagic)? != MODEL_MAGIC {
        return Err(LearnerError::BadMagic);
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(LearnerError::Version { found: version });
    }
    let mut h = [0usize; 8];
    for v in &mut h {
        *v = r.u32()? as usize;
    }
    let agg_nodes = (0..h[7]).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_, _>>()?;
    let spec = ModelSpec {
        conv_filters: h[0],
        conv_kernel: h[1],
        fc_sizes: [h[2], h[3], h[4]],
        k_len: h[5],
        n_features: h[6],
        agg_nodes,
    };
    spec.validate()
        .map_err(|e| LearnerError::Inconsistent(e.to_string()))?;

    let n_theta = r.u64()?;
    if n_theta != spec.parameter_count() as u64 {
        return Err(LearnerError::Inconsistent(format!(
            "header implies {} parameters, payload declares {n_theta}",
            spec.parameter_count()
        )));
    }
    let theta = r.f64s(n_theta)?;
    let n_scale = r.u64()?;
    let expected = (spec.rows() * spec.channels()) as u64;
    if n_scale != expected {
        return Err(LearnerError::Inconsistent(format!(
            "scaler has {n_scale} entries, input has {expected}"
        )));
    }
    let mean = r.f64s(n_scale)?;
    let std = r.f64s(n_scale)?;
    if r.pos != bytes.len() {
        return Err(LearnerError::Inconsistent(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    if theta.iter().chain(&mean).chain(&std).any(|v| !v.is_finite()) || std.contains(&0.0) {
        return Err(LearnerError::Inconsistent("non-finite or zero-scale values".into()));
    }
    Ok(ModelParams {
        spec,
        theta,
        scaler: Scaler { mean, std },
    })
}
