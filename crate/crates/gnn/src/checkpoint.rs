//! Binary checkpoint format, version 1. All integers and floats are
//! little-endian.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "GATQ"
//! 4       2     format version (u16) = 1
//! 6       28    architecture as 7 x u32: max_nodes, features, embed,
//!               heads, head_dim, gat_out, hidden
//! 34      4     dropout rate (f32)
//! 38      4     parameter count (u32)
//! 42      4*n   parameters (f32) in tensor order: embed.weight, embed.bias,
//!               gat1.weight, gat1.att_src, gat1.att_dst, gat1.bias,
//!               gat2.weight, gat2.att_src, gat2.att_dst, gat2.bias,
//!               mlp1.weight, mlp1.bias, mlp2.weight, mlp2.bias
//! ```

use std::fs;
use std::path::Path;

use crate::{Architecture, GnnError, ModelParams, Result};

pub const MAGIC: &[u8; 4] = b"GATQ";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 42;

pub fn write_checkpoint(params: &ModelParams<f32>) -> Vec<u8> {
    let a = params.arch;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [a.max_nodes, a.features, a.embed, a.heads, a.head_dim, a.gat_out, a.hidden] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&params.dropout.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for v in params.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses checkpoint bytes. When `expected` is given the stored architecture
/// must match it.
pub fn read_checkpoint(bytes: &[u8], expected: Option<Architecture>) -> Result<ModelParams<f32>> {
    if bytes.len() < HEADER_LEN {
        return Err(GnnError::Format(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(GnnError::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(GnnError::Format(format!("unsupported version {version}")));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    let dims: Vec<usize> = (0..7).map(|i| u32_at(6 + 4 * i)).collect();
    let arch = Architecture {
        max_nodes: dims[0],
        features: dims[1],
        embed: dims[2],
        heads: dims[3],
        head_dim: dims[4],
        gat_out: dims[5],
        hidden: dims[6],
    };
    if dims.iter().any(|&d| d == 0 || d > 1 << 16) {
        return Err(GnnError::Format(format!("implausible dimensions {dims:?}")));
    }
    if let Some(want) = expected {
        if want != arch {
            return Err(GnnError::Format(format!("architecture mismatch: file {arch:?}, expected {want:?}")));
        }
    }
    let dropout = f32::from_le_bytes(bytes[34..38].try_into().unwrap());
    if !(0.0..1.0).contains(&dropout) {
        return Err(GnnError::Format(format!("dropout rate {dropout} out of range")));
    }
    let count = u32_at(38);
    if count != arch.parameter_count() {
        return Err(GnnError::Format(format!(
            "parameter count {count} does not match architecture ({})",
            arch.parameter_count()
        )));
    }
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 4 * count {
        return Err(GnnError::Format(format!(
            "payload is {} bytes, expected {}",
            payload.len(),
            4 * count
        )));
    }
    let mut params = ModelParams::<f32>::zeros(arch);
    params.dropout = dropout;
    let mut words = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    for tensor in params.tensors_mut() {
        for v in tensor.iter_mut() {
            *v = words.next().expect("length checked");
        }
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_checkpoint(params))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<Architecture>) -> Result<ModelParams<f32>> {
    let bytes = fs::read(path)?;
    read_checkpoint(&bytes, expected)
}
