//! Parameter files: a flat little-endian `f32` blob plus a JSON descriptor
//! mapping each parameter name to its offset and shape.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NnError, Param, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    /// Offset in elements, not bytes.
    pub offset: usize,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDescriptor {
    pub total: usize,
    pub params: Vec<ParamEntry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

/// Writes `<stem>.f32` and `<stem>.json`.
pub fn save_parameters<'a>(
    params: impl IntoIterator<Item = &'a Param>,
    metadata: serde_json::Value,
    stem: &Path,
) -> Result<()> {
    let mut blob = Vec::new();
    let mut entries = Vec::new();
    let mut offset = 0;
    for p in params {
        entries.push(ParamEntry {
            name: p.name.clone(),
            offset,
            shape: p.value.shape.clone(),
        });
        offset += p.len();
        for v in &p.value.values {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let desc = ParamDescriptor {
        total: offset,
        params: entries,
        metadata,
    };
    if let Some(dir) = stem.parent() {
        fs::create_dir_all(dir)?;
    }
    crate::fsutil::write_atomic(&stem.with_extension("f32"), &blob)?;
    let json = serde_json::to_string_pretty(&desc).expect("descriptor serialises");
    crate::fsutil::write_atomic(&stem.with_extension("json"), json.as_bytes())?;
    Ok(())
}

/// Reads a descriptor and blob back, overwriting the values of `params`
/// matched by name. Every parameter must be present with the same shape.
pub fn load_parameters<'a>(params: impl IntoIterator<Item = &'a mut Param>, stem: &Path) -> Result<ParamDescriptor> {
    let json = fs::read_to_string(stem.with_extension("json"))?;
    let desc: ParamDescriptor = serde_json::from_str(&json).map_err(|e| NnError::Format(e.to_string()))?;
    let bytes = fs::read(stem.with_extension("f32"))?;
    if bytes.len() != desc.total * 4 {
        return Err(NnError::Format(format!(
            "blob has {} bytes, descriptor expects {}",
            bytes.len(),
            desc.total * 4
        )));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    for p in params {
        let entry = desc
            .params
            .iter()
            .find(|e| e.name == p.name)
            .ok_or_else(|| NnError::Format(format!("parameter `{}` missing from file", p.name)))?;
        if entry.shape != p.value.shape || entry.offset + p.len() > values.len() {
            return Err(NnError::Shape {
                expected: p.value.shape.clone(),
                actual: entry.shape.clone(),
            });
        }
        let n = p.len();
        p.value.values.copy_from_slice(&values[entry.offset..entry.offset + n]);
    }
    Ok(desc)
}
