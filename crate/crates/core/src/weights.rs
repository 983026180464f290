//! Versioned JSON weight files. Each tensor is stored as base64 of its
//! little-endian `f64` bytes, so weights round-trip bit for bit.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::convlstm::{ConvLstmStack, StackConfig};
use crate::ensemble::{MetaConfig, MetaNet};
use crate::error::{Error, Result};
use crate::persist::{check_schema, read_json, SCHEMA_VERSION};

const KIND_CONVLSTM: &str = "convlstm";
const KIND_META: &str = "meta";

#[derive(Debug, Serialize, Deserialize)]
struct StoredTensor {
    name: String,
    shape: Vec<usize>,
    data: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightFile<C> {
    schema_version: u32,
    kind: String,
    config: C,
    scale: f64,
    param_count: usize,
    tensors: Vec<StoredTensor>,
}

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(text: &str, expected: usize, name: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::data(format!("tensor {name}: bad base64 ({e})")))?;
    if bytes.len() != expected * 8 {
        return Err(Error::data(format!(
            "tensor {name}: {} bytes, expected {}",
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn pack<C>(kind: &str, config: C, scale: f64, tensors: Vec<(String, Vec<usize>, &[f64])>) -> WeightFile<C> {
    let param_count = tensors.iter().map(|(_, _, v)| v.len()).sum();
    WeightFile {
        schema_version: SCHEMA_VERSION,
        kind: kind.to_string(),
        config,
        scale,
        param_count,
        tensors: tensors
            .into_iter()
            .map(|(name, shape, v)| StoredTensor { name, shape, data: encode(v) })
            .collect(),
    }
}

/// Checks the header and concatenates tensors against the layout the
/// freshly built model expects.
fn unpack<C>(
    origin: &str,
    file: WeightFile<C>,
    kind: &str,
    layout: Vec<(String, Vec<usize>, &[f64])>,
) -> Result<Vec<f64>> {
    let ctx = |msg: String| Error::data(format!("{origin}: {msg}"));
    if file.schema_version != SCHEMA_VERSION {
        return Err(ctx(format!("schema version {}, expected {SCHEMA_VERSION}", file.schema_version)));
    }
    if file.kind != kind {
        return Err(ctx(format!("holds {} weights, expected {kind}", file.kind)));
    }
    if file.tensors.len() != layout.len() {
        return Err(ctx(format!("{} tensors, expected {}", file.tensors.len(), layout.len())));
    }
    let mut params = Vec::with_capacity(file.param_count);
    for (stored, (name, shape, _)) in file.tensors.iter().zip(&layout) {
        if stored.name != *name || stored.shape != *shape {
            return Err(ctx(format!(
                "tensor {} {:?} where {name} {shape:?} was expected",
                stored.name, stored.shape
            )));
        }
        params.extend(decode(&stored.data, shape.iter().product(), name).map_err(|e| e.context(origin))?);
    }
    if params.len() != file.param_count {
        return Err(ctx(format!("header claims {} parameters, tensors hold {}", file.param_count, params.len())));
    }
    Ok(params)
}

fn parse<C: DeserializeOwned>(text: &str, origin: &str) -> Result<WeightFile<C>> {
    serde_json::from_str(text).map_err(|e| Error::data(format!("{origin}: {e}")))
}

pub fn stack_to_json(model: &ConvLstmStack) -> Result<String> {
    let file = pack(KIND_CONVLSTM, model.config(), model.scale(), model.tensors());
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn stack_from_json(text: &str, origin: &str) -> Result<ConvLstmStack> {
    let file: WeightFile<StackConfig> = parse(text, origin)?;
    let shell = ConvLstmStack::zeros(file.config.clone()).map_err(|e| e.context(origin))?;
    let scale = file.scale;
    let config = file.config.clone();
    let params = unpack(origin, file, KIND_CONVLSTM, shell.tensors())?;
    ConvLstmStack::from_params(config, params, scale).map_err(|e| e.context(origin))
}

pub fn meta_to_json(model: &MetaNet) -> Result<String> {
    let file = pack(KIND_META, model.config(), model.scale(), model.tensors());
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn meta_from_json(text: &str, origin: &str) -> Result<MetaNet> {
    let file: WeightFile<MetaConfig> = parse(text, origin)?;
    let shell = MetaNet::zeros(file.config.clone()).map_err(|e| e.context(origin))?;
    let scale = file.scale;
    let config = file.config.clone();
    let params = unpack(origin, file, KIND_META, shell.tensors())?;
    MetaNet::from_params(config, params, scale).map_err(|e| e.context(origin))
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: String) -> Result<()> {
    if let Some(dir) = path.parent() {
        crate::persist::ensure_dir(dir)?;
    }
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn save_stack(path: &Path, model: &ConvLstmStack) -> Result<()> {
    write_text(path, stack_to_json(model)?)
}

pub fn load_stack(path: &Path) -> Result<ConvLstmStack> {
    stack_from_json(&read_text(path)?, &path.display().to_string())
}

pub fn save_meta(path: &Path, model: &MetaNet) -> Result<()> {
    write_text(path, meta_to_json(model)?)
}

pub fn load_meta(path: &Path) -> Result<MetaNet> {
    meta_from_json(&read_text(path)?, &path.display().to_string())
}

/// Schema check without building a model, for tools that only inspect files.
pub fn peek_kind(path: &Path) -> Result<String> {
    #[derive(Deserialize)]
    struct Head {
        schema_version: u32,
        kind: String,
    }
    let head: Head = read_json(path)?;
    check_schema(path, head.schema_version)?;
    Ok(head.kind)
}
