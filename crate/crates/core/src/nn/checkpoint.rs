//! Single-file checkpoints: a safetensors archive whose metadata carries one
//! `header` entry holding the JSON header.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{Device, Tensor};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::dataset::write_atomic;
use crate::error::{Error, Result};

const HEADER_KEY: &str = "header";

pub fn encode<H: Serialize>(header: &H, tensors: &BTreeMap<String, Tensor>) -> Result<Vec<u8>> {
    let meta = HashMap::from([(HEADER_KEY.to_owned(), serde_json::to_string(header)?)]);
    Ok(safetensors::serialize(tensors.iter(), Some(meta))?)
}

pub fn save<H: Serialize>(
    path: &Path,
    header: &H,
    tensors: &BTreeMap<String, Tensor>,
) -> Result<()> {
    write_atomic(path, &encode(header, tensors)?)
}

pub fn decode<H: DeserializeOwned>(bytes: &[u8]) -> Result<(H, HashMap<String, Tensor>)> {
    let (_, meta) = safetensors::SafeTensors::read_metadata(bytes)?;
    let header = meta
        .metadata()
        .as_ref()
        .and_then(|m| m.get(HEADER_KEY))
        .ok_or_else(|| Error::Checkpoint("archive has no header".into()))?;
    let header = serde_json::from_str(header)?;
    let tensors = candle_core::safetensors::load_buffer(bytes, &Device::Cpu)?;
    Ok((header, tensors))
}

pub fn load<H: DeserializeOwned>(path: &Path) -> Result<(H, HashMap<String, Tensor>)> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
