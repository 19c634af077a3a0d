//! Binary checkpoint format.
//!
//! Line 1 is a UTF-8 JSON header
//! `{"format_version":1,"name":...,"layers":[{"in":..,"out":..,"k":..,"activation":..},...]}`
//! terminated by `\n`. The payload follows: for each layer in order, its
//! weights in `(out, in, k)` row-major order and then its biases, each an
//! IEEE-754 binary64 in little-endian byte order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::{Activation, ConvLayer};
use super::model::FcnModel;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct LayerHeader {
    #[serde(rename = "in")]
    in_channels: usize,
    #[serde(rename = "out")]
    out_channels: usize,
    k: usize,
    activation: Activation,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    name: String,
    layers: Vec<LayerHeader>,
}

pub fn checkpoint_bytes(model: &FcnModel) -> Result<Vec<u8>> {
    let header = Header {
        format_version: FORMAT_VERSION,
        name: model.name.clone(),
        layers: model
            .layers
            .iter()
            .map(|l| LayerHeader {
                in_channels: l.in_channels,
                out_channels: l.out_channels,
                k: l.kernel_size,
                activation: l.activation,
            })
            .collect(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(model.param_count() * 8);
    for v in model.flat_params() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<FcnModel> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("truncated: header line is not terminated".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {} not supported (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    let layers = header
        .layers
        .iter()
        .map(|h| ConvLayer::new(h.in_channels, h.out_channels, h.k, h.activation))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Checkpoint(format!("bad topology: {e}")))?;
    let mut model =
        FcnModel::new(header.name, layers).map_err(|e| Error::Checkpoint(format!("bad topology: {e}")))?;

    let payload = &bytes[nl + 1..];
    let expected = model.param_count() * 8;
    if payload.len() < expected {
        return Err(Error::Checkpoint(format!(
            "truncated: payload has {} bytes, topology needs {expected}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Checkpoint(format!(
            "payload has {} bytes but topology needs {expected}",
            payload.len()
        )));
    }
    for (p, chunk) in model.params_mut().zip(payload.chunks_exact(8)) {
        *p = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &FcnModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<FcnModel> {
    let path = path.as_ref();
    parse_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
