//! Model checkpoints: `b"DMSM"`, `u32` header length, a JSON header, then
//! every parameter as a little-endian `f64` in declaration order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, ModelDims, ModelParams};
use crate::error::{Error, Result};
use crate::pooling::PoolingStrategy;

const MAGIC: &[u8; 4] = b"DMSM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub dims: ModelDims,
    pub layers: Vec<LayerSpec>,
    pub pooling: PoolingStrategy,
    /// Free-form training metadata (grid point, threshold, ...).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

fn layer_specs(params: &ModelParams) -> Vec<LayerSpec> {
    let spec = |prefix: &str, i: usize, l: &super::DenseLayer| LayerSpec {
        name: format!("{prefix}.{i}"),
        in_dim: l.in_dim(),
        out_dim: l.out_dim(),
        activation: l.activation,
    };
    params
        .scorer
        .iter()
        .enumerate()
        .map(|(i, l)| spec("scorer", i, l))
        .chain(
            params
                .head
                .iter()
                .enumerate()
                .map(|(i, l)| spec("head", i, l)),
        )
        .collect()
}

pub fn write_checkpoint(
    path: impl AsRef<Path>,
    params: &ModelParams,
    pooling: &PoolingStrategy,
    metadata: serde_json::Value,
) -> Result<()> {
    let path = path.as_ref();
    let header = CheckpointHeader {
        version: VERSION,
        dims: params.dims(),
        layers: layer_specs(params),
        pooling: pooling.clone(),
        metadata,
    };
    let json =
        serde_json::to_vec(&header).map_err(|e| Error::Data(format!("checkpoint header: {e}")))?;
    let mut out = Vec::with_capacity(8 + json.len() + 8 * params.n_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for block in params.blocks() {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Format {
            field: "magic",
            detail: "expected b\"DMSM\"".into(),
        });
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() < len {
        return Err(Error::Format {
            field: "header",
            detail: format!("header declares {len} bytes, file has {}", body.len()),
        });
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&body[..len]).map_err(|e| Error::Format {
            field: "header",
            detail: e.to_string(),
        })?;
    if header.version != VERSION {
        return Err(Error::Format {
            field: "version",
            detail: format!("unsupported checkpoint version {}", header.version),
        });
    }
    let mut params = ModelParams::zeros(&header.dims)?;
    for (layer, spec) in params
        .scorer
        .iter_mut()
        .chain(params.head.iter_mut())
        .zip(&header.layers)
    {
        layer.activation = spec.activation;
    }
    if layer_specs(&params) != header.layers {
        return Err(Error::Format {
            field: "layers",
            detail: "layer list disagrees with dims".into(),
        });
    }
    let payload = &body[len..];
    let expected = 8 * params.n_params();
    if payload.len() != expected {
        return Err(Error::Format {
            field: "payload",
            detail: format!(
                "expected {expected} parameter bytes, found {}",
                payload.len()
            ),
        });
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for block in params.blocks_mut() {
        for v in block.iter_mut() {
            *v = values.next().expect("length checked");
        }
    }
    Ok((params, header))
}
