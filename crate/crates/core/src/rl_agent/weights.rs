//! Weight files: one line of JSON describing the networks, then the
//! parameters as little-endian `f64`, networks in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::error::{Error, Result};

const FORMAT_TAG: &str = "ddsafe-mlp-f64le";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    networks: Vec<NetHeader>,
    /// Number of `f64` values in the payload.
    payload_len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetHeader {
    name: String,
    /// `(rows, cols)` of each layer's weight matrix.
    layers: Vec<(usize, usize)>,
}

/// Parameters of one network as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredNetwork {
    pub name: String,
    pub shapes: Vec<(usize, usize)>,
    pub params: Vec<f64>,
}

fn param_count(shapes: &[(usize, usize)]) -> usize {
    shapes.iter().map(|(r, c)| r * c + r).sum()
}

pub fn write_networks(path: &Path, nets: &[(&str, &Mlp)]) -> Result<()> {
    let header = Header {
        format: FORMAT_TAG.into(),
        networks: nets
            .iter()
            .map(|(name, net)| NetHeader { name: (*name).into(), layers: net.shapes() })
            .collect(),
        payload_len: nets.iter().map(|(_, n)| n.num_params()).sum(),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    bytes.reserve(header.payload_len * 8);
    for (_, net) in nets {
        for v in net.params() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_networks(path: &Path) -> Result<Vec<StoredNetwork>> {
    let bytes = fs::read(path)?;
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::WeightFormat("missing header line".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..split])
        .map_err(|e| Error::WeightFormat(format!("bad header: {e}")))?;
    if header.format != FORMAT_TAG {
        return Err(Error::WeightFormat(format!("unknown format `{}`", header.format)));
    }
    let declared: usize = header.networks.iter().map(|n| param_count(&n.layers)).sum();
    if declared != header.payload_len {
        return Err(Error::WeightFormat(format!(
            "header shapes describe {declared} values but payload_len is {}",
            header.payload_len
        )));
    }
    let payload = &bytes[split + 1..];
    if payload.len() != header.payload_len * 8 {
        return Err(Error::WeightFormat(format!(
            "payload has {} bytes, header expects {}",
            payload.len(),
            header.payload_len * 8
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
    Ok(header
        .networks
        .into_iter()
        .map(|n| {
            let count = param_count(&n.layers);
            StoredNetwork {
                params: values.by_ref().take(count).collect(),
                name: n.name,
                shapes: n.layers,
            }
        })
        .collect())
}
