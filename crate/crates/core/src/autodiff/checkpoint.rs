//! Network checkpoints.
//!
//! Layout (version 1): one line of UTF-8 JSON terminated by `\n`, followed by
//! every parameter as a little-endian IEEE-754 `f64` in the order
//! `W_0, b_0, W_1, b_1, ...` with weights row major (`fan_in x fan_out`).
//!
//! ```text
//! {"format":"qpwgan-mlp","version":1,"layers":[{"fan_in":2,"fan_out":128,
//!   "activation":{"kind":"relu"},"dropout":0.0}, ...]}
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::mlp::{Activation, Layer, MlpNetwork};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "qpwgan-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct LayerHeader {
    fan_in: usize,
    fan_out: usize,
    activation: Activation,
    dropout: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    layers: Vec<LayerHeader>,
}

pub fn write_checkpoint<W: Write>(net: &MlpNetwork, mut w: W) -> Result<()> {
    let header = Header {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        layers: net
            .layers
            .iter()
            .map(|l| LayerHeader {
                fan_in: l.fan_in(),
                fan_out: l.fan_out(),
                activation: l.activation,
                dropout: l.dropout,
            })
            .collect(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for v in net.flat_params() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<MlpNetwork> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Config("checkpoint header missing".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])?;
    if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint {} v{}",
            header.format, header.version
        )));
    }
    let body = &bytes[nl + 1..];
    let expected: usize = header
        .layers
        .iter()
        .map(|l| l.fan_in * l.fan_out + l.fan_out)
        .sum();
    if body.len() != expected * 8 {
        return Err(Error::Config(format!(
            "checkpoint body has {} bytes, expected {}",
            body.len(),
            expected * 8
        )));
    }
    let mut vals = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut layers = Vec::with_capacity(header.layers.len());
    for l in header.layers {
        let w: Vec<f64> = vals.by_ref().take(l.fan_in * l.fan_out).collect();
        let b: Vec<f64> = vals.by_ref().take(l.fan_out).collect();
        layers.push(Layer {
            weight: Tensor::from_vec(l.fan_in, l.fan_out, w),
            bias: Tensor::from_vec(1, l.fan_out, b),
            activation: l.activation,
            dropout: l.dropout,
        });
    }
    MlpNetwork::from_layers(layers)
}

pub fn save_checkpoint(net: &MlpNetwork, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(net, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<MlpNetwork> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_checkpoint(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = SeededRng::new(8);
        let net = MlpNetwork::mnist_critic(12, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn rejects_truncated_and_foreign() {
        let net = MlpNetwork::toy(2, 1, &mut SeededRng::new(1)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let text = String::from_utf8_lossy(&buf[..buf.iter().position(|&b| b == b'\n').unwrap()])
            .replace("\"version\":1", "\"version\":9");
        assert!(read_checkpoint(format!("{text}\n").as_bytes()).is_err());
    }
}
