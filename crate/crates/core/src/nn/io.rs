//! Binary model format (little-endian):
//!
//! ```text
//! magic "RNN1" | version u16 = 1 | layer count u16 | input len u32 | input channels u32
//! per layer: kind u8 | trainable u8 | hyperparameters (u32 each) | weights f64.. | bias f64..
//! ```
//!
//! | kind | tag | hyperparameters                     | parameters                         |
//! |------|-----|-------------------------------------|------------------------------------|
//! | conv | 0   | filters, kernel length, activation  | `[filter][tap][in]`, bias `[filter]` |
//! | pool | 1   | size                                | none                               |
//! | flat | 2   | none                                | none                               |
//! | dense| 3   | units, activation                   | `[out][in]`, bias `[out]`            |
//!
//! Activation codes: 0 linear, 1 relu, 2 softmax. Optimizer state is not
//! stored.

use std::fs;
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

use super::layer::{Activation, Layer, LayerKind, LayerSpec};
use super::model::ModelState;
use super::tensor::Shape;

const MAGIC: &[u8; 4] = b"RNN1";
const VERSION: u16 = 1;

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::invalid(format!("{what} {v} does not fit in u32")))
}

pub fn encode_model(model: &ModelState) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    let count =
        u16::try_from(model.layers().len()).map_err(|_| Error::invalid("too many layers"))?;
    w.u16(count);
    w.u32(u32_of(model.input_shape().len, "input length")?);
    w.u32(u32_of(model.input_shape().channels, "input channels")?);
    for layer in model.layers() {
        let spec = layer.spec();
        let (tag, hyper): (u8, Vec<usize>) = match spec.kind {
            LayerKind::Conv1d {
                filters,
                kernel_len,
                activation,
            } => (0, vec![filters, kernel_len, activation.code() as usize]),
            LayerKind::MaxPool1d { size } => (1, vec![size]),
            LayerKind::Flatten => (2, vec![]),
            LayerKind::Dense { units, activation } => (3, vec![units, activation.code() as usize]),
        };
        w.u8(tag);
        w.u8(spec.trainable as u8);
        for h in hyper {
            w.u32(u32_of(h, "hyperparameter")?);
        }
        w.f64s(&layer.weights);
        w.f64s(&layer.bias);
    }
    Ok(w.buf)
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelState> {
    let mut r = Reader::new(bytes);
    let magic: [u8; 4] = r.bytes()?;
    if &magic != MAGIC {
        return Err(Error::format(format!("bad model magic {magic:?}")));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported model version {version}"
        )));
    }
    let count = r.u16()? as usize;
    let input = Shape::new(r.u32()? as usize, r.u32()? as usize);
    let mut shape = input;
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let tag = r.u8()?;
        let trainable = match r.u8()? {
            0 => false,
            1 => true,
            other => {
                return Err(Error::format(format!(
                    "layer {i}: bad trainable flag {other}"
                )))
            }
        };
        let kind = match tag {
            0 => LayerKind::Conv1d {
                filters: r.u32()? as usize,
                kernel_len: r.u32()? as usize,
                activation: Activation::from_code(r.u32()?)?,
            },
            1 => LayerKind::MaxPool1d {
                size: r.u32()? as usize,
            },
            2 => LayerKind::Flatten,
            3 => LayerKind::Dense {
                units: r.u32()? as usize,
                activation: Activation::from_code(r.u32()?)?,
            },
            other => {
                return Err(Error::format(format!(
                    "layer {i}: unknown kind tag {other}"
                )))
            }
        };
        let spec = LayerSpec { kind, trainable };
        let mut layer =
            Layer::new(spec, shape).map_err(|e| Error::format(format!("layer {i}: {e}")))?;
        layer.weights = r.f64s(layer.weights.len())?;
        layer.bias = r.f64s(layer.bias.len())?;
        shape = layer.output_shape();
        layers.push(layer);
    }
    r.finish()?;
    ModelState::from_layers(input, layers)
}

pub fn save_model(model: &ModelState, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

/// Loads a model; nothing is returned unless the whole file validates.
pub fn load_model(path: &Path) -> Result<ModelState> {
    decode_model(&fs::read(path)?)
}
