use crate::error::{Error, Result};

/// `(length, channels)` of an activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub len: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(len: usize, channels: usize) -> Self {
        Shape { len, channels }
    }

    pub const fn size(&self) -> usize {
        self.len * self.channels
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}×{}", self.len, self.channels)
    }
}

/// Rank-2 activation stored length-major: element `(pos, ch)` lives at
/// `pos * channels + ch`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.size() {
            return Err(Error::shape(format!(
                "{} values do not fill shape {shape}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.size()],
        }
    }

    /// Single-channel tensor from a 1D signal.
    pub fn from_signal(samples: &[f64]) -> Self {
        Tensor {
            shape: Shape::new(samples.len(), 1),
            data: samples.to_vec(),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, pos: usize, ch: usize) -> f64 {
        self.data[pos * self.shape.channels + ch]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
