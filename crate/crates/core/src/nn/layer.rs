use crate::error::{Error, Result};

use super::tensor::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Linear,
    Relu,
    /// Only valid on the final dense layer, paired with cross-entropy.
    Softmax,
}

impl Activation {
    pub(crate) fn code(self) -> u32 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Softmax => 2,
        }
    }

    pub(crate) fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Activation::Linear),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Softmax),
            other => Err(Error::format(format!("unknown activation code {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    /// Stride-1 cross-correlation with "same" zero padding.
    Conv1d {
        filters: usize,
        kernel_len: usize,
        activation: Activation,
    },
    /// Non-overlapping max pooling, stride = size, remainder dropped.
    MaxPool1d {
        size: usize,
    },
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub trainable: bool,
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel_len: usize) -> Self {
        Self::new(LayerKind::Conv1d {
            filters,
            kernel_len,
            activation: Activation::Relu,
        })
    }

    pub fn pool(size: usize) -> Self {
        Self::new(LayerKind::MaxPool1d { size })
    }

    pub fn flatten() -> Self {
        Self::new(LayerKind::Flatten)
    }

    pub fn dense(units: usize) -> Self {
        Self::new(LayerKind::Dense {
            units,
            activation: Activation::Relu,
        })
    }

    /// Dense layer with softmax activation.
    pub fn output(units: usize) -> Self {
        Self::new(LayerKind::Dense {
            units,
            activation: Activation::Softmax,
        })
    }

    pub fn new(kind: LayerKind) -> Self {
        LayerSpec {
            kind,
            trainable: true,
        }
    }

    pub fn with_activation(mut self, act: Activation) -> Self {
        match &mut self.kind {
            LayerKind::Conv1d { activation, .. } | LayerKind::Dense { activation, .. } => {
                *activation = act
            }
            _ => {}
        }
        self
    }

    pub fn frozen(mut self) -> Self {
        self.trainable = false;
        self
    }

    pub fn activation(&self) -> Option<Activation> {
        match self.kind {
            LayerKind::Conv1d { activation, .. } | LayerKind::Dense { activation, .. } => {
                Some(activation)
            }
            _ => None,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(
            self.kind,
            LayerKind::Conv1d { .. } | LayerKind::Dense { .. }
        )
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.len == 0 || input.channels == 0 {
            return Err(Error::shape(format!(
                "empty input {input} to {:?}",
                self.kind
            )));
        }
        match self.kind {
            LayerKind::Conv1d {
                filters,
                kernel_len,
                activation,
            } => {
                if filters == 0 || kernel_len == 0 {
                    return Err(Error::shape("conv filters and length must be positive"));
                }
                if activation == Activation::Softmax {
                    return Err(Error::shape("softmax is only supported on dense layers"));
                }
                Ok(Shape::new(input.len, filters))
            }
            LayerKind::MaxPool1d { size } => {
                if size == 0 {
                    return Err(Error::shape("pool size must be at least 1"));
                }
                if size > input.len {
                    return Err(Error::shape(format!(
                        "pool size {size} exceeds input length {}",
                        input.len
                    )));
                }
                Ok(Shape::new(input.len / size, input.channels))
            }
            LayerKind::Flatten => Ok(Shape::new(input.size(), 1)),
            LayerKind::Dense { units, .. } => {
                if units == 0 {
                    return Err(Error::shape("dense units must be positive"));
                }
                if input.channels != 1 {
                    return Err(Error::shape(format!(
                        "dense layer needs a flattened input, got {input}"
                    )));
                }
                Ok(Shape::new(units, 1))
            }
        }
    }

    /// `(weight count, bias count)` for the given input shape.
    pub fn param_counts(&self, input: Shape) -> (usize, usize) {
        match self.kind {
            LayerKind::Conv1d {
                filters,
                kernel_len,
                ..
            } => (filters * kernel_len * input.channels, filters),
            LayerKind::Dense { units, .. } => (units * input.size(), units),
            _ => (0, 0),
        }
    }

    /// Fan-in and fan-out used by the uniform initializer.
    pub(crate) fn fans(&self, input: Shape) -> (usize, usize) {
        match self.kind {
            LayerKind::Conv1d {
                filters,
                kernel_len,
                ..
            } => (kernel_len * input.channels, kernel_len * filters),
            LayerKind::Dense { units, .. } => (input.size(), units),
            _ => (0, 0),
        }
    }
}

/// A layer with resolved shapes and its parameters. Conv weights are laid
/// out `[filter][tap][in_channel]`, dense weights `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    spec: LayerSpec,
    input_shape: Shape,
    output_shape: Shape,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradients of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerGrad {
    pub(crate) fn zeros_like(layer: &Layer) -> Self {
        LayerGrad {
            weights: vec![0.0; layer.weights.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }

    pub(crate) fn fill_zero(&mut self) {
        self.weights.fill(0.0);
        self.bias.fill(0.0);
    }

    pub(crate) fn add_assign(&mut self, other: &LayerGrad) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    pub(crate) fn scale(&mut self, s: f64) {
        self.weights.iter_mut().for_each(|v| *v *= s);
        self.bias.iter_mut().for_each(|v| *v *= s);
    }
}

impl Layer {
    /// Resolves shapes and allocates zeroed parameters.
    pub fn new(spec: LayerSpec, input_shape: Shape) -> Result<Self> {
        let output_shape = spec.output_shape(input_shape)?;
        let (w, b) = spec.param_counts(input_shape);
        Ok(Layer {
            spec,
            input_shape,
            output_shape,
            weights: vec![0.0; w],
            bias: vec![0.0; b],
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn kind(&self) -> LayerKind {
        self.spec.kind
    }

    pub fn trainable(&self) -> bool {
        self.spec.trainable
    }

    pub(crate) fn set_trainable(&mut self, trainable: bool) {
        self.spec.trainable = trainable;
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn output_shape(&self) -> Shape {
        self.output_shape
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Forward pass on a flat length-major buffer.
    pub(crate) fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_shape.size());
        match self.spec.kind {
            LayerKind::Conv1d {
                filters,
                kernel_len,
                activation,
            } => {
                let y = conv_forward(
                    x,
                    self.input_shape,
                    &self.weights,
                    &self.bias,
                    filters,
                    kernel_len,
                );
                activate(y, activation)
            }
            LayerKind::MaxPool1d { size } => pool_forward(x, self.input_shape, size),
            LayerKind::Flatten => x.to_vec(),
            LayerKind::Dense { units, activation } => {
                let y = dense_forward(x, &self.weights, &self.bias, units);
                activate(y, activation)
            }
        }
    }

    /// Backward pass. `dy` is the gradient with respect to this layer's
    /// output; for a softmax layer it must already be the gradient with
    /// respect to the logits. Parameter gradients are accumulated into
    /// `grad` when given; the input gradient is returned when `want_dx`.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        y: &[f64],
        dy: &[f64],
        grad: Option<&mut LayerGrad>,
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        match self.spec.kind {
            LayerKind::Conv1d {
                filters,
                kernel_len,
                activation,
            } => {
                let dz = activation_backward(activation, y, dy);
                conv_backward(
                    x,
                    self.input_shape,
                    &self.weights,
                    filters,
                    kernel_len,
                    &dz,
                    grad,
                    want_dx,
                )
            }
            LayerKind::MaxPool1d { size } => {
                want_dx.then(|| pool_backward(x, self.input_shape, size, dy))
            }
            LayerKind::Flatten => want_dx.then(|| dy.to_vec()),
            LayerKind::Dense { units, activation } => {
                let dz = activation_backward(activation, y, dy);
                dense_backward(x, &self.weights, units, &dz, grad, want_dx)
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    let mut acc = [0.0f64; 4];
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Left padding of a "same" convolution; the right side takes the rest.
pub(crate) fn same_padding(kernel_len: usize) -> usize {
    (kernel_len - 1) / 2
}

fn padded(x: &[f64], shape: Shape, kernel_len: usize) -> Vec<f64> {
    let c = shape.channels;
    let left = same_padding(kernel_len);
    let mut out = vec![0.0; (shape.len + kernel_len - 1) * c];
    out[left * c..(left + shape.len) * c].copy_from_slice(x);
    out
}

/// Pre-activation conv output. With channels innermost, the receptive field
/// of output `p` is the contiguous slice `padded[p*C .. (p+K)*C]`.
fn conv_forward(
    x: &[f64],
    shape: Shape,
    weights: &[f64],
    bias: &[f64],
    filters: usize,
    kernel_len: usize,
) -> Vec<f64> {
    let c = shape.channels;
    let span = kernel_len * c;
    let xp = padded(x, shape, kernel_len);
    let mut out = vec![0.0; shape.len * filters];
    for (p, row) in out.chunks_exact_mut(filters).enumerate() {
        let window = &xp[p * c..p * c + span];
        for (f, o) in row.iter_mut().enumerate() {
            *o = bias[f] + dot(&weights[f * span..(f + 1) * span], window);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    shape: Shape,
    weights: &[f64],
    filters: usize,
    kernel_len: usize,
    dz: &[f64],
    grad: Option<&mut LayerGrad>,
    want_dx: bool,
) -> Option<Vec<f64>> {
    let c = shape.channels;
    let span = kernel_len * c;
    if let Some(g) = grad {
        let xp = padded(x, shape, kernel_len);
        for (p, row) in dz.chunks_exact(filters).enumerate() {
            let window = &xp[p * c..p * c + span];
            for (f, &d) in row.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, window, &mut g.weights[f * span..(f + 1) * span]);
                    g.bias[f] += d;
                }
            }
        }
    }
    if !want_dx {
        return None;
    }
    let mut dxp = vec![0.0; (shape.len + kernel_len - 1) * c];
    for (p, row) in dz.chunks_exact(filters).enumerate() {
        let window = &mut dxp[p * c..p * c + span];
        for (f, &d) in row.iter().enumerate() {
            if d != 0.0 {
                axpy(d, &weights[f * span..(f + 1) * span], window);
            }
        }
    }
    let left = same_padding(kernel_len);
    Some(dxp[left * c..(left + shape.len) * c].to_vec())
}

fn pool_forward(x: &[f64], shape: Shape, size: usize) -> Vec<f64> {
    let c = shape.channels;
    let out_len = shape.len / size;
    let mut out = vec![f64::NEG_INFINITY; out_len * c];
    for q in 0..out_len {
        let o = &mut out[q * c..(q + 1) * c];
        for j in 0..size {
            let row = &x[(q * size + j) * c..(q * size + j + 1) * c];
            for (m, &v) in o.iter_mut().zip(row) {
                if v > *m {
                    *m = v;
                }
            }
        }
    }
    out
}

/// Routes each pooled gradient to the first maximal element of its window.
fn pool_backward(x: &[f64], shape: Shape, size: usize, dy: &[f64]) -> Vec<f64> {
    let c = shape.channels;
    let out_len = shape.len / size;
    let mut dx = vec![0.0; x.len()];
    for q in 0..out_len {
        for ch in 0..c {
            let mut best = q * size;
            for j in 1..size {
                if x[(q * size + j) * c + ch] > x[best * c + ch] {
                    best = q * size + j;
                }
            }
            dx[best * c + ch] += dy[q * c + ch];
        }
    }
    dx
}

fn dense_forward(x: &[f64], weights: &[f64], bias: &[f64], units: usize) -> Vec<f64> {
    let n_in = x.len();
    (0..units)
        .map(|o| bias[o] + dot(&weights[o * n_in..(o + 1) * n_in], x))
        .collect()
}

fn dense_backward(
    x: &[f64],
    weights: &[f64],
    units: usize,
    dz: &[f64],
    grad: Option<&mut LayerGrad>,
    want_dx: bool,
) -> Option<Vec<f64>> {
    let n_in = x.len();
    if let Some(g) = grad {
        for (o, &d) in dz.iter().enumerate().take(units) {
            if d != 0.0 {
                axpy(d, x, &mut g.weights[o * n_in..(o + 1) * n_in]);
                g.bias[o] += d;
            }
        }
    }
    want_dx.then(|| {
        let mut dx = vec![0.0; n_in];
        for (o, &d) in dz.iter().enumerate().take(units) {
            if d != 0.0 {
                axpy(d, &weights[o * n_in..(o + 1) * n_in], &mut dx);
            }
        }
        dx
    })
}

fn activate(mut y: Vec<f64>, act: Activation) -> Vec<f64> {
    match act {
        Activation::Linear => y,
        Activation::Relu => {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
            y
        }
        Activation::Softmax => softmax(&y),
    }
}

fn activation_backward(act: Activation, y: &[f64], dy: &[f64]) -> Vec<f64> {
    match act {
        Activation::Relu => y
            .iter()
            .zip(dy)
            .map(|(&o, &d)| if o > 0.0 { d } else { 0.0 })
            .collect(),
        // Softmax layers receive logit gradients directly.
        Activation::Linear | Activation::Softmax => dy.to_vec(),
    }
}

/// Max-shifted exponential normalization.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-ln(max(probs[label], 1e-12))`.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs.get(label).ok_or_else(|| {
        Error::invalid(format!(
            "label {label} out of range for {} classes",
            probs.len()
        ))
    })?;
    Ok(-p.max(1e-12).ln())
}
