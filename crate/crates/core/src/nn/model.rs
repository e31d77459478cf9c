use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::layer::{cross_entropy, Activation, Layer, LayerGrad, LayerKind, LayerSpec};
use super::tensor::{Shape, Tensor};
use super::train::AdamConfig;

/// Samples per gradient-reduction chunk. Chunk boundaries are fixed, so the
/// floating-point summation order does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

/// Adaptive-moment state of one trainable layer.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Moments {
    m: LayerGrad,
    v: LayerGrad,
}

impl Moments {
    fn zeros_like(layer: &Layer) -> Self {
        Moments {
            m: LayerGrad::zeros_like(layer),
            v: LayerGrad::zeros_like(layer),
        }
    }
}

/// Ordered layers, their parameters, and optimizer state for the trainable
/// ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    input_shape: Shape,
    layers: Vec<Layer>,
    moments: Vec<Option<Moments>>,
    step: u64,
}

/// Per-layer parameter gradients; `None` for frozen or parameter-free layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<LayerGrad>>,
}

/// Activations of every layer for every sample of a batch.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layer_count: usize,
    traces: Vec<Vec<Vec<f64>>>,
}

impl ForwardCache {
    pub fn batch_len(&self) -> usize {
        self.traces.len()
    }

    /// Output probabilities of sample `i`.
    pub fn output(&self, i: usize) -> &[f64] {
        self.traces[i].last().expect("trace holds the input")
    }
}

/// Mean-loss gradients of a mini-batch plus bookkeeping for the epoch
/// statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub gradients: Gradients,
    pub loss_sum: f64,
    pub correct: usize,
    pub count: usize,
}

/// Builds the shape chain and draws weights uniformly in
/// `±sqrt(6 / (fan_in + fan_out))`; biases start at zero.
pub fn init_model(specs: &[LayerSpec], input_shape: Shape, seed: u64) -> Result<ModelState> {
    let layers = build_layers(specs, input_shape)?;
    let mut model = ModelState::from_layers(input_shape, layers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model.init_params(0, &mut rng);
    Ok(model)
}

pub(crate) fn build_layers(specs: &[LayerSpec], input_shape: Shape) -> Result<Vec<Layer>> {
    let mut shape = input_shape;
    specs
        .iter()
        .map(|&spec| {
            let layer = Layer::new(spec, shape)?;
            shape = layer.output_shape();
            Ok(layer)
        })
        .collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl ModelState {
    /// Assembles a model from resolved layers, checking shape continuity.
    /// Optimizer state starts at zero.
    pub fn from_layers(input_shape: Shape, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("a model needs at least one layer"));
        }
        let mut shape = input_shape;
        for (i, layer) in layers.iter().enumerate() {
            if layer.input_shape() != shape {
                return Err(Error::shape(format!(
                    "layer {i} expects input {}, previous layer produces {shape}",
                    layer.input_shape()
                )));
            }
            let (w, b) = layer.spec().param_counts(shape);
            if layer.weights.len() != w || layer.bias.len() != b {
                return Err(Error::shape(format!(
                    "layer {i} holds {}+{} parameters, expected {w}+{b}",
                    layer.weights.len(),
                    layer.bias.len()
                )));
            }
            if layer.spec().activation() == Some(Activation::Softmax) && i + 1 != layers.len() {
                return Err(Error::shape(format!(
                    "softmax layer {i} is not the last layer"
                )));
            }
            shape = layer.output_shape();
        }
        let moments = layers
            .iter()
            .map(|l| (l.trainable() && l.spec().has_params()).then(|| Moments::zeros_like(l)))
            .collect();
        Ok(ModelState {
            input_shape,
            layers,
            moments,
            step: 0,
        })
    }

    /// Re-initializes the parameters of layers `from..`.
    pub(crate) fn init_params(&mut self, from: usize, rng: &mut ChaCha8Rng) {
        for layer in &mut self.layers[from..] {
            let (fan_in, fan_out) = layer.spec().fans(layer.input_shape());
            if fan_in + fan_out == 0 {
                continue;
            }
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..=limit);
            }
            layer.bias.fill(0.0);
        }
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn output_shape(&self) -> Shape {
        self.layers.last().expect("non-empty").output_shape()
    }

    pub fn num_outputs(&self) -> usize {
        self.output_shape().size()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to layer parameters (shapes and flags stay fixed).
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| *l.spec()).collect()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    /// Freezing drops a layer's optimizer state; unfreezing starts it at zero.
    pub fn set_trainable(&mut self, index: usize, trainable: bool) {
        let layer = &mut self.layers[index];
        layer.set_trainable(trainable);
        self.moments[index] =
            (trainable && layer.spec().has_params()).then(|| Moments::zeros_like(layer));
    }

    pub fn has_optimizer_state(&self, index: usize) -> bool {
        self.moments[index].is_some()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn trainable_param_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.trainable())
            .map(Layer::param_count)
            .sum()
    }

    /// Number of leading layers that are frozen.
    pub fn frozen_prefix_len(&self) -> usize {
        self.layers.iter().take_while(|l| !l.trainable()).count()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape {
            return Err(Error::shape(format!(
                "input {} does not match model input {}",
                x.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        Tensor::new(
            self.output_shape(),
            forward_slice(&self.layers, x.data().to_vec()),
        )
    }

    /// Output of layer `index` (0-based) for input `x`.
    pub fn activation_at(&self, x: &Tensor, index: usize) -> Result<Tensor> {
        self.check_input(x)?;
        let layers = self
            .layers
            .get(..=index)
            .ok_or_else(|| Error::invalid(format!("layer index {index} out of range")))?;
        Tensor::new(
            layers[index].output_shape(),
            forward_slice(layers, x.data().to_vec()),
        )
    }

    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        Ok(argmax(self.forward(x)?.data()))
    }

    pub fn forward_batch(&self, inputs: &[Tensor]) -> Result<ForwardCache> {
        for x in inputs {
            self.check_input(x)?;
        }
        Ok(ForwardCache {
            layer_count: self.layers.len(),
            traces: inputs
                .iter()
                .map(|x| trace_slice(&self.layers, x.data().to_vec()))
                .collect(),
        })
    }

    /// Gradients of the mean cross-entropy of a cached batch.
    pub fn backward(&self, cache: &ForwardCache, labels: &[usize]) -> Result<Gradients> {
        if cache.layer_count != self.layers.len() {
            return Err(Error::shape(format!(
                "forward cache has {} layers, model has {}",
                cache.layer_count,
                self.layers.len()
            )));
        }
        if cache.traces.len() != labels.len() || labels.is_empty() {
            return Err(Error::invalid(format!(
                "{} cached samples for {} labels",
                cache.traces.len(),
                labels.len()
            )));
        }
        check_output_layer(&self.layers)?;
        let mut grads = zero_grads(&self.layers);
        for (trace, &label) in cache.traces.iter().zip(labels) {
            sample_backward(&self.layers, trace, label, &mut grads)?;
        }
        let mut out = Gradients { layers: grads };
        out.scale(1.0 / labels.len() as f64);
        Ok(out)
    }

    /// Mean-loss gradients of a batch, reduced in fixed-size chunks.
    pub fn batch_gradients(&self, inputs: &[Tensor], labels: &[usize]) -> Result<BatchOutcome> {
        for x in inputs {
            self.check_input(x)?;
        }
        let xs: Vec<&[f64]> = inputs.iter().map(Tensor::data).collect();
        batch_gradients_slice(&self.layers, &xs, labels)
    }

    /// Mean cross-entropy over a batch.
    pub fn batch_loss(&self, inputs: &[Tensor], labels: &[usize]) -> Result<f64> {
        if inputs.len() != labels.len() || inputs.is_empty() {
            return Err(Error::invalid(
                "inputs and labels must be non-empty and equal length",
            ));
        }
        let mut total = 0.0;
        for (x, &y) in inputs.iter().zip(labels) {
            total += cross_entropy(self.forward(x)?.data(), y)?;
        }
        Ok(total / inputs.len() as f64)
    }

    /// One adaptive-moment update of every trainable layer.
    pub fn apply_gradients(&mut self, grads: &Gradients, adam: &AdamConfig) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::shape("gradient list does not match layer count"));
        }
        self.step += 1;
        adam_update(
            &mut self.layers,
            &mut self.moments,
            &grads.layers,
            self.step,
            adam,
        );
        Ok(())
    }

    /// Split borrow used by training on cached frozen-prefix features.
    pub(crate) fn suffix_mut(
        &mut self,
        from: usize,
    ) -> (&mut [Layer], &mut [Option<Moments>], &mut u64) {
        (
            &mut self.layers[from..],
            &mut self.moments[from..],
            &mut self.step,
        )
    }
}

impl Gradients {
    pub(crate) fn scale(&mut self, s: f64) {
        for g in self.layers.iter_mut().flatten() {
            g.scale(s);
        }
    }

    /// All parameter gradients flattened in layer order (weights, then bias).
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|g| g.weights.iter().chain(&g.bias).copied())
            .collect()
    }
}

pub(crate) fn forward_slice(layers: &[Layer], mut x: Vec<f64>) -> Vec<f64> {
    for layer in layers {
        x = layer.forward(&x);
    }
    x
}

/// `[input, out_0, out_1, ..]`.
fn trace_slice(layers: &[Layer], x: Vec<f64>) -> Vec<Vec<f64>> {
    let mut trace = Vec::with_capacity(layers.len() + 1);
    trace.push(x);
    for layer in layers {
        let next = layer.forward(trace.last().unwrap());
        trace.push(next);
    }
    trace
}

fn check_output_layer(layers: &[Layer]) -> Result<()> {
    match layers.last().map(Layer::kind) {
        Some(LayerKind::Dense {
            activation: Activation::Softmax,
            ..
        }) => Ok(()),
        _ => Err(Error::shape(
            "training requires a dense softmax output layer",
        )),
    }
}

fn zero_grads(layers: &[Layer]) -> Vec<Option<LayerGrad>> {
    layers
        .iter()
        .map(|l| (l.trainable() && l.spec().has_params()).then(|| LayerGrad::zeros_like(l)))
        .collect()
}

/// Accumulates one sample's gradients. Backpropagation stops at the first
/// trainable layer since nothing below it needs an input gradient.
fn sample_backward(
    layers: &[Layer],
    trace: &[Vec<f64>],
    label: usize,
    grads: &mut [Option<LayerGrad>],
) -> Result<f64> {
    let probs = trace.last().expect("trace holds the input");
    let loss = cross_entropy(probs, label)?;
    let Some(stop) = layers.iter().position(Layer::trainable) else {
        return Ok(loss);
    };
    let mut dy = probs.clone();
    dy[label] -= 1.0;
    for i in (stop..layers.len()).rev() {
        let layer = &layers[i];
        let grad = grads[i].as_mut();
        match layer.backward(&trace[i], &trace[i + 1], &dy, grad, i > stop) {
            Some(dx) => dy = dx,
            None => break,
        }
    }
    Ok(loss)
}

fn accumulate_chunk(
    layers: &[Layer],
    xs: &[&[f64]],
    labels: &[usize],
    grads: &mut [Option<LayerGrad>],
) -> Result<(f64, usize)> {
    let mut loss = 0.0;
    let mut correct = 0;
    for (x, &label) in xs.iter().zip(labels) {
        let trace = trace_slice(layers, x.to_vec());
        if argmax(trace.last().unwrap()) == label {
            correct += 1;
        }
        loss += sample_backward(layers, &trace, label, grads)?;
    }
    Ok((loss, correct))
}

fn add_grads(total: &mut [Option<LayerGrad>], part: &[Option<LayerGrad>]) {
    for (t, p) in total.iter_mut().zip(part) {
        if let (Some(t), Some(p)) = (t, p) {
            t.add_assign(p);
        }
    }
}

pub(crate) fn batch_gradients_slice(
    layers: &[Layer],
    xs: &[&[f64]],
    labels: &[usize],
) -> Result<BatchOutcome> {
    if xs.len() != labels.len() || xs.is_empty() {
        return Err(Error::invalid(format!(
            "{} inputs for {} labels",
            xs.len(),
            labels.len()
        )));
    }
    check_output_layer(layers)?;
    let classes = layers.last().unwrap().output_shape().size();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }

    let mut total = zero_grads(layers);
    let mut loss_sum = 0.0;
    let mut correct = 0;
    if rayon::current_num_threads() > 1 && xs.len() > GRAD_CHUNK {
        let parts: Vec<Result<(Vec<Option<LayerGrad>>, f64, usize)>> = xs
            .par_chunks(GRAD_CHUNK)
            .zip(labels.par_chunks(GRAD_CHUNK))
            .map(|(cx, cl)| {
                let mut g = zero_grads(layers);
                let (l, c) = accumulate_chunk(layers, cx, cl, &mut g)?;
                Ok((g, l, c))
            })
            .collect();
        for part in parts {
            let (g, l, c) = part?;
            add_grads(&mut total, &g);
            loss_sum += l;
            correct += c;
        }
    } else {
        let mut scratch = zero_grads(layers);
        for (cx, cl) in xs.chunks(GRAD_CHUNK).zip(labels.chunks(GRAD_CHUNK)) {
            for g in scratch.iter_mut().flatten() {
                g.fill_zero();
            }
            let (l, c) = accumulate_chunk(layers, cx, cl, &mut scratch)?;
            add_grads(&mut total, &scratch);
            loss_sum += l;
            correct += c;
        }
    }
    let mut gradients = Gradients { layers: total };
    gradients.scale(1.0 / xs.len() as f64);
    Ok(BatchOutcome {
        gradients,
        loss_sum,
        correct,
        count: xs.len(),
    })
}

pub(crate) fn adam_update(
    layers: &mut [Layer],
    moments: &mut [Option<Moments>],
    grads: &[Option<LayerGrad>],
    step: u64,
    cfg: &AdamConfig,
) {
    let t = step as i32;
    let lr_t = cfg.step_size * (1.0 - cfg.beta2.powi(t)).sqrt() / (1.0 - cfg.beta1.powi(t));
    let update = |theta: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
        for i in 0..theta.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            theta[i] -= lr_t * m[i] / (v[i].sqrt() + cfg.epsilon);
        }
    };
    for ((layer, mom), grad) in layers.iter_mut().zip(moments.iter_mut()).zip(grads) {
        let (Some(mom), Some(g), true) = (mom.as_mut(), grad.as_ref(), layer.trainable()) else {
            continue;
        };
        update(
            &mut layer.weights,
            &mut mom.m.weights,
            &mut mom.v.weights,
            &g.weights,
        );
        update(&mut layer.bias, &mut mom.m.bias, &mut mom.v.bias, &g.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_specs() -> Vec<LayerSpec> {
        vec![
            LayerSpec::conv(2, 3),
            LayerSpec::pool(2),
            LayerSpec::flatten(),
            LayerSpec::dense(4),
            LayerSpec::output(3),
        ]
    }

    #[test]
    fn init_is_seeded_and_biases_zero() {
        let a = init_model(&small_specs(), Shape::new(12, 1), 5).unwrap();
        let b = init_model(&small_specs(), Shape::new(12, 1), 5).unwrap();
        assert_eq!(a, b);
        for l in a.layers() {
            assert!(l.bias.iter().all(|&v| v == 0.0));
            let (fi, fo) = l.spec().fans(l.input_shape());
            if fi + fo > 0 {
                let limit = (6.0 / (fi + fo) as f64).sqrt();
                assert!(l.weights.iter().all(|w| w.abs() <= limit));
            }
        }
        let c = init_model(&small_specs(), Shape::new(12, 1), 6).unwrap();
        assert_ne!(a.layers()[0].weights, c.layers()[0].weights);
    }

    #[test]
    fn init_rejects_bad_chain() {
        let specs = [LayerSpec::pool(4), LayerSpec::pool(4)];
        assert!(init_model(&specs, Shape::new(8, 1), 0).is_err());
        let specs = [LayerSpec::output(3), LayerSpec::dense(2)];
        assert!(init_model(&specs, Shape::new(8, 1), 0).is_err());
    }

    #[test]
    fn perfect_prediction_has_zero_logit_gradient() {
        let mut m = init_model(&[LayerSpec::output(2)], Shape::new(2, 1), 0).unwrap();
        m.layers_mut()[0].weights = vec![0.0; 4];
        m.layers_mut()[0].bias = vec![800.0, 0.0];
        let x = Tensor::from_signal(&[1.0, 1.0]);
        let cache = m.forward_batch(std::slice::from_ref(&x)).unwrap();
        let g = m.backward(&cache, &[0]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_checks_cache() {
        let m = init_model(&small_specs(), Shape::new(12, 1), 0).unwrap();
        let other = init_model(
            &[LayerSpec::flatten(), LayerSpec::output(3)],
            Shape::new(12, 1),
            0,
        )
        .unwrap();
        let x = Tensor::from_signal(&[0.5; 12]);
        let cache = other.forward_batch(std::slice::from_ref(&x)).unwrap();
        assert!(m.backward(&cache, &[0]).is_err());
        let cache = m.forward_batch(std::slice::from_ref(&x)).unwrap();
        assert!(m.backward(&cache, &[0, 1]).is_err());
    }

    #[test]
    fn chunked_gradients_match_cached_backward() {
        let m = init_model(&small_specs(), Shape::new(12, 1), 3).unwrap();
        let xs: Vec<Tensor> = (0..19)
            .map(|i| {
                Tensor::from_signal(
                    &(0..12)
                        .map(|j| ((i * 7 + j) as f64).sin())
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let labels: Vec<usize> = (0..19).map(|i| i % 3).collect();
        let a = m.batch_gradients(&xs, &labels).unwrap().gradients.flatten();
        let cache = m.forward_batch(&xs).unwrap();
        let b = m.backward(&cache, &labels).unwrap().flatten();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
