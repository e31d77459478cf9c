use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::layer::Layer;
use super::model::{adam_update, batch_gradients_slice, forward_slice, ModelState};
use super::tensor::Tensor;

/// Adaptive-moment hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            adam: AdamConfig::default(),
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        let a = &self.adam;
        if !(a.step_size > 0.0) || !(a.epsilon > 0.0) {
            return Err(Error::invalid("step size and epsilon must be positive"));
        }
        for beta in [a.beta1, a.beta2] {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::invalid(format!(
                    "moment decay {beta} must lie in (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Statistics of one training epoch. `loss` and `accuracy` are running
/// means over the epoch's mini-batches, measured before each update.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Wall-clock time of the epoch (excluded from any written artifact).
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    /// Fraction of class `c` records predicted as `c`; `None` if the class
    /// is absent.
    pub fn recall(&self, c: usize) -> Option<f64> {
        let row = self.confusion.get(c)?;
        let n: usize = row.iter().sum();
        (n > 0).then(|| row[c] as f64 / n as f64)
    }
}

pub fn train(
    model: &mut ModelState,
    inputs: &[Tensor],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    train_with_eval(model, inputs, labels, None, cfg)
}

fn check_inputs(model: &ModelState, inputs: &[Tensor], labels: &[usize]) -> Result<()> {
    if inputs.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} inputs for {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if let Some(x) = inputs.iter().find(|x| x.shape() != model.input_shape()) {
        return Err(Error::shape(format!(
            "record of shape {} does not match model input {}",
            x.shape(),
            model.input_shape()
        )));
    }
    Ok(())
}

/// Pushes inputs through the frozen prefix once.
fn prefix_features(prefix: &[Layer], inputs: &[Tensor]) -> Vec<Vec<f64>> {
    inputs
        .par_iter()
        .map(|x| forward_slice(prefix, x.data().to_vec()))
        .collect()
}

/// Mini-batch training with a seeded per-epoch shuffle; the last partial
/// batch is kept. Leading frozen layers are evaluated once up front and
/// their outputs reused every epoch, which is exact because frozen weights
/// never change.
pub fn train_with_eval(
    model: &mut ModelState,
    inputs: &[Tensor],
    labels: &[usize],
    test: Option<(&[Tensor], &[usize])>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    check_inputs(model, inputs, labels)?;
    if let Some((tx, tl)) = test {
        check_inputs(model, tx, tl)?;
    }
    if cfg.epochs == 0 {
        return Ok(Vec::new());
    }
    if inputs.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }

    let split = model.frozen_prefix_len().min(model.layers().len() - 1);
    let train_feats = prefix_features(&model.layers()[..split], inputs);
    let test_feats = test.map(|(tx, tl)| (prefix_features(&model.layers()[..split], tx), tl));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| train_feats[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let outcome = batch_gradients_slice(&model.layers()[split..], &xs, &ys)?;
            loss_sum += outcome.loss_sum;
            correct += outcome.correct;
            let (layers, moments, step) = model.suffix_mut(split);
            *step += 1;
            adam_update(
                layers,
                moments,
                &outcome.gradients.layers[..],
                *step,
                &cfg.adam,
            );
        }
        let loss = loss_sum / inputs.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
        }
        let test_accuracy = match &test_feats {
            Some((feats, tl)) if !feats.is_empty() => {
                Some(evaluate_slice(&model.layers()[split..], feats, tl)?.accuracy)
            }
            _ => None,
        };
        history.push(EpochStats {
            epoch,
            loss,
            accuracy: correct as f64 / inputs.len() as f64,
            test_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(history)
}

fn evaluate_slice(layers: &[Layer], feats: &[Vec<f64>], labels: &[usize]) -> Result<Evaluation> {
    if feats.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let classes = layers.last().expect("non-empty").output_shape().size();
    let preds: Vec<usize> = feats
        .par_iter()
        .map(|x| {
            let p = forward_slice(layers, x.clone());
            let mut best = 0;
            for (i, &v) in p.iter().enumerate() {
                if v > p[best] {
                    best = i;
                }
            }
            best
        })
        .collect();
    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut correct = 0;
    for (&y, &p) in labels.iter().zip(&preds) {
        if y >= classes {
            return Err(Error::invalid(format!(
                "label {y} out of range for {classes} classes"
            )));
        }
        confusion[y][p] += 1;
        if y == p {
            correct += 1;
        }
    }
    Ok(Evaluation {
        accuracy: correct as f64 / feats.len() as f64,
        confusion,
    })
}

/// Argmax accuracy and confusion matrix (rows are true classes).
pub fn evaluate(model: &ModelState, inputs: &[Tensor], labels: &[usize]) -> Result<Evaluation> {
    check_inputs(model, inputs, labels)?;
    if inputs.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let split = model.frozen_prefix_len().min(model.layers().len() - 1);
    let feats = prefix_features(&model.layers()[..split], inputs);
    evaluate_slice(&model.layers()[split..], &feats, labels)
}
