//! Base network, trimming to a frozen feature extractor, and head grafting.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{augment_flip, stratified_split};
use crate::error::{Error, Result};
use crate::nn::{
    evaluate, init_model, train_with_eval, EpochStats, Evaluation, LayerKind, LayerSpec,
    ModelState, Shape, Tensor, TrainConfig,
};
use crate::synthgen::BreathRecord;
use crate::NUM_CLASSES;

/// Layers kept by [`trim`]: conv, pool, conv, pool.
pub const TRIMMED_LAYERS: usize = 4;

/// Hyperparameters of the three-block base network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaseArch {
    pub filters: [usize; 3],
    pub kernel_lengths: [usize; 3],
    pub pool: usize,
    pub dense_units: usize,
    pub classes: usize,
}

impl BaseArch {
    /// 256×64, 128×32 and 64×16 convolutions, pool 2, 64 hidden units.
    pub const fn paper() -> Self {
        BaseArch {
            filters: [256, 128, 64],
            kernel_lengths: [64, 32, 16],
            pool: 2,
            dense_units: 64,
            classes: NUM_CLASSES,
        }
    }

    /// Reduced network for 20 Hz recordings: filter counts and lengths
    /// scaled down by four.
    pub const fn desk() -> Self {
        BaseArch {
            filters: [64, 32, 16],
            kernel_lengths: [16, 8, 4],
            pool: 2,
            dense_units: 64,
            classes: NUM_CLASSES,
        }
    }

    /// The first two conv/pool blocks.
    pub fn prefix_specs(&self) -> Vec<LayerSpec> {
        vec![
            LayerSpec::conv(self.filters[0], self.kernel_lengths[0]),
            LayerSpec::pool(self.pool),
            LayerSpec::conv(self.filters[1], self.kernel_lengths[1]),
            LayerSpec::pool(self.pool),
        ]
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        let mut specs = self.prefix_specs();
        specs.extend([
            LayerSpec::conv(self.filters[2], self.kernel_lengths[2]),
            LayerSpec::pool(self.pool),
            LayerSpec::flatten(),
            LayerSpec::dense(self.dense_units),
            LayerSpec::output(self.classes),
        ]);
        specs
    }
}

/// The nine-layer base stack, all trainable.
pub fn base_specs() -> Vec<LayerSpec> {
    BaseArch::paper().specs()
}

/// Decoded head architecture: conv → pool → flatten → dense → softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HeadArch {
    pub kernels: usize,
    pub kernel_len: usize,
    pub pool: usize,
    pub dense_units: usize,
}

impl HeadArch {
    pub fn specs(&self, classes: usize) -> Vec<LayerSpec> {
        vec![
            LayerSpec::conv(self.kernels, self.kernel_len),
            LayerSpec::pool(self.pool),
            LayerSpec::flatten(),
            LayerSpec::dense(self.dense_units),
            LayerSpec::output(classes),
        ]
    }
}

pub fn records_to_inputs(records: &[BreathRecord]) -> (Vec<Tensor>, Vec<usize>) {
    records
        .iter()
        .map(|r| (Tensor::from_signal(&r.samples), r.class_id as usize))
        .unzip()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub arch: BaseArch,
    pub train: TrainConfig,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub init_seed: u64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub model: ModelState,
    pub history: Vec<EpochStats>,
    pub train_count: usize,
    pub test_count: usize,
    pub train_eval: Evaluation,
    pub test_eval: Evaluation,
}

/// Flip-augments the (preprocessed) records, splits them stratified, and
/// trains the base network, reporting test accuracy after every epoch.
pub fn pretrain_base(records: &[BreathRecord], cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    let len = records
        .first()
        .ok_or(Error::EmptyInput("pretraining dataset"))?
        .samples
        .len();
    let augmented = augment_flip(records);
    let (train, test) = stratified_split(&augmented, cfg.train_fraction, cfg.split_seed)?;
    let (train_x, train_y) = records_to_inputs(&train);
    let (test_x, test_y) = records_to_inputs(&test);
    let mut model = init_model(&cfg.arch.specs(), Shape::new(len, 1), cfg.init_seed)?;
    let test_set = (!test_x.is_empty()).then_some((test_x.as_slice(), test_y.as_slice()));
    let history = train_with_eval(&mut model, &train_x, &train_y, test_set, &cfg.train)?;
    let train_eval = evaluate(&model, &train_x, &train_y)?;
    let test_eval = evaluate(&model, &test_x, &test_y)?;
    Ok(PretrainOutcome {
        model,
        history,
        train_count: train.len(),
        test_count: test.len(),
        train_eval,
        test_eval,
    })
}

fn is_base_structure(specs: &[LayerSpec]) -> bool {
    use LayerKind::*;
    specs.len() == 9
        && matches!(
            (specs[0].kind, specs[1].kind, specs[2].kind, specs[3].kind),
            (
                Conv1d { .. },
                MaxPool1d { .. },
                Conv1d { .. },
                MaxPool1d { .. }
            )
        )
        && matches!(
            (
                specs[4].kind,
                specs[5].kind,
                specs[6].kind,
                specs[7].kind,
                specs[8].kind
            ),
            (
                Conv1d { .. },
                MaxPool1d { .. },
                Flatten,
                Dense { .. },
                Dense { .. }
            )
        )
}

/// Keeps the first two conv/pool blocks of a base model and freezes them.
pub fn trim(base: &ModelState) -> Result<ModelState> {
    if !is_base_structure(&base.specs()) {
        return Err(Error::shape(format!(
            "expected the 9-layer base structure, got {:?}",
            base.specs().iter().map(|s| s.kind).collect::<Vec<_>>()
        )));
    }
    let layers = base
        .clone()
        .into_layers()
        .into_iter()
        .take(TRIMMED_LAYERS)
        .collect();
    let mut trimmed = ModelState::from_layers(base.input_shape(), layers)?;
    for i in 0..TRIMMED_LAYERS {
        trimmed.set_trainable(i, false);
    }
    Ok(trimmed)
}

/// Appends a freshly initialized, trainable head to a trimmed model.
pub fn extend(
    trimmed: &ModelState,
    head: &HeadArch,
    classes: usize,
    seed: u64,
) -> Result<ModelState> {
    let prefix_len = trimmed.layers().len();
    let mut shape = trimmed.output_shape();
    let mut layers = trimmed.clone().into_layers();
    for spec in head.specs(classes) {
        let layer = crate::nn::Layer::new(spec, shape)
            .map_err(|e| Error::shape(format!("head {head:?} does not fit: {e}")))?;
        shape = layer.output_shape();
        layers.push(layer);
    }
    let mut model = ModelState::from_layers(trimmed.input_shape(), layers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model.init_params(prefix_len, &mut rng);
    Ok(model)
}

/// The extended architecture with every layer trainable and randomly
/// initialized (no pre-trained weights).
pub fn scratch_model(
    arch: &BaseArch,
    head: &HeadArch,
    input_shape: Shape,
    seed: u64,
) -> Result<ModelState> {
    let mut specs = arch.prefix_specs();
    specs.extend(head.specs(arch.classes));
    init_model(&specs, input_shape, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_base_stack() {
        let specs = base_specs();
        assert_eq!(specs.len(), 9);
        assert_eq!(
            specs[4].kind,
            LayerKind::Conv1d {
                filters: 64,
                kernel_len: 16,
                activation: crate::nn::Activation::Relu
            }
        );
        assert!(matches!(specs[8].kind, LayerKind::Dense { units: 8, .. }));
        assert!(specs.iter().all(|s| s.trainable));
    }

    #[test]
    fn desk_head_fits_every_gene_extreme() {
        let base = init_model(&BaseArch::desk().specs(), Shape::new(600, 1), 0).unwrap();
        let trimmed = trim(&base).unwrap();
        assert_eq!(trimmed.output_shape(), Shape::new(150, 32));
        for pool in [2, 8] {
            let head = HeadArch {
                kernels: 8,
                kernel_len: 64,
                pool,
                dense_units: 16,
            };
            let m = extend(&trimmed, &head, 8, 1).unwrap();
            assert_eq!(m.layers().len(), 9);
        }
    }

    #[test]
    fn trim_rejects_non_base() {
        let m = init_model(
            &[
                LayerSpec::conv(2, 3),
                LayerSpec::flatten(),
                LayerSpec::output(8),
            ],
            Shape::new(10, 1),
            0,
        )
        .unwrap();
        assert!(trim(&m).is_err());
    }

    #[test]
    fn extend_rejects_oversized_pool() {
        let base = init_model(
            &BaseArch {
                filters: [2, 2, 2],
                kernel_lengths: [3, 3, 3],
                pool: 2,
                dense_units: 4,
                classes: 8,
            }
            .specs(),
            Shape::new(16, 1),
            0,
        )
        .unwrap();
        let trimmed = trim(&base).unwrap();
        let head = HeadArch {
            kernels: 2,
            kernel_len: 2,
            pool: 8,
            dense_units: 4,
        };
        assert!(extend(&trimmed, &head, 8, 0).is_err());
    }
}
