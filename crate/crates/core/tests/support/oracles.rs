//! Independent reference implementations: direct loops with no shared code
//! paths with the library kernels.

#![allow(dead_code)]

use breath_core::nn::{init_model, LayerSpec, ModelState, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stride-1 cross-correlation with zero padding, `(k-1)/2` samples on the
/// left. `x` is `[t][c]`, `w` is `[filter][tap][c]`; output is `[t][filter]`.
pub fn conv_same(
    x: &[f64],
    len: usize,
    cin: usize,
    w: &[f64],
    b: &[f64],
    filters: usize,
    k: usize,
) -> Vec<f64> {
    let left = (k - 1) / 2;
    let mut out = vec![0.0; len * filters];
    for t in 0..len {
        for f in 0..filters {
            let mut acc = b[f];
            for j in 0..k {
                let src = t as isize + j as isize - left as isize;
                if src < 0 || src >= len as isize {
                    continue;
                }
                for c in 0..cin {
                    acc += w[(f * k + j) * cin + c] * x[src as usize * cin + c];
                }
            }
            out[t * filters + f] = acc;
        }
    }
    out
}

/// Non-overlapping max pooling; a trailing partial window is dropped.
pub fn max_pool(x: &[f64], len: usize, channels: usize, size: usize) -> Vec<f64> {
    let out_len = len / size;
    let mut out = vec![0.0; out_len * channels];
    for t in 0..out_len {
        for c in 0..channels {
            let mut m = f64::NEG_INFINITY;
            for j in 0..size {
                m = m.max(x[(t * size + j) * channels + c]);
            }
            out[t * channels + c] = m;
        }
    }
    out
}

/// Mean of `x[max(0, n-w+1)..=n]` summed directly for every `n`.
pub fn windowed_mean(x: &[f64], w: usize) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            let lo = (n + 1).saturating_sub(w);
            x[lo..=n].iter().sum::<f64>() / (n + 1 - lo) as f64
        })
        .collect()
}

/// Least-squares polynomial residual via the normal equations `AᵀA c = Aᵀx`
/// over the abscissa `2i/(n-1) - 1`, solved by Gaussian elimination with
/// partial pivoting.
pub fn detrend_normal_equations(x: &[f64], degree: usize) -> Vec<f64> {
    let n = x.len();
    let m = degree + 1;
    let t: Vec<f64> = (0..n)
        .map(|i| 2.0 * i as f64 / (n.max(2) - 1) as f64 - 1.0)
        .collect();
    let mut a = vec![vec![0.0; m + 1]; m];
    for i in 0..n {
        let powers: Vec<f64> = (0..m).map(|p| t[i].powi(p as i32)).collect();
        for r in 0..m {
            for c in 0..m {
                a[r][c] += powers[r] * powers[c];
            }
            a[r][m] += powers[r] * x[i];
        }
    }
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for r in 0..m {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=m {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let coef: Vec<f64> = (0..m).map(|r| a[r][m] / a[r][r]).collect();
    (0..n)
        .map(|i| x[i] - (0..m).map(|p| coef[p] * t[i].powi(p as i32)).sum::<f64>())
        .collect()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Input 12, conv 2×3, pool 2, dense 4, output 3.
pub fn small_specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(2, 3),
        LayerSpec::pool(2),
        LayerSpec::flatten(),
        LayerSpec::dense(4),
        LayerSpec::output(3),
    ]
}

/// Two stacked convolutions, so the input gradient of a conv layer is
/// exercised too.
pub fn stacked_specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(2, 3),
        LayerSpec::pool(2),
        LayerSpec::conv(3, 2),
        LayerSpec::flatten(),
        LayerSpec::dense(4),
        LayerSpec::output(3),
    ]
}

fn nudge(m: &mut ModelState, layer: usize, bias: bool, j: usize, delta: f64) {
    let l = &mut m.layers_mut()[layer];
    if bias {
        l.bias[j] += delta;
    } else {
        l.weights[j] += delta;
    }
}

/// Largest relative error between the analytic gradient and a central
/// difference (`h = 1e-5`) of the mean batch loss, over every parameter
/// array of every layer. Each array is compared as a vector:
/// `‖a − n‖ / max(‖a‖ + ‖n‖, 1e-300)`.
pub fn gradient_check(specs: &[LayerSpec], input_len: usize, seed: u64) -> f64 {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = init_model(specs, Shape::new(input_len, 1), seed).unwrap();
    // Non-zero biases keep the check away from symmetric configurations.
    for layer in model.layers_mut() {
        for b in &mut layer.bias {
            *b = rng.random_range(-0.2..0.2);
        }
    }
    let classes = model.num_outputs();
    let inputs: Vec<Tensor> = (0..3)
        .map(|_| Tensor::from_signal(&random_vec(&mut rng, input_len)))
        .collect();
    let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..classes)).collect();
    let analytic = model.batch_gradients(&inputs, &labels).unwrap().gradients;

    let loss = |m: &ModelState| m.batch_loss(&inputs, &labels).unwrap();
    let mut worst: f64 = 0.0;
    for (li, grad) in analytic.layers.iter().enumerate() {
        let Some(grad) = grad else { continue };
        for (is_bias, expected) in [(false, &grad.weights), (true, &grad.bias)] {
            let mut numeric = Vec::with_capacity(expected.len());
            for j in 0..expected.len() {
                let mut plus = model.clone();
                nudge(&mut plus, li, is_bias, j, H);
                let mut minus = model.clone();
                nudge(&mut minus, li, is_bias, j, -H);
                numeric.push((loss(&plus) - loss(&minus)) / (2.0 * H));
            }
            let diff: f64 = expected
                .iter()
                .zip(&numeric)
                .map(|(a, n)| (a - n).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale = expected.iter().map(|a| a * a).sum::<f64>().sqrt()
                + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
            worst = worst.max(diff / scale.max(1e-300));
        }
    }
    worst
}
