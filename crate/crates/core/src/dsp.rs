//! Preprocessing, augmentation and splitting of breathing records.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::synthgen::BreathRecord;
use crate::NUM_CLASSES;

/// Trailing moving average. The window shrinks at the start so the output
/// has the same length as the input: `y[n] = mean(x[max(0, n-w+1)..=n])`.
pub fn moving_average(x: &[f64], window: usize) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("moving_average input"));
    }
    if window == 0 || window > x.len() {
        return Err(Error::invalid(format!(
            "moving-average window {window} must be in 1..={}",
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(x.len());
    let mut sum = 0.0;
    for n in 0..x.len() {
        sum += x[n];
        if n >= window {
            sum -= x[n - window];
        }
        let count = (n + 1).min(window);
        out.push(sum / count as f64);
    }
    Ok(out)
}

/// Abscissa normalized to `[-1, 1]` over `n` samples.
fn normalized_abscissa(n: usize) -> impl Iterator<Item = f64> {
    let span = (n.max(2) - 1) as f64;
    (0..n).map(move |i| 2.0 * i as f64 / span - 1.0)
}

/// Least-squares polynomial coefficients (ascending powers of the
/// normalized abscissa) fitted by QR.
pub fn poly_fit(x: &[f64], degree: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n <= degree {
        return Err(Error::Degenerate { points: n, degree });
    }
    let cols = degree + 1;
    let mut design = DMatrix::<f64>::zeros(n, cols);
    for (i, t) in normalized_abscissa(n).enumerate() {
        let mut p = 1.0;
        for j in 0..cols {
            design[(i, j)] = p;
            p *= t;
        }
    }
    let qr = design.qr();
    let mut qty = DVector::from_column_slice(x);
    qr.q_tr_mul(&mut qty);
    let coeffs = qr
        .r()
        .solve_upper_triangular(&qty.rows(0, cols).into_owned())
        .ok_or(Error::Degenerate { points: n, degree })?;
    Ok(coeffs.iter().copied().collect())
}

/// Subtracts the least-squares polynomial of `degree`.
pub fn poly_detrend(x: &[f64], degree: usize) -> Result<Vec<f64>> {
    let coeffs = poly_fit(x, degree)?;
    Ok(normalized_abscissa(x.len())
        .zip(x)
        .map(|(t, &v)| v - coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c))
        .collect())
}

pub fn horizontal_flip(x: &[f64]) -> Vec<f64> {
    x.iter().rev().copied().collect()
}

/// Originals followed by one time-reversed copy of each record.
pub fn augment_flip(records: &[BreathRecord]) -> Vec<BreathRecord> {
    let flipped = records.iter().map(|r| BreathRecord {
        samples: horizontal_flip(&r.samples),
        ..r.clone()
    });
    records.iter().cloned().chain(flipped).collect()
}

/// Per-class seeded shuffle, then `round(train_fraction × class count)` of
/// each class goes to the training partition. Classes are emitted in
/// ascending id order.
pub fn stratified_split(
    records: &[BreathRecord],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<BreathRecord>, Vec<BreathRecord>)> {
    let (train, test) = stratified_indices(records, train_fraction, seed)?;
    Ok((
        train.into_iter().map(|i| records[i].clone()).collect(),
        test.into_iter().map(|i| records[i].clone()).collect(),
    ))
}

/// Index form of [`stratified_split`].
pub fn stratified_indices(
    records: &[BreathRecord],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, r) in records.iter().enumerate() {
        let c = r.class_id as usize;
        if c >= NUM_CLASSES {
            return Err(Error::invalid(format!("class id {c} out of range")));
        }
        by_class[c].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut idx in by_class {
        idx.shuffle(&mut rng);
        let k = (train_fraction * idx.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    Ok((train, test))
}

/// Moving average followed by polynomial detrending; metadata is kept.
pub fn preprocess(record: &BreathRecord, window: usize, degree: usize) -> Result<BreathRecord> {
    let smoothed = moving_average(&record.samples, window)?;
    Ok(BreathRecord {
        samples: poly_detrend(&smoothed, degree)?,
        ..record.clone()
    })
}

pub fn preprocess_all(
    records: &[BreathRecord],
    window: usize,
    degree: usize,
) -> Result<Vec<BreathRecord>> {
    use rayon::prelude::*;
    records
        .par_iter()
        .map(|r| preprocess(r, window, degree))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(class_id: u8, samples: Vec<f64>) -> BreathRecord {
        BreathRecord {
            samples,
            class_id,
            rate_bpm: 0.0,
            depth_pct: 0.0,
            distance_m: 1.0,
            seed_tag: 0,
        }
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(
            moving_average(&[1.0, 2.0, 3.0, 4.0, 5.0], 2).unwrap(),
            vec![1.0, 1.5, 2.5, 3.5, 4.5]
        );
        let c = vec![3.25; 40];
        for w in [1, 7, 40] {
            assert!(moving_average(&c, w)
                .unwrap()
                .iter()
                .all(|&v| (v - 3.25).abs() < 1e-15));
        }
        let x = [0.3, -1.0, 7.5];
        assert_eq!(moving_average(&x, 1).unwrap(), x.to_vec());
    }

    #[test]
    fn moving_average_errors() {
        assert!(matches!(moving_average(&[], 1), Err(Error::EmptyInput(_))));
        assert!(moving_average(&[1.0, 2.0], 3).is_err());
        assert!(moving_average(&[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn detrend_removes_mean_at_degree_zero() {
        let y = poly_detrend(&[1.0, 2.0, 3.0], 0).unwrap();
        for (a, b) in y.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn detrend_annihilates_quintic() {
        let n = 3000;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let u = i as f64 / 100.0;
                3.0 - 2.0 * u + 0.5 * u.powi(2) - 0.03 * u.powi(3) + 1e-3 * u.powi(4)
                    - 2e-5 * u.powi(5)
            })
            .collect();
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let y = poly_detrend(&x, 5).unwrap();
        let max = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-8 * scale, "{max} vs {scale}");
    }

    #[test]
    fn detrend_rejects_underdetermined() {
        assert!(matches!(
            poly_detrend(&[1.0, 2.0, 3.0], 3),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn flip_examples() {
        assert_eq!(horizontal_flip(&[1.0, 2.0, 3.0]), vec![3.0, 2.0, 1.0]);
        let pal = [1.0, 4.0, 2.0, 4.0, 1.0];
        assert_eq!(horizontal_flip(&pal), pal.to_vec());
    }

    #[test]
    fn augment_doubles_each_class() {
        assert!(augment_flip(&[]).is_empty());
        let recs: Vec<_> = (0..24)
            .map(|i| record((i % 8) as u8, vec![i as f64, 1.0]))
            .collect();
        let aug = augment_flip(&recs);
        assert_eq!(aug.len(), 48);
        assert_eq!(&aug[..24], &recs[..]);
        for (orig, f) in recs.iter().zip(&aug[24..]) {
            assert_eq!(f.class_id, orig.class_id);
            assert_eq!(f.samples, horizontal_flip(&orig.samples));
        }
        for c in 0..8u8 {
            let n = |v: &[BreathRecord]| v.iter().filter(|r| r.class_id == c).count();
            assert_eq!(n(&aug), 2 * n(&recs));
        }
    }

    #[test]
    fn split_counts() {
        let recs: Vec<_> = (0..2400)
            .map(|i| record((i / 300) as u8, vec![i as f64]))
            .collect();
        let (train, test) = stratified_split(&recs, 0.8, 9).unwrap();
        assert_eq!((train.len(), test.len()), (1920, 480));
        for c in 0..8u8 {
            assert_eq!(train.iter().filter(|r| r.class_id == c).count(), 240);
            assert_eq!(test.iter().filter(|r| r.class_id == c).count(), 60);
        }
        let recs: Vec<_> = (0..1000)
            .map(|i| record((i % 8) as u8, vec![i as f64]))
            .collect();
        let (train, test) = stratified_split(&recs, 0.8, 9).unwrap();
        assert_eq!((train.len(), test.len()), (800, 200));
        let again = stratified_split(&recs, 0.8, 9).unwrap();
        assert_eq!(train, again.0);
        assert!(stratified_split(&recs, 1.0, 9).is_err());
    }

    #[test]
    fn split_tolerates_missing_classes() {
        let recs: Vec<_> = (0..10).map(|i| record(2, vec![i as f64])).collect();
        let (train, test) = stratified_split(&recs, 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
    }

    #[test]
    fn preprocess_zero_and_constant() {
        let z = preprocess(&record(1, vec![0.0; 300]), 50, 5).unwrap();
        assert!(z.samples.iter().all(|&v| v == 0.0));
        let c = preprocess(&record(4, vec![2.5; 300]), 50, 5).unwrap();
        assert!(c.samples.iter().all(|&v| v.abs() < 1e-12));
        assert_eq!(c.class_id, 4);
    }
}
