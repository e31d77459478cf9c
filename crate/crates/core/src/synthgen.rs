//! Synthetic respiration waveforms for the eight breathing classes.
//!
//! Every breath follows an `A·sin⁶(π·f·t + φ)` profile. Rate and depth are
//! drawn from the class table, the clean waveform is then scaled by a
//! distance-dependent gain, and measurement noise plus a slow polynomial
//! baseline drift are added. Faulty records (class 7) are valid breathing
//! records of another class with interruption artifacts superimposed.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::NUM_CLASSES;

/// Class id of the faulty-data class.
pub const FAULTY_CLASS: u8 = 7;

const DATASET_MAGIC: &[u8; 4] = b"RSPD";
const DATASET_VERSION: u16 = 1;

/// Smallest reference peak used when sizing artifacts, so that artifacts on
/// a near-flat (apnea) base are still visible.
const ARTIFACT_PEAK_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct BreathClassSpec {
    pub class_id: u8,
    pub name: &'static str,
    /// Breaths per minute, closed interval.
    pub rate_range: (f64, f64),
    /// Percent of maximum chest excursion, closed interval.
    pub depth_range: (f64, f64),
}

impl BreathClassSpec {
    pub fn contains(&self, rate_bpm: f64, depth_pct: f64) -> bool {
        (self.rate_range.0..=self.rate_range.1).contains(&rate_bpm)
            && (self.depth_range.0..=self.depth_range.1).contains(&depth_pct)
    }
}

/// The breathing-class table. Class 7 (faulty) accepts any rate and depth;
/// its ranges span the union of the other classes.
pub fn class_table() -> Vec<BreathClassSpec> {
    let spec = |class_id, name, rate_range, depth_range| BreathClassSpec {
        class_id,
        name,
        rate_range,
        depth_range,
    };
    vec![
        spec(0, "Eupnea", (12.0, 20.0), (30.0, 58.0)),
        spec(1, "Apnea", (0.0, 0.0), (0.0, 0.0)),
        spec(2, "Tachypnea", (21.0, 50.0), (30.0, 58.0)),
        spec(3, "Bradypnea", (1.0, 11.0), (30.0, 58.0)),
        spec(4, "Hyperpnea", (12.0, 20.0), (59.0, 100.0)),
        spec(5, "Hypopnea", (12.0, 20.0), (1.0, 29.0)),
        spec(6, "Kussmaul's", (21.0, 50.0), (59.0, 100.0)),
        spec(7, "Faulty data", (0.0, 50.0), (0.0, 100.0)),
    ]
}

fn uniform_closed<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Draws `(rate_bpm, depth_pct)` uniformly from the class rectangle. The
/// faulty class first picks one of the seven regular classes uniformly, so
/// its parameters come from the union of their rectangles.
pub fn sample_params<R: Rng + ?Sized>(spec: &BreathClassSpec, rng: &mut R) -> (f64, f64) {
    if spec.class_id == FAULTY_CLASS {
        let table = class_table();
        let base = &table[rng.random_range(0..FAULTY_CLASS as usize)];
        return sample_params(base, rng);
    }
    let rate = uniform_closed(rng, spec.rate_range);
    let depth = uniform_closed(rng, spec.depth_range);
    (rate, depth)
}

/// Number of samples for a recording of `duration_s` at `fs_hz`.
pub fn sample_count(fs_hz: f64, duration_s: f64) -> usize {
    (duration_s * fs_hz).round() as usize
}

/// `x[n] = A·sin⁶(π·f·n/fs + phase)` with `f = rate/60` and `A = depth/100`.
pub fn synth_waveform(
    rate_bpm: f64,
    depth_pct: f64,
    fs_hz: f64,
    duration_s: f64,
    phase: f64,
) -> Result<Vec<f64>> {
    if !(rate_bpm.is_finite() && depth_pct.is_finite() && phase.is_finite()) {
        return Err(Error::invalid("waveform parameters must be finite"));
    }
    if rate_bpm < 0.0 || depth_pct < 0.0 {
        return Err(Error::invalid(format!(
            "negative rate ({rate_bpm}) or depth ({depth_pct})"
        )));
    }
    if !(fs_hz > 0.0 && fs_hz.is_finite()) || !(duration_s >= 0.0) {
        return Err(Error::invalid("sampling rate must be positive"));
    }
    let amplitude = depth_pct / 100.0;
    let freq = rate_bpm / 60.0;
    let n = sample_count(fs_hz, duration_s);
    Ok((0..n)
        .map(|i| {
            let s = (PI * freq * i as f64 / fs_hz + phase).sin();
            amplitude * s.powi(6)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub fs_hz: f64,
    pub duration_s: f64,
    pub records_per_class: usize,
    pub distances_m: Vec<f64>,
    pub noise_std: f64,
    pub trend_max_coeff: f64,
    /// `(distance_m, amplitude scale)` pairs.
    pub distance_gain: Vec<(f64, f64)>,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            fs_hz: 100.0,
            duration_s: 30.0,
            records_per_class: 300,
            distances_m: vec![0.5, 1.0, 1.5],
            noise_std: 0.02,
            trend_max_coeff: 0.3,
            distance_gain: vec![(0.5, 1.0), (1.0, 0.55), (1.5, 0.3)],
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn samples_per_record(&self) -> usize {
        sample_count(self.fs_hz, self.duration_s)
    }

    pub fn gain(&self, distance_m: f64) -> Result<f64> {
        self.distance_gain
            .iter()
            .find(|(d, _)| (d - distance_m).abs() < 1e-9)
            .map(|&(_, g)| g)
            .ok_or(Error::UnknownDistance(distance_m))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs_hz > 0.0 && self.fs_hz.is_finite()) {
            return Err(Error::invalid("fs_hz must be positive"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::invalid("duration_s must be positive"));
        }
        let exact = self.fs_hz * self.duration_s;
        if (exact - exact.round()).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "fs_hz × duration_s = {exact} is not an integer sample count"
            )));
        }
        if self.records_per_class == 0 {
            return Err(Error::invalid("records_per_class must be positive"));
        }
        if self.distances_m.is_empty() {
            return Err(Error::invalid("at least one distance is required"));
        }
        if self.records_per_class % self.distances_m.len() != 0 {
            return Err(Error::invalid(format!(
                "records_per_class {} is not divisible by {} distances",
                self.records_per_class,
                self.distances_m.len()
            )));
        }
        if !(self.noise_std >= 0.0) || !(self.trend_max_coeff >= 0.0) {
            return Err(Error::invalid(
                "noise_std and trend_max_coeff must be non-negative",
            ));
        }
        for &d in &self.distances_m {
            self.gain(d)?;
        }
        Ok(())
    }
}

/// One labelled waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct BreathRecord {
    pub samples: Vec<f64>,
    pub class_id: u8,
    pub rate_bpm: f64,
    pub depth_pct: f64,
    pub distance_m: f64,
    /// Index of the record within its generated dataset.
    pub seed_tag: u64,
}

/// Applies distance gain, Gaussian noise and a random quadratic baseline
/// drift `c0 + c1·u + c2·u²` with `u = n/(N-1) ∈ [0, 1]`.
pub fn corrupt<R: Rng + ?Sized>(
    samples: &[f64],
    distance_m: f64,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let gain = cfg.gain(distance_m)?;
    let noise =
        Normal::new(0.0, cfg.noise_std).map_err(|e| Error::invalid(format!("noise_std: {e}")))?;
    let c = cfg.trend_max_coeff;
    let coeffs: [f64; 3] = if c > 0.0 {
        std::array::from_fn(|_| rng.random_range(-c..=c))
    } else {
        [0.0; 3]
    };
    let last = samples.len().saturating_sub(1).max(1) as f64;
    Ok(samples
        .iter()
        .enumerate()
        .map(|(n, &x)| {
            let u = n as f64 / last;
            let trend = coeffs[0] + coeffs[1] * u + coeffs[2] * u * u;
            let eps = if cfg.noise_std > 0.0 {
                noise.sample(rng)
            } else {
                0.0
            };
            gain * x + eps + trend
        })
        .collect())
}

/// An interruption artifact superimposed on a faulty record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Artifact {
    /// Adds `height` to every sample from `at` to the end.
    Step { at: usize, height: f64 },
    /// Adds `height` to `width` samples starting at `at`.
    Spike {
        at: usize,
        width: usize,
        height: f64,
    },
    /// Overwrites `len` samples starting at `start` with `level`.
    Saturation {
        start: usize,
        len: usize,
        level: f64,
    },
}

impl Artifact {
    pub fn apply(&self, x: &mut [f64]) {
        let n = x.len();
        match *self {
            Artifact::Step { at, height } => {
                for v in &mut x[at.min(n)..] {
                    *v += height;
                }
            }
            Artifact::Spike { at, width, height } => {
                let end = at.saturating_add(width).min(n);
                for v in &mut x[at.min(n)..end] {
                    *v += height;
                }
            }
            Artifact::Saturation { start, len, level } => {
                let end = start.saturating_add(len).min(n);
                for v in &mut x[start.min(n)..end] {
                    *v = level;
                }
            }
        }
    }

    fn is_overwrite(&self) -> bool {
        matches!(self, Artifact::Saturation { .. })
    }
}

fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Draws 1–4 artifacts for a record of `n` samples. Heights are at least
/// three times the reference peak; saturation segments last 1–5 seconds.
pub fn random_artifacts<R: Rng + ?Sized>(
    n: usize,
    peak: f64,
    fs_hz: f64,
    rng: &mut R,
) -> Vec<Artifact> {
    let peak = peak.max(ARTIFACT_PEAK_FLOOR);
    let fs = fs_hz.round().max(1.0) as usize;
    let count = rng.random_range(1..=4);
    let mut out: Vec<Artifact> = (0..count)
        .map(|_| match rng.random_range(0..3) {
            0 => Artifact::Step {
                at: rng.random_range(0..n),
                height: random_sign(rng) * rng.random_range(3.0..=6.0) * peak,
            },
            1 => Artifact::Spike {
                at: rng.random_range(0..n),
                width: rng.random_range(1..=5),
                height: random_sign(rng) * rng.random_range(3.0..=10.0) * peak,
            },
            _ => {
                let len = rng.random_range(fs..=5 * fs).min(n);
                Artifact::Saturation {
                    start: rng.random_range(0..=n - len),
                    len,
                    level: random_sign(rng) * rng.random_range(2.0..=4.0) * peak,
                }
            }
        })
        .collect();
    // Saturation last, so every saturated run stays flat.
    out.sort_by_key(Artifact::is_overwrite);
    out
}

/// Superimposes random interruption artifacts on `base`.
pub fn make_faulty<R: Rng + ?Sized>(base: &[f64], fs_hz: f64, rng: &mut R) -> Vec<f64> {
    let mut out = base.to_vec();
    if base.is_empty() {
        return out;
    }
    let peak = base.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for artifact in random_artifacts(base.len(), peak, fs_hz, rng) {
        artifact.apply(&mut out);
    }
    out
}

/// A generated record together with its clean (pre-corruption) waveform.
#[derive(Debug, Clone)]
pub struct GeneratedRecord {
    pub record: BreathRecord,
    pub clean: Vec<f64>,
}

fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Generates record `index` of class `class_id` at `distance_m`. The random
/// stream depends only on `(cfg.seed, index)`.
pub fn generate_record(
    cfg: &GenConfig,
    class_id: u8,
    distance_m: f64,
    index: u64,
) -> Result<GeneratedRecord> {
    if class_id as usize >= NUM_CLASSES {
        return Err(Error::invalid(format!("class id {class_id} out of range")));
    }
    let table = class_table();
    let mut rng = record_rng(cfg.seed, index);
    let base_class = if class_id == FAULTY_CLASS {
        rng.random_range(0..FAULTY_CLASS)
    } else {
        class_id
    };
    let (rate, depth) = sample_params(&table[base_class as usize], &mut rng);
    let phase = rng.random_range(0.0..2.0 * PI);
    let clean = synth_waveform(rate, depth, cfg.fs_hz, cfg.duration_s, phase)?;
    let mut samples = corrupt(&clean, distance_m, cfg, &mut rng)?;
    if class_id == FAULTY_CLASS {
        samples = make_faulty(&samples, cfg.fs_hz, &mut rng);
    }
    Ok(GeneratedRecord {
        record: BreathRecord {
            samples,
            class_id,
            rate_bpm: rate,
            depth_pct: depth,
            distance_m,
            seed_tag: index,
        },
        clean,
    })
}

/// Generates `records_per_class` records for every class, split evenly
/// across distances, ordered by class then distance.
pub fn generate_dataset(cfg: &GenConfig) -> Result<Vec<BreathRecord>> {
    cfg.validate()?;
    let per_distance = cfg.records_per_class / cfg.distances_m.len();
    let mut jobs = Vec::with_capacity(cfg.records_per_class * NUM_CLASSES);
    for class_id in 0..NUM_CLASSES as u8 {
        for &d in &cfg.distances_m {
            for _ in 0..per_distance {
                jobs.push((class_id, d));
            }
        }
    }
    jobs.par_iter()
        .enumerate()
        .map(|(i, &(class_id, d))| generate_record(cfg, class_id, d, i as u64).map(|g| g.record))
        .collect()
}

/// Dataset header fields shared by every record in a file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub samples_per_record: usize,
    pub fs_hz: f64,
    pub duration_s: f64,
}

pub fn encode_dataset(records: &[BreathRecord], header: DatasetHeader) -> Result<Vec<u8>> {
    let count = u32::try_from(records.len()).map_err(|_| Error::invalid("too many records"))?;
    let spr =
        u32::try_from(header.samples_per_record).map_err(|_| Error::invalid("record too long"))?;
    let mut w = Writer::new();
    w.bytes(DATASET_MAGIC);
    w.u16(DATASET_VERSION);
    w.u32(count);
    w.u32(spr);
    w.f64(header.fs_hz);
    w.f64(header.duration_s);
    for r in records {
        if r.samples.len() != header.samples_per_record {
            return Err(Error::shape(format!(
                "record {} has {} samples, header says {}",
                r.seed_tag,
                r.samples.len(),
                header.samples_per_record
            )));
        }
        w.u8(r.class_id);
        w.f64(r.distance_m);
        w.f64(r.rate_bpm);
        w.f64(r.depth_pct);
        w.f64s(&r.samples);
    }
    Ok(w.buf)
}

/// Decodes a dataset file. `seed_tag` is not stored on disk and is
/// reconstructed as the record's position in the file.
pub fn decode_dataset(bytes: &[u8]) -> Result<(DatasetHeader, Vec<BreathRecord>)> {
    let mut r = Reader::new(bytes);
    let magic: [u8; 4] = r.bytes()?;
    if &magic != DATASET_MAGIC {
        return Err(Error::format(format!("bad dataset magic {magic:?}")));
    }
    let version = r.u16()?;
    if version != DATASET_VERSION {
        return Err(Error::format(format!(
            "unsupported dataset version {version}"
        )));
    }
    let count = r.u32()? as usize;
    let spr = r.u32()? as usize;
    let header = DatasetHeader {
        samples_per_record: spr,
        fs_hz: r.f64()?,
        duration_s: r.f64()?,
    };
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let class_id = r.u8()?;
        if class_id as usize >= NUM_CLASSES {
            return Err(Error::format(format!(
                "record {i}: class id {class_id} out of range"
            )));
        }
        let distance_m = r.f64()?;
        let rate_bpm = r.f64()?;
        let depth_pct = r.f64()?;
        let samples = r.f64s(spr)?;
        records.push(BreathRecord {
            samples,
            class_id,
            rate_bpm,
            depth_pct,
            distance_m,
            seed_tag: i as u64,
        });
    }
    r.finish()?;
    Ok((header, records))
}

pub fn write_dataset(path: &Path, records: &[BreathRecord], header: DatasetHeader) -> Result<()> {
    fs::write(path, encode_dataset(records, header)?)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<BreathRecord>)> {
    decode_dataset(&fs::read(path)?)
}

/// Plain-text export: one row per record, label first, then the samples.
pub fn dataset_to_csv(records: &[BreathRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.class_id.to_string());
        for v in &r.samples {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn class_table_rows() {
        let t = class_table();
        assert_eq!(t.len(), 8);
        for (i, s) in t.iter().enumerate() {
            assert_eq!(s.class_id as usize, i);
        }
        assert_eq!(t[0].name, "Eupnea");
        assert_eq!(
            (t[0].rate_range, t[0].depth_range),
            ((12.0, 20.0), (30.0, 58.0))
        );
        assert_eq!(t[1].name, "Apnea");
        assert_eq!(
            (t[1].rate_range, t[1].depth_range),
            ((0.0, 0.0), (0.0, 0.0))
        );
        assert_eq!(t[6].name, "Kussmaul's");
        assert_eq!(
            (t[6].rate_range, t[6].depth_range),
            ((21.0, 50.0), (59.0, 100.0))
        );
    }

    #[test]
    fn regular_class_rectangles_are_disjoint() {
        let t = class_table();
        for a in &t[..7] {
            for b in &t[..7] {
                if a.class_id >= b.class_id {
                    continue;
                }
                let rate_overlap =
                    a.rate_range.0 <= b.rate_range.1 && b.rate_range.0 <= a.rate_range.1;
                let depth_overlap =
                    a.depth_range.0 <= b.depth_range.1 && b.depth_range.0 <= a.depth_range.1;
                assert!(!(rate_overlap && depth_overlap), "{} vs {}", a.name, b.name);
            }
        }
    }

    #[test]
    fn apnea_params_are_degenerate() {
        let t = class_table();
        let mut r = rng(1);
        for _ in 0..100 {
            assert_eq!(sample_params(&t[1], &mut r), (0.0, 0.0));
        }
    }

    #[test]
    fn eupnea_params_stay_in_range_and_are_uniform() {
        let t = class_table();
        let mut r = rng(2);
        let draws: Vec<_> = (0..10_000).map(|_| sample_params(&t[0], &mut r)).collect();
        assert!(draws
            .iter()
            .all(|&(rate, depth)| t[0].contains(rate, depth)));
        let mean = draws.iter().map(|d| d.0).sum::<f64>() / draws.len() as f64;
        assert!((mean - 16.0).abs() < 0.5, "mean rate {mean}");
    }

    #[test]
    fn faulty_params_come_from_a_regular_class() {
        let t = class_table();
        let mut r = rng(3);
        for _ in 0..1000 {
            let (rate, depth) = sample_params(&t[7], &mut r);
            assert!(t[..7].iter().any(|s| s.contains(rate, depth)));
        }
    }

    #[test]
    fn apnea_waveform_is_zero() {
        let x = synth_waveform(0.0, 0.0, 100.0, 30.0, 0.0).unwrap();
        assert_eq!(x.len(), 3000);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eupnea_waveform_peaks_and_cycles() {
        let x = synth_waveform(16.0, 40.0, 100.0, 30.0, 0.0).unwrap();
        assert_eq!(x.len(), 3000);
        let max = x.iter().cloned().fold(f64::MIN, f64::max);
        assert!((max - 0.40).abs() < 1e-3, "max {max}");
        // Cycles: count troughs (exact zeros of sin at multiples of the period).
        let period = 100.0 * 60.0 / 16.0; // 375 samples
        let troughs = (0..3000)
            .filter(|&n| (n as f64 / period).fract() == 0.0)
            .count();
        assert_eq!(troughs, 8);
        for k in 0..8 {
            let n = (k as f64 * period) as usize;
            assert!(x[n].abs() < 1e-12);
        }
    }

    #[test]
    fn waveform_cycles_are_symmetric() {
        // 12 bpm at 100 Hz -> 500 samples per cycle.
        let x = synth_waveform(12.0, 70.0, 100.0, 30.0, 0.0).unwrap();
        for n in 0..=500 {
            assert!((x[n] - x[500 - n]).abs() < 1e-12);
        }
    }

    #[test]
    fn waveform_rejects_negative_inputs() {
        assert!(synth_waveform(-1.0, 10.0, 100.0, 30.0, 0.0).is_err());
        assert!(synth_waveform(10.0, -1.0, 100.0, 30.0, 0.0).is_err());
    }

    #[test]
    fn clean_waveform_bounds() {
        let mut r = rng(4);
        for _ in 0..50 {
            let rate = r.random_range(0.0..50.0);
            let depth = r.random_range(0.0..100.0);
            let phase = r.random_range(0.0..2.0 * PI);
            let x = synth_waveform(rate, depth, 100.0, 30.0, phase).unwrap();
            assert!(x.iter().all(|&v| v >= 0.0 && v <= depth / 100.0 + 1e-15));
        }
    }

    #[test]
    fn corrupt_identity_configuration() {
        let cfg = GenConfig {
            noise_std: 0.0,
            trend_max_coeff: 0.0,
            distance_gain: vec![(1.0, 1.0)],
            ..GenConfig::default()
        };
        let x = synth_waveform(16.0, 40.0, 100.0, 30.0, 0.3).unwrap();
        let y = corrupt(&x, 1.0, &cfg, &mut rng(5)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn corrupt_noise_statistics() {
        let cfg = GenConfig {
            noise_std: 0.01,
            trend_max_coeff: 0.0,
            ..GenConfig::default()
        };
        let x = synth_waveform(16.0, 40.0, 100.0, 30.0, 0.0).unwrap();
        let y = corrupt(&x, 1.0, &cfg, &mut rng(6)).unwrap();
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - 0.55 * a).collect();
        let mean = diff.iter().sum::<f64>() / diff.len() as f64;
        let var = diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diff.len() - 1) as f64;
        let std = var.sqrt();
        assert!((std - 0.01).abs() <= 0.002, "std {std}");
    }

    #[test]
    fn corrupt_distance_gain() {
        let cfg = GenConfig {
            noise_std: 0.0,
            trend_max_coeff: 0.0,
            ..GenConfig::default()
        };
        let x = synth_waveform(15.0, 40.0, 100.0, 30.0, 0.0).unwrap();
        let y = corrupt(&x, 1.5, &cfg, &mut rng(7)).unwrap();
        let peak = y.iter().cloned().fold(f64::MIN, f64::max);
        // 15 bpm puts a peak exactly on a sample.
        assert!((peak - 0.12).abs() < 1e-12, "peak {peak}");
        assert!(matches!(
            corrupt(&x, 2.0, &cfg, &mut rng(7)),
            Err(Error::UnknownDistance(_))
        ));
    }

    #[test]
    fn saturation_artifact_construction() {
        let mut x = vec![0.0; 3000];
        Artifact::Saturation {
            start: 500,
            len: 200,
            level: 2.0,
        }
        .apply(&mut x);
        for (n, &v) in x.iter().enumerate() {
            let expected = if (500..700).contains(&n) { 2.0 } else { 0.0 };
            assert_eq!(v, expected);
        }
    }

    #[test]
    fn faulty_is_deterministic() {
        let base = synth_waveform(16.0, 40.0, 100.0, 30.0, 0.0).unwrap();
        let a = make_faulty(&base, 100.0, &mut rng(8));
        let b = make_faulty(&base, 100.0, &mut rng(8));
        assert_eq!(a, b);
        assert_eq!(a.len(), base.len());
    }

    #[test]
    fn dataset_counts() {
        let cfg = GenConfig {
            records_per_class: 3,
            ..GenConfig::default()
        };
        let data = generate_dataset(&cfg).unwrap();
        assert_eq!(data.len(), 24);
        for class in 0..8u8 {
            for &d in &cfg.distances_m {
                let n = data
                    .iter()
                    .filter(|r| r.class_id == class && r.distance_m == d)
                    .count();
                assert_eq!(n, 1);
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = GenConfig {
            records_per_class: 4,
            ..GenConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.records_per_class = 3;
        cfg.fs_hz = 100.5;
        cfg.duration_s = 1.1;
        assert!(cfg.validate().is_err());
        cfg.fs_hz = 100.0;
        cfg.duration_s = 30.0;
        cfg.distances_m.push(2.0);
        cfg.records_per_class = 4;
        assert!(matches!(cfg.validate(), Err(Error::UnknownDistance(_))));
    }

    #[test]
    fn csv_export_puts_label_first() {
        let r = BreathRecord {
            samples: vec![0.5, -1.0],
            class_id: 3,
            rate_bpm: 5.0,
            depth_pct: 40.0,
            distance_m: 1.0,
            seed_tag: 0,
        };
        assert_eq!(dataset_to_csv(&[r]), "3,0.5,-1\n");
    }
}
