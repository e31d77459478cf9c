//! Run configuration. Layers, lowest precedence first: profile defaults,
//! TOML file, command-line flags.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use breath_core::ga::{Chromosome, GaConfig, GeneSpace, ParentStrategy};
use breath_core::nn::{AdamConfig, TrainConfig};
use breath_core::synthgen::GenConfig;
use breath_core::transfer::BaseArch;
use breath_core::NUM_CLASSES;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path} is not valid TOML: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("unknown config key `{key}`: {message}")]
    UnknownKey { key: String, message: String },
    #[error("missing required config field `{field}`: {message}")]
    MissingField { field: String, message: String },
    #[error("invalid value for `{field}`: {message}")]
    OutOfRange { field: String, message: String },
    #[error("malformed config value: {0}")]
    Malformed(String),
}

fn out_of_range(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::OutOfRange {
        field: field.to_string(),
        message: message.into(),
    }
}

/// First backtick-quoted name in a deserializer message.
fn quoted_name(message: &str) -> String {
    message.split('`').nth(1).unwrap_or("?").to_string()
}

fn classify(err: toml::de::Error) -> ConfigError {
    let message = err.message().to_string();
    if message.starts_with("unknown field") || message.starts_with("unknown variant") {
        ConfigError::UnknownKey {
            key: quoted_name(&message),
            message,
        }
    } else if message.starts_with("missing field") {
        ConfigError::MissingField {
            field: quoted_name(&message),
            message,
        }
    } else {
        ConfigError::Malformed(err.to_string().trim().to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

impl FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(format!(
                "unknown profile `{other}` (expected paper or desk)"
            )),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Transfer,
    Scratch,
    Both,
}

impl TrainMode {
    pub fn transfer(self) -> bool {
        matches!(self, TrainMode::Transfer | TrainMode::Both)
    }

    pub fn scratch(self) -> bool {
        matches!(self, TrainMode::Scratch | TrainMode::Both)
    }
}

impl FromStr for TrainMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "transfer" => Ok(TrainMode::Transfer),
            "scratch" => Ok(TrainMode::Scratch),
            "both" => Ok(TrainMode::Both),
            other => Err(format!(
                "unknown mode `{other}` (expected transfer, scratch or both)"
            )),
        }
    }
}

/// Serializes through `Display`/`FromStr`.
mod as_text {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};
    use std::fmt::Display;
    use std::str::FromStr;

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

mod opt_as_text {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};
    use std::fmt::Display;
    use std::str::FromStr;

    pub fn serialize<T: Display, S: Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.collect_str(v),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<Option<T>, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        Option::<String>::deserialize(d)?
            .map(|s| s.parse().map_err(D::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainEntry {
    pub distance_m: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub fs_hz: f64,
    pub duration_s: f64,
    pub records_per_class: usize,
    pub distances_m: Vec<f64>,
    pub noise_std: f64,
    pub trend_max_coeff: f64,
    pub distance_gain: Vec<GainEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    pub ma_window: usize,
    pub detrend_degree: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSection {
    pub filters: [usize; 3],
    pub kernel_lengths: [usize; 3],
    pub pool: usize,
    pub dense_units: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaSection {
    pub population_size: usize,
    pub parent_count: usize,
    pub crossover_count: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub elite_count: usize,
    pub generations: usize,
    #[serde(with = "as_text")]
    pub parent_strategy: ParentStrategy,
    pub fitness_epochs: usize,
    pub fitness_batch_size: usize,
    pub subset_size: usize,
    pub train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalSection {
    #[serde(default, with = "opt_as_text", skip_serializing_if = "Option::is_none")]
    pub chromosome: Option<Chromosome>,
    pub mode: TrainMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub data: DataSection,
    pub preprocess: PreprocessSection,
    pub base: BaseSection,
    pub train: TrainSection,
    pub ga: GaSection,
    #[serde(rename = "final")]
    pub final_train: FinalSection,
}

impl RunConfig {
    pub fn paper() -> Self {
        let gen = GenConfig::default();
        let ga = GaConfig::default();
        let arch = BaseArch::paper();
        RunConfig {
            profile: Profile::Paper,
            seed: 0,
            threads: 0,
            data: DataSection {
                fs_hz: gen.fs_hz,
                duration_s: gen.duration_s,
                records_per_class: gen.records_per_class,
                distances_m: gen.distances_m.clone(),
                noise_std: gen.noise_std,
                trend_max_coeff: gen.trend_max_coeff,
                distance_gain: gen
                    .distance_gain
                    .iter()
                    .map(|&(distance_m, gain)| GainEntry { distance_m, gain })
                    .collect(),
            },
            preprocess: PreprocessSection {
                ma_window: 50,
                detrend_degree: 5,
            },
            base: BaseSection {
                filters: arch.filters,
                kernel_lengths: arch.kernel_lengths,
                pool: arch.pool,
                dense_units: arch.dense_units,
            },
            train: TrainSection {
                epochs: 30,
                batch_size: 32,
                step_size: AdamConfig::default().step_size,
                train_fraction: 0.8,
            },
            ga: GaSection {
                population_size: ga.population_size,
                parent_count: ga.parent_count,
                crossover_count: ga.crossover_count,
                crossover_prob: ga.crossover_prob,
                mutation_prob: ga.mutation_prob,
                elite_count: ga.elite_count,
                generations: ga.generations,
                parent_strategy: ga.parent_strategy,
                fitness_epochs: ga.fitness_epochs,
                fitness_batch_size: ga.fitness_batch_size,
                subset_size: ga.subset_size,
                train_fraction: ga.train_fraction,
            },
            final_train: FinalSection {
                chromosome: None,
                mode: TrainMode::Both,
            },
        }
    }

    /// 20 Hz recordings, a quarter-size base network, GA subset 200 and
    /// 20 generations.
    pub fn desk() -> Self {
        let mut cfg = RunConfig::paper();
        let arch = BaseArch::desk();
        cfg.profile = Profile::Desk;
        cfg.data.fs_hz = 20.0;
        // 42 rather than 40 so every class splits evenly over three distances.
        cfg.data.records_per_class = 42;
        cfg.preprocess.ma_window = 10;
        cfg.base.filters = arch.filters;
        cfg.base.kernel_lengths = arch.kernel_lengths;
        cfg.ga.subset_size = 200;
        cfg.ga.generations = 20;
        cfg
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Paper => RunConfig::paper(),
            Profile::Desk => RunConfig::desk(),
        }
    }

    /// Builds the configuration from an optional TOML file and flag
    /// overrides, then validates it. The profile comes from the flags, else
    /// from the file's `profile` key, else paper.
    pub fn load(file: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let table = match file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.to_path_buf(),
                    source,
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| ConfigError::Syntax {
                        path: path.to_path_buf(),
                        message: e.to_string().trim().to_string(),
                    })?
            }
            None => toml::Table::new(),
        };
        RunConfig::from_table(table, overrides)
    }

    pub fn from_toml_str(text: &str, overrides: &Overrides) -> Result<Self, ConfigError> {
        let table = text
            .parse::<toml::Table>()
            .map_err(|e| ConfigError::Syntax {
                path: PathBuf::from("<string>"),
                message: e.to_string().trim().to_string(),
            })?;
        RunConfig::from_table(table, overrides)
    }

    fn from_table(table: toml::Table, overrides: &Overrides) -> Result<Self, ConfigError> {
        let profile = match (overrides.profile, table.get("profile")) {
            (Some(p), _) => p,
            (None, Some(toml::Value::String(s))) => {
                s.parse().map_err(|m: String| out_of_range("profile", m))?
            }
            (None, Some(other)) => {
                return Err(out_of_range(
                    "profile",
                    format!("expected a string, got {other}"),
                ))
            }
            (None, None) => Profile::Paper,
        };
        let defaults = toml::Table::try_from(RunConfig::for_profile(profile))
            .map_err(|e| ConfigError::Malformed(e.to_string()))?;
        let mut merged = defaults;
        merge(&mut merged, table);
        merged.insert("profile".into(), toml::Value::String(profile.to_string()));
        let mut cfg: RunConfig = merged.try_into().map_err(classify)?;
        overrides.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(out_of_range(field, format!("{v} must be positive")))
            }
        };
        let at_least = |field: &str, v: usize, min: usize| {
            if v >= min {
                Ok(())
            } else {
                Err(out_of_range(field, format!("{v} must be at least {min}")))
            }
        };
        let fraction = |field: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(out_of_range(
                    field,
                    format!("{v} must lie strictly between 0 and 1"),
                ))
            }
        };
        let probability = |field: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(out_of_range(field, format!("{v} is outside [0, 1]")))
            }
        };

        positive("data.fs_hz", self.data.fs_hz)?;
        positive("data.duration_s", self.data.duration_s)?;
        at_least("data.records_per_class", self.data.records_per_class, 1)?;
        if !(self.data.noise_std >= 0.0) {
            return Err(out_of_range("data.noise_std", "must be non-negative"));
        }
        if !(self.data.trend_max_coeff >= 0.0) {
            return Err(out_of_range("data.trend_max_coeff", "must be non-negative"));
        }
        for g in &self.data.distance_gain {
            positive("data.distance_gain.gain", g.gain)?;
        }
        self.gen_config()
            .validate()
            .map_err(|e| out_of_range("data", e.to_string()))?;
        let samples = self.gen_config().samples_per_record();

        let p = &self.preprocess;
        if p.ma_window == 0 || p.ma_window > samples {
            return Err(out_of_range(
                "preprocess.ma_window",
                format!("{} must be in 1..={samples}", p.ma_window),
            ));
        }
        if p.detrend_degree + 1 > samples {
            return Err(out_of_range(
                "preprocess.detrend_degree",
                format!(
                    "degree {} needs more than {samples} samples",
                    p.detrend_degree
                ),
            ));
        }

        for (i, &f) in self.base.filters.iter().enumerate() {
            at_least(&format!("base.filters[{i}]"), f, 1)?;
        }
        for (i, &k) in self.base.kernel_lengths.iter().enumerate() {
            at_least(&format!("base.kernel_lengths[{i}]"), k, 1)?;
        }
        at_least("base.pool", self.base.pool, 1)?;
        at_least("base.dense_units", self.base.dense_units, 1)?;
        let pooled = samples / self.base.pool.pow(3);
        if pooled == 0 {
            return Err(out_of_range(
                "base.pool",
                format!(
                    "three pools of {} leave nothing of {samples} samples",
                    self.base.pool
                ),
            ));
        }

        at_least("train.batch_size", self.train.batch_size, 1)?;
        positive("train.step_size", self.train.step_size)?;
        fraction("train.train_fraction", self.train.train_fraction)?;

        let ga = &self.ga;
        at_least("ga.population_size", ga.population_size, 2)?;
        if ga.elite_count >= ga.population_size {
            return Err(out_of_range(
                "ga.elite_count",
                format!(
                    "{} must be below population_size {}",
                    ga.elite_count, ga.population_size
                ),
            ));
        }
        if ga.parent_count % 2 != 0 || ga.parent_count > ga.population_size {
            return Err(out_of_range(
                "ga.parent_count",
                format!(
                    "{} must be even and at most population_size",
                    ga.parent_count
                ),
            ));
        }
        if 2 * ga.crossover_count > ga.parent_count {
            return Err(out_of_range(
                "ga.crossover_count",
                format!(
                    "{} crossovers need {} parents",
                    ga.crossover_count,
                    2 * ga.crossover_count
                ),
            ));
        }
        probability("ga.crossover_prob", ga.crossover_prob)?;
        probability("ga.mutation_prob", ga.mutation_prob)?;
        at_least("ga.fitness_epochs", ga.fitness_epochs, 1)?;
        at_least("ga.fitness_batch_size", ga.fitness_batch_size, 1)?;
        at_least("ga.subset_size", ga.subset_size, 2 * NUM_CLASSES)?;
        fraction("ga.train_fraction", ga.train_fraction)?;
        self.ga_config()
            .validate(&GeneSpace::default())
            .map_err(|e| out_of_range("ga", e.to_string()))?;

        if let Some(c) = &self.final_train.chromosome {
            if !GeneSpace::default().contains(c) {
                return Err(out_of_range(
                    "final.chromosome",
                    format!("{c} is outside the gene ranges"),
                ));
            }
        }
        Ok(())
    }

    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            fs_hz: self.data.fs_hz,
            duration_s: self.data.duration_s,
            records_per_class: self.data.records_per_class,
            distances_m: self.data.distances_m.clone(),
            noise_std: self.data.noise_std,
            trend_max_coeff: self.data.trend_max_coeff,
            distance_gain: self
                .data
                .distance_gain
                .iter()
                .map(|g| (g.distance_m, g.gain))
                .collect(),
            seed: self.seed,
        }
    }

    pub fn base_arch(&self) -> BaseArch {
        BaseArch {
            filters: self.base.filters,
            kernel_lengths: self.base.kernel_lengths,
            pool: self.base.pool,
            dense_units: self.base.dense_units,
            classes: NUM_CLASSES,
        }
    }

    /// Training settings with the given shuffle seed.
    pub fn train_config(&self, shuffle_seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            adam: AdamConfig {
                step_size: self.train.step_size,
                ..AdamConfig::default()
            },
            shuffle_seed,
        }
    }

    /// GA settings seeded with the run seed.
    pub fn ga_config(&self) -> GaConfig {
        let g = &self.ga;
        GaConfig {
            population_size: g.population_size,
            parent_count: g.parent_count,
            crossover_count: g.crossover_count,
            crossover_prob: g.crossover_prob,
            mutation_prob: g.mutation_prob,
            elite_count: g.elite_count,
            generations: g.generations,
            parent_strategy: g.parent_strategy,
            fitness_epochs: g.fitness_epochs,
            fitness_batch_size: g.fitness_batch_size,
            subset_size: g.subset_size,
            train_fraction: g.train_fraction,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }
}

/// Recursive table merge; `top` wins, arrays are replaced whole.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub ma_window: Option<usize>,
    pub detrend_degree: Option<usize>,
    pub generations: Option<usize>,
    pub parent_strategy: Option<ParentStrategy>,
    pub crossover_prob: Option<f64>,
    pub mutation_prob: Option<f64>,
    pub chromosome: Option<Chromosome>,
    pub mode: Option<TrainMode>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        set(&mut cfg.seed, &self.seed);
        set(&mut cfg.threads, &self.threads);
        set(&mut cfg.preprocess.ma_window, &self.ma_window);
        set(&mut cfg.preprocess.detrend_degree, &self.detrend_degree);
        set(&mut cfg.ga.generations, &self.generations);
        set(&mut cfg.ga.parent_strategy, &self.parent_strategy);
        set(&mut cfg.ga.crossover_prob, &self.crossover_prob);
        set(&mut cfg.ga.mutation_prob, &self.mutation_prob);
        set(&mut cfg.final_train.mode, &self.mode);
        if self.chromosome.is_some() {
            cfg.final_train.chromosome = self.chromosome;
        }
    }
}
