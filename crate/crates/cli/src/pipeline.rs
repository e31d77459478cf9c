//! The six pipeline stages. Each reads its inputs from and writes its
//! artifacts to one output directory.

use std::fs;
use std::path::{Path, PathBuf};

use breath_core::dsp::{moving_average, preprocess_all, stratified_split};
use breath_core::ga::{decode, ga_log_csv, run_ga, Chromosome, GaOutcome, GeneSpace};
use breath_core::nn::{
    evaluate as evaluate_model, load_model, train_with_eval, EpochStats, Evaluation, ModelState,
    Shape,
};
use breath_core::synthgen::{
    dataset_to_csv, generate_dataset, read_dataset, write_dataset, BreathRecord, DatasetHeader,
};
use breath_core::transfer::{
    extend, pretrain_base, records_to_inputs, scratch_model, trim, HeadArch, PretrainConfig,
    PretrainOutcome,
};
use breath_core::NUM_CLASSES;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::svg::{line_chart, Series};

pub const DATASET: &str = "dataset.rspd";
pub const DATASET_CSV: &str = "dataset.csv";
pub const BASE_MODEL: &str = "base_model.rnn1";
pub const PRETRAIN_HISTORY: &str = "pretrain_history.csv";
pub const GA_LOG: &str = "ga_log.csv";
pub const BEST_CHROMOSOME: &str = "best_chromosome.txt";
pub const FINAL_TRAINING: &str = "final_training.csv";
pub const FINAL_TRANSFER: &str = "final_transfer.rnn1";
pub const FINAL_SCRATCH: &str = "final_scratch.rnn1";
pub const GA_REPORT: &str = "ga_report.csv";
pub const GA_SVG: &str = "ga_fitness.svg";
pub const FINAL_SVG: &str = "final_training.svg";

/// Trailing window of the smoothed mean-fitness column.
pub const REPORT_MA_WINDOW: usize = 10;

/// Independent random streams derived from the run seed. Data generation
/// uses the run seed itself.
mod stream {
    pub const PRETRAIN_SPLIT: u64 = 1;
    pub const PRETRAIN_INIT: u64 = 2;
    pub const PRETRAIN_SHUFFLE: u64 = 3;
    pub const GA: u64 = 4;
    pub const FINAL_SPLIT: u64 = 5;
    pub const FINAL_INIT: u64 = 6;
    pub const FINAL_SHUFFLE: u64 = 7;
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// An output directory and the artifact names inside it.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn require(&self, name: &str, producer: &'static str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        if path.is_file() {
            Ok(path)
        } else {
            Err(CliError::MissingArtifact { path, producer })
        }
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.root).map_err(|source| CliError::Io {
            path: self.root.clone(),
            source,
        })?;
        let path = self.path(name);
        fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    fn save_model(&self, name: &str, model: &ModelState) -> Result<PathBuf, CliError> {
        let bytes = breath_core::nn::encode_model(model)?;
        self.write(name, bytes)
    }
}

fn stale(path: PathBuf, reason: String, producer: &'static str) -> CliError {
    CliError::StaleArtifact {
        path,
        reason,
        producer,
    }
}

#[derive(Debug, Clone)]
pub struct GenDataOutcome {
    pub path: PathBuf,
    pub records: usize,
    pub samples_per_record: usize,
}

pub fn gen_data(cfg: &RunConfig, ws: &Workspace, csv: bool) -> Result<GenDataOutcome, CliError> {
    let gen = cfg.gen_config();
    let records = generate_dataset(&gen)?;
    let header = DatasetHeader {
        samples_per_record: gen.samples_per_record(),
        fs_hz: gen.fs_hz,
        duration_s: gen.duration_s,
    };
    let path = ws.path(DATASET);
    fs::create_dir_all(ws.root()).map_err(|source| CliError::Io {
        path: ws.root().to_path_buf(),
        source,
    })?;
    write_dataset(&path, &records, header)?;
    if csv {
        ws.write(DATASET_CSV, dataset_to_csv(&records))?;
    }
    Ok(GenDataOutcome {
        path,
        records: records.len(),
        samples_per_record: header.samples_per_record,
    })
}

/// Reads the dataset, checks it against the configuration and applies
/// smoothing and detrending.
pub fn load_dataset(cfg: &RunConfig, ws: &Workspace) -> Result<Vec<BreathRecord>, CliError> {
    let path = ws.require(DATASET, "gen-data")?;
    let (header, records) = read_dataset(&path)?;
    let gen = cfg.gen_config();
    let expected = gen.records_per_class * NUM_CLASSES;
    if header.samples_per_record != gen.samples_per_record() || header.fs_hz != gen.fs_hz {
        return Err(stale(
            path,
            format!(
                "{} samples at {} Hz, expected {} at {} Hz",
                header.samples_per_record,
                header.fs_hz,
                gen.samples_per_record(),
                gen.fs_hz
            ),
            "gen-data",
        ));
    }
    if records.len() != expected {
        return Err(stale(
            path,
            format!("{} records, expected {expected}", records.len()),
            "gen-data",
        ));
    }
    let p = cfg.preprocess;
    Ok(preprocess_all(&records, p.ma_window, p.detrend_degree)?)
}

/// Loads the saved base network and checks its structure and input length.
pub fn load_base(
    cfg: &RunConfig,
    ws: &Workspace,
    input_len: usize,
) -> Result<ModelState, CliError> {
    let path = ws.require(BASE_MODEL, "pretrain")?;
    let model = load_model(&path)?;
    let expected: Vec<_> = cfg.base_arch().specs().iter().map(|s| s.kind).collect();
    let actual: Vec<_> = model.specs().iter().map(|s| s.kind).collect();
    if actual != expected {
        return Err(stale(path, "layer structure differs".into(), "pretrain"));
    }
    if model.input_shape() != Shape::new(input_len, 1) {
        return Err(stale(
            path,
            format!(
                "input {} but records have {input_len} samples",
                model.input_shape()
            ),
            "pretrain",
        ));
    }
    Ok(model)
}

fn record_len(data: &[BreathRecord]) -> Result<usize, CliError> {
    data.first()
        .map(|r| r.samples.len())
        .ok_or(CliError::Core(breath_core::Error::EmptyInput("dataset")))
}

pub fn pretrain(cfg: &RunConfig, ws: &Workspace) -> Result<PretrainOutcome, CliError> {
    let data = load_dataset(cfg, ws)?;
    let pc = PretrainConfig {
        arch: cfg.base_arch(),
        train: cfg.train_config(derive_seed(cfg.seed, stream::PRETRAIN_SHUFFLE)),
        train_fraction: cfg.train.train_fraction,
        split_seed: derive_seed(cfg.seed, stream::PRETRAIN_SPLIT),
        init_seed: derive_seed(cfg.seed, stream::PRETRAIN_INIT),
    };
    let outcome = pretrain_base(&data, &pc)?;
    ws.save_model(BASE_MODEL, &outcome.model)?;
    let mut csv = String::from("epoch,loss,train_accuracy,test_accuracy\n");
    for h in &outcome.history {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            h.epoch,
            h.loss,
            h.accuracy,
            opt_cell(h.test_accuracy)
        ));
    }
    ws.write(PRETRAIN_HISTORY, csv)?;
    Ok(outcome)
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn evolve(cfg: &RunConfig, ws: &Workspace) -> Result<GaOutcome, CliError> {
    let data = load_dataset(cfg, ws)?;
    let base = load_base(cfg, ws, record_len(&data)?)?;
    let trimmed = trim(&base)?;
    let mut ga = cfg.ga_config();
    ga.seed = derive_seed(cfg.seed, stream::GA);
    let outcome = run_ga(&ga, &GeneSpace::default(), &trimmed, &data)?;
    ws.write(GA_LOG, ga_log_csv(&outcome.logs))?;
    ws.write(BEST_CHROMOSOME, format!("{}\n", outcome.best.chromosome))?;
    Ok(outcome)
}

/// One training mode of the final stage.
#[derive(Debug, Clone)]
pub struct ModeRun {
    pub mode: &'static str,
    pub history: Vec<EpochStats>,
    pub test: Evaluation,
    pub trainable_params: usize,
    pub model_path: PathBuf,
}

impl ModeRun {
    pub fn mean_epoch_seconds(&self) -> f64 {
        self.history.iter().map(|h| h.seconds).sum::<f64>() / self.history.len().max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct FinalOutcome {
    pub chromosome: Chromosome,
    pub head: HeadArch,
    pub transfer: Option<ModeRun>,
    pub scratch: Option<ModeRun>,
}

/// Chromosome from the configuration, else from the search result file.
pub fn final_chromosome(cfg: &RunConfig, ws: &Workspace) -> Result<Chromosome, CliError> {
    if let Some(c) = cfg.final_train.chromosome {
        return Ok(c);
    }
    let path = ws.require(BEST_CHROMOSOME, "evolve")?;
    let text = fs::read_to_string(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    text.trim()
        .parse()
        .map_err(|e: breath_core::Error| stale(path, e.to_string(), "evolve"))
}

/// Train and test split of the preprocessed, unaugmented dataset.
pub fn final_split(
    cfg: &RunConfig,
    data: &[BreathRecord],
) -> Result<(Vec<BreathRecord>, Vec<BreathRecord>), CliError> {
    Ok(stratified_split(
        data,
        cfg.train.train_fraction,
        derive_seed(cfg.seed, stream::FINAL_SPLIT),
    )?)
}

pub fn train_final(cfg: &RunConfig, ws: &Workspace) -> Result<FinalOutcome, CliError> {
    let chromosome = final_chromosome(cfg, ws)?;
    let head = decode(&chromosome, &GeneSpace::default())?;
    let mode = cfg.final_train.mode;
    let data = load_dataset(cfg, ws)?;
    let len = record_len(&data)?;
    let base = if mode.transfer() {
        Some(load_base(cfg, ws, len)?)
    } else {
        None
    };
    let (train, test) = final_split(cfg, &data)?;
    let (train_x, train_y) = records_to_inputs(&train);
    let (test_x, test_y) = records_to_inputs(&test);
    let tcfg = cfg.train_config(derive_seed(cfg.seed, stream::FINAL_SHUFFLE));
    let init_seed = derive_seed(cfg.seed, stream::FINAL_INIT);

    let run =
        |mode: &'static str, mut model: ModelState, file: &str| -> Result<ModeRun, CliError> {
            let trainable_params = model.trainable_param_count();
            let history = train_with_eval(
                &mut model,
                &train_x,
                &train_y,
                Some((&test_x, &test_y)),
                &tcfg,
            )?;
            let test = evaluate_model(&model, &test_x, &test_y)?;
            let model_path = ws.save_model(file, &model)?;
            Ok(ModeRun {
                mode,
                history,
                test,
                trainable_params,
                model_path,
            })
        };

    let transfer = match &base {
        Some(base) => {
            let model = extend(&trim(base)?, &head, NUM_CLASSES, init_seed)?;
            Some(run("transfer", model, FINAL_TRANSFER)?)
        }
        None => None,
    };
    let scratch = if mode.scratch() {
        let model = scratch_model(&cfg.base_arch(), &head, Shape::new(len, 1), init_seed)?;
        Some(run("scratch", model, FINAL_SCRATCH)?)
    } else {
        None
    };

    let mut csv = String::from("epoch,train_scratch,test_scratch,train_transfer,test_transfer\n");
    let cells = |r: &Option<ModeRun>, i: usize| match r.as_ref().and_then(|r| r.history.get(i)) {
        Some(h) => format!("{},{}", h.accuracy, opt_cell(h.test_accuracy)),
        None => ",".to_string(),
    };
    for i in 0..cfg.train.epochs {
        csv.push_str(&format!(
            "{},{},{}\n",
            i + 1,
            cells(&scratch, i),
            cells(&transfer, i)
        ));
    }
    ws.write(FINAL_TRAINING, csv)?;
    Ok(FinalOutcome {
        chromosome,
        head,
        transfer,
        scratch,
    })
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub model_path: PathBuf,
    pub csv_path: PathBuf,
    pub evaluation: Evaluation,
}

/// Scores a trained model on the final-stage test split. Without an explicit
/// model the transfer model is used, else the scratch model.
pub fn evaluate(
    cfg: &RunConfig,
    ws: &Workspace,
    model: Option<&Path>,
) -> Result<EvalOutcome, CliError> {
    let model_path = match model {
        Some(p) if p.is_file() => p.to_path_buf(),
        Some(p) => {
            return Err(CliError::MissingArtifact {
                path: p.to_path_buf(),
                producer: "train-final",
            })
        }
        None => [FINAL_TRANSFER, FINAL_SCRATCH]
            .iter()
            .map(|n| ws.path(n))
            .find(|p| p.is_file())
            .ok_or(CliError::MissingArtifact {
                path: ws.path(FINAL_TRANSFER),
                producer: "train-final",
            })?,
    };
    let data = load_dataset(cfg, ws)?;
    let net = load_model(&model_path)?;
    let len = record_len(&data)?;
    if net.input_shape() != Shape::new(len, 1) || net.num_outputs() != NUM_CLASSES {
        return Err(stale(
            model_path,
            format!(
                "model maps {} to {} outputs",
                net.input_shape(),
                net.num_outputs()
            ),
            "train-final",
        ));
    }
    let (_, test) = final_split(cfg, &data)?;
    let (x, y) = records_to_inputs(&test);
    let evaluation = evaluate_model(&net, &x, &y)?;
    let stem = model_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    let csv_path = ws.write(&format!("confusion_{stem}.csv"), confusion_csv(&evaluation))?;
    Ok(EvalOutcome {
        model_path,
        csv_path,
        evaluation,
    })
}

/// Rows are true classes, columns predicted classes.
pub fn confusion_csv(ev: &Evaluation) -> String {
    let n = ev.confusion.len();
    let mut s = String::from("true_class");
    for c in 0..n {
        s.push_str(&format!(",pred_{c}"));
    }
    s.push_str(",recall\n");
    for (c, row) in ev.confusion.iter().enumerate() {
        s.push_str(&c.to_string());
        for v in row {
            s.push_str(&format!(",{v}"));
        }
        s.push_str(&format!(",{}\n", opt_cell(ev.recall(c))));
    }
    s
}

fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<Option<f64>>>, CliError> {
    let csv_err = |message: String| CliError::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_err(e.to_string()))?
        .clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| csv_err(format!("no `{n}` column")))
        })
        .collect::<Result<_, _>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| csv_err(e.to_string()))?;
        for (col, &i) in cols.iter_mut().zip(&idx) {
            let cell = row.get(i).unwrap_or("").trim();
            col.push(if cell.is_empty() {
                None
            } else {
                Some(
                    cell.parse().map_err(|_| {
                        csv_err(format!("row {}: `{cell}` is not a number", line + 2))
                    })?,
                )
            });
        }
    }
    Ok(cols)
}

#[derive(Debug, Clone)]
pub struct ReportOutcome {
    pub generations: usize,
    pub mean_fitness_ma: Vec<f64>,
    pub files: Vec<PathBuf>,
}

/// Smooths the search log's mean fitness and optionally draws the fitness
/// and final-training curves.
pub fn report(ws: &Workspace, svg: bool) -> Result<ReportOutcome, CliError> {
    let log_path = ws.require(GA_LOG, "evolve")?;
    let cols = read_columns(&log_path, &["generation", "max_fitness", "mean_fitness"])?;
    let complete = |c: &Vec<Option<f64>>| c.iter().copied().collect::<Option<Vec<f64>>>();
    let (Some(generation), Some(max), Some(mean)) =
        (complete(&cols[0]), complete(&cols[1]), complete(&cols[2]))
    else {
        return Err(CliError::Csv {
            path: log_path,
            message: "empty cells in the search log".into(),
        });
    };
    if mean.is_empty() {
        return Err(CliError::Csv {
            path: log_path,
            message: "no generations logged".into(),
        });
    }
    // A shrinking trailing window, so a window longer than the log
    // is equivalent to the log length.
    let ma = moving_average(&mean, REPORT_MA_WINDOW.min(mean.len()))?;
    let mut csv = String::from("generation,max_fitness,mean_fitness,mean_fitness_ma10\n");
    for i in 0..mean.len() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            generation[i], max[i], mean[i], ma[i]
        ));
    }
    let mut files = vec![ws.write(GA_REPORT, csv)?];

    if svg {
        let pts = |ys: &[f64]| generation.iter().copied().zip(ys.iter().copied()).collect();
        let chart = line_chart(
            "Fitness by generation",
            "generation",
            "fitness",
            &[
                Series {
                    name: "max",
                    points: pts(&max),
                },
                Series {
                    name: "mean",
                    points: pts(&mean),
                },
                Series {
                    name: "mean (10-pt MA)",
                    points: pts(&ma),
                },
            ],
        );
        files.push(ws.write(GA_SVG, chart)?);

        let final_path = ws.path(FINAL_TRAINING);
        if final_path.is_file() {
            let names = [
                "epoch",
                "train_scratch",
                "test_scratch",
                "train_transfer",
                "test_transfer",
            ];
            let cols = read_columns(&final_path, &names)?;
            let series: Vec<Series> = names[1..]
                .iter()
                .zip(&cols[1..])
                .map(|(name, col)| Series {
                    name,
                    points: cols[0]
                        .iter()
                        .zip(col)
                        .filter_map(|(e, v)| Some(((*e)?, (*v)?)))
                        .collect(),
                })
                .filter(|s| !s.points.is_empty())
                .collect();
            let chart = line_chart("Final training", "epoch", "accuracy", &series);
            files.push(ws.write(FINAL_SVG, chart)?);
        }
    }
    Ok(ReportOutcome {
        generations: mean.len(),
        mean_fitness_ma: ma,
        files,
    })
}
