//! Pipeline orchestration behind the `breathga` binary.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod svg;

use std::path::PathBuf;

pub use config::{ConfigError, Overrides, Profile, RunConfig, TrainMode};
pub use error::CliError;
pub use pipeline::Workspace;

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    GenData { csv: bool },
    Pretrain,
    Evolve,
    TrainFinal,
    Evaluate { model: Option<PathBuf> },
    Report { svg: bool },
}

/// Runs `f` on a pool of `threads` workers (0: one per core).
pub fn with_threads<T: Send>(
    threads: usize,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;
    pool.install(f)
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

/// Executes one command and returns a human-readable summary.
pub fn dispatch(command: &Command, cfg: &RunConfig, ws: &Workspace) -> Result<String, CliError> {
    with_threads(cfg.threads, || match command {
        Command::GenData { csv } => {
            let out = pipeline::gen_data(cfg, ws, *csv)?;
            Ok(format!(
                "wrote {} records of {} samples to {}",
                out.records,
                out.samples_per_record,
                out.path.display()
            ))
        }
        Command::Pretrain => {
            let out = pipeline::pretrain(cfg, ws)?;
            Ok(format!(
                "base model: {} train / {} test records, train accuracy {}, test accuracy {}",
                out.train_count,
                out.test_count,
                pct(out.train_eval.accuracy),
                pct(out.test_eval.accuracy)
            ))
        }
        Command::Evolve => {
            let out = pipeline::evolve(cfg, ws)?;
            Ok(format!(
                "best chromosome {} with fitness {:.4} after {} generations ({} distinct evaluations)",
                out.best.chromosome,
                out.best.fitness().unwrap_or(f64::NAN),
                out.logs.len().saturating_sub(1),
                out.evaluations
            ))
        }
        Command::TrainFinal => {
            let out = pipeline::train_final(cfg, ws)?;
            let mut lines = vec![format!("chromosome {} → {:?}", out.chromosome, out.head)];
            for run in [&out.transfer, &out.scratch].into_iter().flatten() {
                lines.push(format!(
                    "{}: test accuracy {}, {} trainable parameters, {:.2} s/epoch",
                    run.mode,
                    pct(run.test.accuracy),
                    run.trainable_params,
                    run.mean_epoch_seconds()
                ));
            }
            Ok(lines.join("\n"))
        }
        Command::Evaluate { model } => {
            let out = pipeline::evaluate(cfg, ws, model.as_deref())?;
            let recalls: Vec<String> = (0..out.evaluation.confusion.len())
                .map(|c| match out.evaluation.recall(c) {
                    Some(r) => format!("{c}:{r:.2}"),
                    None => format!("{c}:-"),
                })
                .collect();
            Ok(format!(
                "{}: accuracy {} on {} records; recall {}\nconfusion matrix: {}",
                out.model_path.display(),
                pct(out.evaluation.accuracy),
                out.evaluation.total(),
                recalls.join(" "),
                out.csv_path.display()
            ))
        }
        Command::Report { svg } => {
            let out = pipeline::report(ws, *svg)?;
            let files: Vec<String> = out.files.iter().map(|p| p.display().to_string()).collect();
            Ok(format!(
                "{} generations; wrote {}",
                out.generations,
                files.join(", ")
            ))
        }
    })
}
