//! The `sweep` driver: one run per line of a list file, executed in parallel.
//!
//! Each non-comment line holds whitespace-separated `key=value` settings. `out=`
//! names the CSV and is required; `cmd=train-mlp` selects training instead of `run`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, RunConfig, TrainConfig};
use crate::record::write_outputs;
use crate::run::run;
use crate::train::{train_mlp, write_factor_csv};

#[derive(Clone, Debug, PartialEq)]
pub enum Job {
    Run(RunConfig, PathBuf),
    Train(TrainConfig, PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JobOutcome {
    pub line: usize,
    pub out: PathBuf,
    pub passed: bool,
    pub error: Option<String>,
}

/// Parses the list; relative output paths are resolved against `base`.
pub fn parse_sweep(text: &str, base: &Path) -> Result<Vec<(usize, Job)>, ConfigError> {
    let mut jobs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |e: ConfigError| ConfigError(format!("line {}: {}", n + 1, e.0));
        let mut cmd = "run".to_string();
        let mut out = None;
        let mut pairs = Vec::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| at(ConfigError(format!("expected key=value, got `{tok}`"))))?;
            match k {
                "cmd" => cmd = v.to_string(),
                "out" => out = Some(base.join(v)),
                _ => pairs.push((k.to_string(), v.to_string())),
            }
        }
        let out = out.ok_or_else(|| at(ConfigError("missing out=".into())))?;
        let job = match cmd.as_str() {
            "run" => {
                let mut c = RunConfig::default();
                c.apply(&pairs).map_err(at)?;
                c.validate().map_err(at)?;
                Job::Run(c, out)
            }
            "train-mlp" => {
                let mut c = TrainConfig::default();
                c.apply(&pairs).map_err(at)?;
                c.validate().map_err(at)?;
                Job::Train(c, out)
            }
            other => return Err(at(ConfigError(format!("unknown cmd `{other}`")))),
        };
        jobs.push((n + 1, job));
    }
    if jobs.is_empty() {
        return Err(ConfigError("the sweep list is empty".into()));
    }
    Ok(jobs)
}

fn execute(line: usize, job: &Job) -> JobOutcome {
    let (out, result) = match job {
        Job::Run(c, out) => (
            out,
            run(c).map_err(anyhow::Error::from).and_then(|rec| {
                write_outputs(&rec, out, None)?;
                Ok((rec.passed(), rec.summary.error.clone()))
            }),
        ),
        Job::Train(c, out) => (
            out,
            train_mlp(c).map_err(anyhow::Error::from).and_then(|rec| {
                write_outputs(&rec.run, out, None)?;
                write_factor_csv(&rec.factors, std::fs::File::create(out.with_extension("factors.csv"))?)?;
                Ok((rec.run.passed(), rec.run.summary.error.clone()))
            }),
        ),
    };
    match result {
        Ok((passed, error)) => JobOutcome { line, out: out.clone(), passed, error },
        Err(e) => JobOutcome { line, out: out.clone(), passed: false, error: Some(e.to_string()) },
    }
}

/// Runs every job on a pool of `jobs` threads; outcomes keep the list order.
pub fn run_sweep(list: &[(usize, Job)], jobs: usize) -> anyhow::Result<Vec<JobOutcome>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    Ok(pool.install(|| list.par_iter().map(|(line, job)| execute(*line, job)).collect()))
}
