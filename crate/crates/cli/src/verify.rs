//! The `verify` driver: named suites with JSON reports.

use gncopt_core::verify::{
    correction_suite, equivalence_harness, ode_suite, orthonormality_suite, pullback_suite, OdeConfig, CHECKS,
};
use gncopt_core::ChartKind;
use serde_json::{json, Value};

use crate::config::ConfigError;

pub const SUITES: [&str; 6] = ["orthonormality", "pullbacks", "equivalence", "ode", "transport-correction", "all"];

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    pub charts: Vec<ChartKind>,
    pub dims: Vec<usize>,
    pub trials: usize,
    pub tol: f64,
    pub seed: u64,
    pub steps: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { charts: ChartKind::ALL.to_vec(), dims: vec![2, 3, 5], trials: 20, tol: 1e-6, seed: 0, steps: 256 }
    }
}

/// `all` or a comma-separated list of chart names; an empty selection is rejected.
pub fn parse_charts(s: &str) -> Result<Vec<ChartKind>, ConfigError> {
    let s = s.trim();
    if s == "all" {
        return Ok(ChartKind::ALL.to_vec());
    }
    if s.is_empty() || s == "none" {
        return Err(ConfigError("--charts selects no chart; use `all` or a list of chart names".into()));
    }
    s.split(',').map(|c| c.trim().parse().map_err(|e: gncopt_core::Error| ConfigError(e.to_string()))).collect()
}

pub fn parse_dims(s: &str) -> Result<Vec<usize>, ConfigError> {
    let dims: Vec<usize> = s
        .split(',')
        .map(|d| d.trim().parse().map_err(|_| ConfigError(format!("invalid dimension list `{s}`"))))
        .collect::<Result<_, _>>()?;
    if dims.is_empty() || dims.iter().any(|&d| d == 0 || d > 8) {
        return Err(ConfigError("dimensions must be between 1 and 8".into()));
    }
    Ok(dims)
}

fn report(name: &str, passed: bool, body: Value) -> (Value, bool) {
    (json!({ "suite": name, "passed": passed, "report": body }), passed)
}

fn failed(name: &str, e: gncopt_core::Error) -> (Value, bool) {
    report(name, false, json!({ "error": e.to_string() }))
}

/// Runs a suite, an individual equivalence check, or everything. Returns the JSON
/// report and whether it passed.
pub fn verify(suite: &str, opts: &VerifyOptions) -> Result<(Value, bool), ConfigError> {
    if !(opts.tol > 0.0) {
        return Err(ConfigError("--tol must be positive".into()));
    }
    if opts.charts.is_empty() {
        return Err(ConfigError("no charts selected".into()));
    }
    let out = match suite {
        "orthonormality" => {
            let r = orthonormality_suite(&opts.charts, &opts.dims, opts.trials, opts.tol, opts.seed);
            let passed = r.passed;
            report(suite, passed, serde_json::to_value(r).expect("serializable"))
        }
        "pullbacks" => match pullback_suite(opts.seed) {
            Ok(checks) => {
                let passed = checks.iter().all(|c| c.passed);
                report(suite, passed, serde_json::to_value(checks).expect("serializable"))
            }
            Err(e) => failed(suite, e),
        },
        "equivalence" => {
            let mut all = Vec::new();
            let mut passed = true;
            for name in CHECKS {
                let (v, p) = verify(name, opts)?;
                passed &= p;
                all.push(v);
            }
            report(suite, passed, Value::Array(all))
        }
        "ode" => {
            let cfg = OdeConfig::new(opts.steps).map_err(|e| ConfigError(e.to_string()))?;
            match ode_suite(opts.seed, 5, &cfg) {
                Ok(r) => {
                    let passed = r.passed;
                    report(suite, passed, serde_json::to_value(r).expect("serializable"))
                }
                Err(e) => failed(suite, e),
            }
        }
        "transport-correction" => match correction_suite(opts.seed, 5) {
            Ok(r) => {
                let passed = r.passed;
                report(suite, passed, serde_json::to_value(r).expect("serializable"))
            }
            Err(e) => failed(suite, e),
        },
        "all" => {
            let mut all = Vec::new();
            let mut passed = true;
            for s in SUITES.iter().filter(|s| **s != "all") {
                let (v, p) = verify(s, opts)?;
                passed &= p;
                all.push(v);
            }
            report(suite, passed, Value::Array(all))
        }
        name if CHECKS.contains(&name) => match equivalence_harness(name, opts.seed) {
            Ok(r) => {
                let passed = r.passed;
                report(name, passed, serde_json::to_value(r).expect("serializable"))
            }
            Err(e) => failed(name, e),
        },
        other => {
            return Err(ConfigError(format!(
                "unknown suite `{other}`; expected one of {} or an equivalence check ({})",
                SUITES.join(", "),
                CHECKS.join(", ")
            )))
        }
    };
    Ok(out)
}
