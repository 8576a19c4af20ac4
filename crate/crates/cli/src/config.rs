//! Run and training configurations, settable from `key=value` files and flags.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use clap::ValueEnum;
use gncopt_core::optim::PrecondConfig;
use gncopt_core::{ChartKind, Exactness, TruncationMode};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// A configuration problem the user can fix: bad key, bad value, unknown name.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(key: &str, value: &str, why: impl fmt::Display) -> ConfigError {
    ConfigError(format!("invalid value `{value}` for `{key}`: {why}"))
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e| bad(key, value, e))
}

fn parse_enum<T: ValueEnum>(key: &str, value: &str) -> Result<T, ConfigError> {
    T::from_str(value.trim(), true).map_err(|e| bad(key, value, e))
}

fn parse_serde<T: DeserializeOwned>(key: &str, value: &str) -> Result<T, ConfigError> {
    serde_json::from_value(serde_json::Value::String(value.trim().to_string())).map_err(|e| bad(key, value, e))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-").to_ascii_lowercase()
}

/// Splits `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected key=value, got `{line}`", n + 1)))?;
        out.push((normalize(k), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    parse_pairs(&text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemName {
    Logdet,
    MetricNearness,
    Gmm,
    Rosenbrock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerName {
    /// Momentum in generalized normal coordinates (SPD problems and mixtures).
    GncMomentum,
    Rgd,
    RiemMomentum,
    EuclMomentum,
    Ahn,
    Alimisis21,
    Adam,
    /// Newton-like step with a factored preconditioner moved by GNC momentum.
    PrecondGnc,
    Newton,
    InverseFree,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TrainOptimizer {
    Ifkfac,
    Kfac,
    Sgd,
}

/// Everything that determines a `run` trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunConfig {
    pub problem: ProblemName,
    /// k for SPD problems, n for Rosenbrock, d for mixtures; p for Kronecker charts (τ is p²×p²).
    pub size: usize,
    /// Condition number of the random log-det target.
    pub condition: f64,
    pub components: usize,
    pub samples: usize,
    pub optimizer: OptimizerName,
    pub chart: ChartKind,
    pub beta: f64,
    pub alpha: f64,
    pub truncation: TruncationMode,
    pub exactness: Exactness,
    /// Step on μ for the Newton-like methods.
    pub mu_step: f64,
    /// The Newton-like preconditioners start from τ = S⁻¹ = precond_init·I.
    pub precond_init: f64,
    /// Step on the mixing logits.
    pub logit_step: f64,
    /// Adam learning rate.
    pub lr: f64,
    pub iters: usize,
    pub seed: u64,
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: ProblemName::Logdet,
            size: 10,
            condition: 100.0,
            components: 3,
            samples: 2000,
            optimizer: OptimizerName::GncMomentum,
            chart: ChartKind::DenseSymA,
            beta: 0.01,
            alpha: 0.5,
            truncation: TruncationMode::Quadratic,
            exactness: Exactness::FirstOrder,
            mu_step: 0.5,
            precond_init: 1e-3,
            logit_step: 0.1,
            lr: 0.01,
            iters: 2000,
            seed: 0,
            timing: false,
        }
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 18] = [
        "problem", "size", "condition", "components", "samples", "optimizer", "chart", "beta", "alpha", "truncation",
        "exactness", "mu-step", "precond-init", "logit-step", "lr", "iters", "seed", "timing",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = normalize(key);
        match key.as_str() {
            "problem" => self.problem = parse_enum(&key, value)?,
            "size" => self.size = parse(&key, value)?,
            "condition" => self.condition = parse(&key, value)?,
            "components" => self.components = parse(&key, value)?,
            "samples" => self.samples = parse(&key, value)?,
            "optimizer" => self.optimizer = parse_enum(&key, value)?,
            "chart" => self.chart = parse(&key, value)?,
            "beta" => self.beta = parse(&key, value)?,
            "alpha" => self.alpha = parse(&key, value)?,
            "truncation" => self.truncation = parse(&key, value)?,
            "exactness" => self.exactness = parse_serde(&key, value)?,
            "mu-step" => self.mu_step = parse(&key, value)?,
            "precond-init" => self.precond_init = parse(&key, value)?,
            "logit-step" => self.logit_step = parse(&key, value)?,
            "lr" => self.lr = parse(&key, value)?,
            "iters" => self.iters = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "timing" => self.timing = parse_bool(&key, value)?,
            _ => return Err(ConfigError(format!("unknown run setting `{key}`"))),
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<(), ConfigError> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    /// Cross-field checks that do not need the problem data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        use OptimizerName::*;
        use ProblemName::*;
        if self.size == 0 {
            return Err(ConfigError("size must be positive".into()));
        }
        let ok = match self.problem {
            Logdet | MetricNearness => matches!(self.optimizer, GncMomentum | Rgd | RiemMomentum | EuclMomentum | Ahn | Alimisis21),
            Gmm => self.optimizer == GncMomentum,
            Rosenbrock => matches!(self.optimizer, Adam | PrecondGnc | Newton | InverseFree),
        };
        if !ok {
            return Err(ConfigError(format!(
                "optimizer `{}` does not apply to problem `{}`",
                self.optimizer.to_possible_value().unwrap().get_name(),
                self.problem.to_possible_value().unwrap().get_name()
            )));
        }
        if self.problem == Rosenbrock && self.size < 2 {
            return Err(ConfigError("rosenbrock needs size ≥ 2".into()));
        }
        if self.problem == Rosenbrock
            && self.optimizer == PrecondGnc
            && !matches!(self.chart, ChartKind::DenseSymA | ChartKind::TriangularA | ChartKind::RankOneArrow)
        {
            return Err(ConfigError(format!("chart `{}` cannot carry a Newton-like preconditioner", self.chart)));
        }
        if self.problem == Logdet && !(self.condition >= 1.0) {
            return Err(ConfigError("condition must be at least 1".into()));
        }
        if self.problem == Gmm && (self.components == 0 || self.samples == 0) {
            return Err(ConfigError("mixtures need at least one component and one sample".into()));
        }
        if !(self.precond_init > 0.0) {
            return Err(ConfigError("precond-init must be positive".into()));
        }
        if !(self.beta > 0.0) || !(0.0..1.0).contains(&self.alpha) {
            return Err(ConfigError("need beta > 0 and alpha in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Everything that determines a `train-mlp` trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainConfig {
    pub layers: Vec<usize>,
    pub optimizer: TrainOptimizer,
    pub iters: usize,
    pub batch: usize,
    pub samples: usize,
    pub separation: f64,
    pub seed: u64,
    pub precond: PrecondConfig,
    pub timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layers: vec![10, 32, 32, 2],
            optimizer: TrainOptimizer::Ifkfac,
            iters: 500,
            batch: 64,
            samples: 1024,
            separation: 3.0,
            seed: 0,
            precond: PrecondConfig::default(),
            timing: false,
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    value.split(',').map(|s| parse(key, s)).collect()
}

/// `none`, or comma-separated `threshold:beta1` pairs.
fn parse_warmup(key: &str, value: &str) -> Result<Vec<(usize, f64)>, ConfigError> {
    if value.trim() == "none" || value.trim().is_empty() {
        return Ok(vec![]);
    }
    value
        .split(',')
        .map(|p| {
            let (t, b) = p.split_once(':').ok_or_else(|| bad(key, value, "expected threshold:beta1"))?;
            Ok((parse(key, t)?, parse(key, b)?))
        })
        .collect()
}

impl TrainConfig {
    pub const KEYS: [&'static str; 19] = [
        "layers", "optimizer", "iters", "batch", "samples", "separation", "seed", "beta1", "alpha1", "beta2", "alpha2",
        "gamma", "lambda", "period", "theta", "warmup", "truncation", "timing", "lr",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = normalize(key);
        let p = &mut self.precond;
        match key.as_str() {
            "layers" => self.layers = parse_list(&key, value)?,
            "optimizer" => self.optimizer = parse_enum(&key, value)?,
            "iters" => self.iters = parse(&key, value)?,
            "batch" => self.batch = parse(&key, value)?,
            "samples" => self.samples = parse(&key, value)?,
            "separation" => self.separation = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "beta1" => p.beta1 = parse(&key, value)?,
            "alpha1" => p.alpha1 = parse(&key, value)?,
            // The weight stepsize doubles as the SGD learning rate.
            "beta2" | "lr" => p.beta2 = parse(&key, value)?,
            "alpha2" => p.alpha2 = parse(&key, value)?,
            "gamma" => p.gamma = parse(&key, value)?,
            "lambda" => p.lambda = parse(&key, value)?,
            "period" => p.period_t = parse(&key, value)?,
            "theta" => p.theta = parse(&key, value)?,
            "warmup" => p.warmup = parse_warmup(&key, value)?,
            "truncation" => p.truncation = parse(&key, value)?,
            "timing" => self.timing = parse_bool(&key, value)?,
            _ => return Err(ConfigError(format!("unknown train-mlp setting `{key}`"))),
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<(), ConfigError> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.layers.len() < 2 || self.layers.contains(&0) {
            return Err(ConfigError("layers need at least two positive sizes".into()));
        }
        if *self.layers.last().unwrap() != 2 {
            return Err(ConfigError("the blob data have two classes, so the last layer must be 2".into()));
        }
        if self.batch == 0 || self.batch > self.samples {
            return Err(ConfigError("batch must be between 1 and the sample count".into()));
        }
        self.precond.validate().map_err(|e| ConfigError(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_skip_comments_and_blanks() {
        let p = parse_pairs("# header\nbeta = 0.2\n\nmu_step=1 # trailing\n").unwrap();
        assert_eq!(p, vec![("beta".into(), "0.2".into()), ("mu-step".into(), "1".into())]);
        assert!(parse_pairs("beta 0.2").is_err());
    }

    #[test]
    fn run_settings_round_trip() {
        let mut c = RunConfig::default();
        c.apply(&parse_pairs("problem=rosenbrock\noptimizer=precond-gnc\nchart=rank-one-arrow\nexactness=corrected\ntruncation=linear").unwrap())
            .unwrap();
        assert_eq!(c.problem, ProblemName::Rosenbrock);
        assert_eq!(c.chart, ChartKind::RankOneArrow);
        assert_eq!(c.exactness, Exactness::Corrected);
        assert_eq!(c.truncation, TruncationMode::Linear);
        c.validate().unwrap();
        assert!(c.set("bogus", "1").is_err());
        assert!(c.set("chart", "nope").is_err());
        c.set("optimizer", "rgd").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn every_listed_key_is_settable() {
        let run_values = ["gmm", "4", "10", "2", "100", "adam", "dense-sym-C", "0.1", "0.2", "exact", "first-order", "1", "0.01", "0.1", "0.01", "5", "7", "true"];
        let mut c = RunConfig::default();
        for (k, v) in RunConfig::KEYS.iter().zip(run_values) {
            c.set(k, v).unwrap();
        }
        let train_values = [
            "4,8,2", "kfac", "10", "8", "64", "2", "3", "0.1", "0.2", "0.3", "0.4", "0", "0.01", "5", "0.5", "10:0.001", "quadratic", "false", "0.2",
        ];
        let mut t = TrainConfig::default();
        for (k, v) in TrainConfig::KEYS.iter().zip(train_values) {
            t.set(k, v).unwrap();
        }
        assert_eq!(t.precond.warmup, vec![(10, 0.001)]);
        t.validate().unwrap();
    }

    #[test]
    fn warmup_none_clears_the_schedule() {
        let mut t = TrainConfig::default();
        t.set("warmup", "none").unwrap();
        assert!(t.precond.warmup.is_empty());
        assert!(t.set("warmup", "10").is_err());
    }
}
