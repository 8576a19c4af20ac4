use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gncopt_cli::config::read_pairs;
use gncopt_cli::verify::{parse_charts, parse_dims};
use gncopt_cli::{exit, parse_sweep, run, run_sweep, train_mlp, verify, write_csv, write_factor_csv, write_outputs, ConfigError, RunConfig, TrainConfig, VerifyOptions};

#[derive(Parser)]
#[command(name = "gncopt", version, about = "Momentum methods on SPD matrices in generalized normal coordinates")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one optimizer on one problem and write its trajectory.
    Run(RunArgs),
    /// Run a verification suite and print a JSON report.
    Verify(VerifyArgs),
    /// Train a small network on synthetic blobs.
    TrainMlp(TrainArgs),
    /// Run many configurations from a list file.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct Output {
    /// key=value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination; the JSON summary goes next to it. Without it the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Explicit path for the JSON summary.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Fill the elapsed_ms column (output is then no longer reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    output: Output,
    /// logdet, metric-nearness, gmm or rosenbrock.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    size: Option<String>,
    #[arg(long)]
    condition: Option<String>,
    #[arg(long)]
    components: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    chart: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// exact, linear or quadratic.
    #[arg(long)]
    truncation: Option<String>,
    /// first-order or corrected.
    #[arg(long)]
    exactness: Option<String>,
    #[arg(long)]
    mu_step: Option<String>,
    #[arg(long)]
    precond_init: Option<String>,
    #[arg(long)]
    logit_step: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

impl RunArgs {
    fn pairs(&self) -> Vec<(String, String)> {
        let flags = [
            ("problem", &self.problem),
            ("size", &self.size),
            ("condition", &self.condition),
            ("components", &self.components),
            ("samples", &self.samples),
            ("optimizer", &self.optimizer),
            ("chart", &self.chart),
            ("beta", &self.beta),
            ("alpha", &self.alpha),
            ("truncation", &self.truncation),
            ("exactness", &self.exactness),
            ("mu-step", &self.mu_step),
            ("precond-init", &self.precond_init),
            ("logit-step", &self.logit_step),
            ("lr", &self.lr),
            ("iters", &self.iters),
            ("seed", &self.seed),
        ];
        collect(&flags, self.output.timing)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    output: Output,
    /// Layer sizes, e.g. 10,32,32,2.
    #[arg(long)]
    layers: Option<String>,
    /// ifkfac, kfac or sgd.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    separation: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    beta1: Option<String>,
    #[arg(long)]
    alpha1: Option<String>,
    #[arg(long)]
    beta2: Option<String>,
    #[arg(long)]
    alpha2: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// Factor update period T.
    #[arg(long)]
    period: Option<String>,
    /// Moving-average weight of the baseline.
    #[arg(long)]
    theta: Option<String>,
    /// `none` or threshold:beta1 pairs, e.g. 100:0.0002,500:0.002.
    #[arg(long)]
    warmup: Option<String>,
    #[arg(long)]
    truncation: Option<String>,
}

impl TrainArgs {
    fn pairs(&self) -> Vec<(String, String)> {
        let flags = [
            ("layers", &self.layers),
            ("optimizer", &self.optimizer),
            ("iters", &self.iters),
            ("batch", &self.batch),
            ("samples", &self.samples),
            ("separation", &self.separation),
            ("seed", &self.seed),
            ("beta1", &self.beta1),
            ("alpha1", &self.alpha1),
            ("beta2", &self.beta2),
            ("alpha2", &self.alpha2),
            ("gamma", &self.gamma),
            ("lambda", &self.lambda),
            ("period", &self.period),
            ("theta", &self.theta),
            ("warmup", &self.warmup),
            ("truncation", &self.truncation),
        ];
        collect(&flags, self.output.timing)
    }
}

fn collect(flags: &[(&str, &Option<String>)], timing: bool) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> =
        flags.iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))).collect();
    if timing {
        out.push(("timing".into(), "true".into()));
    }
    out
}

#[derive(Args)]
struct VerifyArgs {
    /// orthonormality, pullbacks, equivalence, ode, transport-correction, all, or one equivalence check.
    suite: String,
    /// `all` or a comma-separated list of chart names.
    #[arg(long, default_value = "all")]
    charts: String,
    #[arg(long, default_value = "2,3,5")]
    dims: String,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// RK4 steps for the ODE oracles.
    #[arg(long, default_value_t = 256)]
    steps: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// One configuration per line as key=value settings, with out= naming the CSV.
    #[arg(long)]
    list: PathBuf,
    /// Number of configurations to run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

enum Failure {
    Usage(String),
    Other(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn emit_csv(rows: &[gncopt_cli::Row]) -> anyhow::Result<()> {
    let stdout = std::io::stdout();
    write_csv(rows, stdout.lock())
}

fn finish(passed: bool, error: &Option<String>) -> i32 {
    if let Some(e) = error {
        eprintln!("gncopt: {e}");
    }
    if passed {
        exit::OK
    } else {
        exit::FAILED
    }
}

fn cmd_run(args: RunArgs) -> Result<i32, Failure> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.output.config {
        cfg.apply(&read_pairs(path)?)?;
    }
    cfg.apply(&args.pairs())?;
    let rec = run(&cfg)?;
    match &args.output.out {
        Some(out) => write_outputs(&rec, out, args.output.summary.as_deref())?,
        None => {
            emit_csv(&rec.rows)?;
            if let Some(s) = &args.output.summary {
                std::fs::write(s, serde_json::to_string_pretty(&rec.summary).context("summary")? + "\n").context("writing summary")?;
            }
        }
    }
    Ok(finish(rec.passed(), &rec.summary.error))
}

fn cmd_train(args: TrainArgs) -> Result<i32, Failure> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &args.output.config {
        cfg.apply(&read_pairs(path)?)?;
    }
    cfg.apply(&args.pairs())?;
    let rec = train_mlp(&cfg)?;
    match &args.output.out {
        Some(out) => {
            write_outputs(&rec.run, out, args.output.summary.as_deref())?;
            let f = std::fs::File::create(out.with_extension("factors.csv")).context("factor log")?;
            write_factor_csv(&rec.factors, f)?;
        }
        None => emit_csv(&rec.run.rows)?,
    }
    Ok(finish(rec.run.passed(), &rec.run.summary.error))
}

fn cmd_verify(args: VerifyArgs) -> Result<i32, Failure> {
    let opts = VerifyOptions {
        charts: parse_charts(&args.charts)?,
        dims: parse_dims(&args.dims)?,
        trials: args.trials,
        tol: args.tol,
        seed: args.seed,
        steps: args.steps,
    };
    let (report, passed) = verify(&args.suite, &opts)?;
    let text = serde_json::to_string_pretty(&report).context("report")? + "\n";
    match &args.out {
        Some(p) => std::fs::write(p, text).context("writing report")?,
        None => std::io::stdout().write_all(text.as_bytes()).context("stdout")?,
    }
    Ok(if passed { exit::OK } else { exit::FAILED })
}

fn cmd_sweep(args: SweepArgs) -> Result<i32, Failure> {
    let text = std::fs::read_to_string(&args.list).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", args.list.display())))?;
    let base = args.list.parent().map(PathBuf::from).unwrap_or_default();
    let jobs = parse_sweep(&text, &base)?;
    let outcomes = run_sweep(&jobs, args.jobs)?;
    let mut ok = true;
    for o in &outcomes {
        ok &= o.passed;
        let status = if o.passed { "ok" } else { "FAILED" };
        match &o.error {
            Some(e) => println!("line {:>3}  {status:<6}  {}  ({e})", o.line, o.out.display()),
            None => println!("line {:>3}  {status:<6}  {}", o.line, o.out.display()),
        }
    }
    Ok(if ok { exit::OK } else { exit::FAILED })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::TrainMlp(a) => cmd_train(a),
        Cmd::Sweep(a) => cmd_sweep(a),
    };
    let code = match result {
        Ok(c) => c,
        Err(Failure::Usage(msg)) => {
            eprintln!("gncopt: {msg}");
            exit::USAGE
        }
        Err(Failure::Other(e)) => {
            eprintln!("gncopt: {e:#}");
            exit::FAILED
        }
    };
    ExitCode::from(code as u8)
}
