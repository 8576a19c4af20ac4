//! The `run` driver: one problem, one optimizer, one deterministic trajectory.

use gncopt_core::chart::represent_tau;
use gncopt_core::linalg::{min_eig, DenseMatrix, Vector};
use gncopt_core::optim::{
    step_adam, step_ahn, step_alimisis21, step_eucl_momentum, step_gnc_momentum, step_precond_gnc, step_precond_inverse_free,
    step_precond_newton, step_rgd, step_riem_momentum, AdamState, AhnState, Alimisis21State, EuclMomentumState, GmmOptimizer,
    GmmStepConfig, GncState, PrecondGncState, RiemMomentumState, StepConfig,
};
use gncopt_core::problems::{
    gmm_problem, gmm_samples, logdet_problem, metric_nearness_problem, rosenbrock_problem, EuclideanProblem, GmmSpec, GmmTruth,
    SpdProblem,
};
use gncopt_core::rng::{random_spd_with_condition, random_sym, stream, streams};
use gncopt_core::{Chart, ChartKind, EuclGrad, FactorState, SpdPoint};
use rand::seq::index::sample;

use crate::config::{ConfigError, OptimizerName, ProblemName, RunConfig};
use crate::record::{Recorder, RunRecord};

/// The identity factor of `kind`; τ is size×size, or size²×size² on the Kronecker charts.
pub fn identity_factor(kind: ChartKind, size: usize) -> FactorState {
    let eye = |n| DenseMatrix::identity(n, n);
    match kind {
        ChartKind::DenseSymA => FactorState::DenseA(eye(size)),
        ChartKind::DenseSymB => FactorState::DenseB(eye(size)),
        ChartKind::DenseSymC => FactorState::DenseC(eye(size)),
        ChartKind::TriangularA => FactorState::LowerA(gncopt_core::LowerTriangular::identity(size)),
        ChartKind::GaussianAugmented => FactorState::Gaussian { l: eye(size - 1), mu: Vector::zeros(size - 1) },
        ChartKind::RankOneArrow => {
            FactorState::Arrow { a: 1.0, b: Vector::zeros(size - 1), c: Vector::from_element(size - 1, 1.0) }
        }
        ChartKind::KroneckerBlockK | ChartKind::KroneckerBlockC => FactorState::Kronecker { k: eye(size), c: eye(size) },
    }
}

fn step_cfg(cfg: &RunConfig) -> Result<StepConfig, ConfigError> {
    StepConfig::new(cfg.beta, cfg.alpha, cfg.truncation).map_err(|e| ConfigError(e.to_string()))
}

/// Runs the configured experiment. Configuration problems are errors; numerical
/// failures end the trajectory early and are reported in the summary.
pub fn run(cfg: &RunConfig) -> Result<RunRecord<RunConfig>, ConfigError> {
    cfg.validate()?;
    let sc = step_cfg(cfg)?;
    match cfg.problem {
        ProblemName::Logdet | ProblemName::MetricNearness => run_spd(cfg, &sc),
        ProblemName::Gmm => run_gmm(cfg, &sc),
        ProblemName::Rosenbrock => Ok(run_rosenbrock(cfg, &sc)),
    }
}

enum SpdOpt {
    Gnc(Chart, GncState),
    Rgd(SpdPoint),
    Riem(SpdPoint, RiemMomentumState),
    Eucl(SpdPoint, EuclMomentumState),
    Ahn(SpdPoint, AhnState),
    Alimisis(SpdPoint, Alimisis21State),
}

impl SpdOpt {
    fn tau(&self) -> gncopt_core::Result<SpdPoint> {
        match self {
            SpdOpt::Gnc(c, _) => represent_tau(c.reference()),
            SpdOpt::Rgd(t) | SpdOpt::Riem(t, _) | SpdOpt::Eucl(t, _) | SpdOpt::Ahn(t, _) | SpdOpt::Alimisis(t, _) => Ok(t.clone()),
        }
    }

    fn step(&mut self, p: &dyn SpdProblem, sc: &StepConfig) -> gncopt_core::Result<()> {
        let g = |t: &SpdPoint| EuclGrad::new(p.grad_tau(t));
        match self {
            SpdOpt::Gnc(c, s) => *c = step_gnc_momentum(s, c, p, sc)?,
            SpdOpt::Rgd(t) => *t = step_rgd(t, &g(t), sc)?,
            SpdOpt::Riem(t, s) => *t = step_riem_momentum(s, t, &g(t), sc)?,
            SpdOpt::Eucl(t, s) => *t = step_eucl_momentum(s, t, &g(t), sc)?,
            SpdOpt::Ahn(t, s) => *t = step_ahn(s, t, &g(t), sc)?,
            SpdOpt::Alimisis(t, s) => *t = step_alimisis21(s, t, &g(t), sc)?,
        }
        Ok(())
    }
}

fn run_spd(cfg: &RunConfig, sc: &StepConfig) -> Result<RunRecord<RunConfig>, ConfigError> {
    let uses_chart = cfg.optimizer == OptimizerName::GncMomentum;
    let kron = uses_chart && matches!(cfg.chart, ChartKind::KroneckerBlockK | ChartKind::KroneckerBlockC);
    let k = if kron { cfg.size * cfg.size } else { cfg.size };
    if uses_chart && matches!(cfg.chart, ChartKind::GaussianAugmented | ChartKind::RankOneArrow) && k < 2 {
        return Err(ConfigError(format!("the {} chart needs size ≥ 2", cfg.chart)));
    }
    let mut rng = stream(cfg.seed, streams::PROBLEM);
    let (problem, minimizer): (Box<dyn SpdProblem>, Option<SpdPoint>) = match cfg.problem {
        ProblemName::Logdet => {
            let p = logdet_problem(random_spd_with_condition(&mut rng, k, cfg.condition));
            let m = p.minimizer().ok();
            (Box::new(p), m)
        }
        _ => (Box::new(metric_nearness_problem(random_sym(&mut rng, k, 1.0))), None),
    };
    let mut opt = match cfg.optimizer {
        OptimizerName::GncMomentum => {
            let chart = Chart::new(cfg.chart, identity_factor(cfg.chart, cfg.size)).map_err(|e| ConfigError(e.to_string()))?;
            SpdOpt::Gnc(chart, GncState { w: None, exactness: cfg.exactness })
        }
        OptimizerName::Rgd => SpdOpt::Rgd(SpdPoint::identity(k)),
        OptimizerName::RiemMomentum => SpdOpt::Riem(SpdPoint::identity(k), Default::default()),
        OptimizerName::EuclMomentum => SpdOpt::Eucl(SpdPoint::identity(k), Default::default()),
        OptimizerName::Ahn => SpdOpt::Ahn(SpdPoint::identity(k), Default::default()),
        _ => SpdOpt::Alimisis(SpdPoint::identity(k), Default::default()),
    };

    let mut rec = Recorder::new(cfg.timing);
    let mut spd_ok = true;
    let mut error = None;
    let mut last_tau = None;
    for it in 0..=cfg.iters {
        if it > 0 {
            if let Err(e) = opt.step(problem.as_ref(), sc) {
                error = Some(format!("iteration {it}: {e}"));
                break;
            }
        }
        let tau = match opt.tau() {
            Ok(t) => t,
            Err(e) => {
                error = Some(format!("iteration {it}: {e}"));
                spd_ok = false;
                break;
            }
        };
        let loss = problem.loss(&tau);
        let me = min_eig(tau.value());
        spd_ok &= me > 0.0;
        rec.row(it, loss, problem.grad_tau(&tau).norm(), Some(me));
        if !loss.is_finite() {
            error = Some(format!("non-finite loss at iteration {it}"));
            break;
        }
        last_tau = Some(tau);
    }
    rec.invariant("spd", spd_ok);
    if let (Some(star), Some(tau)) = (&minimizer, &last_tau) {
        rec.metric("rel_error", (tau.as_matrix() - star.as_matrix()).norm() / star.as_matrix().norm());
    }
    Ok(rec.finish(cfg.clone(), error))
}

fn run_gmm(cfg: &RunConfig, sc: &StepConfig) -> Result<RunRecord<RunConfig>, ConfigError> {
    let d = cfg.size;
    let truth = GmmTruth::random(cfg.seed, d, cfg.components);
    let data = gmm_samples(cfg.seed, &truth, cfg.samples);
    if cfg.components > cfg.samples {
        return Err(ConfigError("more components than samples".into()));
    }
    // Means start at distinct random samples, covariances at the identity.
    let mut rng = stream(cfg.seed, streams::INIT);
    let comps = sample(&mut rng, cfg.samples, cfg.components)
        .into_iter()
        .map(|j| FactorState::Gaussian { l: DenseMatrix::identity(d, d), mu: data.column(j).into_owned() })
        .collect();
    let spec = GmmSpec::new(Vector::zeros(cfg.components), comps, data).map_err(|e| ConfigError(e.to_string()))?;
    let gcfg = GmmStepConfig { component: *sc, logit_step: cfg.logit_step, exactness: cfg.exactness };
    let mut opt = GmmOptimizer::new(spec, gcfg).map_err(|e| ConfigError(e.to_string()))?;

    let mut rec = Recorder::new(cfg.timing);
    let (mut structure_ok, mut spd_ok) = (true, true);
    let mut error = None;
    let mut first = None;
    for it in 0..=cfg.iters {
        if it > 0 {
            if let Err(e) = opt.step() {
                error = Some(format!("iteration {it}: {e}"));
                break;
            }
        }
        let eval = match gmm_problem(opt.spec()) {
            Ok(e) => e,
            Err(e) => {
                error = Some(format!("iteration {it}: {e}"));
                break;
            }
        };
        let mut me = f64::INFINITY;
        for f in &opt.spec().components {
            match represent_tau(f) {
                Ok(tau) => {
                    structure_ok &= tau.as_matrix()[(d, d)] == 1.0;
                    me = me.min(min_eig(tau.value()));
                }
                Err(_) => spd_ok = false,
            }
        }
        spd_ok &= me > 0.0;
        let gn2: f64 = eval.congruence.iter().map(|y| y.norm_squared()).sum::<f64>() + eval.logit_grad.norm_squared();
        rec.row(it, eval.nll, gn2.sqrt(), Some(me));
        first.get_or_insert(eval.nll);
        if !eval.nll.is_finite() {
            error = Some(format!("non-finite loss at iteration {it}"));
            break;
        }
    }
    rec.invariant("spd", spd_ok);
    rec.invariant("augmented-corner", structure_ok);
    if let (Some(f), Ok(last)) = (first, opt.loss()) {
        rec.metric("nll_decrease", f - last);
    }
    Ok(rec.finish(cfg.clone(), error))
}

enum EuclOpt {
    Adam(AdamState),
    Precond(Chart, PrecondGncState),
    Newton(DenseMatrix),
    InverseFree(DenseMatrix),
}

fn run_rosenbrock(cfg: &RunConfig, sc: &StepConfig) -> RunRecord<RunConfig> {
    let n = cfg.size;
    let p = rosenbrock_problem(n);
    let mut mu = Vector::from_fn(n, |i, _| if i % 2 == 0 { -1.2 } else { 1.0 });
    let r = cfg.precond_init.sqrt();
    let mut opt = match cfg.optimizer {
        OptimizerName::Adam => EuclOpt::Adam(AdamState::default()),
        OptimizerName::Newton => EuclOpt::Newton(DenseMatrix::identity(n, n) / r),
        OptimizerName::InverseFree => EuclOpt::InverseFree(DenseMatrix::identity(n, n) * r),
        _ => {
            let f = match cfg.chart {
                ChartKind::RankOneArrow => {
                    FactorState::Arrow { a: r, b: Vector::zeros(n - 1), c: Vector::from_element(n - 1, r) }
                }
                ChartKind::TriangularA => {
                    FactorState::LowerA(gncopt_core::LowerTriangular::new(DenseMatrix::identity(n, n) * r))
                }
                _ => FactorState::DenseA(DenseMatrix::identity(n, n) * r),
            };
            EuclOpt::Precond(Chart::new(cfg.chart, f).expect("valid identity factor"), PrecondGncState { w: None, exactness: cfg.exactness })
        }
    };
    let mut rec = Recorder::new(cfg.timing);
    let mut error = None;
    for it in 0..=cfg.iters {
        if it > 0 {
            let res = match &mut opt {
                EuclOpt::Adam(s) => {
                    let g = p.grad(&mu);
                    step_adam(s, mu.as_mut_slice(), g.as_slice(), cfg.lr);
                    Ok(())
                }
                EuclOpt::Precond(c, s) => step_precond_gnc(s, &mu, c, &p, sc, cfg.mu_step).map(|(m, nc)| {
                    mu = m;
                    *c = nc;
                }),
                EuclOpt::Newton(b) => step_precond_newton(&mu, b, &p, sc).map(|(m, nb)| {
                    mu = m;
                    *b = nb;
                }),
                EuclOpt::InverseFree(a) => step_precond_inverse_free(&mu, a, &p, sc).map(|(m, na)| {
                    mu = m;
                    *a = na;
                }),
            };
            if let Err(e) = res {
                error = Some(format!("iteration {it}: {e}"));
                break;
            }
        }
        let loss = p.loss(&mu);
        rec.row(it, loss, p.grad(&mu).norm(), None);
        if !loss.is_finite() {
            error = Some(format!("non-finite loss at iteration {it}"));
            break;
        }
    }
    rec.metric("distance_to_optimum", (&mu - Vector::from_element(n, 1.0)).norm());
    rec.finish(cfg.clone(), error)
}
