//! Chart gradients against central finite differences of the loss along each
//! basis direction of the coordinate space.

use serde::Serialize;

use crate::chart::{chart_map, pullback_from_congruence, pullback_grad, random_factor, represent_tau, Chart, ChartKind, CoordElement, FactorState, GradData};
use crate::error::Result;
use crate::linalg::{log_det_spd, DenseMatrix, SymmetricMatrix, TruncationMode, Vector};
use crate::optim::precond_pullback;
use crate::problems::{
    gmm_problem, gmm_samples, logdet_problem, metric_nearness_problem, mlp_forward_backward, rosenbrock_problem, two_class_blobs,
    EuclideanProblem, GmmSpec, GmmTruth, MlpModel, SpdProblem,
};
use crate::rng::{gaussian_vector, near_identity, random_spd, random_sym, stream, streams};

pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PullbackCheck {
    pub chart: String,
    pub problem: String,
    pub rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

impl PullbackCheck {
    fn new(chart: &str, problem: &str, rel_err: f64, tol: f64) -> Self {
        PullbackCheck { chart: chart.into(), problem: problem.into(), rel_err, tol, passed: rel_err < tol }
    }
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if num.is_nan() {
        f64::INFINITY
    } else {
        num / den.max(1e-300)
    }
}

/// ‖g − g_fd‖ / ‖g‖ with g_fd,i = [f(hUᵢ) − f(−hUᵢ)] / 2h over the chart's orthonormal basis.
pub fn chart_gradient_error(chart: &Chart, g: &CoordElement, f: impl Fn(&FactorState) -> Result<f64>) -> Result<f64> {
    let mut analytic = Vec::new();
    let mut fd = Vec::new();
    for u in chart.basis() {
        analytic.push(g.inner(&u)?);
        let plus = f(&chart_map(chart, &u.scale(FD_STEP), TruncationMode::Exact)?)?;
        let minus = f(&chart_map(chart, &u.scale(-FD_STEP), TruncationMode::Exact)?)?;
        fd.push((plus - minus) / (2.0 * FD_STEP));
    }
    Ok(rel(&analytic, &fd))
}

fn spd_checks(name: &str, p: &dyn SpdProblem, size: usize, seed: u64, out: &mut Vec<PullbackCheck>) -> Result<()> {
    let mut rng = stream(seed, streams::VERIFY);
    for kind in ChartKind::ALL {
        let factor = random_factor(kind, size, &mut rng);
        if factor.tau_dim() != p.dim() {
            continue;
        }
        let chart = Chart::new(kind, factor)?;
        let g = pullback_grad(&chart, &p.grad_data(chart.reference())?)?;
        let err = chart_gradient_error(&chart, &g, |f| p.loss_at_factor(f))?;
        out.push(PullbackCheck::new(kind.name(), name, err, 1e-6));
    }
    Ok(())
}

/// Every chart/problem pairing the optimizers use. Tolerance 1e-6, or 1e-5 for the mixture.
pub fn pullback_suite(seed: u64) -> Result<Vec<PullbackCheck>> {
    let mut rng = stream(seed, streams::PROBLEM);
    let mut out = Vec::new();

    // Size 3 gives a 3×3 τ on every chart but the Kronecker blocks, where size 2 gives 4×4.
    for (k, size) in [(3usize, 3usize), (4, 2)] {
        let target = random_spd(&mut rng, k);
        spd_checks("logdet", &logdet_problem(target), size, seed + 1, &mut out)?;
        let m = random_sym(&mut rng, k, 1.0);
        spd_checks("metric-nearness", &metric_nearness_problem(m), size, seed + 2, &mut out)?;
    }

    // Mixture through each component's Gaussian chart.
    let truth = GmmTruth::random(seed, 2, 2);
    let data = gmm_samples(seed, &truth, 60);
    let comps: Vec<FactorState> = (0..2)
        .map(|_| FactorState::Gaussian { l: near_identity(&mut rng, 2, 0.3), mu: gaussian_vector(&mut rng, 2) })
        .collect();
    let spec = GmmSpec::new(gaussian_vector(&mut rng, 2) * 0.3, comps, data)?;
    let eval = gmm_problem(&spec)?;
    for c in 0..2 {
        let chart = Chart::new(ChartKind::GaussianAugmented, spec.components[c].clone())?;
        let g = pullback_from_congruence(&chart, &eval.congruence[c])?;
        let err = chart_gradient_error(&chart, &g, |f| {
            let mut s = spec.clone();
            s.components[c] = f.clone();
            Ok(gmm_problem(&s)?.nll)
        })?;
        out.push(PullbackCheck::new(ChartKind::GaussianAugmented.name(), "gmm", err, 1e-5));
    }

    // Preconditioner loss ½[Tr(Hτ) − log det τ] at a Rosenbrock iterate.
    let n = 5;
    let ros = rosenbrock_problem(n);
    let mu = gaussian_vector(&mut rng, n) * 0.5;
    let h = SymmetricMatrix::new(ros.hessian_dense(&mu));
    let surrogate = |h: &SymmetricMatrix| {
        let h = h.clone();
        move |f: &FactorState| -> Result<f64> {
            let tau = represent_tau(f)?;
            Ok(0.5 * ((h.as_matrix() * tau.as_matrix()).trace() - log_det_spd(tau.value())?))
        }
    };
    for (kind, size) in [(ChartKind::DenseSymA, n), (ChartKind::TriangularA, n), (ChartKind::RankOneArrow, n)] {
        let chart = Chart::new(kind, random_factor(kind, size, &mut rng))?;
        let g = precond_pullback(&chart, &mu, &ros)?;
        let err = chart_gradient_error(&chart, &g, surrogate(&h))?;
        out.push(PullbackCheck::new(kind.name(), "rosenbrock-preconditioner", err, 1e-6));
    }

    // KFAC surrogate ½[Tr((μ_AA ⊗ μ_GG + λI)τ) − log det τ] on both Kronecker blocks.
    let (p, d, lambda) = (3, 2, 0.1);
    let mu_aa = random_spd(&mut rng, p).into_value();
    let mu_gg = random_spd(&mut rng, d).into_value();
    let factor = FactorState::Kronecker { k: near_identity(&mut rng, p, 0.3), c: near_identity(&mut rng, d, 0.3) };
    let curv = SymmetricMatrix::new(mu_aa.as_matrix().kronecker(mu_gg.as_matrix()) + DenseMatrix::identity(p * d, p * d) * lambda);
    for kind in [ChartKind::KroneckerBlockK, ChartKind::KroneckerBlockC] {
        let chart = Chart::new(kind, factor.clone())?;
        let g = pullback_grad(&chart, &GradData::Kfac { mu_aa: mu_aa.clone(), mu_gg: mu_gg.clone(), lambda })?;
        let err = chart_gradient_error(&chart, &g, surrogate(&curv))?;
        out.push(PullbackCheck::new(kind.name(), "kfac-surrogate", err, 1e-6));
    }

    // Back-propagated weight gradients of a small network.
    let blobs = two_class_blobs(seed, 32, 3, 2.0);
    let model = MlpModel::init(&[3, 4, 2], seed)?;
    let outp = mlp_forward_backward(&model, &blobs.x, &blobs.labels)?;
    let mut analytic = Vec::new();
    let mut fd = Vec::new();
    for (l, g) in outp.grads.iter().enumerate() {
        for idx in 0..g.len() {
            let mut plus = model.clone();
            plus.weights[l][idx] += FD_STEP;
            let mut minus = model.clone();
            minus.weights[l][idx] -= FD_STEP;
            analytic.push(g[idx]);
            fd.push((plus.loss(&blobs.x, &blobs.labels)? - minus.loss(&blobs.x, &blobs.labels)?) / (2.0 * FD_STEP));
        }
    }
    out.push(PullbackCheck::new("euclidean", "mlp", rel(&analytic, &fd), 1e-6));

    // The Euclidean Rosenbrock gradient used by Adam.
    let analytic: Vec<f64> = ros.grad(&mu).iter().copied().collect();
    let fd: Vec<f64> = (0..n)
        .map(|i| {
            let mut e = Vector::zeros(n);
            e[i] = FD_STEP;
            (ros.loss(&(&mu + &e)) - ros.loss(&(&mu - &e))) / (2.0 * FD_STEP)
        })
        .collect();
    out.push(PullbackCheck::new("euclidean", "rosenbrock", rel(&analytic, &fd), 1e-6));
    Ok(out)
}
