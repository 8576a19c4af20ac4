//! Paired trajectories and slope fits behind the update equivalences.

use serde::Serialize;

use super::loglog_slope;
use crate::chart::{represent_tau, Chart, ChartKind, FactorState, GradData};
use crate::error::{Error, Result};
use crate::linalg::{inverse, spd_inverse, DenseMatrix, SymmetricMatrix, TruncationMode, Vector};
use crate::optim::{
    step_eucl_momentum, step_gnc_with_grad, step_precond_inverse_free, step_precond_newton, step_riem_momentum,
    step_sngd_gaussian, EuclMomentumState, GncState, RiemMomentumState, StepConfig,
};
use crate::problems::{logdet_problem, QuadraticProblem, SpdProblem};
use crate::rng::{gaussian_vector, near_identity, random_spd, random_spd_with_condition, stream, streams, Rng64};
use crate::spd::{EuclGrad, SpdPoint};

/// Stepsizes for the slope fits.
pub const SLOPE_BETAS: [f64; 4] = [1e-1, 3e-2, 1e-2, 3e-3];

pub const CHECKS: [&str; 6] = [
    "eq2-eq3",
    "gnc-sngd",
    "s-update-order",
    "inverse-free-newton",
    "a-b-first-order",
    "a-c-first-order",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    /// Largest entrywise difference along paired trajectories; passes below the threshold.
    MaxAbsDiff,
    /// Log-log slope of the difference against β; passes at or above the threshold.
    LoglogSlope,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub name: String,
    pub measure: Measure,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    /// Per-step differences, or per-β differences for slope fits.
    pub detail: Vec<f64>,
}

impl EquivalenceReport {
    fn max_diff(name: &str, detail: Vec<f64>, threshold: f64) -> Self {
        let value = detail.iter().copied().fold(0.0, f64::max);
        let passed = detail.iter().all(|d| d.is_finite()) && value < threshold;
        EquivalenceReport { name: name.into(), measure: Measure::MaxAbsDiff, value, threshold, passed, detail }
    }

    fn slope(name: &str, detail: Vec<f64>, threshold: f64) -> Self {
        let value = loglog_slope(&SLOPE_BETAS, &detail);
        EquivalenceReport { name: name.into(), measure: Measure::LoglogSlope, value, threshold, passed: value >= threshold, detail }
    }
}

/// Runs one named check.
pub fn equivalence_harness(name: &str, seed: u64) -> Result<EquivalenceReport> {
    let mut rng = stream(seed, streams::VERIFY);
    match name {
        "eq2-eq3" => eq2_eq3(&mut rng),
        "gnc-sngd" => gnc_sngd(&mut rng),
        "s-update-order" => s_update_order(&mut rng),
        "inverse-free-newton" => inverse_free_newton(&mut rng),
        "a-b-first-order" => chart_first_order(&mut rng, name, ChartKind::DenseSymB),
        "a-c-first-order" => chart_first_order(&mut rng, name, ChartKind::DenseSymC),
        _ => Err(Error::Unknown { what: "equivalence check", name: name.into() }),
    }
}

fn cfg(beta: f64, alpha: f64, t: TruncationMode) -> Result<StepConfig> {
    StepConfig::new(beta, alpha, t)
}

fn amax(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    (a - b).amax()
}

/// Riemannian momentum with parallel transport against Euclidean momentum with
/// its own transport: 20 steps on a log-det problem at k = 5.
fn eq2_eq3(rng: &mut Rng64) -> Result<EquivalenceReport> {
    let p = logdet_problem(random_spd_with_condition(rng, 5, 10.0));
    let tau0 = random_spd(rng, 5);
    let c = cfg(0.1, 0.6, TruncationMode::Exact)?;
    let (mut a, mut b) = (tau0.clone(), tau0);
    let (mut sa, mut sb) = (RiemMomentumState::default(), EuclMomentumState::default());
    let mut detail = Vec::with_capacity(20);
    for _ in 0..20 {
        a = step_riem_momentum(&mut sa, &a, &EuclGrad::new(p.grad_tau(&a)), &c)?;
        b = step_eucl_momentum(&mut sb, &b, &EuclGrad::new(p.grad_tau(&b)), &c)?;
        detail.push(amax(a.as_matrix(), b.as_matrix()));
    }
    Ok(EquivalenceReport::max_diff("eq2-eq3", detail, 1e-9))
}

/// Gradients of ℓ = Tr(τB) − log det τ in (μ, Σ) for τ = [[Σ + μμᵀ, μ], [μᵀ, 1]].
fn gaussian_grads(b: &DenseMatrix, mu: &Vector, l: &DenseMatrix) -> Result<(Vector, SymmetricMatrix)> {
    let d = mu.len();
    let b11 = b.view((0, 0), (d, d)).into_owned();
    let b12 = b.view((0, d), (d, 1)).column(0).into_owned();
    let sigma_inv = spd_inverse(&SymmetricMatrix::new(l * l.transpose()))?;
    Ok(((&b11 * mu + b12) * 2.0, SymmetricMatrix::new(b11 - sigma_inv.as_matrix())))
}

/// GNC on the Gaussian chart with β = 2γ, α = 0 and exact Expm against
/// structured NGD in (μ, L): 20 steps at d = 3.
fn gnc_sngd(rng: &mut Rng64) -> Result<EquivalenceReport> {
    let d = 3;
    let b = random_spd(rng, d + 1).into_value().into_matrix();
    let mut mu = gaussian_vector(rng, d) * 0.3;
    let mut l = near_identity(rng, d, 0.3);
    let mut chart = Chart::new(ChartKind::GaussianAugmented, FactorState::Gaussian { l: l.clone(), mu: mu.clone() })?;
    let gamma = 0.05;
    let c = cfg(2.0 * gamma, 0.0, TruncationMode::Exact)?;
    let mut st = GncState::default();
    let mut detail = Vec::with_capacity(20);
    for _ in 0..20 {
        // The chart consumes the τ-blocks g₁ = g_Σ and g₂ = ½(g_μ − 2g_Σμ) of the same loss.
        let FactorState::Gaussian { l: lc, mu: mc } = chart.reference() else { unreachable!() };
        let (g_mu_c, g_sigma_c) = gaussian_grads(&b, mc, lc)?;
        let g2 = (&g_mu_c - g_sigma_c.as_matrix() * mc * 2.0) * 0.5;
        chart = step_gnc_with_grad(&mut st, &chart, &GradData::GaussianBlocks { g1: g_sigma_c, g2 }, &c)?;
        let (g_mu, g_sigma) = gaussian_grads(&b, &mu, &l)?;
        (mu, l) = step_sngd_gaussian(&mu, &l, &g_mu, &g_sigma, gamma, TruncationMode::Exact)?;
        let FactorState::Gaussian { l: lg, mu: mg } = chart.reference() else { unreachable!() };
        detail.push(amax(lg, &l).max((mg - &mu).amax()));
    }
    Ok(EquivalenceReport::max_diff("gnc-sngd", detail, 1e-9))
}

fn quadratic(rng: &mut Rng64, k: usize) -> QuadraticProblem {
    QuadraticProblem::new(random_spd(rng, k).into_value(), gaussian_vector(rng, k))
}

/// ‖S⁺ − ((1 − β)S + βH)‖ for the reference Newton-like step.
fn s_update_order(rng: &mut Rng64) -> Result<EquivalenceReport> {
    let k = 4;
    let p = quadratic(rng, k);
    let b = near_identity(rng, k, 0.4);
    let s = &b * b.transpose();
    let h = p.hessian().as_matrix();
    let mu = gaussian_vector(rng, k);
    let detail = SLOPE_BETAS
        .iter()
        .map(|&beta| {
            let (_, bn) = step_precond_newton(&mu, &b, &p, &cfg(beta, 0.0, TruncationMode::Exact)?)?;
            Ok((&bn * bn.transpose() - (&s * (1.0 - beta) + h * beta)).norm())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquivalenceReport::slope("s-update-order", detail, 1.9))
}

/// Per-step τ difference between the linearly truncated inverse-free step (2β on
/// the A chart) and the exact Newton-like step (β on the B chart) from the same τ.
fn inverse_free_newton(rng: &mut Rng64) -> Result<EquivalenceReport> {
    let k = 4;
    let p = quadratic(rng, k);
    let a = near_identity(rng, k, 0.4);
    let b = inverse(&a.transpose())?;
    let mu = gaussian_vector(rng, k);
    let detail = SLOPE_BETAS
        .iter()
        .map(|&beta| {
            let (_, an) = step_precond_inverse_free(&mu, &a, &p, &cfg(2.0 * beta, 0.0, TruncationMode::Linear)?)?;
            let (_, bn) = step_precond_newton(&mu, &b, &p, &cfg(beta, 0.0, TruncationMode::Exact)?)?;
            let bi = inverse(&bn)?;
            Ok((&an * an.transpose() - bi.transpose() * bi).norm())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquivalenceReport::slope("inverse-free-newton", detail, 1.9))
}

/// One step on the A chart with linear truncation against one exact step on
/// another dense chart anchored at the same τ.
fn chart_first_order(rng: &mut Rng64, name: &str, other: ChartKind) -> Result<EquivalenceReport> {
    let k = 4;
    let a0 = near_identity(rng, k, 0.4);
    // A target A₀⁻ᵀNNᵀA₀⁻¹ keeps the chart gradient NNᵀ − I of order one.
    let n = near_identity(rng, k, 0.3);
    let ai = inverse(&a0)?;
    let p = logdet_problem(SpdPoint::new(SymmetricMatrix::new(ai.transpose() * &n * n.transpose() * &ai))?);
    let other_factor = match other {
        ChartKind::DenseSymB => FactorState::DenseB(inverse(&a0.transpose())?),
        _ => FactorState::DenseC(a0.transpose()),
    };
    let ca = Chart::new(ChartKind::DenseSymA, FactorState::DenseA(a0))?;
    let co = Chart::new(other, other_factor)?;
    let detail = SLOPE_BETAS
        .iter()
        .map(|&beta| {
            let ga = p.grad_data(ca.reference())?;
            let go = p.grad_data(co.reference())?;
            let na = step_gnc_with_grad(&mut GncState::default(), &ca, &ga, &cfg(beta, 0.0, TruncationMode::Linear)?)?;
            let no = step_gnc_with_grad(&mut GncState::default(), &co, &go, &cfg(beta, 0.0, TruncationMode::Exact)?)?;
            let (ta, to) = (represent_tau(na.reference())?, represent_tau(no.reference())?);
            Ok((ta.as_matrix() - to.as_matrix()).norm())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquivalenceReport::slope(name, detail, 1.9))
}
