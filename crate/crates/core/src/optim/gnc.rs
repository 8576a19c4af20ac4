//! Momentum as plain Euclidean momentum in generalized normal coordinates.

use super::StepConfig;
use crate::chart::{chart_map, momentum_transform, pullback_grad, Chart, CoordElement, Exactness, FactorState, GradData};
use crate::error::{Error, Result};
use crate::linalg::{mat_exp, DenseMatrix, SymmetricMatrix, TruncationMode, Vector};
use crate::problems::SpdProblem;

/// Momentum expressed in the current chart; `None` is the zero element.
#[derive(Clone, Debug, Default)]
pub struct GncState {
    pub w: Option<CoordElement>,
    pub exactness: Exactness,
}

/// One iteration given the gradient data at the chart's reference:
/// m ← αw + β·g(η₀); η₁ ← −m; move the factor; carry m into the new chart.
pub fn step_gnc_with_grad(state: &mut GncState, chart: &Chart, grad: &GradData, cfg: &StepConfig) -> Result<Chart> {
    let g = pullback_grad(chart, grad)?;
    step_gnc_coord(state, chart, &g, cfg)
}

/// One iteration given the chart gradient g(η₀) itself.
pub fn step_gnc_coord(state: &mut GncState, chart: &Chart, g: &CoordElement, cfg: &StepConfig) -> Result<Chart> {
    chart.check_coord(g)?;
    let m = match &state.w {
        Some(w) => {
            chart.check_coord(w)?;
            CoordElement::lin_comb(cfg.alpha, w, cfg.beta, g)?
        }
        None => g.scale(cfg.beta),
    };
    let factor = chart_map(chart, &m.scale(-1.0), cfg.truncation)?;
    let next = chart.rebase(factor)?;
    state.w = Some(momentum_transform(chart, &next, &m, state.exactness)?);
    Ok(next)
}

/// One iteration on an SPD objective.
pub fn step_gnc_momentum(state: &mut GncState, chart: &Chart, problem: &dyn SpdProblem, cfg: &StepConfig) -> Result<Chart> {
    if chart.reference().tau_dim() != problem.dim() {
        return Err(Error::Incompatible(format!(
            "chart represents {}x{} matrices, problem is {}-dimensional",
            chart.reference().tau_dim(),
            chart.reference().tau_dim(),
            problem.dim()
        )));
    }
    let grad = problem.grad_data(chart.reference())?;
    step_gnc_with_grad(state, chart, &grad, cfg)
}

/// Structured NGD for a Gaussian N(μ, LLᵀ): μ ← μ − γΣg_μ, L ← L·Expm(−γLᵀg_ΣL).
pub fn step_sngd_gaussian(
    mu: &Vector,
    l: &DenseMatrix,
    g_mu: &Vector,
    g_sigma: &SymmetricMatrix,
    gamma: f64,
    mode: TruncationMode,
) -> Result<(Vector, DenseMatrix)> {
    FactorState::Gaussian { l: l.clone(), mu: mu.clone() }.validate()?;
    let sigma = l * l.transpose();
    let mu_new = mu - sigma * g_mu * gamma;
    let x = SymmetricMatrix::new(l.transpose() * g_sigma.as_matrix() * l * -gamma);
    let l_new = l * mat_exp(x.as_matrix(), mode)?;
    Ok((mu_new, l_new))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{represent_tau, ChartKind};
    use crate::linalg::{min_eig, spd_inverse};
    use crate::problems::logdet_problem;
    use crate::rng::{gaussian_vector, near_identity, random_spd, random_spd_with_condition, stream};
    use crate::spd::SpdPoint;

    fn cfg(beta: f64, alpha: f64, t: TruncationMode) -> StepConfig {
        StepConfig::new(beta, alpha, t).unwrap()
    }

    #[test]
    fn scalar_dense_a_step() {
        let chart = Chart::new(ChartKind::DenseSymA, FactorState::DenseA(DenseMatrix::identity(1, 1))).unwrap();
        let g = GradData::Full(SymmetricMatrix::from_diagonal(&[1.0]));
        let mut st = GncState::default();
        let next = step_gnc_with_grad(&mut st, &chart, &g, &cfg(0.5, 0.0, TruncationMode::Exact)).unwrap();
        let FactorState::DenseA(a) = next.reference() else { panic!() };
        assert!((a[(0, 0)] - (-0.25f64).exp()).abs() < 1e-15);
        let tau = represent_tau(next.reference()).unwrap();
        assert!((tau.as_matrix()[(0, 0)] - 0.60653066).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_keeps_reference() {
        let mut rng = stream(1, 0);
        let chart = Chart::new(ChartKind::DenseSymA, FactorState::DenseA(near_identity(&mut rng, 3, 0.3))).unwrap();
        let g = GradData::Full(SymmetricMatrix::zeros(3));
        let mut st = GncState::default();
        let next = step_gnc_with_grad(&mut st, &chart, &g, &cfg(0.5, 0.5, TruncationMode::Quadratic)).unwrap();
        assert_eq!(next.reference(), chart.reference());
    }

    #[test]
    fn dense_c_chart_matches_direct_transcription() {
        // m ← αm + β·C∇ℓCᵀ; C ← Expm(−½m)·C, written out independently.
        let mut rng = stream(2, 0);
        let p = logdet_problem(random_spd_with_condition(&mut rng, 4, 10.0));
        let c0 = near_identity(&mut rng, 4, 0.3);
        let (beta, alpha) = (0.05, 0.5);
        let mut chart = Chart::new(ChartKind::DenseSymC, FactorState::DenseC(c0.clone())).unwrap();
        let mut st = GncState::default();
        let mut c = c0;
        let mut m = DenseMatrix::zeros(4, 4);
        for _ in 0..20 {
            let tau = SymmetricMatrix::new(c.transpose() * &c);
            let g = p.target().as_matrix() - spd_inverse(&tau).unwrap().as_matrix();
            m = m * alpha + &c * g * c.transpose() * beta;
            m = SymmetricMatrix::new(m).into_matrix();
            c = mat_exp(&(&m * -0.5), TruncationMode::Exact).unwrap() * c;
            chart = step_gnc_momentum(&mut st, &chart, &p, &cfg(beta, alpha, TruncationMode::Exact)).unwrap();
            let FactorState::DenseC(got) = chart.reference() else { panic!() };
            assert!((got - &c).amax() < 1e-12);
        }
    }

    #[test]
    fn sngd_examples() {
        let one = DenseMatrix::identity(1, 1);
        let (mu, l) = step_sngd_gaussian(
            &Vector::zeros(1),
            &one,
            &Vector::from_element(1, 2.0),
            &SymmetricMatrix::zeros(1),
            0.1,
            TruncationMode::Exact,
        )
        .unwrap();
        assert!((mu[0] + 0.2).abs() < 1e-15);
        assert_eq!(l, one);
        let (mu, l) = step_sngd_gaussian(
            &Vector::from_element(1, 0.3),
            &one,
            &Vector::zeros(1),
            &SymmetricMatrix::zeros(1),
            0.1,
            TruncationMode::Exact,
        )
        .unwrap();
        assert_eq!((mu[0], l[(0, 0)]), (0.3, 1.0));
        assert!(step_sngd_gaussian(
            &Vector::zeros(2),
            &DenseMatrix::from_element(2, 3, 1.0),
            &Vector::zeros(2),
            &SymmetricMatrix::zeros(2),
            0.1,
            TruncationMode::Exact
        )
        .is_err());
    }

    /// Augmented log-det loss ℓ(τ) = Tr(τB) − log det τ on (d+1)×(d+1), viewed as a
    /// function of (μ, Σ) through τ = [[Σ + μμᵀ, μ], [μᵀ, 1]].
    fn gaussian_grads(b: &DenseMatrix, mu: &Vector, l: &DenseMatrix) -> (Vector, SymmetricMatrix) {
        let d = mu.len();
        let b11 = b.view((0, 0), (d, d)).into_owned();
        let b12 = b.view((0, d), (d, 1)).column(0).into_owned();
        let sigma = SymmetricMatrix::new(l * l.transpose());
        let g_sigma = SymmetricMatrix::new(&b11 - spd_inverse(&sigma).unwrap().as_matrix());
        let g_mu = (&b11 * mu + b12) * 2.0;
        (g_mu, g_sigma)
    }

    #[test]
    fn gnc_recovers_structured_ngd() {
        let d = 3;
        let mut rng = stream(3, 0);
        let b = random_spd(&mut rng, d + 1).into_value().into_matrix();
        let mut mu = gaussian_vector(&mut rng, d) * 0.3;
        let mut l = near_identity(&mut rng, d, 0.3);
        let mut chart = Chart::new(ChartKind::GaussianAugmented, FactorState::Gaussian { l: l.clone(), mu: mu.clone() }).unwrap();
        let gamma = 0.05;
        let c = cfg(2.0 * gamma, 0.0, TruncationMode::Exact);
        let mut st = GncState::default();
        for _ in 0..20 {
            let (g_mu, g_sigma) = gaussian_grads(&b, &mu, &l);
            let g2 = (&g_mu - g_sigma.as_matrix() * &mu * 2.0) * 0.5;
            let data = GradData::GaussianBlocks { g1: g_sigma.clone(), g2 };
            chart = step_gnc_with_grad(&mut st, &chart, &data, &c).unwrap();
            (mu, l) = step_sngd_gaussian(&mu, &l, &g_mu, &g_sigma, gamma, TruncationMode::Exact).unwrap();
            let FactorState::Gaussian { l: lg, mu: mg } = chart.reference() else { panic!() };
            assert!((lg - &l).amax() < 1e-9 && (mg - &mu).amax() < 1e-9);
        }
    }

    #[test]
    fn logdet_converges_with_quadratic_truncation() {
        let mut rng = stream(4, 0);
        let p = logdet_problem(random_spd_with_condition(&mut rng, 4, 20.0));
        let star = p.minimizer().unwrap();
        let mut chart = Chart::new(ChartKind::DenseSymA, FactorState::DenseA(DenseMatrix::identity(4, 4))).unwrap();
        let mut st = GncState::default();
        let c = cfg(0.1, 0.5, TruncationMode::Quadratic);
        for _ in 0..500 {
            chart = step_gnc_momentum(&mut st, &chart, &p, &c).unwrap();
            assert!(min_eig(represent_tau(chart.reference()).unwrap().value()) > 0.0);
        }
        let tau: SpdPoint = represent_tau(chart.reference()).unwrap();
        assert!((tau.as_matrix() - star.as_matrix()).norm() / star.as_matrix().norm() < 1e-8);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = logdet_problem(SpdPoint::identity(3));
        let chart = Chart::new(ChartKind::DenseSymA, FactorState::DenseA(DenseMatrix::identity(2, 2))).unwrap();
        let mut st = GncState::default();
        assert!(step_gnc_momentum(&mut st, &chart, &p, &cfg(0.1, 0.0, TruncationMode::Exact)).is_err());
    }
}
