//! Kronecker-factored preconditioning for a weight matrix W (d×p) with
//! S⁻¹ ≈ (KKᵀ) ⊗ (CCᵀ). The inverse-free variant moves K and C in their own
//! charts; the baseline inverts moving averages of the KFAC statistics.

use super::PrecondConfig;
use crate::error::{Error, Result};
use crate::linalg::{mat_exp, spd_inverse, DenseMatrix, SymmetricMatrix};
use crate::problems::LayerStats;

/// Per-layer state of the inverse-free optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct IfkfacLayer {
    /// p×p, with KKᵀ approximating the inverse of the input statistics.
    pub k: DenseMatrix,
    /// d×d, with CCᵀ approximating the inverse of the output statistics.
    pub c: DenseMatrix,
    pub m_k: DenseMatrix,
    pub m_c: DenseMatrix,
    pub m_w: DenseMatrix,
}

impl IfkfacLayer {
    /// K = I_p, C = I_d and zero momenta for a d×p weight.
    pub fn new(d: usize, p: usize) -> Self {
        IfkfacLayer {
            k: DenseMatrix::identity(p, p),
            c: DenseMatrix::identity(d, d),
            m_k: DenseMatrix::zeros(p, p),
            m_c: DenseMatrix::zeros(d, d),
            m_w: DenseMatrix::zeros(d, p),
        }
    }

    /// The preconditioned direction CCᵀ·G·KKᵀ.
    pub fn precondition(&self, g: &DenseMatrix) -> DenseMatrix {
        &self.c * (self.c.transpose() * g * &self.k) * self.k.transpose()
    }
}

/// Per-layer state of the KFAC baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct KfacLayer {
    pub a_ema: SymmetricMatrix,
    pub g_ema: SymmetricMatrix,
    /// (a_ema + λI)⁻¹.
    pub kk: SymmetricMatrix,
    /// (g_ema + λI)⁻¹.
    pub cc: SymmetricMatrix,
    pub m_w: DenseMatrix,
}

impl KfacLayer {
    pub fn new(d: usize, p: usize) -> Self {
        KfacLayer {
            a_ema: SymmetricMatrix::identity(p),
            g_ema: SymmetricMatrix::identity(d),
            kk: SymmetricMatrix::identity(p),
            cc: SymmetricMatrix::identity(d),
            m_w: DenseMatrix::zeros(d, p),
        }
    }
}

/// Momentum SGD with weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdLayer {
    pub m_w: DenseMatrix,
}

impl SgdLayer {
    pub fn new(d: usize, p: usize) -> Self {
        SgdLayer { m_w: DenseMatrix::zeros(d, p) }
    }
}

fn check_layer(w: &DenseMatrix, grad: &DenseMatrix, stats: Option<&LayerStats>) -> Result<()> {
    if w.shape() != grad.shape() {
        return Err(Error::Shape(format!("weight {:?} vs gradient {:?}", w.shape(), grad.shape())));
    }
    if let Some(s) = stats {
        if s.mu_aa.dim() != w.ncols() || s.mu_gg.dim() != w.nrows() {
            return Err(Error::Shape("layer statistics do not match the weight".into()));
        }
    }
    Ok(())
}

/// m ← α₂m + direction + γW; W ← W − β₂m.
fn weight_step(m_w: &mut DenseMatrix, w: &mut DenseMatrix, direction: DenseMatrix, cfg: &PrecondConfig) {
    *m_w = &*m_w * cfg.alpha2 + direction + &*w * cfg.gamma;
    *w -= &*m_w * cfg.beta2;
}

/// One inverse-free step. Every `period_t` iterations both factors move from the
/// same snapshot:
/// m_K ← α₁m_K + β₁/(2d)·(Tr(H_C)H_K + c²KᵀK − dI), K ← K·Expm(−m_K), and
/// symmetrically for C, with H_K = KᵀμₐₐK, H_C = CᵀμggC, c² = λTr(CᵀC), κ² = λTr(KᵀK).
/// With a polynomial truncation nothing here factorizes or inverts a matrix.
pub fn step_ifkfac(
    layer: &mut IfkfacLayer,
    w: &mut DenseMatrix,
    stats: &LayerStats,
    grad: &DenseMatrix,
    cfg: &PrecondConfig,
    iter: usize,
) -> Result<()> {
    check_layer(w, grad, Some(stats))?;
    if layer.k.nrows() != w.ncols() || layer.c.nrows() != w.nrows() {
        return Err(Error::Shape("preconditioner factors do not match the weight".into()));
    }
    if cfg.updates_factors(iter) {
        let beta1 = cfg.beta1_at(iter);
        let (d, p) = (w.nrows(), w.ncols());
        let (k, c) = (&layer.k, &layer.c);
        let h_k = k.transpose() * stats.mu_aa.as_matrix() * k;
        let h_c = c.transpose() * stats.mu_gg.as_matrix() * c;
        let ktk = k.transpose() * k;
        let ctc = c.transpose() * c;
        let c2 = cfg.lambda * ctc.trace();
        let kappa2 = cfg.lambda * ktk.trace();
        let gk = &h_k * h_c.trace() + ktk * c2 - DenseMatrix::identity(p, p) * d as f64;
        let gc = &h_c * h_k.trace() + ctc * kappa2 - DenseMatrix::identity(d, d) * p as f64;
        layer.m_k = &layer.m_k * cfg.alpha1 + gk * (beta1 / (2.0 * d as f64));
        layer.m_c = &layer.m_c * cfg.alpha1 + gc * (beta1 / (2.0 * p as f64));
        let ek = mat_exp(&(-&layer.m_k), cfg.truncation)?;
        let ec = mat_exp(&(-&layer.m_c), cfg.truncation)?;
        layer.k = &layer.k * ek;
        layer.c = &layer.c * ec;
    }
    let direction = layer.precondition(grad);
    weight_step(&mut layer.m_w, w, direction, cfg);
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::Diverged(iter));
    }
    Ok(())
}

/// One KFAC step. Every `period_t` iterations the statistics enter moving
/// averages (initialized to I) and the damped factors are re-inverted.
pub fn step_kfac_baseline(
    layer: &mut KfacLayer,
    w: &mut DenseMatrix,
    stats: &LayerStats,
    grad: &DenseMatrix,
    cfg: &PrecondConfig,
    iter: usize,
) -> Result<()> {
    check_layer(w, grad, Some(stats))?;
    if cfg.updates_factors(iter) {
        layer.a_ema = layer.a_ema.scale(cfg.theta).add(&stats.mu_aa.scale(1.0 - cfg.theta));
        layer.g_ema = layer.g_ema.scale(cfg.theta).add(&stats.mu_gg.scale(1.0 - cfg.theta));
        let damp = |s: &SymmetricMatrix| s.add(&SymmetricMatrix::identity(s.dim()).scale(cfg.lambda));
        layer.kk = spd_inverse(&damp(&layer.a_ema))?;
        layer.cc = spd_inverse(&damp(&layer.g_ema))?;
    }
    let direction = layer.cc.as_matrix() * grad * layer.kk.as_matrix();
    weight_step(&mut layer.m_w, w, direction, cfg);
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::Diverged(iter));
    }
    Ok(())
}

/// Momentum SGD with the same weight update as the preconditioned methods.
pub fn step_sgd_momentum(layer: &mut SgdLayer, w: &mut DenseMatrix, grad: &DenseMatrix, cfg: &PrecondConfig) -> Result<()> {
    check_layer(w, grad, None)?;
    weight_step(&mut layer.m_w, w, grad.clone(), cfg);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{chart_map, pullback_grad, Chart, ChartKind, FactorState, GradData};
    use crate::linalg::{audit, inverse, TruncationMode};
    use crate::rng::{gaussian_matrix, random_spd, stream};

    fn stats(seed: u64, d: usize, p: usize) -> LayerStats {
        let mut rng = stream(seed, 0);
        LayerStats {
            mu_aa: random_spd(&mut rng, p).into_value(),
            mu_gg: random_spd(&mut rng, d).into_value(),
        }
    }

    fn plain(truncation: TruncationMode) -> PrecondConfig {
        PrecondConfig {
            beta1: 0.05,
            alpha1: 0.0,
            alpha2: 0.0,
            gamma: 0.0,
            beta2: 0.1,
            period_t: 1,
            warmup: vec![],
            truncation,
            ..PrecondConfig::default()
        }
    }

    #[test]
    fn scalar_ifkfac_step() {
        // d = p = 1, μ_AA = 2, μ_GG = 3, λ = 0: the factor gradient is 3·2 − 1 = 5.
        let st = LayerStats { mu_aa: SymmetricMatrix::from_diagonal(&[2.0]), mu_gg: SymmetricMatrix::from_diagonal(&[3.0]) };
        let mut layer = IfkfacLayer::new(1, 1);
        let mut w = DenseMatrix::from_element(1, 1, 1.0);
        let cfg = PrecondConfig { lambda: 0.0, ..plain(TruncationMode::Exact) };
        step_ifkfac(&mut layer, &mut w, &st, &DenseMatrix::from_element(1, 1, 4.0), &cfg, 0).unwrap();
        let e = (-0.05f64 * 2.5).exp();
        assert!((layer.k[(0, 0)] - e).abs() < 1e-15);
        assert!((layer.c[(0, 0)] - e).abs() < 1e-15);
        assert!((w[(0, 0)] - (1.0 - 0.1 * e.powi(4) * 4.0)).abs() < 1e-15);
    }

    #[test]
    fn ifkfac_factor_step_matches_chart_step() {
        let (d, p) = (3, 4);
        let st = stats(1, d, p);
        let mut rng = stream(1, 1);
        let mut layer = IfkfacLayer::new(d, p);
        layer.k += gaussian_matrix(&mut rng, p, p) * 0.1;
        layer.c += gaussian_matrix(&mut rng, d, d) * 0.1;
        let before = layer.clone();
        let cfg = plain(TruncationMode::Exact);
        let mut w = gaussian_matrix(&mut rng, d, p);
        step_ifkfac(&mut layer, &mut w, &st, &DenseMatrix::zeros(d, p), &cfg, 0).unwrap();

        let factor = FactorState::Kronecker { k: before.k.clone(), c: before.c.clone() };
        let data = GradData::Kfac { mu_aa: st.mu_aa.clone(), mu_gg: st.mu_gg.clone(), lambda: cfg.lambda };
        for (kind, got) in [(ChartKind::KroneckerBlockK, &layer.k), (ChartKind::KroneckerBlockC, &layer.c)] {
            let chart = Chart::new(kind, factor.clone()).unwrap();
            let g = pullback_grad(&chart, &data).unwrap();
            // The chart mask is 1/(2√·), so a chart step of 2β₁ reproduces β₁/(2·).
            let next = chart_map(&chart, &g.scale(-2.0 * cfg.beta1), TruncationMode::Exact).unwrap();
            let FactorState::Kronecker { k, c } = next else { unreachable!() };
            let want = if kind == ChartKind::KroneckerBlockK { k } else { c };
            assert!((got - want).amax() < 1e-12);
        }
    }

    #[test]
    fn ifkfac_fixed_point() {
        let (d, p) = (2, 3);
        let st = stats(2, d, p);
        let cfg = PrecondConfig { beta1: 0.2, alpha1: 0.3, ..plain(TruncationMode::Exact) };
        let mut layer = IfkfacLayer::new(d, p);
        let mut w = DenseMatrix::zeros(d, p);
        for it in 0..3000 {
            step_ifkfac(&mut layer, &mut w, &st, &DenseMatrix::zeros(d, p), &cfg, it).unwrap();
        }
        let (k, c) = (&layer.k, &layer.c);
        let tr_hc = (c.transpose() * st.mu_gg.as_matrix() * c).trace();
        let c2 = cfg.lambda * (c.transpose() * c).trace();
        let want_k = inverse(&((st.mu_aa.as_matrix() * tr_hc + DenseMatrix::identity(p, p) * c2) / d as f64)).unwrap();
        assert!((k * k.transpose() - want_k).amax() < 1e-6);
        let tr_hk = (k.transpose() * st.mu_aa.as_matrix() * k).trace();
        let k2 = cfg.lambda * (k.transpose() * k).trace();
        let want_c = inverse(&((st.mu_gg.as_matrix() * tr_hk + DenseMatrix::identity(d, d) * k2) / p as f64)).unwrap();
        assert!((c * c.transpose() - want_c).amax() < 1e-6);
    }

    #[test]
    fn ifkfac_makes_no_audited_calls() {
        let (d, p) = (4, 5);
        let st = stats(3, d, p);
        let cfg = PrecondConfig { period_t: 1, ..PrecondConfig::default() };
        let mut layer = IfkfacLayer::new(d, p);
        let mut rng = stream(3, 1);
        let mut w = gaussian_matrix(&mut rng, d, p);
        let g = gaussian_matrix(&mut rng, d, p);
        let (r, calls) = audit::measure(|| {
            (0..20).try_for_each(|it| step_ifkfac(&mut layer, &mut w, &st, &g, &cfg, it))
        });
        r.unwrap();
        assert_eq!(calls, 0);
    }

    #[test]
    fn kfac_baseline_matches_dense_solve() {
        let (d, p) = (3, 2);
        let st = stats(4, d, p);
        let cfg = PrecondConfig { theta: 0.5, ..plain(TruncationMode::Linear) };
        let mut layer = KfacLayer::new(d, p);
        let mut rng = stream(4, 1);
        let mut w = gaussian_matrix(&mut rng, d, p);
        let w0 = w.clone();
        let g = gaussian_matrix(&mut rng, d, p);
        step_kfac_baseline(&mut layer, &mut w, &st, &g, &cfg, 0).unwrap();
        let a = (DenseMatrix::identity(p, p) + st.mu_aa.as_matrix()) * 0.5 + DenseMatrix::identity(p, p) * cfg.lambda;
        let gg = (DenseMatrix::identity(d, d) + st.mu_gg.as_matrix()) * 0.5 + DenseMatrix::identity(d, d) * cfg.lambda;
        // vec(CCᵀGKKᵀ) = (KKᵀ ⊗ CCᵀ)vec(G): solve the Kronecker system directly.
        let big = a.kronecker(&gg);
        let rhs = DenseMatrix::from_column_slice(d * p, 1, g.as_slice());
        let x = big.lu().solve(&rhs).unwrap();
        let want = &w0 - DenseMatrix::from_column_slice(d, p, x.as_slice()) * cfg.beta2;
        assert!((w - want).amax() < 1e-12);
    }

    #[test]
    fn kfac_overwrites_with_theta_zero() {
        let st = stats(5, 2, 2);
        let cfg = PrecondConfig { theta: 0.0, ..plain(TruncationMode::Linear) };
        let mut layer = KfacLayer::new(2, 2);
        let mut w = DenseMatrix::zeros(2, 2);
        step_kfac_baseline(&mut layer, &mut w, &st, &DenseMatrix::zeros(2, 2), &cfg, 0).unwrap();
        assert_eq!(layer.a_ema, st.mu_aa);
        assert_eq!(layer.g_ema, st.mu_gg);
    }

    #[test]
    fn sgd_momentum_scalar() {
        let cfg = PrecondConfig { alpha2: 0.5, gamma: 0.1, beta2: 0.2, ..PrecondConfig::default() };
        let mut layer = SgdLayer::new(1, 1);
        let mut w = DenseMatrix::from_element(1, 1, 1.0);
        let g = DenseMatrix::from_element(1, 1, 2.0);
        step_sgd_momentum(&mut layer, &mut w, &g, &cfg).unwrap();
        // m = 2 + 0.1 = 2.1, w = 1 − 0.42 = 0.58
        assert!((w[(0, 0)] - 0.58).abs() < 1e-15);
        step_sgd_momentum(&mut layer, &mut w, &g, &cfg).unwrap();
        // m = 1.05 + 2 + 0.058 = 3.108, w = 0.58 − 0.6216
        assert!((w[(0, 0)] - (0.58 - 0.6216)).abs() < 1e-14);
    }

    #[test]
    fn shape_errors() {
        let st = stats(6, 2, 3);
        let mut layer = IfkfacLayer::new(2, 3);
        let mut w = DenseMatrix::zeros(3, 2);
        let err = step_ifkfac(&mut layer, &mut w, &st, &DenseMatrix::zeros(3, 2), &PrecondConfig::default(), 0);
        assert!(matches!(err, Err(Error::Shape(_))));
    }
}
