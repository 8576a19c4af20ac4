//! Mixture of augmented zero-mean Gaussians N(x̃ | 0, τ_c) with x̃ = [x; 1] and
//! τ_c on the Gaussian-augmented submanifold.

use crate::chart::FactorState;
use crate::error::{Error, Result};
use crate::linalg::{log_abs_det, solve, DenseMatrix, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct GmmSpec {
    pub logits: Vector,
    /// `FactorState::Gaussian` factors, one per component.
    pub components: Vec<FactorState>,
    /// One sample per column.
    pub data: DenseMatrix,
}

impl GmmSpec {
    pub fn new(logits: Vector, components: Vec<FactorState>, data: DenseMatrix) -> Result<Self> {
        if components.is_empty() || logits.len() != components.len() {
            return Err(Error::Shape("one logit per component is required".into()));
        }
        if data.ncols() == 0 {
            return Err(Error::Config("empty data".into()));
        }
        for c in &components {
            match c {
                FactorState::Gaussian { mu, .. } if mu.len() == data.nrows() => c.validate()?,
                _ => return Err(Error::Shape("components must be gaussian factors of the data dimension".into())),
            }
        }
        Ok(GmmSpec {
            logits,
            components,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn weights(&self) -> Vector {
        softmax(&self.logits)
    }
}

/// Loss, responsibilities and gradients at one parameter value.
#[derive(Clone, Debug)]
pub struct GmmEval {
    /// Mean negative log-likelihood of the augmented samples.
    pub nll: f64,
    /// N×C responsibilities.
    pub resp: DenseMatrix,
    /// Per component, Aᵀ·∇_τℓ·A = (1/N)Σᵢ rᵢ·½(I − uᵢuᵢᵀ) with uᵢ = A⁻¹x̃ᵢ.
    pub congruence: Vec<DenseMatrix>,
    /// ∂ℓ/∂logits.
    pub logit_grad: Vector,
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax(z: &Vector) -> Vector {
    let lse = logsumexp(z.iter().copied());
    z.map(|v| (v - lse).exp())
}

/// Evaluates the mixture with factored solves on each L (no τ⁻¹ is formed).
pub fn gmm_problem(spec: &GmmSpec) -> Result<GmmEval> {
    let (d, n) = spec.data.shape();
    let cc = spec.components.len();
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let lse_logits = logsumexp(spec.logits.iter().copied());

    let mut logp = DenseMatrix::zeros(n, cc);
    let mut whitened = Vec::with_capacity(cc);
    for (c, comp) in spec.components.iter().enumerate() {
        let FactorState::Gaussian { l, mu } = comp else {
            return Err(Error::Shape("gaussian factor expected".into()));
        };
        let centered = DenseMatrix::from_fn(d, n, |i, j| spec.data[(i, j)] - mu[i]);
        let v = solve(l, &centered)?;
        let logdet = 2.0 * log_abs_det(l)?;
        let log_pi = spec.logits[c] - lse_logits;
        for j in 0..n {
            let quad = v.column(j).norm_squared() + 1.0;
            logp[(j, c)] = log_pi - 0.5 * ((d + 1) as f64 * ln2pi + logdet + quad);
        }
        whitened.push(v);
    }

    let mut resp = DenseMatrix::zeros(n, cc);
    let mut total = 0.0;
    for j in 0..n {
        let row = logp.row(j);
        let lp = logsumexp(row.iter().copied());
        total += lp;
        for c in 0..cc {
            resp[(j, c)] = (logp[(j, c)] - lp).exp();
        }
    }
    let nll = -total / n as f64;
    if !nll.is_finite() {
        return Err(Error::NonFinite("mixture likelihood"));
    }

    let inv_n = 1.0 / n as f64;
    let mut congruence = Vec::with_capacity(cc);
    for (c, v) in whitened.iter().enumerate() {
        let mut y = DenseMatrix::zeros(d + 1, d + 1);
        let mut rsum = 0.0;
        for j in 0..n {
            let r = resp[(j, c)];
            rsum += r;
            let u = Vector::from_fn(d + 1, |i, _| if i < d { v[(i, j)] } else { 1.0 });
            y.ger(-0.5 * r * inv_n, &u, &u, 1.0);
        }
        for i in 0..=d {
            y[(i, i)] += 0.5 * rsum * inv_n;
        }
        congruence.push(y);
    }
    let pi = softmax(&spec.logits);
    let logit_grad = Vector::from_fn(cc, |c, _| pi[c] - resp.column(c).sum() * inv_n);
    Ok(GmmEval {
        nll,
        resp,
        congruence,
        logit_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{chart_map, pullback_from_congruence, random_coord, represent_tau, Chart, ChartKind};
    use crate::linalg::{cholesky, log_det_spd, spd_inverse, SymmetricMatrix, TruncationMode};
    use crate::problems::data::{gmm_samples, GmmTruth};
    use crate::rng::{gaussian_vector, near_identity, stream};
    use crate::spd::SpdPoint;

    /// Independent evaluation through dense τ_c and its Cholesky factor.
    fn nll_via_tau(logits: &Vector, taus: &[SpdPoint], x: &DenseMatrix) -> f64 {
        let (d, n) = x.shape();
        let k = (d + 1) as f64;
        let pi = softmax(logits);
        let mut total = 0.0;
        for j in 0..n {
            let xt = Vector::from_fn(d + 1, |i, _| if i < d { x[(i, j)] } else { 1.0 });
            let mut p = 0.0;
            for (c, tau) in taus.iter().enumerate() {
                let l = cholesky(tau.value()).unwrap();
                let z = l.as_matrix().solve_lower_triangular(&xt).unwrap();
                let ld = log_det_spd(tau.value()).unwrap();
                p += pi[c] * (-0.5 * (k * (2.0 * std::f64::consts::PI).ln() + ld + z.norm_squared())).exp();
            }
            total += p.ln();
        }
        -total / n as f64
    }

    fn spec(seed: u64, d: usize, comps: usize, n: usize) -> GmmSpec {
        let mut rng = stream(seed, 0);
        let truth = GmmTruth::random(seed, d, comps);
        let data = gmm_samples(seed, &truth, n);
        let components = (0..comps)
            .map(|_| FactorState::Gaussian {
                l: near_identity(&mut rng, d, 0.3) * 1.5,
                mu: gaussian_vector(&mut rng, d),
            })
            .collect();
        GmmSpec::new(gaussian_vector(&mut rng, comps) * 0.3, components, data).unwrap()
    }

    #[test]
    fn single_point_example() {
        let s = GmmSpec::new(
            Vector::zeros(1),
            vec![FactorState::Gaussian {
                l: DenseMatrix::identity(1, 1),
                mu: Vector::zeros(1),
            }],
            DenseMatrix::zeros(1, 1),
        )
        .unwrap();
        let e = gmm_problem(&s).unwrap();
        assert!((e.nll - ((2.0 * std::f64::consts::PI).ln() + 0.5)).abs() < 1e-14);
        assert!((e.nll - 2.33787707).abs() < 1e-8);
    }

    #[test]
    fn responsibilities_sum_to_one() {
        let e = gmm_problem(&spec(1, 2, 3, 40)).unwrap();
        for j in 0..40 {
            assert!((e.resp.row(j).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn factored_loss_matches_dense_oracle() {
        let s = spec(2, 3, 2, 30);
        let taus: Vec<_> = s.components.iter().map(|c| represent_tau(c).unwrap()).collect();
        let e = gmm_problem(&s).unwrap();
        assert!((e.nll - nll_via_tau(&s.logits, &taus, &s.data)).abs() < 1e-12);
    }

    #[test]
    fn augmented_loss_is_shifted_standard_loss() {
        // With one component, log N(x̃|0,τ) = log N(x|μ,Σ) − ½log 2π − ½.
        let s = spec(3, 2, 1, 25);
        let FactorState::Gaussian { l, mu } = &s.components[0] else { panic!() };
        let sigma = SymmetricMatrix::new(l * l.transpose());
        let inv = spd_inverse(&sigma).unwrap();
        let ld = log_det_spd(&sigma).unwrap();
        let mut std_nll = 0.0;
        for j in 0..25 {
            let r = s.data.column(j) - mu;
            std_nll += 0.5 * (2.0 * (2.0 * std::f64::consts::PI).ln() + ld + r.dot(&(inv.as_matrix() * &r)));
        }
        std_nll /= 25.0;
        let e = gmm_problem(&s).unwrap();
        assert!((e.nll - std_nll - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tau_gradient_matches_closed_form() {
        // Aᵀ g A with g = −(1/N)Σ r·½(τ⁻¹x̃x̃ᵀτ⁻¹ − τ⁻¹) evaluated densely.
        let s = spec(4, 2, 2, 20);
        let e = gmm_problem(&s).unwrap();
        for (c, comp) in s.components.iter().enumerate() {
            let tau = represent_tau(comp).unwrap();
            let inv = tau.inverse().unwrap().into_matrix();
            let mut g = DenseMatrix::zeros(3, 3);
            for j in 0..20 {
                let xt = Vector::from_fn(3, |i, _| if i < 2 { s.data[(i, j)] } else { 1.0 });
                let w = &inv * xt;
                g -= (&w * w.transpose() - &inv) * (0.5 * e.resp[(j, c)] / 20.0);
            }
            let a = comp.dense_a().unwrap();
            assert!((a.transpose() * g * &a - &e.congruence[c]).amax() < 1e-12);
        }
    }

    #[test]
    fn chart_gradient_matches_finite_differences() {
        let s = spec(5, 2, 3, 60);
        let e = gmm_problem(&s).unwrap();
        let mut rng = stream(5, 1);
        for c in 0..3 {
            let chart = Chart::new(ChartKind::GaussianAugmented, s.components[c].clone()).unwrap();
            let grad = pullback_from_congruence(&chart, &e.congruence[c]).unwrap();
            let dir = random_coord(&chart, &mut rng, 1.0);
            let h = 1e-5;
            let at = |t: f64| {
                let mut moved = s.clone();
                moved.components[c] = chart_map(&chart, &dir.scale(t), TruncationMode::Exact).unwrap();
                let taus: Vec<_> = moved.components.iter().map(|f| represent_tau(f).unwrap()).collect();
                nll_via_tau(&moved.logits, &taus, &moved.data)
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let an = grad.inner(&dir).unwrap();
            assert!((fd - an).abs() / an.abs().max(1e-3) < 1e-5, "{fd} vs {an}");
        }
        let h = 1e-5;
        for c in 0..3 {
            let mut up = s.clone();
            up.logits[c] += h;
            let mut dn = s.clone();
            dn.logits[c] -= h;
            let fd = (gmm_problem(&up).unwrap().nll - gmm_problem(&dn).unwrap().nll) / (2.0 * h);
            assert!((fd - e.logit_grad[c]).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let comp = FactorState::Gaussian {
            l: DenseMatrix::identity(2, 2),
            mu: Vector::zeros(2),
        };
        assert!(GmmSpec::new(Vector::zeros(1), vec![comp.clone()], DenseMatrix::zeros(2, 0)).is_err());
        assert!(GmmSpec::new(Vector::zeros(2), vec![comp.clone()], DenseMatrix::zeros(2, 3)).is_err());
        assert!(GmmSpec::new(Vector::zeros(1), vec![comp], DenseMatrix::zeros(3, 3)).is_err());
        let singular = GmmSpec::new(
            Vector::zeros(1),
            vec![FactorState::Gaussian {
                l: DenseMatrix::zeros(2, 2),
                mu: Vector::zeros(2),
            }],
            DenseMatrix::zeros(2, 3),
        )
        .unwrap();
        assert!(gmm_problem(&singular).is_err());
    }
}
