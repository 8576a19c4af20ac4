//! Newton-like updates with an SPD preconditioner S whose inverse τ = S⁻¹ lives on
//! an SPD (sub)manifold. The preconditioner loss is ½[Tr(∇²ℓ·τ) − log det τ], with
//! gradient g_{S⁻¹} = ½(∇²ℓ − S).

use super::gnc::{step_gnc_coord, GncState};
use super::StepConfig;
use crate::chart::{pullback_from_congruence, Chart, ChartKind, CoordElement, FactorState};
use crate::error::{Error, Result};
use crate::linalg::{mat_exp, solve, solve_vec, DenseMatrix, SymmetricMatrix, Vector};
use crate::problems::EuclideanProblem;

/// Momentum of the preconditioner factor in its chart.
pub type PrecondGncState = GncState;

/// Reference update with S = BBᵀ, which needs solves with B:
/// B ← B·Expm(β·B⁻¹g_{S⁻¹}B⁻ᵀ), then μ ← μ − β·S⁻¹g_μ with the updated S.
/// To first order S ← (1 − β)S + β∇²ℓ(μ).
pub fn step_precond_newton(mu: &Vector, b: &DenseMatrix, problem: &dyn EuclideanProblem, cfg: &StepConfig) -> Result<(Vector, DenseMatrix)> {
    check_dims(mu, b, problem)?;
    let n = mu.len();
    let g_mu = problem.grad(mu);
    let h = problem.hess_mat(mu, &DenseMatrix::identity(n, n));
    let s = b * b.transpose();
    let g_s = SymmetricMatrix::new((h - s) * 0.5);
    let x = solve(b, g_s.as_matrix())?;
    let x = SymmetricMatrix::new(solve(b, &x.transpose())?);
    let b_new = b * mat_exp(&(x.as_matrix() * cfg.beta), cfg.truncation)?;
    let step = solve_vec(&b_new.transpose(), &solve_vec(&b_new, &g_mu)?)?;
    Ok((mu - step * cfg.beta, b_new))
}

/// Inverse-free update with τ = S⁻¹ = AAᵀ on the dense A chart:
/// A ← A·Expm(−½β·½(Aᵀ∇²ℓA − I)), then μ ← μ − β·AAᵀg_μ with the updated A.
/// Only matrix products and Hessian-matrix products are used.
pub fn step_precond_inverse_free(mu: &Vector, a: &DenseMatrix, problem: &dyn EuclideanProblem, cfg: &StepConfig) -> Result<(Vector, DenseMatrix)> {
    check_dims(mu, a, problem)?;
    let n = mu.len();
    let g_mu = problem.grad(mu);
    let ha = problem.hess_mat(mu, a);
    let y = SymmetricMatrix::new((a.transpose() * ha - DenseMatrix::identity(n, n)) * 0.5);
    let a_new = a * mat_exp(&(y.as_matrix() * (-0.5 * cfg.beta)), cfg.truncation)?;
    let step = &a_new * (a_new.transpose() * g_mu);
    Ok((mu - step * cfg.beta, a_new))
}

fn check_dims(mu: &Vector, m: &DenseMatrix, problem: &dyn EuclideanProblem) -> Result<()> {
    if mu.len() != problem.dim() || m.nrows() != mu.len() || m.ncols() != mu.len() {
        return Err(Error::Shape(format!(
            "parameter of length {}, factor {}x{}, problem dimension {}",
            mu.len(),
            m.nrows(),
            m.ncols(),
            problem.dim()
        )));
    }
    Ok(())
}

/// Pullback of the preconditioner loss for an A-type chart, without forming S.
/// Arrow charts only touch one Hessian-vector product and the Hessian diagonal.
pub fn precond_pullback(chart: &Chart, mu: &Vector, problem: &dyn EuclideanProblem) -> Result<CoordElement> {
    match chart.reference() {
        FactorState::Arrow { a, b, c } => {
            let n = b.len();
            if n + 1 != problem.dim() || mu.len() != problem.dim() {
                return Err(Error::Shape("arrow factor does not match the problem".into()));
            }
            let col0 = Vector::from_fn(n + 1, |i, _| if i == 0 { *a } else { b[i - 1] });
            let hv = problem.hess_vec(mu, &col0);
            let hd = problem.hess_diag(mu);
            let d = chart.scaling().as_matrix();
            Ok(CoordElement::Arrow {
                a: d[(0, 0)] * (col0.dot(&hv) - 1.0),
                b: Vector::from_fn(n, |i, _| d[(i + 1, 0)] * c[i] * hv[i + 1]),
                c: Vector::from_fn(n, |i, _| d[(i + 1, i + 1)] * (c[i] * c[i] * hd[i + 1] - 1.0)),
            })
        }
        FactorState::DenseA(_) | FactorState::LowerA(_) => {
            let a = chart.reference().dense_a().expect("A-type factor");
            let n = a.nrows();
            let y = (a.transpose() * problem.hess_mat(mu, &a) - DenseMatrix::identity(n, n)) * 0.5;
            pullback_from_congruence(chart, &y)
        }
        _ => Err(Error::Incompatible(format!("{} chart for a Newton-like preconditioner", chart.kind()))),
    }
}

/// AAᵀv using the factor's structure.
fn apply_aat(factor: &FactorState, v: &Vector) -> Vector {
    match factor {
        FactorState::Arrow { a, b, c } => {
            let n = b.len();
            let tail = v.rows(1, n);
            let u0 = a * v[0] + b.dot(&tail);
            let ut = c.component_mul(&tail);
            Vector::from_fn(n + 1, |i, _| if i == 0 { a * u0 } else { b[i - 1] * u0 + c[i - 1] * ut[i - 1] })
        }
        other => {
            let a = other.dense_a().expect("A-type factor");
            &a * (a.transpose() * v)
        }
    }
}

/// Newton-like step with momentum on the preconditioner factor in an A-type chart
/// (dense, triangular or arrow), followed by μ ← μ − mu_step·AAᵀg_μ.
pub fn step_precond_gnc(
    state: &mut PrecondGncState,
    mu: &Vector,
    chart: &Chart,
    problem: &dyn EuclideanProblem,
    cfg: &StepConfig,
    mu_step: f64,
) -> Result<(Vector, Chart)> {
    if !matches!(chart.kind(), ChartKind::DenseSymA | ChartKind::TriangularA | ChartKind::RankOneArrow) {
        return Err(Error::Incompatible(format!("{} chart for a Newton-like preconditioner", chart.kind())));
    }
    let g = precond_pullback(chart, mu, problem)?;
    let next = step_gnc_coord(state, chart, &g, cfg)?;
    let g_mu = problem.grad(mu);
    let step = apply_aat(next.reference(), &g_mu);
    Ok((mu - step * mu_step, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{pullback_grad, represent_tau, GradData};
    use crate::linalg::{audit, inverse, TruncationMode};
    use crate::problems::{rosenbrock_problem, QuadraticProblem};
    use crate::rng::{gaussian_vector, near_identity, random_spd, stream};
    use crate::verify::loglog_slope;

    fn cfg(beta: f64, t: TruncationMode) -> StepConfig {
        StepConfig::new(beta, 0.0, t).unwrap()
    }

    fn quad(seed: u64, n: usize) -> QuadraticProblem {
        let mut rng = stream(seed, 0);
        QuadraticProblem::new(random_spd(&mut rng, n).into_value(), gaussian_vector(&mut rng, n))
    }

    #[test]
    fn newton_fixed_point_when_s_matches_hessian() {
        let mut rng = stream(1, 0);
        let b = near_identity(&mut rng, 3, 0.3);
        let p = QuadraticProblem::new(SymmetricMatrix::new(&b * b.transpose()), Vector::zeros(3));
        let (_, b_new) = step_precond_newton(&Vector::zeros(3), &b, &p, &cfg(0.3, TruncationMode::Exact)).unwrap();
        assert_eq!(b_new, b);
    }

    #[test]
    fn newton_scalar_limit() {
        let (h, s) = (5.0f64, 2.0f64);
        let p = QuadraticProblem::new(SymmetricMatrix::from_diagonal(&[h]), Vector::zeros(1));
        let b = DenseMatrix::from_element(1, 1, s.sqrt());
        let s_at = |beta: f64| {
            let (_, b) = step_precond_newton(&Vector::zeros(1), &b, &p, &cfg(beta, TruncationMode::Exact)).unwrap();
            b[(0, 0)] * b[(0, 0)]
        };
        let eps = 1e-6;
        let slope = (s_at(eps) - s) / eps;
        assert!((slope - (h - s)).abs() < 1e-5);
        assert!((s_at(0.1) - s * (0.1 * (h - s) / s).exp()).abs() < 1e-12);
    }

    #[test]
    fn newton_s_update_is_first_order_averaging() {
        let p = quad(2, 4);
        let mut rng = stream(2, 1);
        let b = near_identity(&mut rng, 4, 0.4);
        let s = &b * b.transpose();
        let h = p.hessian().as_matrix();
        let betas = [1e-1, 3e-2, 1e-2, 3e-3];
        let errs: Vec<f64> = betas
            .iter()
            .map(|&beta| {
                let (_, bn) = step_precond_newton(&Vector::zeros(4), &b, &p, &cfg(beta, TruncationMode::Exact)).unwrap();
                (&bn * bn.transpose() - (&s * (1.0 - beta) + h * beta)).norm() / s.norm()
            })
            .collect();
        assert!(loglog_slope(&betas, &errs) >= 1.9);
    }

    #[test]
    fn inverse_free_examples() {
        let p = QuadraticProblem::new(SymmetricMatrix::from_diagonal(&[3.0]), Vector::zeros(1));
        let (_, a) = step_precond_inverse_free(&Vector::zeros(1), &DenseMatrix::identity(1, 1), &p, &cfg(0.1, TruncationMode::Exact)).unwrap();
        assert!((a[(0, 0)] - (-0.05f64).exp()).abs() < 1e-15);
        assert!((a[(0, 0)] - 0.95122942).abs() < 1e-8);

        let mut rng = stream(3, 0);
        let a0 = near_identity(&mut rng, 3, 0.3);
        let ainv = inverse(&a0).unwrap();
        let p = QuadraticProblem::new(SymmetricMatrix::new(ainv.transpose() * &ainv), Vector::zeros(3));
        let (_, a1) = step_precond_inverse_free(&Vector::zeros(3), &a0, &p, &cfg(0.2, TruncationMode::Exact)).unwrap();
        assert!((a1 - a0).amax() < 1e-12);
    }

    #[test]
    fn inverse_free_uses_no_factorizations() {
        let p = rosenbrock_problem(6);
        let mut rng = stream(4, 0);
        let mut mu = gaussian_vector(&mut rng, 6) * 0.1;
        let mut a = DenseMatrix::identity(6, 6) * 0.1;
        let (_, calls) = audit::measure(|| {
            for _ in 0..10 {
                (mu, a) = step_precond_inverse_free(&mu, &a, &p, &cfg(0.1, TruncationMode::Quadratic)).unwrap();
            }
        });
        assert_eq!(calls, 0);
    }

    fn newton_vs_inverse_free(p: &QuadraticProblem, a: &DenseMatrix, beta: f64, t: TruncationMode) -> (f64, f64) {
        let b = inverse(&a.transpose()).unwrap();
        let mu = gaussian_vector(&mut stream(9, 9), a.nrows());
        let (ma, an) = step_precond_inverse_free(&mu, a, p, &cfg(2.0 * beta, t)).unwrap();
        let (mb, bn) = step_precond_newton(&mu, &b, p, &cfg(beta, TruncationMode::Exact)).unwrap();
        let bi = inverse(&bn).unwrap();
        ((&an * an.transpose() - bi.transpose() * bi).norm(), (ma - mb).norm())
    }

    #[test]
    fn inverse_free_with_doubled_step_is_newton() {
        let p = quad(5, 4);
        let a = near_identity(&mut stream(5, 1), 4, 0.4);
        let (dt, dm) = newton_vs_inverse_free(&p, &a, 0.1, TruncationMode::Exact);
        assert!(dt < 1e-12, "{dt:e}");
        // μ moves along the same direction τ⁺g_μ, with twice the step on the inverse-free side.
        let b = inverse(&a.transpose()).unwrap();
        let mu = gaussian_vector(&mut stream(9, 9), 4);
        let (mb, _) = step_precond_newton(&mu, &b, &p, &cfg(0.1, TruncationMode::Exact)).unwrap();
        assert!((dm - (&mb - &mu).norm()).abs() < 1e-12);
    }

    #[test]
    fn truncated_inverse_free_agrees_with_newton_to_first_order() {
        let p = quad(5, 4);
        let a = near_identity(&mut stream(5, 1), 4, 0.4);
        let betas = [1e-1, 3e-2, 1e-2, 3e-3];
        let errs: Vec<f64> = betas.iter().map(|&b| newton_vs_inverse_free(&p, &a, b, TruncationMode::Linear).0).collect();
        assert!(loglog_slope(&betas, &errs) >= 1.9, "{errs:?}");
    }

    #[test]
    fn arrow_pullback_matches_dense_pullback() {
        let p = rosenbrock_problem(5);
        let mut rng = stream(6, 0);
        let mu = gaussian_vector(&mut rng, 5) * 0.5;
        let factor = crate::chart::random_factor(ChartKind::RankOneArrow, 5, &mut rng);
        let chart = Chart::new(ChartKind::RankOneArrow, factor.clone()).unwrap();
        let fast = precond_pullback(&chart, &mu, &p).unwrap();
        let s = represent_tau(&factor).unwrap().inverse().unwrap();
        let h = p.hessian_dense(&mu);
        let g = SymmetricMatrix::new((h - s.as_matrix()) * 0.5);
        let dense = pullback_grad(&chart, &GradData::Full(g)).unwrap();
        assert!((fast.embedded() - dense.embedded()).amax() < 1e-9);
        let v = gaussian_vector(&mut rng, 5);
        let a = factor.dense_a().unwrap();
        assert!((apply_aat(&factor, &v) - &a * (a.transpose() * &v)).amax() < 1e-12);
    }

    #[test]
    fn arrow_momentum_reduces_rosenbrock() {
        let p = rosenbrock_problem(20);
        let mut mu = Vector::zeros(20);
        let d = Vector::from_element(19, 0.1);
        let mut chart = Chart::new(ChartKind::RankOneArrow, FactorState::Arrow { a: 0.1, b: Vector::zeros(19), c: d }).unwrap();
        let mut st = PrecondGncState::default();
        let c = StepConfig::new(0.05, 0.5, TruncationMode::Quadratic).unwrap();
        let start = p.loss(&mu);
        for _ in 0..2000 {
            (mu, chart) = step_precond_gnc(&mut st, &mu, &chart, &p, &c, 0.5).unwrap();
        }
        assert!(p.loss(&mu) < 0.5 * start, "{} vs {start}", p.loss(&mu));
    }
}
