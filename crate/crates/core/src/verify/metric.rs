//! The Fisher metric of a chart at its origin, from the analytic expected
//! negative log-likelihood φ(η) = Tr(τ₀τ(η)⁻¹) + log det τ(η).

use serde::Serialize;

use crate::chart::{chart_map, random_factor, represent_tau, Chart, ChartKind, CoordElement, ScalingMask};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, solve, sym_eigen, DenseMatrix, SymmetricMatrix, TruncationMode};
use crate::rng::{stream, streams};

pub const DEFAULT_H: f64 = 1e-4;

/// φ(η) − φ(0), evaluated as Σ[ln(1+λ) − λ/(1+λ)] over the eigenvalues λ of
/// L₀⁻¹(τ(η) − τ₀)L₀⁻ᵀ so that the constant part never enters the differences.
struct Phi {
    chart: Chart,
    tau0: DenseMatrix,
    l0: DenseMatrix,
}

impl Phi {
    fn new(chart: &Chart) -> Result<Self> {
        let tau0 = represent_tau(chart.reference())?.into_value();
        let l0 = cholesky(&tau0)?.into_matrix();
        Ok(Phi { chart: chart.clone(), tau0: tau0.into_matrix(), l0 })
    }

    fn eval(&self, eta: &CoordElement) -> Result<f64> {
        let tau = represent_tau(&chart_map(&self.chart, eta, TruncationMode::Exact)?)?;
        let delta = tau.as_matrix() - &self.tau0;
        let x = solve(&self.l0, &delta)?;
        let m = solve(&self.l0, &x.transpose())?;
        let (lam, _) = sym_eigen(&SymmetricMatrix::new(m));
        Ok(lam.iter().map(|&l| l.ln_1p() - l / (1.0 + l)).sum())
    }

    fn bilinear(&self, u: &CoordElement, v: &CoordElement, h: f64) -> Result<f64> {
        let at = |a: f64, b: f64| CoordElement::lin_comb(a * h, u, b * h, v).and_then(|e| self.eval(&e));
        Ok((at(1.0, 1.0)? - at(1.0, -1.0)? - at(-1.0, 1.0)? + at(-1.0, -1.0)?) / (4.0 * h * h))
    }
}

/// B(U, V) = ∂²φ/∂U∂V at η = 0 by a mixed central difference with step h.
pub fn metric_bilinear(chart: &Chart, u: &CoordElement, v: &CoordElement, h: f64) -> Result<f64> {
    chart.check_coord(u)?;
    chart.check_coord(v)?;
    if !(h > 0.0) {
        return Err(Error::Config(format!("difference step must be positive, got {h}")));
    }
    Phi::new(chart)?.bilinear(u, v, h)
}

/// Gram matrix of B over the chart's orthonormal basis.
pub fn metric_gram(chart: &Chart, h: f64) -> Result<DenseMatrix> {
    let phi = Phi::new(chart)?;
    let basis = chart.basis();
    let n = basis.len();
    let mut gram = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let b = phi.bilinear(&basis[i], &basis[j], h)?;
            gram[(i, j)] = b;
            gram[(j, i)] = b;
        }
    }
    Ok(gram)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BilinearReport {
    pub chart: ChartKind,
    pub dim: usize,
    pub basis_size: usize,
    pub trials: usize,
    /// max |B(Uᵢ, Uⱼ) − δᵢⱼ| over all trials.
    pub max_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrthonormalityReport {
    pub tol: f64,
    pub passed: bool,
    pub max_deviation: f64,
    pub cases: Vec<BilinearReport>,
}

fn gram_deviation(gram: &DenseMatrix) -> f64 {
    let n = gram.nrows();
    (gram - DenseMatrix::identity(n, n)).amax()
}

/// Checks F(η₀) = I at `trials` random reference points for each size in `dims`
/// (τ is size×size, except for the Kronecker blocks where p = d = size).
/// Errors are reported as failures.
pub fn orthonormality_suite(kinds: &[ChartKind], dims: &[usize], trials: usize, tol: f64, seed: u64) -> OrthonormalityReport {
    orthonormality_with(kinds, dims, trials, tol, seed, |_, _| None)
}

/// As `orthonormality_suite`, with the scaling mask replaced by `mask(kind, chart)` when it returns one.
pub fn orthonormality_with(
    kinds: &[ChartKind],
    dims: &[usize],
    trials: usize,
    tol: f64,
    seed: u64,
    mask: impl Fn(ChartKind, &Chart) -> Option<ScalingMask>,
) -> OrthonormalityReport {
    let mut cases = Vec::new();
    for (ki, &kind) in kinds.iter().enumerate() {
        for &dim in dims {
            let mut rng = stream(seed ^ ((ki as u64) << 32 | dim as u64), streams::VERIFY);
            let mut worst = 0.0f64;
            let mut basis_size = 0;
            for _ in 0..trials {
                let dev = (|| -> Result<(usize, f64)> {
                    let mut chart = Chart::new(kind, random_factor(kind, dim, &mut rng))?;
                    if let Some(m) = mask(kind, &chart) {
                        chart = Chart::with_scaling(kind, chart.reference().clone(), m)?;
                    }
                    let gram = metric_gram(&chart, DEFAULT_H)?;
                    Ok((gram.nrows(), gram_deviation(&gram)))
                })();
                match dev {
                    Ok((n, d)) => {
                        basis_size = n;
                        worst = if d.is_nan() { f64::INFINITY } else { worst.max(d) };
                    }
                    Err(_) => worst = f64::INFINITY,
                }
            }
            cases.push(BilinearReport { chart: kind, dim, basis_size, trials, max_deviation: worst });
        }
    }
    let max_deviation = cases.iter().map(|c| c.max_deviation).fold(0.0, f64::max);
    OrthonormalityReport { tol, passed: max_deviation < tol, max_deviation, cases }
}
