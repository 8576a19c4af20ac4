//! Dense matrix kernels: matrix exponential, symmetric square root and
//! logarithm, Cholesky, Kronecker-structured products and eigenvalue queries.
//!
//! Every routine that inverts, solves or factorizes a matrix bumps a
//! thread-local counter (see [`audit`]) so callers can prove that a code path
//! is free of such calls.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative tolerance used to accept a matrix as positive definite.
pub const SPD_REL_TOL: f64 = 1e-12;

/// Call-audit hook for inverse, solve and factorization routines.
pub mod audit {
    use std::cell::Cell;

    thread_local! {
        static FACTORIZATIONS: Cell<u64> = const { Cell::new(0) };
    }

    pub(crate) fn note() {
        FACTORIZATIONS.with(|c| c.set(c.get() + 1));
    }

    /// Number of inverse/solve/factorization calls made on this thread.
    pub fn count() -> u64 {
        FACTORIZATIONS.with(|c| c.get())
    }

    pub fn reset() {
        FACTORIZATIONS.with(|c| c.set(0));
    }

    /// Runs `f` and returns its value with the number of audited calls it made.
    pub fn measure<T>(f: impl FnOnce() -> T) -> (T, u64) {
        let before = count();
        let out = f();
        (out, count() - before)
    }
}

/// How the matrix exponential is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TruncationMode {
    #[default]
    Exact,
    Linear,
    Quadratic,
}

impl fmt::Display for TruncationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TruncationMode::Exact => "exact",
            TruncationMode::Linear => "linear",
            TruncationMode::Quadratic => "quadratic",
        })
    }
}

impl FromStr for TruncationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(TruncationMode::Exact),
            "linear" => Ok(TruncationMode::Linear),
            "quadratic" => Ok(TruncationMode::Quadratic),
            _ => Err(Error::Unknown {
                what: "truncation mode",
                name: s.to_string(),
            }),
        }
    }
}

/// A square matrix that is exactly symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix(DenseMatrix);

impl SymmetricMatrix {
    /// Symmetrizes `m` as (M + Mᵀ)/2. Panics if `m` is not square.
    pub fn new(m: DenseMatrix) -> Self {
        assert!(m.is_square(), "SymmetricMatrix requires a square matrix");
        let n = m.nrows();
        let mut out = m;
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        SymmetricMatrix(out)
    }

    pub fn zeros(n: usize) -> Self {
        SymmetricMatrix(DenseMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymmetricMatrix(DenseMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymmetricMatrix(DenseMatrix::from_diagonal(&Vector::from_column_slice(d)))
    }

    pub fn from_row_slice(n: usize, entries: &[f64]) -> Self {
        Self::new(DenseMatrix::from_row_slice(n, n, entries))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.0
    }

    pub fn scale(&self, s: f64) -> Self {
        SymmetricMatrix(&self.0 * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        SymmetricMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        SymmetricMatrix(&self.0 - &other.0)
    }

    /// Congruence G·S·Gᵀ.
    pub fn congruence(&self, g: &DenseMatrix) -> Self {
        Self::new(g * &self.0 * g.transpose())
    }

    pub fn frobenius(&self, other: &Self) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// A square matrix that is exactly zero above the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerTriangular(DenseMatrix);

impl LowerTriangular {
    /// Keeps the lower triangle of `m` and zeroes the rest. Panics if `m` is not square.
    pub fn new(m: DenseMatrix) -> Self {
        assert!(m.is_square(), "LowerTriangular requires a square matrix");
        LowerTriangular(m.lower_triangle())
    }

    pub fn identity(n: usize) -> Self {
        LowerTriangular(DenseMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        LowerTriangular(DenseMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.0
    }
}

fn check_square(m: &DenseMatrix) -> Result<usize> {
    if m.is_square() {
        Ok(m.nrows())
    } else {
        Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

fn check_finite(m: &DenseMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn is_exactly_symmetric(m: &DenseMatrix) -> bool {
    let n = m.nrows();
    (0..n).all(|j| ((j + 1)..n).all(|i| m[(i, j)] == m[(j, i)]))
}

fn is_diagonal(m: &DenseMatrix) -> bool {
    let n = m.nrows();
    (0..n).all(|j| (0..n).all(|i| i == j || m[(i, j)] == 0.0))
}

/// Matrix exponential under the requested truncation.
pub fn mat_exp(n: &DenseMatrix, mode: TruncationMode) -> Result<DenseMatrix> {
    let k = check_square(n)?;
    check_finite(n, "mat_exp argument")?;
    let id = DenseMatrix::identity(k, k);
    match mode {
        TruncationMode::Linear => Ok(id + n),
        TruncationMode::Quadratic => Ok(id + n + (n * n) * 0.5),
        TruncationMode::Exact => {
            if n.iter().all(|&x| x == 0.0) {
                Ok(id)
            } else if is_diagonal(n) {
                Ok(DenseMatrix::from_diagonal(&n.diagonal().map(f64::exp)))
            } else if is_exactly_symmetric(n) {
                Ok(sym_fn(&SymmetricMatrix(n.clone()), f64::exp).into_matrix())
            } else {
                expm_pade(n)
            }
        }
    }
}

/// Scaling and squaring with the diagonal (6,6) Padé approximant.
fn expm_pade(n: &DenseMatrix) -> Result<DenseMatrix> {
    const Q: usize = 6;
    let k = n.nrows();
    let norm_inf = n
        .row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm_inf > 0.5 {
        (norm_inf / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let x = n / 2f64.powi(s);

    let fact = |m: usize| (1..=m).map(|v| v as f64).product::<f64>();
    let mut num = DenseMatrix::zeros(k, k);
    let mut den = DenseMatrix::zeros(k, k);
    let mut power = DenseMatrix::identity(k, k);
    for j in 0..=Q {
        let c = fact(2 * Q - j) * fact(Q) / (fact(2 * Q) * fact(j) * fact(Q - j));
        num += &power * c;
        den += &power * if j % 2 == 0 { c } else { -c };
        power = &power * &x;
    }
    let mut e = solve(&den, &num)?;
    for _ in 0..s {
        e = &e * &e;
    }
    Ok(e)
}

/// Eigendecomposition S = Q·diag(λ)·Qᵀ.
pub fn sym_eigen(s: &SymmetricMatrix) -> (Vector, DenseMatrix) {
    audit::note();
    let eig = s.as_matrix().clone().symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

/// Applies a scalar function to the spectrum of a symmetric matrix.
pub fn sym_fn(s: &SymmetricMatrix, f: impl Fn(f64) -> f64) -> SymmetricMatrix {
    let m = s.as_matrix();
    if is_diagonal(m) {
        return SymmetricMatrix(DenseMatrix::from_diagonal(&m.diagonal().map(f)));
    }
    let (vals, vecs) = sym_eigen(s);
    let scaled = DenseMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, j| vecs[(i, j)] * f(vals[j]));
    SymmetricMatrix::new(scaled * vecs.transpose())
}

fn spd_threshold(s: &SymmetricMatrix) -> f64 {
    SPD_REL_TOL * s.norm()
}

/// Eigenvalues after checking positive definiteness.
fn spd_spectrum(s: &SymmetricMatrix) -> Result<()> {
    if !s.is_finite() {
        return Err(Error::NonFinite("SPD input"));
    }
    let lo = min_eig(s);
    if lo > spd_threshold(s) && lo > 0.0 {
        Ok(())
    } else {
        Err(Error::NotSpd(lo))
    }
}

/// True when min_eig(S) > 1e-12·‖S‖_F.
pub fn is_spd(s: &SymmetricMatrix) -> bool {
    spd_spectrum(s).is_ok()
}

/// Checked SPD validation returning the offending eigenvalue on failure.
pub fn check_spd(s: &SymmetricMatrix) -> Result<()> {
    spd_spectrum(s)
}

/// Principal square root of an SPD matrix.
pub fn sym_sqrt(s: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    spd_spectrum(s)?;
    Ok(sym_fn(s, f64::sqrt))
}

/// Inverse principal square root of an SPD matrix.
pub fn sym_inv_sqrt(s: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    spd_spectrum(s)?;
    Ok(sym_fn(s, |x| 1.0 / x.sqrt()))
}

/// Square root and inverse square root from one eigendecomposition.
pub fn sym_sqrt_pair(s: &SymmetricMatrix) -> Result<(SymmetricMatrix, SymmetricMatrix)> {
    spd_spectrum(s)?;
    let m = s.as_matrix();
    if is_diagonal(m) {
        let d = m.diagonal();
        return Ok((
            SymmetricMatrix(DenseMatrix::from_diagonal(&d.map(f64::sqrt))),
            SymmetricMatrix(DenseMatrix::from_diagonal(&d.map(|x| 1.0 / x.sqrt()))),
        ));
    }
    let (vals, vecs) = sym_eigen(s);
    let build = |f: &dyn Fn(f64) -> f64| {
        let scaled = DenseMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, j| vecs[(i, j)] * f(vals[j]));
        SymmetricMatrix::new(scaled * vecs.transpose())
    };
    Ok((build(&f64::sqrt), build(&|x: f64| 1.0 / x.sqrt())))
}

/// Principal logarithm of an SPD matrix.
pub fn mat_log_spd(s: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    spd_spectrum(s)?;
    Ok(sym_fn(s, f64::ln))
}

/// Lower Cholesky factor with positive diagonal.
pub fn cholesky(s: &SymmetricMatrix) -> Result<LowerTriangular> {
    if !s.is_finite() {
        return Err(Error::NonFinite("cholesky input"));
    }
    audit::note();
    match s.as_matrix().clone().cholesky() {
        Some(c) => Ok(LowerTriangular(c.l())),
        None => Err(Error::NotSpd(min_eig(s))),
    }
}

/// log det of an SPD matrix through its Cholesky factor.
pub fn log_det_spd(s: &SymmetricMatrix) -> Result<f64> {
    let l = cholesky(s)?;
    Ok(2.0 * l.as_matrix().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse(s: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    if !s.is_finite() {
        return Err(Error::NonFinite("spd_inverse input"));
    }
    audit::note();
    match s.as_matrix().clone().cholesky() {
        Some(c) => Ok(SymmetricMatrix::new(c.inverse())),
        None => Err(Error::NotSpd(min_eig(s))),
    }
}

/// Solves M·X = B with partial-pivoting LU.
pub fn solve(m: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    check_square(m)?;
    if b.nrows() != m.nrows() {
        return Err(Error::Shape(format!(
            "solve: {}x{} system with {}x{} right-hand side",
            m.nrows(),
            m.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    audit::note();
    m.clone().lu().solve(b).ok_or(Error::Singular("solve"))
}

/// Solves M·x = b for a vector right-hand side.
pub fn solve_vec(m: &DenseMatrix, b: &Vector) -> Result<Vector> {
    check_square(m)?;
    if b.len() != m.nrows() {
        return Err(Error::Shape("solve_vec: length mismatch".into()));
    }
    audit::note();
    m.clone().lu().solve(b).ok_or(Error::Singular("solve_vec"))
}

/// General matrix inverse.
pub fn inverse(m: &DenseMatrix) -> Result<DenseMatrix> {
    check_square(m)?;
    audit::note();
    m.clone().try_inverse().ok_or(Error::Singular("inverse"))
}

/// log|det M| through LU.
pub fn log_abs_det(m: &DenseMatrix) -> Result<f64> {
    check_square(m)?;
    audit::note();
    let d = m.clone().lu().determinant();
    if d == 0.0 || !d.is_finite() {
        return Err(Error::Singular("log_abs_det"));
    }
    Ok(d.abs().ln())
}

/// Singular values in descending order.
pub fn singular_values(m: &DenseMatrix) -> Vector {
    audit::note();
    m.clone().svd(false, false).singular_values
}

/// (K ⊗ C)·vec(X) reshaped, i.e. C·X·Kᵀ, without forming the Kronecker product.
pub fn kron_apply(k: &DenseMatrix, c: &DenseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    check_square(k)?;
    check_square(c)?;
    if x.nrows() != c.nrows() || x.ncols() != k.nrows() {
        return Err(Error::Shape(format!(
            "kron_apply: K {}x{}, C {}x{}, X {}x{}",
            k.nrows(),
            k.ncols(),
            c.nrows(),
            c.ncols(),
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(c * x * k.transpose())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig(s: &SymmetricMatrix) -> f64 {
    let m = s.as_matrix();
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    if is_diagonal(m) {
        return m.diagonal().min();
    }
    let (vals, _) = sym_eigen(s);
    vals.min()
}

/// Elementwise product.
pub fn hadamard(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    a.component_mul(b)
}
