//! Generalized normal coordinates for the SPD manifold and its structured
//! submanifolds.
//!
//! A [`Chart`] is anchored at a reference factor. Its coordinate space is a
//! vector subspace of square matrices (or a block/arrow equivalent) and the
//! scaling mask D makes the metric orthonormal at the origin under the full
//! Frobenius pairing of the embedded coordinates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    hadamard, inverse, mat_exp, mat_log_spd, solve, DenseMatrix, LowerTriangular, SymmetricMatrix,
    TruncationMode, Vector,
};
use crate::rng::{gaussian_matrix, gaussian_vector, normal, near_identity, Rng64};
use crate::spd::SpdPoint;

/// The supported chart families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChartKind {
    #[serde(rename = "dense-sym-A")]
    DenseSymA,
    #[serde(rename = "dense-sym-B")]
    DenseSymB,
    #[serde(rename = "dense-sym-C")]
    DenseSymC,
    #[serde(rename = "triangular-A")]
    TriangularA,
    #[serde(rename = "gaussian-augmented")]
    GaussianAugmented,
    #[serde(rename = "rank-one-arrow")]
    RankOneArrow,
    #[serde(rename = "kronecker-block-K")]
    KroneckerBlockK,
    #[serde(rename = "kronecker-block-C")]
    KroneckerBlockC,
}

impl ChartKind {
    pub const ALL: [ChartKind; 8] = [
        ChartKind::DenseSymA,
        ChartKind::DenseSymB,
        ChartKind::DenseSymC,
        ChartKind::TriangularA,
        ChartKind::GaussianAugmented,
        ChartKind::RankOneArrow,
        ChartKind::KroneckerBlockK,
        ChartKind::KroneckerBlockC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChartKind::DenseSymA => "dense-sym-A",
            ChartKind::DenseSymB => "dense-sym-B",
            ChartKind::DenseSymC => "dense-sym-C",
            ChartKind::TriangularA => "triangular-A",
            ChartKind::GaussianAugmented => "gaussian-augmented",
            ChartKind::RankOneArrow => "rank-one-arrow",
            ChartKind::KroneckerBlockK => "kronecker-block-K",
            ChartKind::KroneckerBlockC => "kronecker-block-C",
        }
    }

    /// Charts whose coordinates are symmetric matrices.
    pub fn is_symmetric_subspace(self) -> bool {
        matches!(
            self,
            ChartKind::DenseSymA
                | ChartKind::DenseSymB
                | ChartKind::DenseSymC
                | ChartKind::KroneckerBlockK
                | ChartKind::KroneckerBlockC
        )
    }

    /// Charts whose factor is A with τ = AAᵀ and A = A₀·Expm(D⊙η).
    fn is_right_a_type(self) -> bool {
        matches!(
            self,
            ChartKind::DenseSymA | ChartKind::TriangularA | ChartKind::GaussianAugmented | ChartKind::RankOneArrow
        )
    }
}

impl fmt::Display for ChartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChartKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        let kind = match key.as_str() {
            "dense-sym-a" | "dense-a" => ChartKind::DenseSymA,
            "dense-sym-b" | "dense-b" => ChartKind::DenseSymB,
            "dense-sym-c" | "dense-c" => ChartKind::DenseSymC,
            "triangular-a" | "triangular" => ChartKind::TriangularA,
            "gaussian-augmented" | "gaussian" => ChartKind::GaussianAugmented,
            "rank-one-arrow" | "arrow" => ChartKind::RankOneArrow,
            "kronecker-block-k" | "kron-k" => ChartKind::KroneckerBlockK,
            "kronecker-block-c" | "kron-c" => ChartKind::KroneckerBlockC,
            _ => {
                return Err(Error::Unknown {
                    what: "chart kind",
                    name: s.to_string(),
                })
            }
        };
        Ok(kind)
    }
}

/// A structured invertible factor representing an SPD matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum FactorState {
    /// τ = AAᵀ.
    DenseA(DenseMatrix),
    /// τ = B⁻ᵀB⁻¹.
    DenseB(DenseMatrix),
    /// τ = CᵀC.
    DenseC(DenseMatrix),
    /// τ = AAᵀ with A lower triangular, positive diagonal.
    LowerA(LowerTriangular),
    /// A = [[L, μ], [0, 1]], so τ = [[LLᵀ + μμᵀ, μ], [μᵀ, 1]].
    Gaussian { l: DenseMatrix, mu: Vector },
    /// A = [[a, 0], [b, Diag(c)]].
    Arrow { a: f64, b: Vector, c: Vector },
    /// A = K ⊗ C, so τ = KKᵀ ⊗ CCᵀ.
    Kronecker { k: DenseMatrix, c: DenseMatrix },
}

impl FactorState {
    /// Size of the represented τ.
    pub fn tau_dim(&self) -> usize {
        match self {
            FactorState::DenseA(m) | FactorState::DenseB(m) | FactorState::DenseC(m) => m.nrows(),
            FactorState::LowerA(l) => l.dim(),
            FactorState::Gaussian { mu, .. } => mu.len() + 1,
            FactorState::Arrow { b, .. } => b.len() + 1,
            FactorState::Kronecker { k, c } => k.nrows() * c.nrows(),
        }
    }

    /// Checks shapes, finiteness and the sign constraints of each variant.
    pub fn validate(&self) -> Result<()> {
        let finite = |m: &DenseMatrix| m.iter().all(|x| x.is_finite());
        let square = |m: &DenseMatrix| {
            if m.is_square() {
                Ok(())
            } else {
                Err(Error::NotSquare {
                    rows: m.nrows(),
                    cols: m.ncols(),
                })
            }
        };
        match self {
            FactorState::DenseA(m) | FactorState::DenseB(m) | FactorState::DenseC(m) => {
                square(m)?;
                if !finite(m) {
                    return Err(Error::NonFinite("factor"));
                }
            }
            FactorState::LowerA(l) => {
                if !finite(l.as_matrix()) {
                    return Err(Error::NonFinite("factor"));
                }
                if l.as_matrix().diagonal().iter().any(|&x| x <= 0.0) {
                    return Err(Error::Singular("triangular factor needs a positive diagonal"));
                }
            }
            FactorState::Gaussian { l, mu } => {
                square(l)?;
                if l.nrows() != mu.len() {
                    return Err(Error::Shape("gaussian factor: L and μ sizes differ".into()));
                }
                if !finite(l) || mu.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("factor"));
                }
            }
            FactorState::Arrow { a, b, c } => {
                if b.len() != c.len() {
                    return Err(Error::Shape("arrow factor: b and c sizes differ".into()));
                }
                if !a.is_finite() || b.iter().chain(c.iter()).any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("factor"));
                }
                if *a <= 0.0 || c.iter().any(|&x| x <= 0.0) {
                    return Err(Error::Singular("arrow factor needs a > 0 and c > 0"));
                }
            }
            FactorState::Kronecker { k, c } => {
                square(k)?;
                square(c)?;
                if !finite(k) || !finite(c) {
                    return Err(Error::NonFinite("factor"));
                }
            }
        }
        Ok(())
    }

    /// The dense A with τ = AAᵀ, for the variants that have one.
    pub fn dense_a(&self) -> Option<DenseMatrix> {
        match self {
            FactorState::DenseA(a) => Some(a.clone()),
            FactorState::LowerA(l) => Some(l.as_matrix().clone()),
            FactorState::Gaussian { l, mu } => {
                let d = mu.len();
                let mut a = DenseMatrix::zeros(d + 1, d + 1);
                a.view_mut((0, 0), (d, d)).copy_from(l);
                a.view_mut((0, d), (d, 1)).copy_from(mu);
                a[(d, d)] = 1.0;
                Some(a)
            }
            FactorState::Arrow { a, b, c } => {
                let d = b.len();
                let mut m = DenseMatrix::zeros(d + 1, d + 1);
                m[(0, 0)] = *a;
                for i in 0..d {
                    m[(i + 1, 0)] = b[i];
                    m[(i + 1, i + 1)] = c[i];
                }
                Some(m)
            }
            FactorState::Kronecker { k, c } => Some(k.kronecker(c)),
            FactorState::DenseB(_) | FactorState::DenseC(_) => None,
        }
    }

    fn variant_name(&self) -> &'static str {
        match self {
            FactorState::DenseA(_) => "dense A",
            FactorState::DenseB(_) => "dense B",
            FactorState::DenseC(_) => "dense C",
            FactorState::LowerA(_) => "lower-triangular A",
            FactorState::Gaussian { .. } => "gaussian-augmented",
            FactorState::Arrow { .. } => "rank-one-arrow",
            FactorState::Kronecker { .. } => "kronecker",
        }
    }
}

/// An element of a chart's coordinate space (η, or a momentum m/w).
#[derive(Clone, Debug, PartialEq)]
pub enum CoordElement {
    Sym(SymmetricMatrix),
    Lower(LowerTriangular),
    Gaussian { l: SymmetricMatrix, mu: Vector },
    Arrow { a: f64, b: Vector, c: Vector },
}

impl CoordElement {
    pub fn zeros_like(&self) -> Self {
        self.scale(0.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        match self {
            CoordElement::Sym(m) => CoordElement::Sym(m.scale(s)),
            CoordElement::Lower(m) => CoordElement::Lower(LowerTriangular::new(m.as_matrix() * s)),
            CoordElement::Gaussian { l, mu } => CoordElement::Gaussian {
                l: l.scale(s),
                mu: mu * s,
            },
            CoordElement::Arrow { a, b, c } => CoordElement::Arrow {
                a: a * s,
                b: b * s,
                c: c * s,
            },
        }
    }

    /// a·x + b·y.
    pub fn lin_comb(a: f64, x: &Self, b: f64, y: &Self) -> Result<Self> {
        let out = match (x, y) {
            (CoordElement::Sym(p), CoordElement::Sym(q)) if p.dim() == q.dim() => {
                CoordElement::Sym(SymmetricMatrix::new(p.as_matrix() * a + q.as_matrix() * b))
            }
            (CoordElement::Lower(p), CoordElement::Lower(q)) if p.dim() == q.dim() => {
                CoordElement::Lower(LowerTriangular::new(p.as_matrix() * a + q.as_matrix() * b))
            }
            (CoordElement::Gaussian { l: l1, mu: m1 }, CoordElement::Gaussian { l: l2, mu: m2 })
                if m1.len() == m2.len() =>
            {
                CoordElement::Gaussian {
                    l: SymmetricMatrix::new(l1.as_matrix() * a + l2.as_matrix() * b),
                    mu: m1 * a + m2 * b,
                }
            }
            (CoordElement::Arrow { a: a1, b: b1, c: c1 }, CoordElement::Arrow { a: a2, b: b2, c: c2 })
                if b1.len() == b2.len() =>
            {
                CoordElement::Arrow {
                    a: a * a1 + b * a2,
                    b: b1 * a + b2 * b,
                    c: c1 * a + c2 * b,
                }
            }
            _ => return Err(Error::Subspace("matching")),
        };
        Ok(out)
    }

    /// The subspace inner product: Frobenius on matrices, dot product on vectors.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        match (self, other) {
            (CoordElement::Sym(p), CoordElement::Sym(q)) if p.dim() == q.dim() => Ok(p.frobenius(q)),
            (CoordElement::Lower(p), CoordElement::Lower(q)) if p.dim() == q.dim() => {
                Ok(p.as_matrix().dot(q.as_matrix()))
            }
            (CoordElement::Gaussian { l: l1, mu: m1 }, CoordElement::Gaussian { l: l2, mu: m2 })
                if m1.len() == m2.len() =>
            {
                Ok(l1.frobenius(l2) + m1.dot(m2))
            }
            (CoordElement::Arrow { a: a1, b: b1, c: c1 }, CoordElement::Arrow { a: a2, b: b2, c: c2 })
                if b1.len() == b2.len() =>
            {
                Ok(a1 * a2 + b1.dot(b2) + c1.dot(c2))
            }
            _ => Err(Error::Subspace("matching")),
        }
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).map(f64::sqrt).unwrap_or(f64::NAN)
    }

    pub fn is_zero(&self) -> bool {
        self.embedded().iter().all(|&x| x == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.embedded().iter().all(|x| x.is_finite())
    }

    /// The coordinate written as a square matrix: [[η_L, η_μ], [0, 0]] for the
    /// Gaussian block form and [[η_a, 0], [η_b, Diag(η_c)]] for the arrow form.
    pub fn embedded(&self) -> DenseMatrix {
        match self {
            CoordElement::Sym(m) => m.as_matrix().clone(),
            CoordElement::Lower(m) => m.as_matrix().clone(),
            CoordElement::Gaussian { l, mu } => {
                let d = mu.len();
                let mut m = DenseMatrix::zeros(d + 1, d + 1);
                m.view_mut((0, 0), (d, d)).copy_from(l.as_matrix());
                m.view_mut((0, d), (d, 1)).copy_from(mu);
                m
            }
            CoordElement::Arrow { a, b, c } => FactorState::Arrow {
                a: *a,
                b: b.clone(),
                c: c.clone(),
            }
            .dense_a()
            .expect("arrow embeds"),
        }
    }
}

/// Elementwise constants that orthonormalize the metric at the chart origin.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingMask(DenseMatrix);

impl ScalingMask {
    /// The mask that makes `kind` orthonormal at a reference factor of this shape.
    pub fn canonical(kind: ChartKind, reference: &FactorState) -> Self {
        let half = 0.5;
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        let n = coord_matrix_dim(kind, reference);
        let m = match kind {
            ChartKind::DenseSymA | ChartKind::DenseSymB | ChartKind::DenseSymC => DenseMatrix::from_element(n, n, half),
            ChartKind::TriangularA => DenseMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
                std::cmp::Ordering::Equal => half,
                std::cmp::Ordering::Greater => r2,
                std::cmp::Ordering::Less => 0.0,
            }),
            ChartKind::GaussianAugmented => {
                let d = n - 1;
                DenseMatrix::from_fn(n, n, |i, j| {
                    if i < d && j < d {
                        half
                    } else if i < d && j == d {
                        r2
                    } else {
                        0.0
                    }
                })
            }
            ChartKind::RankOneArrow => DenseMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    half
                } else if j == 0 {
                    r2
                } else {
                    0.0
                }
            }),
            ChartKind::KroneckerBlockK => {
                let FactorState::Kronecker { c, .. } = reference else {
                    unreachable!("validated by Chart::new")
                };
                DenseMatrix::from_element(n, n, 0.5 / (c.nrows() as f64).sqrt())
            }
            ChartKind::KroneckerBlockC => {
                let FactorState::Kronecker { k, .. } = reference else {
                    unreachable!("validated by Chart::new")
                };
                DenseMatrix::from_element(n, n, 0.5 / (k.nrows() as f64).sqrt())
            }
        };
        ScalingMask(m)
    }

    pub fn from_matrix(m: DenseMatrix) -> Self {
        ScalingMask(m)
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.0
    }
}

/// Size of the square matrix that embeds the coordinates of `kind`.
fn coord_matrix_dim(kind: ChartKind, reference: &FactorState) -> usize {
    match (kind, reference) {
        (ChartKind::KroneckerBlockK, FactorState::Kronecker { k, .. }) => k.nrows(),
        (ChartKind::KroneckerBlockC, FactorState::Kronecker { c, .. }) => c.nrows(),
        _ => reference.tau_dim(),
    }
}

fn kind_accepts(kind: ChartKind, f: &FactorState) -> bool {
    matches!(
        (kind, f),
        (ChartKind::DenseSymA, FactorState::DenseA(_))
            | (ChartKind::DenseSymB, FactorState::DenseB(_))
            | (ChartKind::DenseSymC, FactorState::DenseC(_))
            | (ChartKind::TriangularA, FactorState::LowerA(_))
            | (ChartKind::GaussianAugmented, FactorState::Gaussian { .. })
            | (ChartKind::RankOneArrow, FactorState::Arrow { .. })
            | (ChartKind::KroneckerBlockK, FactorState::Kronecker { .. })
            | (ChartKind::KroneckerBlockC, FactorState::Kronecker { .. })
    )
}

/// A generalized normal coordinate anchored at a reference factor.
#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    kind: ChartKind,
    reference: FactorState,
    scaling: ScalingMask,
}

impl Chart {
    pub fn new(kind: ChartKind, reference: FactorState) -> Result<Self> {
        if !kind_accepts(kind, &reference) {
            return Err(Error::Incompatible(format!(
                "{} chart cannot use a {} factor",
                kind,
                reference.variant_name()
            )));
        }
        reference.validate()?;
        let scaling = ScalingMask::canonical(kind, &reference);
        Ok(Chart {
            kind,
            reference,
            scaling,
        })
    }

    /// A chart with a non-canonical mask, e.g. for negative controls.
    pub fn with_scaling(kind: ChartKind, reference: FactorState, scaling: ScalingMask) -> Result<Self> {
        let mut chart = Chart::new(kind, reference)?;
        if scaling.0.shape() != chart.scaling.0.shape() {
            return Err(Error::Shape("scaling mask does not match the chart".into()));
        }
        chart.scaling = scaling;
        Ok(chart)
    }

    /// The chart of the same kind and mask anchored at `factor`.
    pub fn rebase(&self, factor: FactorState) -> Result<Self> {
        if !kind_accepts(self.kind, &factor) || coord_matrix_dim(self.kind, &factor) != self.scaling.0.nrows() {
            return Err(Error::Incompatible("rebase to a differently shaped factor".into()));
        }
        factor.validate()?;
        Ok(Chart {
            kind: self.kind,
            reference: factor,
            scaling: self.scaling.clone(),
        })
    }

    pub fn kind(&self) -> ChartKind {
        self.kind
    }

    pub fn reference(&self) -> &FactorState {
        &self.reference
    }

    pub fn into_reference(self) -> FactorState {
        self.reference
    }

    pub fn scaling(&self) -> &ScalingMask {
        &self.scaling
    }

    /// Size of the square matrix embedding the coordinates.
    pub fn coord_dim(&self) -> usize {
        self.scaling.0.nrows()
    }

    /// The origin η₀ = 0.
    pub fn zero(&self) -> CoordElement {
        let n = self.coord_dim();
        match self.kind {
            ChartKind::TriangularA => CoordElement::Lower(LowerTriangular::zeros(n)),
            ChartKind::GaussianAugmented => CoordElement::Gaussian {
                l: SymmetricMatrix::zeros(n - 1),
                mu: Vector::zeros(n - 1),
            },
            ChartKind::RankOneArrow => CoordElement::Arrow {
                a: 0.0,
                b: Vector::zeros(n - 1),
                c: Vector::zeros(n - 1),
            },
            _ => CoordElement::Sym(SymmetricMatrix::zeros(n)),
        }
    }

    /// An orthonormal basis of the coordinate space.
    pub fn basis(&self) -> Vec<CoordElement> {
        let n = self.coord_dim();
        let sym_basis = |n: usize| {
            let mut out = Vec::new();
            for i in 0..n {
                for j in 0..=i {
                    let mut m = DenseMatrix::zeros(n, n);
                    if i == j {
                        m[(i, i)] = 1.0;
                    } else {
                        let v = std::f64::consts::FRAC_1_SQRT_2;
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                    out.push(SymmetricMatrix::new(m));
                }
            }
            out
        };
        match self.kind {
            ChartKind::TriangularA => {
                let mut out = Vec::new();
                for i in 0..n {
                    for j in 0..=i {
                        let mut m = DenseMatrix::zeros(n, n);
                        m[(i, j)] = 1.0;
                        out.push(CoordElement::Lower(LowerTriangular::new(m)));
                    }
                }
                out
            }
            ChartKind::GaussianAugmented => {
                let d = n - 1;
                let mut out: Vec<CoordElement> = sym_basis(d)
                    .into_iter()
                    .map(|l| CoordElement::Gaussian {
                        l,
                        mu: Vector::zeros(d),
                    })
                    .collect();
                for i in 0..d {
                    let mut mu = Vector::zeros(d);
                    mu[i] = 1.0;
                    out.push(CoordElement::Gaussian {
                        l: SymmetricMatrix::zeros(d),
                        mu,
                    });
                }
                out
            }
            ChartKind::RankOneArrow => {
                let d = n - 1;
                let unit = |i: usize| {
                    let mut v = Vector::zeros(d);
                    v[i] = 1.0;
                    v
                };
                let mut out = vec![CoordElement::Arrow {
                    a: 1.0,
                    b: Vector::zeros(d),
                    c: Vector::zeros(d),
                }];
                for i in 0..d {
                    out.push(CoordElement::Arrow {
                        a: 0.0,
                        b: unit(i),
                        c: Vector::zeros(d),
                    });
                }
                for i in 0..d {
                    out.push(CoordElement::Arrow {
                        a: 0.0,
                        b: Vector::zeros(d),
                        c: unit(i),
                    });
                }
                out
            }
            _ => sym_basis(n).into_iter().map(CoordElement::Sym).collect(),
        }
    }

    /// Orthogonal projection of an embedded matrix onto the coordinate space.
    pub fn coord_from_embedded(&self, m: &DenseMatrix) -> CoordElement {
        let n = self.coord_dim();
        match self.kind {
            ChartKind::TriangularA => CoordElement::Lower(LowerTriangular::new(m.clone())),
            ChartKind::GaussianAugmented => {
                let d = n - 1;
                CoordElement::Gaussian {
                    l: SymmetricMatrix::new(m.view((0, 0), (d, d)).into_owned()),
                    mu: m.view((0, d), (d, 1)).column(0).into_owned(),
                }
            }
            ChartKind::RankOneArrow => {
                let d = n - 1;
                CoordElement::Arrow {
                    a: m[(0, 0)],
                    b: Vector::from_fn(d, |i, _| m[(i + 1, 0)]),
                    c: Vector::from_fn(d, |i, _| m[(i + 1, i + 1)]),
                }
            }
            _ => CoordElement::Sym(SymmetricMatrix::new(m.clone())),
        }
    }

    /// Rejects coordinates of the wrong variant or size.
    pub fn check_coord(&self, eta: &CoordElement) -> Result<()> {
        let n = self.coord_dim();
        let ok = match (self.kind, eta) {
            (ChartKind::TriangularA, CoordElement::Lower(m)) => m.dim() == n,
            (ChartKind::GaussianAugmented, CoordElement::Gaussian { l, mu }) => l.dim() == n - 1 && mu.len() == n - 1,
            (ChartKind::RankOneArrow, CoordElement::Arrow { b, c, .. }) => b.len() == n - 1 && c.len() == n - 1,
            (k, CoordElement::Sym(m)) if k.is_symmetric_subspace() => m.dim() == n,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Subspace(self.kind.name()))
        }
    }

    fn masked(&self, eta: &CoordElement) -> DenseMatrix {
        hadamard(&self.scaling.0, &eta.embedded())
    }
}

/// Closed-form exponential of the arrow matrix [[x, 0], [y, Diag(z)]], returned as (a, b, c).
fn arrow_exp(x: f64, y: &Vector, z: &Vector, mode: TruncationMode) -> (f64, Vector, Vector) {
    match mode {
        TruncationMode::Linear => (1.0 + x, y.clone(), z.map(|v| 1.0 + v)),
        TruncationMode::Quadratic => (
            1.0 + x + 0.5 * x * x,
            Vector::from_fn(y.len(), |i, _| y[i] + 0.5 * (x + z[i]) * y[i]),
            z.map(|v| 1.0 + v + 0.5 * v * v),
        ),
        TruncationMode::Exact => {
            // Off-diagonal entries are divided differences y·(eˣ − eᶻ)/(x − z).
            let phi1 = |t: f64| if t.abs() < 1e-8 { 1.0 + 0.5 * t } else { t.exp_m1() / t };
            (
                x.exp(),
                Vector::from_fn(y.len(), |i, _| y[i] * z[i].exp() * phi1(x - z[i])),
                z.map(f64::exp),
            )
        }
    }
}

/// The factor reached from the chart's reference by moving to coordinate η.
pub fn chart_map(chart: &Chart, eta: &CoordElement, mode: TruncationMode) -> Result<FactorState> {
    chart.check_coord(eta)?;
    if eta.is_zero() {
        return Ok(chart.reference.clone());
    }
    if !eta.is_finite() {
        return Err(Error::NonFinite("chart coordinate"));
    }
    let d = &chart.scaling.0;
    let out = match (&chart.reference, eta) {
        (FactorState::DenseA(a0), CoordElement::Sym(_)) => FactorState::DenseA(a0 * mat_exp(&chart.masked(eta), mode)?),
        (FactorState::DenseB(b0), CoordElement::Sym(_)) => {
            FactorState::DenseB(b0 * mat_exp(&(-chart.masked(eta)), mode)?)
        }
        (FactorState::DenseC(c0), CoordElement::Sym(_)) => FactorState::DenseC(mat_exp(&chart.masked(eta), mode)? * c0),
        (FactorState::LowerA(a0), CoordElement::Lower(_)) => {
            let e = LowerTriangular::new(mat_exp(&chart.masked(eta), mode)?);
            FactorState::LowerA(LowerTriangular::new(a0.as_matrix() * e.as_matrix()))
        }
        (FactorState::Gaussian { l, mu }, CoordElement::Gaussian { l: el, mu: emu }) => {
            let n = mu.len();
            let x = hadamard(&d.view((0, 0), (n, n)).into_owned(), el.as_matrix());
            let shift = d.view((0, n), (n, 1)).column(0).component_mul(emu);
            FactorState::Gaussian {
                l: l * mat_exp(&x, mode)?,
                mu: mu + l * shift,
            }
        }
        (FactorState::Arrow { a, b, c }, CoordElement::Arrow { a: ea, b: eb, c: ec }) => {
            let n = b.len();
            let x = d[(0, 0)] * ea;
            let y = Vector::from_fn(n, |i, _| d[(i + 1, 0)] * eb[i]);
            let z = Vector::from_fn(n, |i, _| d[(i + 1, i + 1)] * ec[i]);
            let (a1, b1, c1) = arrow_exp(x, &y, &z, mode);
            FactorState::Arrow {
                a: a * a1,
                b: b * a1 + c.component_mul(&b1),
                c: c.component_mul(&c1),
            }
        }
        (FactorState::Kronecker { k, c }, CoordElement::Sym(_)) => {
            let e = mat_exp(&chart.masked(eta), mode)?;
            match chart.kind {
                ChartKind::KroneckerBlockK => FactorState::Kronecker { k: k * e, c: c.clone() },
                _ => FactorState::Kronecker { k: k.clone(), c: c * e },
            }
        }
        _ => return Err(Error::Subspace(chart.kind.name())),
    };
    Ok(out)
}

/// Materializes τ from a factor. Intended for verification and small sizes.
pub fn represent_tau(factor: &FactorState) -> Result<SpdPoint> {
    factor.validate()?;
    let tau = match factor {
        FactorState::DenseB(b) => {
            let bi = inverse(b)?;
            SymmetricMatrix::new(bi.transpose() * bi)
        }
        FactorState::DenseC(c) => SymmetricMatrix::new(c.transpose() * c),
        FactorState::Kronecker { k, c } => SymmetricMatrix::new((k * k.transpose()).kronecker(&(c * c.transpose()))),
        other => {
            let a = other.dense_a().expect("A-type factor");
            SymmetricMatrix::new(&a * a.transpose())
        }
    };
    SpdPoint::new(tau).map_err(|e| match e {
        Error::NotSpd(_) => Error::Singular("factor"),
        e => e,
    })
}

/// Gradient information supplied by a problem, in the form a chart consumes.
#[derive(Clone, Debug, PartialEq)]
pub enum GradData {
    /// The full symmetric Euclidean gradient g(τ).
    Full(SymmetricMatrix),
    /// Blocks of g(τ) = [[g₁, g₂], [g₂ᵀ, ·]] for the Gaussian-augmented chart.
    GaussianBlocks { g1: SymmetricMatrix, g2: Vector },
    /// Arrow pieces of g(τ) = [[g₁, g₂ᵀ], [g₂, G₃]]: f = G₃b and diag(G₃).
    ArrowPieces {
        g1: f64,
        g2: Vector,
        f: Vector,
        diag_g3: Vector,
    },
    /// KFAC statistics of ℓ(τ) = ½[Tr((μ_AA ⊗ μ_GG + λI)τ) − log det τ].
    Kfac {
        mu_aa: SymmetricMatrix,
        mu_gg: SymmetricMatrix,
        lambda: f64,
    },
}

/// Pullback for charts with A = A₀·Expm(D⊙η), given Y = A₀ᵀ·g(τ)·A₀: the
/// projection of 2·D⊙Y onto the coordinate space.
pub fn pullback_from_congruence(chart: &Chart, y: &DenseMatrix) -> Result<CoordElement> {
    if !chart.kind.is_right_a_type() {
        return Err(Error::GradData(chart.kind.name()));
    }
    if y.shape() != chart.scaling.0.shape() {
        return Err(Error::Shape("congruence block does not match the chart".into()));
    }
    Ok(chart.coord_from_embedded(&(hadamard(&chart.scaling.0, y) * 2.0)))
}

/// The Euclidean gradient in η at the origin, g(η₀).
pub fn pullback_grad(chart: &Chart, data: &GradData) -> Result<CoordElement> {
    let d = &chart.scaling.0;
    let kind = chart.kind;
    let mismatch = || Error::GradData(kind.name());
    let tau_dim = chart.reference.tau_dim();
    if let GradData::Full(g) = data {
        if g.dim() != tau_dim {
            return Err(Error::Shape(format!("gradient is {}x{}, τ is {tau_dim}x{tau_dim}", g.dim(), g.dim())));
        }
    }
    match (&chart.reference, data) {
        (FactorState::DenseB(b), GradData::Full(g)) => {
            let x = solve(b, g.as_matrix())?;
            let y = solve(b, &x.transpose())?;
            Ok(chart.coord_from_embedded(&(hadamard(d, &y) * 2.0)))
        }
        (FactorState::DenseC(c), GradData::Full(g)) => {
            let y = c * g.as_matrix() * c.transpose();
            Ok(chart.coord_from_embedded(&(hadamard(d, &y) * 2.0)))
        }
        (FactorState::Kronecker { k, c }, GradData::Full(g)) => {
            let (p, q) = (k.nrows(), c.nrows());
            let gm = g.as_matrix();
            let block = |i: usize, j: usize| gm.view((i * q, j * q), (q, q));
            let y = if kind == ChartKind::KroneckerBlockK {
                let w = c * c.transpose();
                let pmat = DenseMatrix::from_fn(p, p, |i, j| block(i, j).dot(&w));
                k.transpose() * pmat * k
            } else {
                let u = k * k.transpose();
                let mut qmat = DenseMatrix::zeros(q, q);
                for i in 0..p {
                    for j in 0..p {
                        qmat += block(i, j) * u[(i, j)];
                    }
                }
                c.transpose() * qmat * c
            };
            Ok(chart.coord_from_embedded(&(hadamard(d, &y) * 2.0)))
        }
        (FactorState::Kronecker { k, c }, GradData::Kfac { mu_aa, mu_gg, lambda }) => {
            let (p, q) = (k.nrows(), c.nrows());
            if mu_aa.dim() != p || mu_gg.dim() != q {
                return Err(Error::Shape("KFAC factors do not match K and C".into()));
            }
            let y = if kind == ChartKind::KroneckerBlockK {
                let h_k = k.transpose() * mu_aa.as_matrix() * k;
                let tr_hc = (c.transpose() * mu_gg.as_matrix() * c).trace();
                let damp = lambda * (c.transpose() * c).trace();
                h_k * tr_hc + k.transpose() * k * damp - DenseMatrix::identity(p, p) * q as f64
            } else {
                let h_c = c.transpose() * mu_gg.as_matrix() * c;
                let tr_hk = (k.transpose() * mu_aa.as_matrix() * k).trace();
                let damp = lambda * (k.transpose() * k).trace();
                h_c * tr_hk + c.transpose() * c * damp - DenseMatrix::identity(q, q) * p as f64
            };
            Ok(chart.coord_from_embedded(&hadamard(d, &y)))
        }
        (FactorState::Gaussian { l, mu }, GradData::GaussianBlocks { g1, g2 }) => {
            let n = mu.len();
            if g1.dim() != n || g2.len() != n {
                return Err(Error::Shape("gaussian gradient blocks do not match the factor".into()));
            }
            let yl = l.transpose() * g1.as_matrix() * l;
            let ymu = l.transpose() * (g1.as_matrix() * mu + g2);
            let dl = d.view((0, 0), (n, n)).into_owned();
            let dmu = d.view((0, n), (n, 1)).column(0).into_owned();
            Ok(CoordElement::Gaussian {
                l: SymmetricMatrix::new(hadamard(&dl, &yl) * 2.0),
                mu: dmu.component_mul(&ymu) * 2.0,
            })
        }
        (FactorState::Arrow { a, b, c }, GradData::ArrowPieces { g1, g2, f, diag_g3 }) => {
            let n = b.len();
            if g2.len() != n || f.len() != n || diag_g3.len() != n {
                return Err(Error::Shape("arrow gradient pieces do not match the factor".into()));
            }
            let ya = a * (a * g1 + 2.0 * g2.dot(b)) + b.dot(f);
            Ok(CoordElement::Arrow {
                a: 2.0 * d[(0, 0)] * ya,
                b: Vector::from_fn(n, |i, _| 2.0 * d[(i + 1, 0)] * c[i] * (a * g2[i] + f[i])),
                c: Vector::from_fn(n, |i, _| 2.0 * d[(i + 1, i + 1)] * c[i] * c[i] * diag_g3[i]),
            })
        }
        (FactorState::Arrow { b, .. }, GradData::Full(g)) if b.len() + 1 == g.dim() => {
            // Reduce to arrow pieces so the structured formula is the only code path.
            let n = b.len();
            let gm = g.as_matrix();
            let g3 = gm.view((1, 1), (n, n));
            let pieces = GradData::ArrowPieces {
                g1: gm[(0, 0)],
                g2: gm.view((1, 0), (n, 1)).column(0).into_owned(),
                f: g3 * b,
                diag_g3: g3.diagonal(),
            };
            pullback_grad(chart, &pieces)
        }
        (FactorState::Gaussian { mu, .. }, GradData::Full(g)) => {
            let n = mu.len();
            let gm = g.as_matrix();
            let pieces = GradData::GaussianBlocks {
                g1: SymmetricMatrix::new(gm.view((0, 0), (n, n)).into_owned()),
                g2: gm.view((0, n), (n, 1)).column(0).into_owned(),
            };
            pullback_grad(chart, &pieces)
        }
        (factor, GradData::Full(g)) if kind.is_right_a_type() => {
            let a = factor.dense_a().ok_or_else(mismatch)?;
            pullback_from_congruence(chart, &(a.transpose() * g.as_matrix() * &a))
        }
        _ => Err(mismatch()),
    }
}

/// How the momentum is carried into the next chart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Exactness {
    #[default]
    FirstOrder,
    Corrected,
}

/// Commutator MN − NM.
pub fn bracket(m: &DenseMatrix, n: &DenseMatrix) -> DenseMatrix {
    m * n - n * m
}

/// Carries a momentum expressed in `chart_old` into `chart_new`, where
/// `chart_new` is anchored at the point reached by stepping `chart_old` with −m.
pub fn momentum_transform(
    chart_old: &Chart,
    chart_new: &Chart,
    m: &CoordElement,
    exactness: Exactness,
) -> Result<CoordElement> {
    if chart_old.kind != chart_new.kind || chart_old.scaling != chart_new.scaling {
        return Err(Error::Incompatible(format!(
            "{} chart followed by {} chart",
            chart_old.kind, chart_new.kind
        )));
    }
    chart_old.check_coord(m)?;
    if chart_old.kind.is_symmetric_subspace() || exactness == Exactness::FirstOrder {
        return Ok(m.clone());
    }
    let d = &chart_old.scaling.0;
    match chart_old.kind {
        ChartKind::TriangularA | ChartKind::RankOneArrow => {
            let emb = m.embedded();
            let dm = hadamard(d, &emb);
            let m_over_d = DenseMatrix::from_fn(emb.nrows(), emb.ncols(), |i, j| {
                if d[(i, j)] == 0.0 {
                    0.0
                } else {
                    emb[(i, j)] / d[(i, j)]
                }
            });
            let corr = hadamard(d, &bracket(&(-dm.transpose()), &m_over_d)) * 0.5;
            Ok(chart_old.coord_from_embedded(&(emb + corr)))
        }
        ChartKind::GaussianAugmented => {
            // η_μ = η₁_μ + D_μ⁻¹·E₁·D_μ·ξ_μ with E₁ = L_old⁻¹·L_new, and η_L is unaffected.
            let (FactorState::Gaussian { l: l_old, .. }, FactorState::Gaussian { l: l_new, .. }) =
                (&chart_old.reference, &chart_new.reference)
            else {
                unreachable!("validated by Chart::new")
            };
            let CoordElement::Gaussian { l, mu } = m else {
                unreachable!("checked above")
            };
            let n = mu.len();
            let e1 = solve(l_old, l_new)?;
            let dmu = d.view((0, n), (n, 1)).column(0).into_owned();
            let scaled = mu.component_div(&dmu);
            Ok(CoordElement::Gaussian {
                l: l.clone(),
                mu: dmu.component_mul(&(e1.transpose() * scaled)),
            })
        }
        _ => unreachable!("symmetric kinds returned early"),
    }
}

/// Inverse of the dense symmetric A chart: η with chart_map(chart, η, exact) representing τ.
pub fn chart_inverse(chart: &Chart, tau: &SpdPoint) -> Result<CoordElement> {
    let FactorState::DenseA(a0) = &chart.reference else {
        return Err(Error::Incompatible(format!("chart_inverse is not available for {}", chart.kind)));
    };
    if tau.dim() != a0.nrows() {
        return Err(Error::Shape("τ does not match the chart".into()));
    }
    let x = solve(a0, tau.as_matrix())?;
    let y = SymmetricMatrix::new(solve(a0, &x.transpose())?);
    let log = mat_log_spd(&y)?;
    let d = &chart.scaling.0;
    let eta = log.as_matrix().component_div(&(d * 2.0));
    Ok(CoordElement::Sym(SymmetricMatrix::new(eta)))
}

/// A random, well-conditioned reference factor for `kind` representing a k×k τ
/// with k = size, except for the Kronecker charts where p = d = size.
pub fn random_factor(kind: ChartKind, size: usize, rng: &mut Rng64) -> FactorState {
    let pos = |rng: &mut Rng64| (0.2 * normal(rng)).exp();
    match kind {
        ChartKind::DenseSymA => FactorState::DenseA(near_identity(rng, size, 0.25)),
        ChartKind::DenseSymB => FactorState::DenseB(near_identity(rng, size, 0.25)),
        ChartKind::DenseSymC => FactorState::DenseC(near_identity(rng, size, 0.25)),
        ChartKind::TriangularA => {
            let g = gaussian_matrix(rng, size, size) * (0.25 / (size as f64).sqrt());
            let mut l = LowerTriangular::new(g).into_matrix();
            for i in 0..size {
                l[(i, i)] = pos(rng);
            }
            FactorState::LowerA(LowerTriangular::new(l))
        }
        ChartKind::GaussianAugmented => {
            let d = size.max(2) - 1;
            FactorState::Gaussian {
                l: near_identity(rng, d, 0.25),
                mu: gaussian_vector(rng, d) * 0.5,
            }
        }
        ChartKind::RankOneArrow => {
            let d = size.max(2) - 1;
            let a = pos(rng);
            let b = gaussian_vector(rng, d) * 0.5;
            let c = Vector::from_fn(d, |_, _| pos(rng));
            FactorState::Arrow { a, b, c }
        }
        ChartKind::KroneckerBlockK | ChartKind::KroneckerBlockC => FactorState::Kronecker {
            k: near_identity(rng, size, 0.25),
            c: near_identity(rng, size, 0.25),
        },
    }
}

/// A random coordinate Σᵢ scale·zᵢ·Uᵢ over the orthonormal basis.
pub fn random_coord(chart: &Chart, rng: &mut Rng64, scale: f64) -> CoordElement {
    let mut acc = chart.zero();
    for u in chart.basis() {
        acc = CoordElement::lin_comb(1.0, &acc, scale * normal(rng), &u).expect("same chart");
    }
    acc
}
