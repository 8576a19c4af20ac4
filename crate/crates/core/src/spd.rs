//! Closed-form geometry of the SPD manifold under the affine-invariant metric
//! F(U, V) = Tr(τ⁻¹Uτ⁻¹V).
//!
//! Riemannian tangent vectors and Euclidean gradients are different tensor
//! types and are kept apart by the `R` parameter of [`TangentSym`].

use std::marker::PhantomData;

use crate::error::{Error, Result};
use crate::linalg::{
    check_spd, mat_exp, mat_log_spd, spd_inverse, sym_sqrt, sym_sqrt_pair, DenseMatrix, SymmetricMatrix,
    TruncationMode,
};

/// A symmetric positive-definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdPoint(SymmetricMatrix);

impl SpdPoint {
    pub fn new(s: SymmetricMatrix) -> Result<Self> {
        check_spd(&s)?;
        Ok(SpdPoint(s))
    }

    pub fn identity(n: usize) -> Self {
        SpdPoint(SymmetricMatrix::identity(n))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn value(&self) -> &SymmetricMatrix {
        &self.0
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        self.0.as_matrix()
    }

    pub fn into_value(self) -> SymmetricMatrix {
        self.0
    }

    pub fn inverse(&self) -> Result<SymmetricMatrix> {
        spd_inverse(&self.0)
    }
}

/// Marker for the tensor type carried by a [`TangentSym`].
pub trait Role: Clone + std::fmt::Debug {
    const NAME: &'static str;
}

/// v = F⁻¹g, a (1,0)-tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Riemannian;

/// g = ∇ℓ, a (0,1)-tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Euclidean;

impl Role for Riemannian {
    const NAME: &'static str = "riemannian";
}

impl Role for Euclidean {
    const NAME: &'static str = "euclidean";
}

/// A symmetric tangent object tagged with its tensor role.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentSym<R: Role> {
    value: SymmetricMatrix,
    role: PhantomData<R>,
}

pub type RiemTangent = TangentSym<Riemannian>;
pub type EuclGrad = TangentSym<Euclidean>;

impl<R: Role> TangentSym<R> {
    pub fn new(value: SymmetricMatrix) -> Self {
        TangentSym {
            value,
            role: PhantomData,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(SymmetricMatrix::zeros(n))
    }

    pub fn value(&self) -> &SymmetricMatrix {
        &self.value
    }

    pub fn into_value(self) -> SymmetricMatrix {
        self.value
    }

    pub fn dim(&self) -> usize {
        self.value.dim()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.value.scale(s))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(self.value.add(&other.value))
    }

    /// a·self + b·other.
    pub fn lin_comb(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        Self::new(x.value.scale(a).add(&y.value.scale(b)))
    }
}

fn same_dim(a: usize, b: usize, what: &str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Shape(format!("{what}: dimensions {a} and {b}")))
    }
}

/// Riemannian gradient τ₀·g·τ₀.
pub fn riem_grad(tau0: &SpdPoint, g: &EuclGrad) -> Result<RiemTangent> {
    same_dim(tau0.dim(), g.dim(), "riem_grad")?;
    Ok(RiemTangent::new(g.value().congruence(tau0.as_matrix())))
}

/// Exponential map τ₀^½·Expm(τ₀^-½ v τ₀^-½)·τ₀^½.
pub fn rexp(tau0: &SpdPoint, v: &RiemTangent) -> Result<SpdPoint> {
    same_dim(tau0.dim(), v.dim(), "rexp")?;
    if v.value().as_matrix().iter().all(|&x| x == 0.0) {
        return Ok(tau0.clone());
    }
    let (half, inv_half) = sym_sqrt_pair(tau0.value())?;
    let inner = v.value().congruence(inv_half.as_matrix());
    let e = SymmetricMatrix::new(mat_exp(inner.as_matrix(), TruncationMode::Exact)?);
    SpdPoint::new(e.congruence(half.as_matrix()))
}

/// Inverse exponential map: the v with rexp(τ₀, v) = τ₁.
pub fn rexp_inv(tau0: &SpdPoint, tau1: &SpdPoint) -> Result<RiemTangent> {
    same_dim(tau0.dim(), tau1.dim(), "rexp_inv")?;
    let (half, inv_half) = sym_sqrt_pair(tau0.value())?;
    let inner = tau1.value().congruence(inv_half.as_matrix());
    let l = mat_log_spd(&inner)?;
    Ok(RiemTangent::new(l.congruence(half.as_matrix())))
}

/// E = (τ₁τ₀⁻¹)^½ via the symmetric similarity form τ₀^½·sqrt(τ₀^-½τ₁τ₀^-½)·τ₀^-½.
fn transport_factor(tau0: &SpdPoint, tau1: &SpdPoint) -> Result<DenseMatrix> {
    same_dim(tau0.dim(), tau1.dim(), "transport")?;
    let (half, inv_half) = sym_sqrt_pair(tau0.value())?;
    let mid = sym_sqrt(&tau1.value().congruence(inv_half.as_matrix()))?;
    Ok(half.as_matrix() * mid.as_matrix() * inv_half.as_matrix())
}

/// Parallel transport of a Riemannian tangent vector along the geodesic: E·v·Eᵀ.
pub fn riem_transport(tau0: &SpdPoint, tau1: &SpdPoint, v: &RiemTangent) -> Result<RiemTangent> {
    same_dim(tau0.dim(), v.dim(), "riem_transport")?;
    let e = transport_factor(tau0, tau1)?;
    Ok(RiemTangent::new(v.value().congruence(&e)))
}

/// Parallel transport of a Euclidean gradient: H·g·Hᵀ with H = τ₁⁻¹·E·τ₀.
pub fn eucl_transport(tau0: &SpdPoint, tau1: &SpdPoint, g: &EuclGrad) -> Result<EuclGrad> {
    same_dim(tau0.dim(), g.dim(), "eucl_transport")?;
    let e = transport_factor(tau0, tau1)?;
    let h = tau1.inverse()?.as_matrix() * e * tau0.as_matrix();
    Ok(EuclGrad::new(g.value().congruence(&h)))
}

/// Standard normal coordinate ψ(η) = τ₀^½·Expm(η)·τ₀^½.
pub fn snc_map(tau0: &SpdPoint, eta: &SymmetricMatrix) -> Result<SpdPoint> {
    same_dim(tau0.dim(), eta.dim(), "snc_map")?;
    let half = sym_sqrt(tau0.value())?;
    let e = SymmetricMatrix::new(mat_exp(eta.as_matrix(), TruncationMode::Exact)?);
    SpdPoint::new(e.congruence(half.as_matrix()))
}

/// Affine-invariant distance ‖log(X^-½·Y·X^-½)‖_F.
pub fn affine_distance(x: &SpdPoint, y: &SpdPoint) -> Result<f64> {
    same_dim(x.dim(), y.dim(), "affine_distance")?;
    let (_, inv_half) = sym_sqrt_pair(x.value())?;
    Ok(mat_log_spd(&y.value().congruence(inv_half.as_matrix()))?.norm())
}

/// Metric F_τ(U, V) = Tr(τ⁻¹Uτ⁻¹V).
pub fn metric(tau: &SpdPoint, u: &RiemTangent, v: &RiemTangent) -> Result<f64> {
    let inv = tau.inverse()?;
    let a = inv.as_matrix() * u.value().as_matrix();
    let b = inv.as_matrix() * v.value().as_matrix();
    Ok((a * b).trace())
}
