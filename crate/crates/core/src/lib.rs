//! Momentum-based Riemannian optimization on symmetric positive-definite
//! matrices and structured SPD submanifolds through generalized normal
//! coordinates (GNCs).
//!
//! * [`linalg`]: dense kernels (matrix exponential, SPD square root and log, Cholesky).
//! * [`spd`]: affine-invariant geometry of the full SPD manifold.
//! * [`chart`]: GNC charts, gradient pullbacks and momentum transforms.
//! * [`optim`]: GNC momentum, Riemannian baselines, Newton-like and Kronecker-factored updates.
//! * [`problems`]: benchmark objectives, the toy MLP and synthetic data.
//! * [`verify`]: independent numerical oracles for the geometric identities.
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chart;
pub mod error;
pub mod linalg;
pub mod optim;
pub mod problems;
pub mod rng;
pub mod spd;
pub mod verify;

pub use chart::{Chart, ChartKind, CoordElement, Exactness, FactorState, GradData, ScalingMask};
pub use error::{Error, Result};
pub use linalg::{DenseMatrix, LowerTriangular, SymmetricMatrix, TruncationMode, Vector};
pub use spd::{EuclGrad, RiemTangent, SpdPoint, TangentSym};
