//! Benchmark objectives, the toy MLP and synthetic data.

mod data;
mod euclidean;
mod gmm;
mod mlp;
mod spd_losses;

pub use data::{gmm_samples, load_rows, two_class_blobs, Blobs, GmmTruth};
pub use euclidean::{rosenbrock_problem, QuadraticProblem, Rosenbrock};
pub use gmm::{gmm_problem, GmmEval, GmmSpec};
pub use mlp::{mlp_forward_backward, Activation, LayerStats, MlpModel, MlpOutput};
pub use spd_losses::{logdet_problem, metric_nearness_problem, LogDet, MetricNearness};

use crate::chart::{represent_tau, FactorState, GradData};
use crate::error::Result;
use crate::linalg::{DenseMatrix, SymmetricMatrix, Vector};
use crate::spd::SpdPoint;

/// An objective on the SPD manifold.
pub trait SpdProblem: Send + Sync {
    fn dim(&self) -> usize;
    fn loss(&self, tau: &SpdPoint) -> f64;
    /// The symmetric Euclidean gradient ∇_τ ℓ.
    fn grad_tau(&self, tau: &SpdPoint) -> SymmetricMatrix;

    /// Gradient data for a chart anchored at `factor`. The default materializes τ.
    fn grad_data(&self, factor: &FactorState) -> Result<GradData> {
        let tau = represent_tau(factor)?;
        Ok(GradData::Full(self.grad_tau(&tau)))
    }

    fn loss_at_factor(&self, factor: &FactorState) -> Result<f64> {
        Ok(self.loss(&represent_tau(factor)?))
    }
}

/// An unconstrained objective with second-order oracles.
pub trait EuclideanProblem: Send + Sync {
    fn dim(&self) -> usize;
    fn loss(&self, x: &Vector) -> f64;
    fn grad(&self, x: &Vector) -> Vector;
    /// Hessian-vector product ∇²ℓ(x)·v.
    fn hess_vec(&self, x: &Vector, v: &Vector) -> Vector;
    fn hess_diag(&self, x: &Vector) -> Vector;

    /// ∇²ℓ(x)·M, column by column.
    fn hess_mat(&self, x: &Vector, m: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(m.nrows(), m.ncols());
        for j in 0..m.ncols() {
            let col = self.hess_vec(x, &m.column(j).into_owned());
            out.set_column(j, &col);
        }
        out
    }
}
