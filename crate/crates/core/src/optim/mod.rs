//! Update rules: GNC momentum, exact-map Riemannian baselines, structured NGD,
//! Newton-like preconditioned updates and the Kronecker-factored optimizers.

mod adam;
mod gmm;
mod gnc;
mod kfac;
mod newton;
mod riemannian;

pub use adam::{step_adam, AdamState};
pub use gmm::{GmmOptimizer, GmmStepConfig};
pub use gnc::{step_gnc_coord, step_gnc_momentum, step_gnc_with_grad, step_sngd_gaussian, GncState};
pub use kfac::{step_ifkfac, step_kfac_baseline, step_sgd_momentum, IfkfacLayer, KfacLayer, SgdLayer};
pub use newton::{precond_pullback, step_precond_gnc, step_precond_inverse_free, step_precond_newton, PrecondGncState};
pub use riemannian::{
    step_ahn, step_alimisis21, step_eucl_momentum, step_rgd, step_riem_momentum, AhnState, Alimisis21State,
    EuclMomentumState, RiemMomentumState,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::TruncationMode;

/// Stepsize, momentum weight and Expm truncation for one update rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub beta: f64,
    pub alpha: f64,
    pub truncation: TruncationMode,
}

impl StepConfig {
    pub fn new(beta: f64, alpha: f64, truncation: TruncationMode) -> Result<Self> {
        let cfg = StepConfig { beta, alpha, truncation };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::Config(format!("stepsize must be positive, got {}", self.beta)));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("momentum weight must be in [0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Hyperparameters of the Kronecker-factored optimizers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecondConfig {
    pub beta1: f64,
    pub alpha1: f64,
    pub beta2: f64,
    pub alpha2: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub period_t: usize,
    pub theta: f64,
    /// (iteration threshold, β₁) pairs: β₁ takes the value of the first pair whose threshold exceeds the iteration.
    pub warmup: Vec<(usize, f64)>,
    pub truncation: TruncationMode,
}

impl Default for PrecondConfig {
    fn default() -> Self {
        PrecondConfig {
            beta1: 0.01,
            alpha1: 0.5,
            beta2: 0.1,
            alpha2: 0.9,
            gamma: 0.01,
            lambda: 0.005,
            period_t: 10,
            theta: 0.95,
            warmup: vec![(100, 0.0002), (500, 0.002)],
            truncation: TruncationMode::Linear,
        }
    }
}

impl PrecondConfig {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.beta1, self.alpha1, self.beta2, self.alpha2, self.gamma, self.lambda];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("preconditioner hyperparameters must be nonnegative".into()));
        }
        if self.period_t == 0 {
            return Err(Error::Config("factor update period must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::Config(format!("moving-average weight must be in [0, 1), got {}", self.theta)));
        }
        if self.warmup.iter().any(|(_, b)| !b.is_finite() || *b < 0.0) {
            return Err(Error::Config("warm-up stepsizes must be nonnegative".into()));
        }
        Ok(())
    }

    /// β₁ in effect at `iter`.
    pub fn beta1_at(&self, iter: usize) -> f64 {
        self.warmup
            .iter()
            .find(|(threshold, _)| iter < *threshold)
            .map_or(self.beta1, |(_, b)| *b)
    }

    pub fn updates_factors(&self, iter: usize) -> bool {
        iter.is_multiple_of(self.period_t)
    }
}
