//! Fitting a Gaussian mixture with GNC momentum on each component's
//! Gaussian-augmented chart and gradient descent on the mixing logits.

use serde::{Deserialize, Serialize};

use super::gnc::{step_gnc_coord, GncState};
use super::StepConfig;
use crate::chart::{pullback_from_congruence, Chart, ChartKind, Exactness};
use crate::error::Result;
use crate::problems::{gmm_problem, GmmSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmStepConfig {
    pub component: StepConfig,
    pub logit_step: f64,
    pub exactness: Exactness,
}

#[derive(Clone, Debug)]
pub struct GmmOptimizer {
    spec: GmmSpec,
    charts: Vec<Chart>,
    states: Vec<GncState>,
    cfg: GmmStepConfig,
}

impl GmmOptimizer {
    pub fn new(spec: GmmSpec, cfg: GmmStepConfig) -> Result<Self> {
        cfg.component.validate()?;
        let charts = spec
            .components
            .iter()
            .map(|f| Chart::new(ChartKind::GaussianAugmented, f.clone()))
            .collect::<Result<Vec<_>>>()?;
        let states = vec![GncState { w: None, exactness: cfg.exactness }; charts.len()];
        Ok(GmmOptimizer { spec, charts, states, cfg })
    }

    pub fn spec(&self) -> &GmmSpec {
        &self.spec
    }

    /// Average negative log-likelihood at the current parameters.
    pub fn loss(&self) -> Result<f64> {
        Ok(gmm_problem(&self.spec)?.nll)
    }

    /// One step on every component and the logits; returns the loss before the step.
    pub fn step(&mut self) -> Result<f64> {
        let eval = gmm_problem(&self.spec)?;
        for (c, y) in eval.congruence.iter().enumerate() {
            let g = pullback_from_congruence(&self.charts[c], y)?;
            let next = step_gnc_coord(&mut self.states[c], &self.charts[c], &g, &self.cfg.component)?;
            self.spec.components[c] = next.reference().clone();
            self.charts[c] = next;
        }
        self.spec.logits -= eval.logit_grad * self.cfg.logit_step;
        Ok(eval.nll)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::FactorState;
    use crate::linalg::{DenseMatrix, TruncationMode, Vector};
    use crate::problems::{gmm_samples, GmmTruth};

    #[test]
    fn fitting_reduces_the_loss() {
        let truth = GmmTruth::random(3, 2, 2);
        let data = gmm_samples(3, &truth, 400);
        let comps = (0..2)
            .map(|c| FactorState::Gaussian {
                l: DenseMatrix::identity(2, 2) * 2.0,
                mu: Vector::from_column_slice(&[c as f64 - 0.5, 0.0]),
            })
            .collect();
        let spec = GmmSpec::new(Vector::zeros(2), comps, data).unwrap();
        let cfg = GmmStepConfig {
            component: StepConfig::new(0.1, 0.5, TruncationMode::Quadratic).unwrap(),
            logit_step: 0.1,
            exactness: Exactness::FirstOrder,
        };
        let mut opt = GmmOptimizer::new(spec, cfg).unwrap();
        let first = opt.step().unwrap();
        for _ in 0..200 {
            opt.step().unwrap();
        }
        let last = opt.loss().unwrap();
        assert!(last.is_finite() && last < first - 0.1, "{first} -> {last}");
    }
}
