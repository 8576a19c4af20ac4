//! The `train-mlp` driver: a small tanh network on two-class blobs.

use gncopt_core::linalg::{audit, singular_values, sym_eigen, DenseMatrix};
use gncopt_core::optim::{step_ifkfac, step_kfac_baseline, step_sgd_momentum, IfkfacLayer, KfacLayer, SgdLayer};
use gncopt_core::problems::{mlp_forward_backward, two_class_blobs, MlpModel};
use gncopt_core::rng::{stream, streams};
use rand::seq::index::sample;
use serde::Serialize;

use crate::config::{ConfigError, TrainConfig, TrainOptimizer};
use crate::record::{Recorder, RunRecord};

/// Extreme singular values of one layer's preconditioner factors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactorRow {
    pub iter: usize,
    pub layer: usize,
    pub k_min_sv: f64,
    pub k_max_sv: f64,
    pub c_min_sv: f64,
    pub c_max_sv: f64,
}

#[derive(Clone, Debug)]
pub struct TrainRecord {
    pub run: RunRecord<TrainConfig>,
    /// Empty for SGD.
    pub factors: Vec<FactorRow>,
}

enum Layers {
    Ifkfac(Vec<IfkfacLayer>),
    Kfac(Vec<KfacLayer>),
    Sgd(Vec<SgdLayer>),
}

fn extremes(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, 0.0), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

impl Layers {
    fn factor_rows(&self, iter: usize) -> Vec<FactorRow> {
        let row = |layer, (k_min_sv, k_max_sv), (c_min_sv, c_max_sv)| FactorRow { iter, layer, k_min_sv, k_max_sv, c_min_sv, c_max_sv };
        match self {
            Layers::Ifkfac(ls) => ls
                .iter()
                .enumerate()
                .map(|(i, l)| row(i, extremes(singular_values(&l.k).iter().copied()), extremes(singular_values(&l.c).iter().copied())))
                .collect(),
            // The baseline stores KKᵀ and CCᵀ, whose eigenvalues are the squared singular values.
            Layers::Kfac(ls) => ls
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let sv = |s| extremes(sym_eigen(s).0.iter().map(|e| e.max(0.0).sqrt()));
                    row(i, sv(&l.kk), sv(&l.cc))
                })
                .collect(),
            Layers::Sgd(_) => Vec::new(),
        }
    }
}

pub fn train_mlp(cfg: &TrainConfig) -> Result<TrainRecord, ConfigError> {
    cfg.validate()?;
    let blobs = two_class_blobs(cfg.seed, cfg.samples, cfg.layers[0], cfg.separation);
    let mut model = MlpModel::init(&cfg.layers, cfg.seed).map_err(|e| ConfigError(e.to_string()))?;
    let shapes: Vec<(usize, usize)> = model.weights.iter().map(|w| w.shape()).collect();
    let mut layers = match cfg.optimizer {
        TrainOptimizer::Ifkfac => Layers::Ifkfac(shapes.iter().map(|&(d, p)| IfkfacLayer::new(d, p)).collect()),
        TrainOptimizer::Kfac => Layers::Kfac(shapes.iter().map(|&(d, p)| KfacLayer::new(d, p)).collect()),
        TrainOptimizer::Sgd => Layers::Sgd(shapes.iter().map(|&(d, p)| SgdLayer::new(d, p)).collect()),
    };
    let mut batch_rng = stream(cfg.seed, streams::BATCH);
    let mut rec = Recorder::new(cfg.timing);
    let mut factors = layers.factor_rows(0);
    let mut audited = 0u64;
    let mut error = None;
    let mut grad_norm = 0.0;
    let mut initial = None;

    for it in 0..=cfg.iters {
        if it > 0 {
            let idx = sample(&mut batch_rng, cfg.samples, cfg.batch).into_vec();
            let xb = DenseMatrix::from_fn(cfg.layers[0], cfg.batch, |r, c| blobs.x[(r, idx[c])]);
            let yb: Vec<usize> = idx.iter().map(|&j| blobs.labels[j]).collect();
            let out = match mlp_forward_backward(&model, &xb, &yb) {
                Ok(o) => o,
                Err(e) => {
                    error = Some(format!("iteration {it}: {e}"));
                    break;
                }
            };
            grad_norm = out.grads.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
            let step = it - 1;
            let (res, calls) = audit::measure(|| -> gncopt_core::Result<()> {
                for (l, w) in model.weights.iter_mut().enumerate() {
                    let (g, st) = (&out.grads[l], &out.stats[l]);
                    match &mut layers {
                        Layers::Ifkfac(ls) => step_ifkfac(&mut ls[l], w, st, g, &cfg.precond, step)?,
                        Layers::Kfac(ls) => step_kfac_baseline(&mut ls[l], w, st, g, &cfg.precond, step)?,
                        Layers::Sgd(ls) => step_sgd_momentum(&mut ls[l], w, g, &cfg.precond)?,
                    }
                }
                Ok(())
            });
            audited += calls;
            if let Err(e) = res {
                error = Some(format!("iteration {it}: {e}"));
                break;
            }
            if cfg.precond.updates_factors(step) {
                factors.extend(layers.factor_rows(it));
            }
        }
        let loss = model.loss(&blobs.x, &blobs.labels).unwrap_or(f64::NAN);
        rec.row(it, loss, grad_norm, None);
        initial.get_or_insert(loss);
        if !loss.is_finite() {
            error = Some(format!("non-finite loss at iteration {it}"));
            break;
        }
    }

    rec.metric("initial_loss", initial.unwrap_or(f64::NAN));
    rec.metric("optimizer_factorizations", audited as f64);
    if !factors.is_empty() {
        let min_sv = factors.iter().map(|f| f.k_min_sv.min(f.c_min_sv)).fold(f64::INFINITY, f64::min);
        rec.metric("min_factor_sv", min_sv);
        rec.invariant("factors-invertible", min_sv > 1e-8);
    }
    if cfg.optimizer == TrainOptimizer::Ifkfac {
        rec.invariant("inverse-free", audited == 0);
    }
    Ok(TrainRecord { run: rec.finish(cfg.clone(), error), factors })
}

pub fn write_factor_csv<W: std::io::Write>(rows: &[FactorRow], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["iter", "layer", "k_min_sv", "k_max_sv", "c_min_sv", "c_max_sv"])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(opt: TrainOptimizer) -> TrainConfig {
        TrainConfig { layers: vec![4, 8, 2], optimizer: opt, iters: 30, batch: 16, samples: 128, ..TrainConfig::default() }
    }

    #[test]
    fn every_optimizer_trains() {
        for opt in [TrainOptimizer::Ifkfac, TrainOptimizer::Kfac, TrainOptimizer::Sgd] {
            let rec = train_mlp(&small(opt)).unwrap();
            assert!(rec.run.passed(), "{opt:?}: {:?}", rec.run.summary);
            assert_eq!(rec.run.rows.len(), 31);
        }
    }

    #[test]
    fn zero_stepsize_sgd_keeps_the_loss() {
        let mut c = small(TrainOptimizer::Sgd);
        c.precond.beta2 = 0.0;
        let rec = train_mlp(&c).unwrap();
        let l0 = rec.run.rows[0].loss;
        assert!(rec.run.rows.iter().all(|r| r.loss == l0));
    }

    #[test]
    fn ifkfac_is_inverse_free_and_logs_factors() {
        let rec = train_mlp(&small(TrainOptimizer::Ifkfac)).unwrap();
        assert_eq!(rec.run.summary.metrics["optimizer_factorizations"], 0.0);
        // Factors are logged at start and after each update (every 10 steps), per layer.
        assert_eq!(rec.factors.len(), 2 * 4);
    }
}
