//! A bias-free tanh MLP with cross-entropy loss and per-layer Kronecker factor statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SymmetricMatrix};
use crate::rng::{gaussian_matrix, stream, streams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub dims: Vec<usize>,
    /// Layer l maps dims[l] → dims[l+1]; W_l is dims[l+1] × dims[l].
    pub weights: Vec<DenseMatrix>,
    pub activation: Activation,
}

impl MlpModel {
    /// Gaussian weights scaled by 1/√fan_in, drawn from the INIT stream.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer spec {dims:?}")));
        }
        let mut rng = stream(seed, streams::INIT);
        let weights = dims
            .windows(2)
            .map(|w| gaussian_matrix(&mut rng, w[1], w[0]) / (w[0] as f64).sqrt())
            .collect();
        Ok(MlpModel {
            dims: dims.to_vec(),
            weights,
            activation: Activation::Tanh,
        })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        MlpModel {
            dims: dims.to_vec(),
            weights: dims.windows(2).map(|w| DenseMatrix::zeros(w[1], w[0])).collect(),
            activation: Activation::Tanh,
        }
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn loss(&self, x: &DenseMatrix, labels: &[usize]) -> Result<f64> {
        Ok(self.forward(x, labels)?.0)
    }

    /// Returns (loss, layer inputs, output logits).
    fn forward(&self, x: &DenseMatrix, labels: &[usize]) -> Result<(f64, Vec<DenseMatrix>, DenseMatrix)> {
        let b = x.ncols();
        if b == 0 || labels.len() != b {
            return Err(Error::Shape("batch and labels must be nonempty and the same length".into()));
        }
        if x.nrows() != self.dims[0] {
            return Err(Error::Shape(format!("input has {} features, model expects {}", x.nrows(), self.dims[0])));
        }
        let classes = *self.dims.last().expect("validated");
        if labels.iter().any(|&l| l >= classes) {
            return Err(Error::Shape("label out of range".into()));
        }
        let mut inputs = Vec::with_capacity(self.layers());
        let mut a = x.clone();
        for (l, w) in self.weights.iter().enumerate() {
            let s = w * &a;
            inputs.push(a);
            a = if l + 1 == self.layers() { s } else { s.map(f64::tanh) };
        }
        let mut loss = 0.0;
        for j in 0..b {
            let col = a.column(j);
            let m = col.max();
            let lse = m + col.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - col[labels[j]];
        }
        Ok((loss / b as f64, inputs, a))
    }
}

/// KFAC statistics for one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStats {
    /// Mean of layer-input outer products, p×p.
    pub mu_aa: SymmetricMatrix,
    /// Mean of pre-activation-gradient outer products, d×d.
    pub mu_gg: SymmetricMatrix,
}

#[derive(Clone, Debug)]
pub struct MlpOutput {
    pub loss: f64,
    /// ∂loss/∂W_l, each dims[l+1] × dims[l].
    pub grads: Vec<DenseMatrix>,
    pub stats: Vec<LayerStats>,
}

/// Cross-entropy loss, exact gradients and fresh factor estimates for one batch.
pub fn mlp_forward_backward(model: &MlpModel, x: &DenseMatrix, labels: &[usize]) -> Result<MlpOutput> {
    let (loss, inputs, logits) = model.forward(x, labels)?;
    let b = x.ncols() as f64;
    // Per-sample gradient of the per-sample loss w.r.t. the logits.
    let mut delta = logits.clone();
    for j in 0..logits.ncols() {
        let col = logits.column(j);
        let m = col.max();
        let z: f64 = col.iter().map(|v| (v - m).exp()).sum();
        for i in 0..logits.nrows() {
            delta[(i, j)] = (logits[(i, j)] - m).exp() / z;
        }
        delta[(labels[j], j)] -= 1.0;
    }
    let n = model.layers();
    let mut grads = vec![DenseMatrix::zeros(0, 0); n];
    let mut stats = Vec::with_capacity(n);
    for l in (0..n).rev() {
        let a = &inputs[l];
        grads[l] = &delta * a.transpose() / b;
        stats.push(LayerStats {
            mu_aa: SymmetricMatrix::new(a * a.transpose() / b),
            mu_gg: SymmetricMatrix::new(&delta * delta.transpose() / b),
        });
        if l > 0 {
            // inputs[l] = tanh(s_{l−1}), so tanh' = 1 − a².
            let back = model.weights[l].transpose() * &delta;
            delta = back.zip_map(a, |g, act| g * (1.0 - act * act));
        }
    }
    stats.reverse();
    Ok(MlpOutput { loss, grads, stats })
}
