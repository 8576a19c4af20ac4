//! Deterministic synthetic datasets drawn from the ChaCha8 DATA stream.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Vector};
use crate::rng::{gaussian_vector, near_identity, normal, stream, streams, uniform, Rng64};

/// Ground-truth mixture used to draw samples.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmTruth {
    pub weights: Vec<f64>,
    pub means: Vec<Vector>,
    /// Covariance factors: component c has covariance L·Lᵀ.
    pub factors: Vec<DenseMatrix>,
}

impl GmmTruth {
    /// Well-separated components with means of scale 3 and shrunken near-identity factors.
    pub fn random(seed: u64, d: usize, comps: usize) -> Self {
        let mut rng = stream(seed, streams::PROBLEM);
        let means = (0..comps).map(|_| gaussian_vector(&mut rng, d) * 3.0).collect();
        let factors = (0..comps).map(|_| near_identity(&mut rng, d, 0.4) * 0.7).collect();
        GmmTruth {
            weights: vec![1.0 / comps as f64; comps],
            means,
            factors,
        }
    }

    /// One standard normal component.
    pub fn standard(d: usize) -> Self {
        GmmTruth {
            weights: vec![1.0],
            means: vec![Vector::zeros(d)],
            factors: vec![DenseMatrix::identity(d, d)],
        }
    }
}

fn pick(rng: &mut Rng64, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = uniform(rng) * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// N samples from the mixture, one per column.
pub fn gmm_samples(seed: u64, truth: &GmmTruth, n: usize) -> DenseMatrix {
    let mut rng = stream(seed, streams::DATA);
    let d = truth.means.first().map_or(0, |m| m.len());
    let mut out = DenseMatrix::zeros(d, n);
    for j in 0..n {
        let c = pick(&mut rng, &truth.weights);
        let z = gaussian_vector(&mut rng, d);
        out.set_column(j, &(&truth.means[c] + &truth.factors[c] * z));
    }
    out
}

/// Two Gaussian classes with unit noise whose means sit at ±separation/2 along a random direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Blobs {
    /// One sample per column.
    pub x: DenseMatrix,
    pub labels: Vec<usize>,
}

pub fn two_class_blobs(seed: u64, n: usize, dim: usize, separation: f64) -> Blobs {
    let mut rng = stream(seed, streams::DATA);
    let dir = gaussian_vector(&mut rng, dim);
    let dir = &dir / dir.norm();
    let mut x = DenseMatrix::zeros(dim, n);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let label = j % 2;
        let sign = if label == 0 { -0.5 } else { 0.5 };
        let col = Vector::from_fn(dim, |i, _| sign * separation * dir[i] + normal(&mut rng));
        x.set_column(j, &col);
        labels.push(label);
    }
    Blobs { x, labels }
}

/// Reads whitespace-separated numbers, one sample per line, into columns.
pub fn load_rows(path: &Path) -> Result<DenseMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), ln + 1)))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Config(format!("{}:{}: ragged row", path.display(), ln + 1)));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("{}: no samples", path.display())));
    }
    let d = rows[0].len();
    Ok(DenseMatrix::from_fn(d, rows.len(), |i, j| rows[j][i]))
}
