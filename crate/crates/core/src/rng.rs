//! Seeded random streams.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`). A run is identified by a
//! 64-bit seed expanded with `seed_from_u64`; independent purposes (problem
//! data, initialization, minibatches) draw from separate ChaCha streams of
//! that seed selected with `set_stream`, so adding draws to one purpose never
//! shifts another. Normal variates use `rand_distr::StandardNormal`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{DenseMatrix, SymmetricMatrix, Vector};
use crate::spd::SpdPoint;

pub type Rng64 = ChaCha8Rng;

/// Stream identifiers used across the crate.
pub mod streams {
    pub const PROBLEM: u64 = 1;
    pub const INIT: u64 = 2;
    pub const DATA: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const VERIFY: u64 = 5;
}

/// The generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> Rng64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal(rng: &mut Rng64) -> f64 {
    rng.sample(StandardNormal)
}

pub fn uniform(rng: &mut Rng64) -> f64 {
    rng.random::<f64>()
}

pub fn gaussian_matrix(rng: &mut Rng64, rows: usize, cols: usize) -> DenseMatrix {
    // Fill row by row so the layout of draws does not depend on storage order.
    let mut m = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = normal(rng);
        }
    }
    m
}

pub fn gaussian_vector(rng: &mut Rng64, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| normal(rng))
}

pub fn random_sym(rng: &mut Rng64, n: usize, scale: f64) -> SymmetricMatrix {
    SymmetricMatrix::new(gaussian_matrix(rng, n, n) * scale)
}

/// G·Gᵀ/n + ½I: well conditioned, dense.
pub fn random_spd(rng: &mut Rng64, n: usize) -> SpdPoint {
    let g = gaussian_matrix(rng, n, n);
    let s = SymmetricMatrix::new(&g * g.transpose() / n as f64 + DenseMatrix::identity(n, n) * 0.5);
    SpdPoint::new(s).expect("shifted Gram matrix is SPD")
}

/// Q·diag(λ)·Qᵀ with λ log-spaced on [1, cond] and Q a random orthogonal matrix.
pub fn random_spd_with_condition(rng: &mut Rng64, n: usize, cond: f64) -> SpdPoint {
    let q = gaussian_matrix(rng, n, n).qr().q();
    let spec = Vector::from_fn(n, |i, _| {
        let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        cond.powf(t)
    });
    let s = SymmetricMatrix::new(&q * DenseMatrix::from_diagonal(&spec) * q.transpose());
    SpdPoint::new(s).expect("positive spectrum")
}

/// I + scale·G/√n, invertible for the small scales used here.
pub fn near_identity(rng: &mut Rng64, n: usize, scale: f64) -> DenseMatrix {
    DenseMatrix::identity(n, n) + gaussian_matrix(rng, n, n) * (scale / (n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<f64> = (0..4).map(|_| normal(&mut stream(7, 1))).collect();
        let b: Vec<f64> = (0..4).map(|_| normal(&mut stream(7, 1))).collect();
        assert_eq!(a, b);
        let mut s1 = stream(7, 1);
        let mut s2 = stream(7, 2);
        assert_ne!(normal(&mut s1), normal(&mut s2));
    }

    #[test]
    fn conditioned_spd_has_requested_spectrum() {
        let mut rng = stream(3, 0);
        let s = random_spd_with_condition(&mut rng, 6, 100.0);
        let (vals, _) = crate::linalg::sym_eigen(s.value());
        assert!((vals.max() / vals.min() - 100.0).abs() < 1e-8);
    }
}
