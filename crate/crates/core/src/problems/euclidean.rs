use super::EuclideanProblem;
use crate::linalg::{DenseMatrix, SymmetricMatrix, Vector};

/// Chained Rosenbrock Σᵢ 100(xᵢ₊₁ − xᵢ²)² + (1 − xᵢ)². The Hessian is
/// tridiagonal and is only ever touched through its band.
#[derive(Clone, Debug)]
pub struct Rosenbrock {
    n: usize,
}

pub fn rosenbrock_problem(n: usize) -> Rosenbrock {
    assert!(n >= 2, "rosenbrock needs at least two coordinates");
    Rosenbrock { n }
}

impl Rosenbrock {
    /// Upper off-diagonal band: H[i, i+1] = −400·xᵢ.
    fn off_diag(&self, x: &Vector, i: usize) -> f64 {
        -400.0 * x[i]
    }

    /// Dense Hessian, for small verification sizes only.
    pub fn hessian_dense(&self, x: &Vector) -> DenseMatrix {
        let n = self.n;
        let d = self.hess_diag(x);
        let mut h = DenseMatrix::from_diagonal(&d);
        for i in 0..n - 1 {
            h[(i, i + 1)] = self.off_diag(x, i);
            h[(i + 1, i)] = self.off_diag(x, i);
        }
        h
    }
}

impl EuclideanProblem for Rosenbrock {
    fn dim(&self) -> usize {
        self.n
    }

    fn loss(&self, x: &Vector) -> f64 {
        (0..self.n - 1)
            .map(|i| {
                let a = x[i + 1] - x[i] * x[i];
                let b = 1.0 - x[i];
                100.0 * a * a + b * b
            })
            .sum()
    }

    fn grad(&self, x: &Vector) -> Vector {
        let n = self.n;
        let mut g = Vector::zeros(n);
        for i in 0..n - 1 {
            let a = x[i + 1] - x[i] * x[i];
            g[i] += -400.0 * x[i] * a - 2.0 * (1.0 - x[i]);
            g[i + 1] += 200.0 * a;
        }
        g
    }

    fn hess_vec(&self, x: &Vector, v: &Vector) -> Vector {
        let n = self.n;
        let d = self.hess_diag(x);
        let mut out = d.component_mul(v);
        for i in 0..n - 1 {
            let o = self.off_diag(x, i);
            out[i] += o * v[i + 1];
            out[i + 1] += o * v[i];
        }
        out
    }

    fn hess_diag(&self, x: &Vector) -> Vector {
        let n = self.n;
        Vector::from_fn(n, |i, _| {
            let mut h = 0.0;
            if i + 1 < n {
                h += 1200.0 * x[i] * x[i] - 400.0 * x[i + 1] + 2.0;
            }
            if i > 0 {
                h += 200.0;
            }
            h
        })
    }
}

/// ½xᵀQx − bᵀx with a constant Hessian Q.
#[derive(Clone, Debug)]
pub struct QuadraticProblem {
    q: SymmetricMatrix,
    b: Vector,
}

impl QuadraticProblem {
    pub fn new(q: SymmetricMatrix, b: Vector) -> Self {
        assert_eq!(q.dim(), b.len(), "Q and b sizes differ");
        QuadraticProblem { q, b }
    }

    pub fn hessian(&self) -> &SymmetricMatrix {
        &self.q
    }
}

impl EuclideanProblem for QuadraticProblem {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn loss(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(self.q.as_matrix() * x)) - self.b.dot(x)
    }

    fn grad(&self, x: &Vector) -> Vector {
        self.q.as_matrix() * x - &self.b
    }

    fn hess_vec(&self, _x: &Vector, v: &Vector) -> Vector {
        self.q.as_matrix() * v
    }

    fn hess_diag(&self, _x: &Vector) -> Vector {
        self.q.as_matrix().diagonal()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_vector, stream};

    #[test]
    fn rosenbrock_examples() {
        let p = rosenbrock_problem(5);
        let ones = Vector::from_element(5, 1.0);
        assert_eq!(p.loss(&ones), 0.0);
        assert_eq!(p.grad(&ones).amax(), 0.0);
        assert_eq!(rosenbrock_problem(2).loss(&Vector::zeros(2)), 1.0);
    }

    #[test]
    fn rosenbrock_derivatives_match_finite_differences() {
        let p = rosenbrock_problem(10);
        let mut rng = stream(5, 0);
        for _ in 0..5 {
            let x = gaussian_vector(&mut rng, 10);
            let v = gaussian_vector(&mut rng, 10);
            let h = 1e-5;
            let fd = (p.loss(&(&x + &v * h)) - p.loss(&(&x - &v * h))) / (2.0 * h);
            let an = p.grad(&x).dot(&v);
            assert!((fd - an).abs() / an.abs().max(1.0) < 1e-6);
            let fd_hv = (p.grad(&(&x + &v * h)) - p.grad(&(&x - &v * h))) / (2.0 * h);
            let hv = p.hess_vec(&x, &v);
            assert!((&fd_hv - &hv).norm() / hv.norm() < 1e-6);
        }
    }

    #[test]
    fn rosenbrock_band_matches_dense_oracle() {
        let p = rosenbrock_problem(8);
        let mut rng = stream(6, 0);
        let x = gaussian_vector(&mut rng, 8);
        // Dense Hessian by differencing the gradient along unit vectors.
        let h = 1e-4;
        let mut dense = DenseMatrix::zeros(8, 8);
        for j in 0..8 {
            let mut e = Vector::zeros(8);
            e[j] = h;
            dense.set_column(j, &((p.grad(&(&x + &e)) - p.grad(&(&x - &e))) / (2.0 * h)));
        }
        assert!((p.hess_diag(&x) - dense.diagonal()).amax() < 1e-6 * dense.amax());
        // Term-by-term assembly of the 2×2 Hessian blocks of each summand.
        let mut assembled = DenseMatrix::zeros(8, 8);
        for i in 0..7 {
            let (a, b) = (x[i], x[i + 1]);
            assembled[(i, i)] += 1200.0 * a * a - 400.0 * b + 2.0;
            assembled[(i, i + 1)] += -400.0 * a;
            assembled[(i + 1, i)] += -400.0 * a;
            assembled[(i + 1, i + 1)] += 200.0;
        }
        assert!((p.hess_diag(&x) - assembled.diagonal()).amax() < 1e-12);
        assert!((p.hessian_dense(&x) - &assembled).amax() < 1e-12);
        let v = gaussian_vector(&mut rng, 8);
        assert!((p.hess_vec(&x, &v) - p.hessian_dense(&x) * &v).amax() < 1e-12 * dense.amax());
        let m = DenseMatrix::from_fn(8, 3, |i, j| (i * 3 + j) as f64);
        assert!((p.hess_mat(&x, &m) - p.hessian_dense(&x) * &m).amax() < 1e-9);
    }

    #[test]
    fn quadratic_gradient_vanishes_at_solution() {
        let q = SymmetricMatrix::from_diagonal(&[2.0, 4.0]);
        let p = QuadraticProblem::new(q, Vector::from_column_slice(&[2.0, 4.0]));
        assert_eq!(p.grad(&Vector::from_element(2, 1.0)).amax(), 0.0);
        assert_eq!(p.loss(&Vector::from_element(2, 1.0)), -3.0);
    }
}
