use super::SpdProblem;
use crate::error::Result;
use crate::linalg::{log_det_spd, spd_inverse, sym_fn, DenseMatrix, SymmetricMatrix};
use crate::spd::SpdPoint;

/// ℓ(τ) = Tr(τA) − log det τ, minimized at τ* = A⁻¹.
#[derive(Clone, Debug)]
pub struct LogDet {
    target: SpdPoint,
}

pub fn logdet_problem(target: SpdPoint) -> LogDet {
    LogDet { target }
}

impl LogDet {
    pub fn target(&self) -> &SpdPoint {
        &self.target
    }

    pub fn minimizer(&self) -> Result<SpdPoint> {
        SpdPoint::new(self.target.inverse()?)
    }

    /// ℓ(A⁻¹) = k + log det A.
    pub fn optimal_loss(&self) -> Result<f64> {
        Ok(self.target.dim() as f64 + log_det_spd(self.target.value())?)
    }
}

impl SpdProblem for LogDet {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn loss(&self, tau: &SpdPoint) -> f64 {
        let lin = tau.as_matrix().dot(self.target.as_matrix());
        log_det_spd(tau.value()).map_or(f64::NAN, |ld| lin - ld)
    }

    fn grad_tau(&self, tau: &SpdPoint) -> SymmetricMatrix {
        match spd_inverse(tau.value()) {
            Ok(inv) => self.target.value().sub(&inv),
            Err(_) => SymmetricMatrix::new(DenseMatrix::from_element(tau.dim(), tau.dim(), f64::NAN)),
        }
    }
}

/// ℓ(τ) = ½‖τ − M‖²_F.
#[derive(Clone, Debug)]
pub struct MetricNearness {
    target: SymmetricMatrix,
}

pub fn metric_nearness_problem(target: SymmetricMatrix) -> MetricNearness {
    MetricNearness { target }
}

impl MetricNearness {
    /// Minimizer over the closed cone: the positive part of M.
    pub fn projection(&self) -> SymmetricMatrix {
        sym_fn(&self.target, |x| x.max(0.0))
    }
}

impl SpdProblem for MetricNearness {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn loss(&self, tau: &SpdPoint) -> f64 {
        0.5 * (tau.as_matrix() - self.target.as_matrix()).norm_squared()
    }

    fn grad_tau(&self, tau: &SpdPoint) -> SymmetricMatrix {
        tau.value().sub(&self.target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{random_spd, random_sym, stream};

    fn fd_rel_err(p: &dyn SpdProblem, tau: &SpdPoint, dir: &SymmetricMatrix) -> f64 {
        let h = 1e-5;
        let at = |t: f64| p.loss(&SpdPoint::new(tau.value().add(&dir.scale(t))).unwrap());
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let an = p.grad_tau(tau).frobenius(dir);
        (fd - an).abs() / fd.abs().max(1e-3)
    }

    #[test]
    fn logdet_examples() {
        let p = logdet_problem(SpdPoint::new(SymmetricMatrix::from_diagonal(&[2.0, 4.0])).unwrap());
        let star = p.minimizer().unwrap();
        assert!((star.as_matrix() - DenseMatrix::from_diagonal(&crate::linalg::Vector::from_column_slice(&[0.5, 0.25]))).amax() < 1e-15);
        assert!((p.loss(&star) - (2.0 + 8f64.ln())).abs() < 1e-12);
        assert!((p.optimal_loss().unwrap() - 4.07944154).abs() < 1e-8);
        assert!(p.grad_tau(&star).norm() < 1e-15);
    }

    #[test]
    fn metric_nearness_examples() {
        let mut rng = stream(3, 0);
        let m = random_spd(&mut rng, 3);
        let p = metric_nearness_problem(m.value().clone());
        assert_eq!(p.loss(&m), 0.0);
        assert_eq!(p.grad_tau(&m).norm(), 0.0);
        assert!((p.projection().as_matrix() - m.as_matrix()).amax() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = stream(4, 0);
        for _ in 0..5 {
            let a = random_spd(&mut rng, 4);
            let tau = random_spd(&mut rng, 4);
            let dir = random_sym(&mut rng, 4, 1.0);
            assert!(fd_rel_err(&logdet_problem(a), &tau, &dir) < 1e-6);
            let m = random_sym(&mut rng, 4, 1.0);
            assert!(fd_rel_err(&metric_nearness_problem(m), &tau, &dir) < 1e-6);
        }
    }
}
