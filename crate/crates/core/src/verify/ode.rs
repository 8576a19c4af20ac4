//! Fixed-step RK4 integration of the SPD geodesic and transport equations.
//! The Christoffel action Γ(u, w) = −½(uτ⁻¹w + wτ⁻¹u) appears only here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve, DenseMatrix, SymmetricMatrix};
use crate::linalg::sym_sqrt;
use crate::rng::{random_spd, random_sym, stream, streams};
use crate::spd::{eucl_transport, rexp, riem_transport, EuclGrad, RiemTangent, SpdPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdeConfig {
    pub steps: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig { steps: 256 }
    }
}

impl OdeConfig {
    pub fn new(steps: usize) -> Result<Self> {
        if steps < 16 {
            return Err(Error::Config(format!("at least 16 integrator steps are needed, got {steps}")));
        }
        Ok(OdeConfig { steps })
    }
}

/// Which tensor is carried along the geodesic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    /// A tangent vector: ẇ = ½(wτ⁻¹τ̇ + τ̇τ⁻¹w).
    Riemannian,
    /// A Euclidean gradient: ẇ = −½(τ⁻¹τ̇w + wτ̇τ⁻¹).
    Euclidean,
}

/// State (τ, τ̇, w) of the joint system.
#[derive(Clone)]
struct State {
    tau: DenseMatrix,
    vel: DenseMatrix,
    w: DenseMatrix,
}

impl State {
    fn axpy(&self, h: f64, d: &State) -> State {
        State { tau: &self.tau + &d.tau * h, vel: &self.vel + &d.vel * h, w: &self.w + &d.w * h }
    }
}

fn deriv(s: &State, which: Option<TransportKind>) -> Result<State> {
    // τ̈ = τ̇τ⁻¹τ̇ is −Γ(τ̇, τ̇).
    let inv_vel = solve(&s.tau, &s.vel)?;
    let acc = &s.vel * &inv_vel;
    let dw = match which {
        None => DenseMatrix::zeros(s.w.nrows(), s.w.ncols()),
        Some(TransportKind::Riemannian) => {
            let x = &s.w * &inv_vel;
            (&x + x.transpose()) * 0.5
        }
        Some(TransportKind::Euclidean) => {
            let x = &inv_vel * &s.w;
            (&x + x.transpose()) * -0.5
        }
    };
    Ok(State { tau: s.vel.clone(), vel: acc, w: dw })
}

fn integrate(tau0: &SpdPoint, v: &RiemTangent, w0: &SymmetricMatrix, which: Option<TransportKind>, cfg: &OdeConfig) -> Result<State> {
    OdeConfig::new(cfg.steps)?;
    if v.dim() != tau0.dim() || w0.dim() != tau0.dim() {
        return Err(Error::Shape("ODE initial data do not match the base point".into()));
    }
    let h = 1.0 / cfg.steps as f64;
    let mut s = State { tau: tau0.as_matrix().clone(), vel: v.value().as_matrix().clone(), w: w0.as_matrix().clone() };
    for _ in 0..cfg.steps {
        let k1 = deriv(&s, which)?;
        let k2 = deriv(&s.axpy(0.5 * h, &k1), which)?;
        let k3 = deriv(&s.axpy(0.5 * h, &k2), which)?;
        let k4 = deriv(&s.axpy(h, &k3), which)?;
        s = State {
            tau: &s.tau + (&k1.tau + &k2.tau * 2.0 + &k3.tau * 2.0 + &k4.tau) * (h / 6.0),
            vel: &s.vel + (&k1.vel + &k2.vel * 2.0 + &k3.vel * 2.0 + &k4.vel) * (h / 6.0),
            w: &s.w + (&k1.w + &k2.w * 2.0 + &k3.w * 2.0 + &k4.w) * (h / 6.0),
        };
    }
    Ok(s)
}

/// Endpoint at t = 1 of the geodesic through τ₀ with initial velocity v.
pub fn geodesic_ode_oracle(tau0: &SpdPoint, v: &RiemTangent, cfg: &OdeConfig) -> Result<SpdPoint> {
    let s = integrate(tau0, v, &SymmetricMatrix::zeros(tau0.dim()), None, cfg)?;
    SpdPoint::new(SymmetricMatrix::new(s.tau))
}

/// w₀ transported to t = 1 along the geodesic from τ₀ with initial velocity v_geo.
pub fn transport_ode_oracle(
    tau0: &SpdPoint,
    v_geo: &RiemTangent,
    w0: &SymmetricMatrix,
    which: TransportKind,
    cfg: &OdeConfig,
) -> Result<SymmetricMatrix> {
    let s = integrate(tau0, v_geo, w0, Some(which), cfg)?;
    Ok(SymmetricMatrix::new(s.w))
}

/// err(N)/err(2N) of the geodesic oracle against `exact`; about 16 for a fourth-order method.
pub fn geodesic_convergence_ratio(tau0: &SpdPoint, v: &RiemTangent, exact: &SpdPoint, steps: usize) -> Result<f64> {
    let err = |n| -> Result<f64> {
        Ok((geodesic_ode_oracle(tau0, v, &OdeConfig::new(n)?)?.as_matrix() - exact.as_matrix()).norm())
    };
    Ok(err(steps)? / err(2 * steps)?)
}

/// As `geodesic_convergence_ratio` for a transported tensor.
pub fn transport_convergence_ratio(
    tau0: &SpdPoint,
    v_geo: &RiemTangent,
    w0: &SymmetricMatrix,
    which: TransportKind,
    exact: &SymmetricMatrix,
    steps: usize,
) -> Result<f64> {
    let err = |n| -> Result<f64> {
        Ok((transport_ode_oracle(tau0, v_geo, w0, which, &OdeConfig::new(n)?)?.as_matrix() - exact.as_matrix()).norm())
    };
    Ok(err(steps)? / err(2 * steps)?)
}

/// Closed-form agreement and convergence order of all three oracles.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OdeReport {
    pub steps: usize,
    /// Largest entrywise gap to rexp / riem_transport / eucl_transport.
    pub max_error: f64,
    /// err(16)/err(32) for the geodesic, Riemannian and Euclidean transports.
    pub ratios: Vec<f64>,
    pub passed: bool,
}

/// Random cases at k = 1, 2, 3 with `trials` draws each.
pub fn ode_suite(seed: u64, trials: usize, cfg: &OdeConfig) -> Result<OdeReport> {
    let mut rng = stream(seed, streams::VERIFY);
    let mut max_error = 0.0f64;
    let mut ratios = Vec::new();
    for k in 1..=3 {
        for _ in 0..trials {
            let tau0 = random_spd(&mut rng, k);
            let root = sym_sqrt(tau0.value())?;
            let v = RiemTangent::new(random_sym(&mut rng, k, 0.5).congruence(root.as_matrix()));
            let w = random_sym(&mut rng, k, 1.0);
            let tau1 = rexp(&tau0, &v)?;
            let riem = riem_transport(&tau0, &tau1, &RiemTangent::new(w.clone()))?.into_value();
            let eucl = eucl_transport(&tau0, &tau1, &EuclGrad::new(w.clone()))?.into_value();
            let g = geodesic_ode_oracle(&tau0, &v, cfg)?;
            max_error = max_error.max((g.as_matrix() - tau1.as_matrix()).amax());
            for (kind, want) in [(TransportKind::Riemannian, &riem), (TransportKind::Euclidean, &eucl)] {
                let got = transport_ode_oracle(&tau0, &v, &w, kind, cfg)?;
                max_error = max_error.max((got.as_matrix() - want.as_matrix()).amax());
            }
            if k == 3 {
                ratios.push(geodesic_convergence_ratio(&tau0, &v, &tau1, 16)?);
                ratios.push(transport_convergence_ratio(&tau0, &v, &w, TransportKind::Riemannian, &riem, 16)?);
                ratios.push(transport_convergence_ratio(&tau0, &v, &w, TransportKind::Euclidean, &eucl, 16)?);
            }
        }
    }
    let passed = max_error < 1e-6 && ratios.iter().all(|r| (12.0..=20.0).contains(r));
    Ok(OdeReport { steps: cfg.steps, max_error, ratios, passed })
}
