//! Baselines that use the exact exponential, inverse-exponential and transport maps.

use super::StepConfig;
use crate::error::Result;
use crate::spd::{eucl_transport, rexp, rexp_inv, riem_grad, riem_transport, EuclGrad, RiemTangent, SpdPoint};

/// τ ← RExp(τ, −β·τgτ).
pub fn step_rgd(tau: &SpdPoint, g: &EuclGrad, cfg: &StepConfig) -> Result<SpdPoint> {
    let v = riem_grad(tau, g)?;
    rexp(tau, &v.scale(-cfg.beta))
}

/// Riemannian momentum z, transported as a tangent vector.
#[derive(Clone, Debug, Default)]
pub struct RiemMomentumState {
    pub z: Option<RiemTangent>,
}

/// ν ← αz + β·ĝ; τ ← RExp(τ, −ν); z ← T̂(ν).
pub fn step_riem_momentum(state: &mut RiemMomentumState, tau: &SpdPoint, g: &EuclGrad, cfg: &StepConfig) -> Result<SpdPoint> {
    let gh = riem_grad(tau, g)?;
    let nu = match &state.z {
        Some(z) => RiemTangent::lin_comb(cfg.alpha, z, cfg.beta, &gh),
        None => gh.scale(cfg.beta),
    };
    let next = rexp(tau, &nu.scale(-1.0))?;
    state.z = Some(riem_transport(tau, &next, &nu)?);
    Ok(next)
}

/// Euclidean momentum w, transported as a gradient.
#[derive(Clone, Debug, Default)]
pub struct EuclMomentumState {
    pub w: Option<EuclGrad>,
}

/// m ← αw + βg; τ ← RExp(τ, −τmτ); w ← T(m).
pub fn step_eucl_momentum(state: &mut EuclMomentumState, tau: &SpdPoint, g: &EuclGrad, cfg: &StepConfig) -> Result<SpdPoint> {
    let m = match &state.w {
        Some(w) => EuclGrad::lin_comb(cfg.alpha, w, cfg.beta, g),
        None => g.scale(cfg.beta),
    };
    let next = rexp(tau, &riem_grad(tau, &m)?.scale(-1.0))?;
    state.w = Some(eucl_transport(tau, &next, &m)?);
    Ok(next)
}

/// Auxiliary point z of the accelerated scheme; starts at τ.
#[derive(Clone, Debug, Default)]
pub struct AhnState {
    pub z: Option<SpdPoint>,
}

/// y ← RExp(τ, −βĝ); z ← RExp(τ, α/(1−α)·RExp⁻¹(τ, z) − 2βĝ); τ ← RExp(y, α·RExp⁻¹(y, z)).
pub fn step_ahn(state: &mut AhnState, tau: &SpdPoint, g: &EuclGrad, cfg: &StepConfig) -> Result<SpdPoint> {
    let gh = riem_grad(tau, g)?;
    let y = rexp(tau, &gh.scale(-cfg.beta))?;
    let pull = match &state.z {
        Some(z) => rexp_inv(tau, z)?,
        None => RiemTangent::zeros(tau.dim()),
    };
    let a = cfg.alpha;
    let z = rexp(tau, &RiemTangent::lin_comb(a / (1.0 - a), &pull, -2.0 * cfg.beta, &gh))?;
    let next = if a == 0.0 { y.clone() } else { rexp(&y, &rexp_inv(&y, &z)?.scale(a))? };
    state.z = Some(z);
    Ok(next)
}

/// Auxiliary point y of the second accelerated scheme; starts at τ.
#[derive(Clone, Debug, Default)]
pub struct Alimisis21State {
    pub y: Option<SpdPoint>,
}

/// z ← RExp(τ, −βĝ); y ← RExp(y, −β/(1−α)·T̂_{τ→y}(ĝ)); τ ← RExp(y, α·RExp⁻¹(y, z)).
pub fn step_alimisis21(state: &mut Alimisis21State, tau: &SpdPoint, g: &EuclGrad, cfg: &StepConfig) -> Result<SpdPoint> {
    let gh = riem_grad(tau, g)?;
    let z = rexp(tau, &gh.scale(-cfg.beta))?;
    let y_cur = state.y.clone().unwrap_or_else(|| tau.clone());
    let moved = if state.y.is_some() { riem_transport(tau, &y_cur, &gh)? } else { gh };
    let a = cfg.alpha;
    let y = rexp(&y_cur, &moved.scale(-cfg.beta / (1.0 - a)))?;
    let next = if a == 0.0 { y.clone() } else { rexp(&y, &rexp_inv(&y, &z)?.scale(a))? };
    state.y = Some(y);
    Ok(next)
}
