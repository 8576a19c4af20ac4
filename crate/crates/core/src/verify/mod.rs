//! Independent numerical oracles for the geometric identities.

mod equivalence;
mod metric;
mod ode;
mod pullback;

pub use equivalence::{equivalence_harness, EquivalenceReport, Measure, CHECKS, SLOPE_BETAS};
pub use metric::{metric_bilinear, metric_gram, orthonormality_suite, orthonormality_with, BilinearReport, OrthonormalityReport, DEFAULT_H};
pub use ode::{
    geodesic_convergence_ratio, geodesic_ode_oracle, ode_suite, transport_convergence_ratio, transport_ode_oracle, OdeConfig, OdeReport,
    TransportKind,
};
pub use pullback::{chart_gradient_error, pullback_suite, PullbackCheck, FD_STEP};

use serde::Serialize;

use crate::chart::{bracket, random_coord, random_factor, Chart, ChartKind, CoordElement};
use crate::error::Result;
use crate::linalg::hadamard;
use crate::rng::{stream, streams};

/// Least-squares slope of log(err) against log(step).
pub fn loglog_slope(steps: &[f64], errs: &[f64]) -> f64 {
    assert_eq!(steps.len(), errs.len());
    let n = steps.len() as f64;
    let xs: Vec<f64> = steps.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Leading correction to the Euclidean transport of a momentum m in the chart:
/// D⊙[D⊙m, (D⊙m)ᵀ], projected onto the coordinate space. It vanishes on
/// symmetric charts and is quadratic in m.
pub fn transport_correction_term(chart: &Chart, m: &CoordElement) -> Result<CoordElement> {
    chart.check_coord(m)?;
    let d = chart.scaling().as_matrix();
    let dm = hadamard(d, &m.embedded());
    Ok(chart.coord_from_embedded(&hadamard(d, &bracket(&dm, &dm.transpose()))))
}

/// ‖term(m/2)‖ / ‖term(m)‖, which is 1/4 for a quadratic term.
pub fn correction_homogeneity_ratio(chart: &Chart, m: &CoordElement) -> Result<f64> {
    let full = transport_correction_term(chart, m)?.norm();
    let half = transport_correction_term(chart, &m.scale(0.5))?.norm();
    Ok(half / full)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrectionReport {
    /// Largest correction norm over the symmetric charts.
    pub symmetric_max: f64,
    /// Homogeneity ratios on the triangular chart.
    pub triangular_ratios: Vec<f64>,
    /// ‖term(m)‖ / ‖m‖ on the triangular chart, for scale.
    pub triangular_relative: Vec<f64>,
    pub passed: bool,
}

/// The correction term on every symmetric chart and its quadratic homogeneity
/// on the triangular chart, for sizes 2..=5.
pub fn correction_suite(seed: u64, trials: usize) -> Result<CorrectionReport> {
    let mut rng = stream(seed, streams::VERIFY);
    let mut symmetric_max = 0.0f64;
    let mut triangular_ratios = Vec::new();
    let mut triangular_relative = Vec::new();
    for size in 2..=5 {
        for _ in 0..trials {
            for kind in ChartKind::ALL.into_iter().filter(|k| k.is_symmetric_subspace()) {
                let chart = Chart::new(kind, random_factor(kind, size, &mut rng))?;
                let m = random_coord(&chart, &mut rng, 1.0);
                symmetric_max = symmetric_max.max(transport_correction_term(&chart, &m)?.norm());
            }
            let chart = Chart::new(ChartKind::TriangularA, random_factor(ChartKind::TriangularA, size, &mut rng))?;
            let m = random_coord(&chart, &mut rng, 1.0);
            triangular_ratios.push(correction_homogeneity_ratio(&chart, &m)?);
            triangular_relative.push(transport_correction_term(&chart, &m)?.norm() / m.norm());
        }
    }
    let passed = symmetric_max < 1e-14 && triangular_ratios.iter().all(|r| (r - 0.25).abs() < 1e-10);
    Ok(CorrectionReport { symmetric_max, triangular_ratios, triangular_relative, passed })
}
