//! Adam on a flat parameter slice, used as a reference optimizer.

/// First and second moment estimates; empty until the first step.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u32,
}

const B1: f64 = 0.9;
const B2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// One bias-corrected Adam step with (β₁, β₂, ε) = (0.9, 0.999, 1e-8).
pub fn step_adam(state: &mut AdamState, params: &mut [f64], grad: &[f64], lr: f64) {
    assert_eq!(params.len(), grad.len(), "parameter and gradient lengths differ");
    if state.m.len() != params.len() {
        state.m = vec![0.0; params.len()];
        state.v = vec![0.0; params.len()];
        state.t = 0;
    }
    state.t += 1;
    let c1 = 1.0 - B1.powi(state.t as i32);
    let c2 = 1.0 - B2.powi(state.t as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = B1 * *m + (1.0 - B1) * g;
        *v = B2 * *v + (1.0 - B2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut st = AdamState::default();
        let mut p = [1.0, -2.0, 0.5];
        step_adam(&mut st, &mut p, &[3.0, -0.01, 0.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-8);
        assert!((p[1] + 1.9).abs() < 1e-5);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn matches_scalar_recursion() {
        let grads = [1.0, -0.5, 2.0, 0.25];
        let mut st = AdamState::default();
        let mut p = [0.0];
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.0f64);
        for (t, g) in grads.iter().enumerate() {
            step_adam(&mut st, &mut p, &[*g], 0.01);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            x -= 0.01 * mh / (vh.sqrt() + 1e-8);
            assert!((p[0] - x).abs() < 1e-15);
        }
    }
}
