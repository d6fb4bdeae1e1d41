use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam hyperparameters. `eps` is fixed at `1e-8` by [`AdamConfig::new`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub const EPS: f64 = 1e-8;

    pub fn new(lr: f64, beta0: f64, beta1: f64) -> Self {
        Self {
            lr,
            beta0,
            beta1,
            eps: Self::EPS,
        }
    }
}

/// First and second moment accumulators plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }
}

/// One bias-corrected Adam descent step: `params -= lr · m̂ / (sqrt(v̂) + eps)`.
/// Ascent is a descent step on the negated gradient.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::DimensionMismatch {
            expected: state.m.len(),
            got: grads.len(),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let c0 = 1.0 - cfg.beta0.powi(t);
    let c1 = 1.0 - cfg.beta1.powi(t);
    for k in 0..params.len() {
        let g = grads[k];
        state.m[k] = cfg.beta0 * state.m[k] + (1.0 - cfg.beta0) * g;
        state.v[k] = cfg.beta1 * state.v[k] + (1.0 - cfg.beta1) * g * g;
        let mhat = state.m[k] / c0;
        let vhat = state.v[k] / c1;
        params[k] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: AdamConfig = AdamConfig {
        lr: 1e-3,
        beta0: 0.5,
        beta1: 0.999,
        eps: 1e-8,
    };

    #[test]
    fn first_step_is_sign_sized() {
        let g = [0.3, -2.0, 1e-3];
        let mut p = [0.0; 3];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &g, &mut s, &CFG).unwrap();
        for (pk, gk) in p.iter().zip(g) {
            let expected = -CFG.lr * gk / (gk.abs() + CFG.eps);
            assert!((pk - expected).abs() < 1e-15);
            assert!((pk.abs() - CFG.lr).abs() < CFG.lr * 1e-5);
        }
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = [1.0, -2.0];
        let mut s = AdamState::new(2);
        for _ in 0..10 {
            adam_step(&mut p, &[0.0, 0.0], &mut s, &CFG).unwrap();
        }
        assert_eq!(p, [1.0, -2.0]);
    }

    #[test]
    fn repeated_gradient_does_not_grow_step() {
        let g = [0.7, -0.01];
        let mut p = [0.0; 2];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &g, &mut s, &CFG).unwrap();
        let first = p;
        adam_step(&mut p, &g, &mut s, &CFG).unwrap();
        for k in 0..2 {
            let second = (p[k] - first[k]).abs();
            assert!(second <= first[k].abs() + 1e-12);
        }
    }

    #[test]
    fn scale_invariant_first_step() {
        let g = [0.2, -0.4, 3.0];
        let g10: Vec<f64> = g.iter().map(|x| 10.0 * x).collect();
        let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
        adam_step(&mut a, &g, &mut AdamState::new(3), &CFG).unwrap();
        adam_step(&mut b, &g10, &mut AdamState::new(3), &CFG).unwrap();
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < CFG.lr * 1e-6);
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::new(2);
        assert!(adam_step(&mut [0.0; 2], &[0.0; 3], &mut s, &CFG).is_err());
    }
}
