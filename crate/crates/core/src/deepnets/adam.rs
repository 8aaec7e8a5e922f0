use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
    pub t: u64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr,
            t: 0,
        }
    }
}

pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || state.v.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "params {}, grads {}, moments {}/{}",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        *p -= state.lr * (*m / c1) / ((*v / c2).sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::new(3, 0.01);
        let mut p = vec![1.0, 1.0, 1.0];
        adam_step(&mut s, &mut p, &[0.3, -2.0, 50.0]).unwrap();
        for (x, sign) in p.iter().zip([1.0, -1.0, 1.0]) {
            assert!(((1.0 - x) - 0.01 * sign).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut s = AdamState::new(2, 0.1);
        let mut p = vec![0.7, -3.0];
        for _ in 0..100 {
            adam_step(&mut s, &mut p, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(p, vec![0.7, -3.0]);
    }

    #[test]
    fn quadratic_bowl_matches_scalar_recurrence() {
        let mut s = AdamState::new(1, 0.05);
        let mut p = vec![1.0];
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=500 {
            let g = 2.0 * p[0];
            adam_step(&mut s, &mut p, &[g]).unwrap();
            let g = 2.0 * x;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.05 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p[0] - x).abs() < 1e-12);
        assert!(p[0].abs() < 1e-2, "{}", p[0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut s = AdamState::new(2, 0.1);
        assert!(matches!(adam_step(&mut s, &mut [0.0, 0.0], &[1.0]), Err(Error::ShapeMismatch(_))));
    }
}
