//! Adam and AdamW with bias-corrected moments.

use serde::{Deserialize, Serialize};

use crate::error::SurvError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    /// Adam with weight decay applied directly to the parameters.
    AdamW,
}

impl std::str::FromStr for Optimizer {
    type Err = SurvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(Self::Adam),
            "adamw" => Ok(Self::AdamW),
            other => Err(SurvError::InvalidHyperparameter(format!("unknown optimizer {other:?}"))),
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

pub(crate) struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
    weight_decay: f64,
}

impl AdamState {
    pub(crate) fn new(kind: Optimizer, n: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr,
            weight_decay: match kind {
                Optimizer::Adam => 0.0,
                Optimizer::AdamW => weight_decay,
            },
        }
    }

    pub(crate) fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * (m_hat / (v_hat.sqrt() + EPS) + self.weight_decay * *p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = vec![1.0, -1.0];
        let mut adam = AdamState::new(Optimizer::Adam, 2, 0.01, 0.01);
        adam.update(&mut params, &[3.0, -0.5]);
        assert!((params[0] - 0.99).abs() < 1e-9);
        assert!((params[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn decoupled_decay_shrinks_with_zero_gradient() {
        let mut params = vec![2.0];
        let mut adamw = AdamState::new(Optimizer::AdamW, 1, 0.1, 0.01);
        adamw.update(&mut params, &[0.0]);
        assert!((params[0] - 2.0 * (1.0 - 0.1 * 0.01)).abs() < 1e-12);
        let mut params = vec![2.0];
        let mut adam = AdamState::new(Optimizer::Adam, 1, 0.1, 0.01);
        adam.update(&mut params, &[0.0]);
        assert_eq!(params[0], 2.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut x = vec![5.0, -3.0];
        let mut adam = AdamState::new(Optimizer::Adam, 2, 0.1, 0.0);
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * (v - 1.0)).collect();
            adam.update(&mut x, &g);
        }
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-3));
    }
}
