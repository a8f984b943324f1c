use serde::{Deserialize, Serialize};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const SGD_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    SgdMomentum,
}

/// Stateful first-order update rule over a flat parameter vector.
pub(crate) enum Optimizer {
    Adam { m: Vec<f64>, v: Vec<f64>, step: i32 },
    SgdMomentum { velocity: Vec<f64> },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n: usize) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                step: 0,
            },
            OptimizerKind::SgdMomentum => Optimizer::SgdMomentum { velocity: vec![0.0; n] },
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            Optimizer::Adam { m, v, step } => {
                *step += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*step);
                let c2 = 1.0 - ADAM_BETA2.powi(*step);
                for i in 0..params.len() {
                    let g = grad[i];
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
            Optimizer::SgdMomentum { velocity } => {
                for i in 0..params.len() {
                    velocity[i] = SGD_MOMENTUM * velocity[i] + grad[i];
                    params[i] -= lr * velocity[i];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // with bias correction the first update is lr·g/(|g|+eps)
        let mut p = vec![1.0, -1.0];
        let mut opt = Optimizer::new(OptimizerKind::Adam, 2);
        opt.step(&mut p, &[0.5, -2.0], 0.01);
        assert!((p[0] - (1.0 - 0.01 * 0.5 / (0.5 + ADAM_EPS))).abs() < 1e-15);
        assert!((p[1] - (-1.0 + 0.01 * 2.0 / (2.0 + ADAM_EPS))).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates() {
        let mut p = vec![0.0];
        let mut opt = Optimizer::new(OptimizerKind::SgdMomentum, 1);
        opt.step(&mut p, &[1.0], 0.1);
        opt.step(&mut p, &[1.0], 0.1);
        assert!((p[0] - (-0.1 - 0.19)).abs() < 1e-12);
    }
}
