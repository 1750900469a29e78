//! Mini-batch optimizers over the per-layer weight matrices.

use crate::model::Matrix;
use serde::{Deserialize, Serialize};

/// Optimizer selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

pub(crate) struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, shapes: &[Matrix]) -> Optimizer {
        let zeros: Vec<Matrix> = shapes
            .iter()
            .map(|w| Matrix::zeros(w.rows, w.cols))
            .collect();
        Optimizer {
            kind,
            learning_rate,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn scale_learning_rate(&mut self, factor: f64) {
        self.learning_rate *= factor;
    }

    pub fn apply(&mut self, weights: &mut [Matrix], grads: &[Matrix]) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (w, g) in weights.iter_mut().zip(grads) {
                    for (wv, gv) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *wv -= self.learning_rate * gv;
                    }
                }
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let bc1 = 1.0 - beta1.powi(self.step as i32);
                let bc2 = 1.0 - beta2.powi(self.step as i32);
                for l in 0..weights.len() {
                    let (w, g) = (&mut weights[l], &grads[l]);
                    let (m, v) = (&mut self.m[l], &mut self.v[l]);
                    for k in 0..g.as_slice().len() {
                        let gv = g.as_slice()[k];
                        let mv = &mut m.as_mut_slice()[k];
                        *mv = beta1 * *mv + (1.0 - beta1) * gv;
                        let vv = &mut v.as_mut_slice()[k];
                        *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                        let m_hat = *mv / bc1;
                        let v_hat = *vv / bc2;
                        w.as_mut_slice()[k] -=
                            self.learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step_is_plain_descent() {
        let mut w = vec![Matrix::from_rows(vec![vec![1.0, 2.0]]).unwrap()];
        let g = vec![Matrix::from_rows(vec![vec![0.5, -1.0]]).unwrap()];
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, &w);
        opt.apply(&mut w, &g);
        assert!((w[0].get(0, 0) - 0.95).abs() < 1e-15);
        assert!((w[0].get(0, 1) - 2.1).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // With bias correction the first Adam step is ~lr * sign(g).
        let mut w = vec![Matrix::from_rows(vec![vec![0.0]]).unwrap()];
        let g = vec![Matrix::from_rows(vec![vec![3.0]]).unwrap()];
        let mut opt = Optimizer::new(OptimizerKind::default(), 1e-3, &w);
        opt.apply(&mut w, &g);
        assert!((w[0].get(0, 0) + 1e-3).abs() < 1e-6, "{}", w[0].get(0, 0));
    }
}
