use serde::{Deserialize, Serialize};

use super::network::{DenseNetwork, Gradients};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Sgd,
    /// Adaptive-moment gradient descent (beta1 0.9, beta2 0.999).
    Adam,
}

#[derive(Debug, Clone)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
}

/// Updates a fixed set of networks from matching gradients.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    steps: u64,
    moments: Vec<Moments>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, nets: &[&DenseNetwork]) -> Self {
        let moments = nets
            .iter()
            .map(|n| Moments {
                first: vec![0.0; n.param_count()],
                second: vec![0.0; n.param_count()],
            })
            .collect();
        Self {
            kind,
            learning_rate,
            steps: 0,
            moments,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, nets: &mut [&mut DenseNetwork], grads: &[&Gradients]) {
        assert_eq!(nets.len(), self.moments.len(), "optimizer built for a different network set");
        self.steps += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (net, g) in nets.iter_mut().zip(grads) {
                    for (p, gv) in net.params_mut().zip(g.iter()) {
                        *p -= lr * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let c1 = 1.0 - BETA1.powi(t);
                let c2 = 1.0 - BETA2.powi(t);
                for ((net, g), mo) in nets.iter_mut().zip(grads).zip(&mut self.moments) {
                    for (((p, gv), m), v) in net
                        .params_mut()
                        .zip(g.iter())
                        .zip(&mut mo.first)
                        .zip(&mut mo.second)
                    {
                        *m = BETA1 * *m + (1.0 - BETA1) * gv;
                        *v = BETA2 * *v + (1.0 - BETA2) * gv * gv;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPSILON);
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
    fn sgd_and_adam_first_step() {
        let mut net = DenseNetwork::identity(2);
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].0 = vec![1.0, -2.0, 0.0, 4.0];
        g.layers[0].1 = vec![0.5, 0.0];

        let mut sgd = Optimizer::new(OptimizerKind::Sgd, 0.1, &[&net]);
        let before: Vec<f64> = net.params().copied().collect();
        sgd.step(&mut [&mut net], &[&g]);
        let after: Vec<f64> = net.params().copied().collect();
        for ((a, b), gv) in before.iter().zip(&after).zip(g.iter()) {
            assert!((a - 0.1 * gv - b).abs() < 1e-15);
        }

        // bias-corrected first Adam step moves each parameter by ~lr * sign(g)
        let mut net = DenseNetwork::identity(2);
        let mut adam = Optimizer::new(OptimizerKind::Adam, 0.01, &[&net]);
        adam.step(&mut [&mut net], &[&g]);
        let moved: Vec<f64> = net.params().zip(&before).map(|(a, b)| b - a).collect();
        for (d, gv) in moved.iter().zip(g.iter()) {
            let expect = if *gv == 0.0 { 0.0 } else { 0.01 * gv.signum() };
            assert!((d - expect).abs() < 1e-9, "{d} vs {expect}");
        }
        assert_eq!(adam.steps(), 1);
    }
}
