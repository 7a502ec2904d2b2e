use serde::{Deserialize, Serialize};

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    /// Moments shaped after `shapes`, one entry per parameter tensor.
    pub fn new(learning_rate: f64, shapes: &[usize]) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_params(learning_rate: f64, params: &[&[f64]]) -> Self {
        Self::new(learning_rate, &params.iter().map(|p| p.len()).collect::<Vec<_>>())
    }

    pub fn matches(&self, params: &[&mut [f64]]) -> bool {
        self.m.len() == params.len() && self.m.iter().zip(params).all(|(m, p)| m.len() == p.len())
    }

    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>]) {
        assert!(self.matches(params), "optimizer state does not match the parameters");
        assert_eq!(grads.len(), params.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
