use crate::error::{dim_err, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter optimizer memory.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: u64 },
}

impl OptimizerState {
    pub fn new(opt: &Optimizer, num_params: usize) -> Self {
        match opt {
            Optimizer::Sgd => OptimizerState::Sgd,
            Optimizer::Adam { .. } => OptimizerState::Adam {
                m: vec![0.0; num_params],
                v: vec![0.0; num_params],
                t: 0,
            },
        }
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, opt: &Optimizer, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if params.len() != grad.len() {
            return dim_err("gradient length does not match parameters");
        }
        match (self, opt) {
            (OptimizerState::Sgd, Optimizer::Sgd) => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            (OptimizerState::Adam { m, v, t }, Optimizer::Adam { beta1, beta2, eps }) => {
                if m.len() != params.len() {
                    return dim_err("optimizer state does not match parameters");
                }
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t as i32);
                let c2 = 1.0 - beta2.powi(*t as i32);
                for i in 0..params.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            }
            _ => return dim_err("optimizer state does not match optimizer kind"),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step() {
        let mut s = OptimizerState::new(&Optimizer::Sgd, 2);
        let mut p = vec![1.0, 2.0];
        s.step(&Optimizer::Sgd, &mut p, &[0.5, -1.0], 0.1).unwrap();
        assert_eq!(p, vec![0.95, 2.1]);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let opt = Optimizer::default();
        let mut s = OptimizerState::new(&opt, 2);
        let mut p = vec![0.0, 0.0];
        s.step(&opt, &mut p, &[3.0, -0.2], 0.01).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-9);
        assert!((p[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let opt = Optimizer::default();
        let mut s = OptimizerState::new(&opt, 3);
        let mut p = vec![0.3, -1.0, 2.0];
        s.step(&opt, &mut p, &[1.0, 2.0, 3.0], 0.0).unwrap();
        assert_eq!(p, vec![0.3, -1.0, 2.0]);
    }
}
