//! Parameter update rules: Adam (the training default) plus the SGD and
//! Adagrad variants used by the baseline rows.

use crate::error::{CwError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
    Adagrad,
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adagrad => "adagrad",
        }
    }
}

#[derive(Debug, Clone)]
struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer with per-parameter accumulators. Freshly created at each task
/// boundary so the learning-rate schedule and growing heads stay simple.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    slots: Vec<Slot>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, shapes: &[&[usize]]) -> Optimizer {
        let slots = shapes
            .iter()
            .map(|s| {
                let n: usize = s.iter().product();
                Slot {
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                }
            })
            .collect();
        Optimizer {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            slots,
        }
    }

    pub fn for_params(kind: OptimizerKind, lr: f64, params: &[&Tensor]) -> Optimizer {
        let shapes: Vec<&[usize]> = params.iter().map(|p| p.shape()).collect();
        Optimizer::new(kind, lr, &shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// One update over all parameter slots. Counts as a single step.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.slots.len() || grads.len() != self.slots.len() {
            return Err(CwError::Shape {
                op: "optimizer_step",
                lhs: vec![params.len()],
                rhs: vec![self.slots.len()],
            });
        }
        self.t += 1;
        for (i, slot) in self.slots.iter_mut().enumerate() {
            let p = params[i].values_mut();
            let g = grads[i].values();
            if p.len() != slot.m.len() || g.len() != slot.m.len() {
                return Err(CwError::Shape {
                    op: "optimizer_step",
                    lhs: vec![p.len()],
                    rhs: vec![slot.m.len()],
                });
            }
            match self.kind {
                OptimizerKind::Sgd => {
                    for k in 0..p.len() {
                        p[k] -= self.lr * g[k];
                    }
                }
                OptimizerKind::Adagrad => {
                    for k in 0..p.len() {
                        slot.v[k] += g[k] * g[k];
                        p[k] -= self.lr * g[k] / (slot.v[k] + self.eps).sqrt();
                    }
                }
                OptimizerKind::Adam => {
                    let bc1 = 1.0 - self.beta1.powi(self.t as i32);
                    let bc2 = 1.0 - self.beta2.powi(self.t as i32);
                    for k in 0..p.len() {
                        slot.m[k] = self.beta1 * slot.m[k] + (1.0 - self.beta1) * g[k];
                        slot.v[k] = self.beta2 * slot.v[k] + (1.0 - self.beta2) * g[k] * g[k];
                        let mhat = slot.m[k] / bc1;
                        let vhat = slot.v[k] / bc2;
                        p[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: Vec<f64>) -> Tensor {
        let n = v.len();
        Tensor::new(vec![n], v).unwrap()
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        // with bias correction, |Δp| at t=1 is lr to within eps effects
        let mut p = single(vec![1.0, 1.0]);
        let g = single(vec![0.35, -1200.0]);
        let mut opt = Optimizer::for_params(OptimizerKind::Adam, 1e-3, &[&p]);
        opt.step(&mut [&mut p], &[g]).unwrap();
        assert!((p.values()[0] - (1.0 - 1e-3)).abs() < 1e-6);
        assert!((p.values()[1] - (1.0 + 1e-3)).abs() < 1e-6);
    }

    #[test]
    fn sgd_hand_value() {
        let mut p = single(vec![1.0]);
        let g = single(vec![2.0]);
        let mut opt = Optimizer::for_params(OptimizerKind::Sgd, 0.1, &[&p]);
        opt.step(&mut [&mut p], &[g]).unwrap();
        assert!((p.values()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_keeps_params_sgd_adagrad() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adagrad] {
            let mut p = single(vec![0.5, -0.25]);
            let g = single(vec![0.0, 0.0]);
            let mut opt = Optimizer::for_params(kind, 0.1, &[&p]);
            opt.step(&mut [&mut p], &[g]).unwrap();
            assert_eq!(p.values(), &[0.5, -0.25]);
        }
    }

    #[test]
    fn step_counter_increments() {
        let mut p = single(vec![1.0]);
        let mut opt = Optimizer::for_params(OptimizerKind::Adam, 1e-3, &[&p]);
        for expect in 1..=5u64 {
            opt.step(&mut [&mut p], &[single(vec![1.0])]).unwrap();
            assert_eq!(opt.step_count(), expect);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = single(vec![1.0]);
        let mut opt = Optimizer::for_params(OptimizerKind::Adam, 1e-3, &[&p]);
        let bad = single(vec![1.0, 2.0]);
        assert!(opt.step(&mut [&mut p], &[bad]).is_err());
    }
}
