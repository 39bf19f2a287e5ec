use serde::{Deserialize, Serialize};

use super::model::{Gradients, Model};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd {
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    #[serde(flatten)]
    pub kind: OptimizerKind,
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl OptimizerSpec {
    pub fn sgd(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        OptimizerSpec {
            kind: OptimizerKind::Sgd { momentum },
            lr,
            weight_decay,
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerSpec {
            kind: OptimizerKind::Adam {
                beta1: default_beta1(),
                beta2: default_beta2(),
                eps: default_adam_eps(),
            },
            lr,
            weight_decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("optimizer.lr", "must be finite and >= 0"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("optimizer.weight_decay", "must be >= 0"));
        }
        match self.kind {
            OptimizerKind::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => {
                Err(Error::config("optimizer.momentum", "must be in [0, 1)"))
            }
            OptimizerKind::Adam { beta1, beta2, eps }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 =>
            {
                Err(Error::config(
                    "optimizer.beta1/beta2/eps",
                    "betas must be in [0, 1) and eps > 0",
                ))
            }
            _ => Ok(()),
        }
    }

    /// Fresh optimizer state with moment buffers shaped like `model`'s parameters.
    pub fn build(&self, model: &Model) -> Optimizer {
        let zeros = || -> Vec<Tensor> {
            model
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect()
        };
        let second = match self.kind {
            OptimizerKind::Adam { .. } => zeros(),
            OptimizerKind::Sgd { .. } => Vec::new(),
        };
        Optimizer {
            spec: *self,
            first: zeros(),
            second,
            steps: 0,
        }
    }
}

/// SGD with heavy-ball momentum or Adam, both with L2 weight
/// decay folded into the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    spec: OptimizerSpec,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    steps: u64,
}

impl Optimizer {
    pub fn learning_rate(&self) -> f64 {
        self.spec.lr
    }

    pub fn set_learning_rate(&mut self, lr: f64) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::Domain(format!(
                "learning rate {lr} must be finite and >= 0"
            )));
        }
        self.spec.lr = lr;
        Ok(())
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &Gradients) -> Result<()> {
        if params.len() != grads.0.len() || params.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "{} parameters, {} gradients, {} moment buffers",
                params.len(),
                grads.0.len(),
                self.first.len()
            )));
        }
        self.steps += 1;
        let lr = self.spec.lr;
        let wd = self.spec.weight_decay;
        match self.spec.kind {
            OptimizerKind::Sgd { momentum } => {
                for ((p, g), buf) in params.iter_mut().zip(&grads.0).zip(&mut self.first) {
                    for ((w, &gi), b) in p.data_mut().iter_mut().zip(g.data()).zip(buf.data_mut()) {
                        let d = gi + wd * *w;
                        *b = momentum * *b + d;
                        *w -= lr * *b;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(&grads.0)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for (((w, &gi), mi), vi) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                    {
                        let d = gi + wd * *w;
                        *mi = beta1 * *mi + (1.0 - beta1) * d;
                        *vi = beta2 * *vi + (1.0 - beta2) * d * d;
                        let mhat = *mi / c1;
                        let vhat = *vi / c2;
                        *w -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        for (i, p) in params.iter().enumerate() {
            if p.first_non_finite().is_some() {
                return Err(Error::numeric(
                    format!("parameter tensor {i}"),
                    "non-finite value after optimizer step",
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ArchSpec;

    #[test]
    fn buffers_match_parameter_shapes() {
        let m = Model::build(&ArchSpec::mlp(&[5, 4, 3]), 0).unwrap();
        let opt = OptimizerSpec::adam(1e-3).build(&m);
        let shapes: Vec<_> = m.params().iter().map(|p| p.shape().to_vec()).collect();
        let first: Vec<_> = opt.first.iter().map(|p| p.shape().to_vec()).collect();
        let second: Vec<_> = opt.second.iter().map(|p| p.shape().to_vec()).collect();
        assert_eq!(shapes, first);
        assert_eq!(shapes, second);
    }

    #[test]
    fn adam_first_step_moves_each_weight_by_lr() {
        // bias-corrected first step is lr * g / (|g| + eps) ~ lr * sign(g)
        let mut p = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let g = Gradients(vec![Tensor::new(vec![3], vec![0.3, -4.0, 1e-2]).unwrap()]);
        let mut opt = Optimizer {
            spec: OptimizerSpec::adam(0.01),
            first: vec![Tensor::zeros(vec![3])],
            second: vec![Tensor::zeros(vec![3])],
            steps: 0,
        };
        opt.step(&mut [&mut p], &g).unwrap();
        let expect = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
        for (a, b) in p.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn momentum_accumulates() {
        let mut p = Tensor::new(vec![1], vec![0.0]).unwrap();
        let g = Gradients(vec![Tensor::new(vec![1], vec![1.0]).unwrap()]);
        let mut opt = Optimizer {
            spec: OptimizerSpec::sgd(0.1, 0.9, 0.0),
            first: vec![Tensor::zeros(vec![1])],
            second: vec![],
            steps: 0,
        };
        opt.step(&mut [&mut p], &g).unwrap();
        opt.step(&mut [&mut p], &g).unwrap();
        // buffers 1.0 then 1.9
        assert!((p.data()[0] - -(0.1 + 0.19)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(OptimizerSpec::sgd(-0.1, 0.0, 0.0).validate().is_err());
        assert!(OptimizerSpec::sgd(0.1, 1.0, 0.0).validate().is_err());
        assert!(OptimizerSpec::adam(1e-3).validate().is_ok());
    }
}
