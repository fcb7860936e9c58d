//! Combined model state: residual-network kernels plus classifier
//! parameters, with a fixed, named block order used by the SGD update, the
//! gradient checker and the checkpoint format.

use crate::residual::{init_residual_params, ResidualNetParams};
use crate::stegnet::StegNetParams;
use crate::tensor::Real;

/// Everything the optimizer touches.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub residual: ResidualNetParams,
    pub classifier: StegNetParams,
}

/// Mutable view of one trainable parameter block.
pub struct ParamBlockMut<'a> {
    pub name: String,
    pub weights: &'a mut [Real],
    pub grad: &'a mut [Real],
    pub velocity: &'a mut [Real],
    pub weight_decay: Real,
}

impl ModelState {
    /// Residual kernels at their fixed initialization, classifier weights at
    /// zero. Use `trainer::init_model` for the trained configuration.
    pub fn new() -> Self {
        ModelState {
            residual: init_residual_params(),
            classifier: StegNetParams::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.residual.param_count() + self.classifier.param_count()
    }

    pub fn zero_grads(&mut self) {
        self.residual.zero_grad();
        self.classifier.zero_grad();
    }

    /// Trainable blocks in their fixed declared order:
    /// residual.k5, residual.k3, then per group conv / bn.gamma / bn.beta,
    /// then dense.weights, dense.bias.
    pub fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        let mut blocks = Vec::new();
        blocks.push(ParamBlockMut {
            name: "residual.k5".into(),
            weights: &mut self.residual.k5.weights,
            grad: &mut self.residual.k5.grad,
            velocity: &mut self.residual.k5.velocity,
            weight_decay: self.residual.k5.weight_decay,
        });
        blocks.push(ParamBlockMut {
            name: "residual.k3".into(),
            weights: &mut self.residual.k3.weights,
            grad: &mut self.residual.k3.grad,
            velocity: &mut self.residual.k3.velocity,
            weight_decay: self.residual.k3.weight_decay,
        });
        for (i, g) in self.classifier.groups.iter_mut().enumerate() {
            let gi = i + 1;
            blocks.push(ParamBlockMut {
                name: format!("g{gi}.conv"),
                weights: &mut g.conv.weights,
                grad: &mut g.conv.grad,
                velocity: &mut g.conv.velocity,
                weight_decay: g.conv.weight_decay,
            });
            blocks.push(ParamBlockMut {
                name: format!("g{gi}.bn.gamma"),
                weights: &mut g.bn.gamma,
                grad: &mut g.bn.grad_gamma,
                velocity: &mut g.bn.vel_gamma,
                weight_decay: 0.0,
            });
            blocks.push(ParamBlockMut {
                name: format!("g{gi}.bn.beta"),
                weights: &mut g.bn.beta,
                grad: &mut g.bn.grad_beta,
                velocity: &mut g.bn.vel_beta,
                weight_decay: 0.0,
            });
        }
        blocks.push(ParamBlockMut {
            name: "dense.weights".into(),
            weights: &mut self.classifier.dense.weights,
            grad: &mut self.classifier.dense.grad_w,
            velocity: &mut self.classifier.dense.vel_w,
            weight_decay: self.classifier.dense.weight_decay,
        });
        blocks.push(ParamBlockMut {
            name: "dense.bias".into(),
            weights: &mut self.classifier.dense.bias,
            grad: &mut self.classifier.dense.grad_b,
            velocity: &mut self.classifier.dense.vel_b,
            weight_decay: self.classifier.dense.weight_decay,
        });
        blocks
    }

    /// Read-only (name, values) pairs for every persisted block, in the
    /// checkpoint's declared order: residual kernels, then per group conv /
    /// bn.gamma / bn.beta / bn.running_mean / bn.running_var, then the dense
    /// layer.
    pub fn state_blocks(&self) -> Vec<(String, &[Real])> {
        let mut blocks: Vec<(String, &[Real])> = vec![
            ("residual.k5".into(), &self.residual.k5.weights),
            ("residual.k3".into(), &self.residual.k3.weights),
        ];
        for (i, g) in self.classifier.groups.iter().enumerate() {
            let gi = i + 1;
            blocks.push((format!("g{gi}.conv"), &g.conv.weights));
            blocks.push((format!("g{gi}.bn.gamma"), &g.bn.gamma));
            blocks.push((format!("g{gi}.bn.beta"), &g.bn.beta));
            blocks.push((format!("g{gi}.bn.running_mean"), &g.bn.running_mean));
            blocks.push((format!("g{gi}.bn.running_var"), &g.bn.running_var));
        }
        blocks.push(("dense.weights".into(), &self.classifier.dense.weights));
        blocks.push(("dense.bias".into(), &self.classifier.dense.bias));
        blocks
    }

    /// Mutable counterpart of [`ModelState::state_blocks`], same order.
    pub fn state_blocks_mut(&mut self) -> Vec<(String, &mut Vec<Real>)> {
        let mut blocks: Vec<(String, &mut Vec<Real>)> = vec![
            ("residual.k5".into(), &mut self.residual.k5.weights),
            ("residual.k3".into(), &mut self.residual.k3.weights),
        ];
        for (i, g) in self.classifier.groups.iter_mut().enumerate() {
            let gi = i + 1;
            blocks.push((format!("g{gi}.conv"), &mut g.conv.weights));
            blocks.push((format!("g{gi}.bn.gamma"), &mut g.bn.gamma));
            blocks.push((format!("g{gi}.bn.beta"), &mut g.bn.beta));
            blocks.push((format!("g{gi}.bn.running_mean"), &mut g.bn.running_mean));
            blocks.push((format!("g{gi}.bn.running_var"), &mut g.bn.running_var));
        }
        blocks.push((
            "dense.weights".into(),
            &mut self.classifier.dense.weights,
        ));
        blocks.push(("dense.bias".into(), &mut self.classifier.dense.bias));
        blocks
    }

    /// First parameter or gradient block containing a non-finite value, if
    /// any. Checks gradients (the usual failure site) first.
    pub fn first_non_finite_grad(&mut self) -> Option<String> {
        for b in self.blocks_mut() {
            if !b.grad.iter().all(|v| v.is_finite()) {
                return Some(format!("{}.grad", b.name));
            }
            if !b.weights.iter().all(|v| v.is_finite()) {
                return Some(b.name);
            }
        }
        None
    }
}

impl Default for ModelState {
    fn default() -> Self {
        Self::new()
    }
}
