//! Reverse-mode differentiation over a linear record of operations.
//!
//! A [`Tape`] owns every intermediate value. Each op appends a node; since
//! inputs always precede outputs, a reverse sweep over the node list is a
//! valid topological order. Reusing the same [`Var`] from two branches is how
//! weight sharing is expressed: both branches read one node, and the reverse
//! sweep sums their contributions into it.

use super::kernels::{self, ConvSpec, PoolSpec};
use super::Tensor;
use crate::error::{Error, Result};

/// Probabilities below this are clamped inside `ln`.
pub const PROB_CLAMP: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Index of a trainable parameter in its owner's parameter list.
pub type ParamId = usize;

/// Deliberate corruption of a backward rule, used as a negative control for
/// the gradient checker.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    ConvBackward,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv3d {
        input: Var,
        weights: Var,
        bias: Var,
        spec: ConvSpec,
    },
    MaxPool3d {
        input: Var,
        argmax: Vec<usize>,
    },
    Linear {
        input: Var,
        weights: Var,
        bias: Var,
    },
    Reshape {
        input: Var,
    },
    Relu {
        input: Var,
    },
    Softmax {
        input: Var,
    },
    AbsDiff {
        a: Var,
        b: Var,
    },
    Nll {
        probs: Var,
        target: usize,
    },
    Contrastive {
        a: Var,
        b: Var,
        same: bool,
        margin: f64,
    },
    DotConst {
        input: Var,
        weights: Tensor,
    },
    WeightedSum {
        terms: Vec<(Var, f64)>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
    fault: Option<Fault>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, what: &str) -> Result<Var> {
        let value = value.ensure_finite(what)?;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn node(&self, v: Var) -> Result<&Node> {
        self.nodes
            .get(v.0)
            .ok_or_else(|| Error::Autodiff(format!("{v:?} is not recorded on this tape")))
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, false, "constant")
    }

    /// Records a leaf whose gradient is reported by [`Tape::backward`].
    pub fn variable(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, true, "variable")
    }

    /// Records a trainable parameter. Registering the same id twice is an error.
    pub fn param(&mut self, id: ParamId, value: Tensor) -> Result<Var> {
        if self.params.iter().any(|&(p, _)| p == id) {
            return Err(Error::Autodiff(format!("parameter {id} registered twice")));
        }
        let v = self.variable(value)?;
        self.params.push((id, v));
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    pub fn conv3d(&mut self, input: Var, weights: Var, bias: Var, spec: ConvSpec) -> Result<Var> {
        self.node(input)?;
        let y = kernels::conv3d_forward(self.value(input), self.value(weights), self.value(bias), &spec)?;
        let rg = self.grad_flag(&[input, weights, bias]);
        self.push(
            y,
            Op::Conv3d {
                input,
                weights,
                bias,
                spec,
            },
            rg,
            "conv3d",
        )
    }

    pub fn maxpool3d(&mut self, input: Var, spec: PoolSpec) -> Result<Var> {
        self.node(input)?;
        let (y, argmax) = kernels::maxpool3d_forward(self.value(input), &spec)?;
        let rg = self.grad_flag(&[input]);
        self.push(y, Op::MaxPool3d { input, argmax }, rg, "maxpool3d")
    }

    /// Affine map of a tensor flattened to a vector.
    pub fn linear(&mut self, input: Var, weights: Var, bias: Var) -> Result<Var> {
        self.node(input)?;
        let x = self.value(input);
        let y = if x.rank() == 1 {
            kernels::fc_forward(x, self.value(weights), self.value(bias))?
        } else {
            kernels::fc_forward(&x.clone().flatten(), self.value(weights), self.value(bias))?
        };
        let rg = self.grad_flag(&[input, weights, bias]);
        self.push(
            y,
            Op::Linear {
                input,
                weights,
                bias,
            },
            rg,
            "linear",
        )
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        self.node(input)?;
        let y = self.value(input).clone().reshape(shape)?;
        let rg = self.grad_flag(&[input]);
        self.push(y, Op::Reshape { input }, rg, "reshape")
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        self.node(input)?;
        let y = kernels::relu(self.value(input));
        let rg = self.grad_flag(&[input]);
        self.push(y, Op::Relu { input }, rg, "relu")
    }

    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        self.node(input)?;
        let y = kernels::softmax(self.value(input));
        let rg = self.grad_flag(&[input]);
        self.push(y, Op::Softmax { input }, rg, "softmax")
    }

    pub fn abs_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        self.node(a)?;
        self.node(b)?;
        let y = kernels::abs_diff(self.value(a), self.value(b))?;
        let rg = self.grad_flag(&[a, b]);
        self.push(y, Op::AbsDiff { a, b }, rg, "abs_diff")
    }

    /// `-ln(max(probs[target], PROB_CLAMP))`.
    pub fn nll(&mut self, probs: Var, target: usize) -> Result<Var> {
        self.node(probs)?;
        let p = self.value(probs);
        if target >= p.len() {
            return Err(Error::InvalidArgument(format!(
                "target {target} out of range for {} classes",
                p.len()
            )));
        }
        let loss = -p.data()[target].max(PROB_CLAMP).ln();
        let rg = self.grad_flag(&[probs]);
        self.push(Tensor::scalar(loss), Op::Nll { probs, target }, rg, "nll")
    }

    /// Squared-hinge contrastive loss on the Euclidean distance of `a` and `b`.
    pub fn contrastive(&mut self, a: Var, b: Var, same: bool, margin: f64) -> Result<Var> {
        self.node(a)?;
        self.node(b)?;
        let loss = crate::losses::contrastive_loss(self.value(a), self.value(b), same, margin)?;
        let rg = self.grad_flag(&[a, b]);
        self.push(
            Tensor::scalar(loss),
            Op::Contrastive { a, b, same, margin },
            rg,
            "contrastive",
        )
    }

    /// `sum(input * weights)` against a constant tensor of the same size.
    pub fn dot_const(&mut self, input: Var, weights: Tensor) -> Result<Var> {
        self.node(input)?;
        let x = self.value(input);
        if x.len() != weights.len() {
            return Err(Error::shape(
                "dot_const",
                format!("{:?} vs {:?}", x.shape(), weights.shape()),
            ));
        }
        let s = x
            .data()
            .iter()
            .zip(weights.data())
            .fold(0.0, |a, (&u, &w)| a + u * w);
        let rg = self.grad_flag(&[input]);
        self.push(Tensor::scalar(s), Op::DotConst { input, weights }, rg, "dot_const")
    }

    /// `sum_i coeff_i * term_i` over scalar terms, accumulated in order.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = 0.0;
        for &(v, c) in terms {
            total += c * self.node(v)?.value.item()?;
        }
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let rg = self.grad_flag(&vars);
        self.push(
            Tensor::scalar(total),
            Op::WeightedSum {
                terms: terms.to_vec(),
            },
            rg,
            "weighted_sum",
        )
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::Autodiff("backward on an empty tape".into()));
        }
        let root_node = self.node(root)?;
        if !root_node.value.is_scalar() {
            return Err(Error::Autodiff(format!(
                "backward needs a scalar root, got shape {:?}",
                root_node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::full(root_node.value.shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let g = g.ensure_finite("backward")?;
            for (target, contrib) in self.vjp(node, &g)? {
                if !self.nodes[target.0].requires_grad {
                    continue;
                }
                match &mut grads[target.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
            // Keep interior gradients available for inspection.
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            params: self.params.clone(),
        })
    }

    fn vjp(&self, node: &Node, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let val = |v: Var| &self.nodes[v.0].value;
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv3d {
                input,
                weights,
                bias,
                spec,
            } => {
                let (gx, mut gw, gb) = kernels::conv3d_backward(val(*input), val(*weights), spec, g)?;
                if self.fault == Some(Fault::ConvBackward) {
                    gw = gw.scale(1.05);
                }
                vec![(*input, gx), (*weights, gw), (*bias, gb)]
            }
            Op::MaxPool3d { input, argmax } => {
                vec![(*input, kernels::maxpool3d_backward(val(*input).shape(), argmax, g)?)]
            }
            Op::Linear {
                input,
                weights,
                bias,
            } => {
                let x = val(*input);
                let (gx, gw, gb) = if x.rank() == 1 {
                    kernels::fc_backward(x, val(*weights), g)?
                } else {
                    kernels::fc_backward(&x.clone().flatten(), val(*weights), g)?
                };
                vec![(*input, gx.reshape(x.shape())?), (*weights, gw), (*bias, gb)]
            }
            Op::Reshape { input } => vec![(*input, g.clone().reshape(val(*input).shape())?)],
            Op::Relu { input } => vec![(*input, kernels::relu_backward(val(*input), g))],
            Op::Softmax { input } => vec![(*input, kernels::softmax_backward(&node.value, g))],
            Op::AbsDiff { a, b } => {
                let (ga, gb) = kernels::abs_diff_backward(val(*a), val(*b), g);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Nll { probs, target } => {
                let p = val(*probs);
                let pt = p.data()[*target];
                let mut gp = Tensor::zeros(p.shape());
                if pt > PROB_CLAMP {
                    gp.data_mut()[*target] = -g.data()[0] / pt;
                }
                vec![(*probs, gp)]
            }
            Op::Contrastive { a, b, same, margin } => {
                let (ga, gb) = crate::losses::contrastive_grad(val(*a), val(*b), *same, *margin)?;
                let s = g.data()[0];
                vec![(*a, ga.scale(s)), (*b, gb.scale(s))]
            }
            Op::DotConst { input, weights } => {
                let s = g.data()[0];
                let gx = Tensor::new(
                    val(*input).shape().to_vec(),
                    weights.data().iter().map(|&w| w * s).collect(),
                )?;
                vec![(*input, gx)]
            }
            Op::WeightedSum { terms } => {
                let s = g.data()[0];
                terms
                    .iter()
                    .map(|&(v, c)| (v, Tensor::full(val(v).shape(), c * s)))
                    .collect()
            }
        })
    }
}

/// Result of a reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient of the root wrt `v`; zeros if `v` did not influence the root.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.grads.get(v.0) {
            Some(Some(g)) => g.clone(),
            _ => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    /// Gradient for a registered parameter, zeros if it did not participate.
    pub fn param(&self, id: ParamId) -> Option<Tensor> {
        self.params
            .iter()
            .find(|&&(p, _)| p == id)
            .map(|&(_, v)| self.wrt(v))
    }

    /// `(id, gradient)` for every registered parameter in registration order.
    pub fn params(&self) -> Vec<(ParamId, Tensor)> {
        self.params.iter().map(|&(p, v)| (p, self.wrt(v))).collect()
    }
}
