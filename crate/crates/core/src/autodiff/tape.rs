use std::sync::Arc;

use super::ops::{Attrs, Op, Padding};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    entry: Option<(Op, Vec<Var>)>,
}

/// Records primitive applications for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node list is always
/// topologically sorted. Primitives whose inputs are all constants are
/// evaluated but not recorded.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    relu_inputs: Vec<Var>,
}

/// Gradients of a scalar loss, indexed by the leaf they belong to.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of recorded (differentiable) entries.
    pub fn entries(&self) -> usize {
        self.nodes.iter().filter(|n| n.entry.is_some()).count()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            entry: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Pre-activation inputs of every `relu` applied so far, in order.
    pub fn relu_inputs(&self) -> &[Var] {
        &self.relu_inputs
    }

    pub fn apply(&mut self, op: Op, inputs: &[Var]) -> Result<Var> {
        let value = {
            let refs: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            op.forward(&refs)?
        };
        if !value.all_finite() {
            return Err(Error::Evaluation(format!(
                "`{}` produced a non-finite value",
                op.name()
            )));
        }
        if matches!(op, Op::Relu) {
            self.relu_inputs.push(inputs[0]);
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            entry: requires_grad.then(|| (op, inputs.to_vec())),
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Applies a primitive looked up by catalogue name.
    pub fn apply_named(&mut self, name: &str, inputs: &[Var], attrs: &Attrs) -> Result<Var> {
        let op = Op::from_name(name, attrs)?;
        self.apply(op, inputs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Mul, &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Matmul, &[a, b])
    }

    pub fn conv2d(&mut self, x: Var, kernel: Var, pad: Padding) -> Result<Var> {
        self.apply(Op::Conv2d { pad }, &[x, kernel])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.apply(Op::Relu, &[x])
    }

    pub fn sin(&mut self, x: Var) -> Result<Var> {
        self.apply(Op::Sin, &[x])
    }

    pub fn cos(&mut self, x: Var) -> Result<Var> {
        self.apply(Op::Cos, &[x])
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        self.apply(Op::Concat { axis }, xs)
    }

    pub fn sum(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        self.apply(
            Op::Sum {
                axes: axes.to_vec(),
            },
            &[x],
        )
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.value(x).rank()).collect();
        self.sum(x, &axes)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.apply(Op::Scale(factor), &[x])
    }

    pub fn gather(&mut self, x: Var, shape: &[usize], index: Arc<Vec<usize>>) -> Result<Var> {
        self.apply(
            Op::Gather {
                shape: shape.to_vec(),
                index,
            },
            &[x],
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.apply(
            Op::Reshape {
                shape: shape.to_vec(),
            },
            &[x],
        )
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Entries are visited exactly once in reverse recording order, and
    /// contributions to a shared input are summed in that same order, so
    /// the result is bit-reproducible.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        for id in (0..=loss.0).rev() {
            let Some((op, inputs)) = &self.nodes[id].entry else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let needs: Vec<bool> = inputs
                .iter()
                .map(|v| self.nodes[v.0].requires_grad)
                .collect();
            let refs: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let contribs = op.backward(&refs, &self.nodes[id].value, &g, &needs);
            for (v, c) in inputs.iter().zip(contribs) {
                let Some(c) = c else { continue };
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&c),
                    slot @ None => *slot = Some(c),
                }
            }
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if node.entry.is_some() || !node.requires_grad {
                grads[id] = None;
            } else if grads[id].is_none() && id <= loss.0 {
                grads[id] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_sum_is_ones() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap());
        let s = tape.sum_all(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn product_rule() {
        let mut tape = Tape::new();
        let xv = Tensor::vector(vec![1.0, 2.0, -3.0]);
        let yv = Tensor::vector(vec![0.5, -4.0, 2.0]);
        let x = tape.param(xv.clone());
        let y = tape.param(yv.clone());
        let p = tape.mul(x, y).unwrap();
        let s = tape.sum_all(p).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &yv);
        assert_eq!(g.get(y).unwrap(), &xv);
    }

    #[test]
    fn shared_leaf_accumulates() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![3.0]));
        let a = tape.scale(x, 2.0).unwrap();
        let b = tape.add(a, x).unwrap();
        let s = tape.sum_all(b).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[3.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_are_not_recorded() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1.0]));
        let b = tape.constant(Tensor::vector(vec![2.0]));
        let c = tape.add(a, b).unwrap();
        assert!(!tape.requires_grad(c));
        assert_eq!(tape.entries(), 0);
        let p = tape.param(Tensor::vector(vec![2.0]));
        tape.mul(c, p).unwrap();
        assert_eq!(tape.entries(), 1);
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.param(Tensor::vector(vec![5.0]));
        let s = tape.sum_all(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(y).unwrap().data(), &[0.0]);
    }
}
