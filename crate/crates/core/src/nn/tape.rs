//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every op evaluates eagerly and appends a node; [`Tape::backward`] walks the
//! nodes in reverse and accumulates vector-Jacobian products. Leaves created
//! with [`Tape::param`] receive gradients, leaves created with
//! [`Tape::constant`] do not, and nodes that depend only on constants are
//! skipped during the backward pass.

use super::ops;
use super::{NnError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    Relu(Var),
    Tanh(Var),
    Softplus(Var),
    NormalizeL1(Var),
    WeightedSumRows { x: Var, weights: Vec<f64> },
    Add(Var, Var),
    L1Distance(Var, Var),
    MinPoolSum(Var, Var),
    SquaredError { pred: Var, target: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    kink_margin: f64,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            kink_margin: f64::INFINITY,
        }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Smallest distance to a non-differentiable point seen so far: relu
    /// inputs at 0, equal coordinates under ℓ1 distance or coordinate-wise min.
    pub fn kink_margin(&self) -> f64 {
        self.kink_margin
    }

    fn note_kinks(&mut self, distances: impl Iterator<Item = f64>) {
        for d in distances {
            self.kink_margin = self.kink_margin.min(d.abs());
        }
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as data.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let y = ops::linear(self.value(x), self.value(w), self.value(b))?;
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(y, Op::Linear { x, w, b }, ng))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = ops::relu(self.value(x));
        let xs: Vec<f64> = self.value(x).data().to_vec();
        self.note_kinks(xs.into_iter());
        let ng = self.needs(x);
        self.push(y, Op::Relu(x), ng)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y = ops::tanh_act(self.value(x));
        let ng = self.needs(x);
        self.push(y, Op::Tanh(x), ng)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let y = ops::softplus(self.value(x));
        let ng = self.needs(x);
        self.push(y, Op::Softplus(x), ng)
    }

    pub fn normalize_l1(&mut self, x: Var) -> Result<Var, NnError> {
        let y = ops::normalize_l1(self.value(x))?;
        let ng = self.needs(x);
        Ok(self.push(y, Op::NormalizeL1(x), ng))
    }

    pub fn weighted_sum_rows(&mut self, x: Var, weights: Vec<f64>) -> Result<Var, NnError> {
        let y = ops::weighted_sum_rows(self.value(x), &weights)?;
        let ng = self.needs(x);
        Ok(self.push(y, Op::WeightedSumRows { x, weights }, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(NnError::ShapeMismatch {
                op: "add",
                detail: format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            });
        }
        let mut y = ta.clone();
        y.add_assign(tb);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(y, Op::Add(a, b), ng))
    }

    fn diffs(&self, u: Var, v: Var) -> Vec<f64> {
        self.value(u)
            .data()
            .iter()
            .zip(self.value(v).data())
            .map(|(a, b)| a - b)
            .collect()
    }

    pub fn l1_distance(&mut self, u: Var, v: Var) -> Result<Var, NnError> {
        let y = ops::l1_distance(self.value(u), self.value(v))?;
        let d = self.diffs(u, v);
        self.note_kinks(d.into_iter());
        let ng = self.needs(u) || self.needs(v);
        Ok(self.push(Tensor::scalar(y), Op::L1Distance(u, v), ng))
    }

    pub fn min_pool_sum(&mut self, u: Var, v: Var) -> Result<Var, NnError> {
        let y = ops::min_pool_sum(self.value(u), self.value(v))?;
        let d = self.diffs(u, v);
        self.note_kinks(d.into_iter());
        let ng = self.needs(u) || self.needs(v);
        Ok(self.push(Tensor::scalar(y), Op::MinPoolSum(u, v), ng))
    }

    /// `(pred - target)²` for a one-element `pred`.
    pub fn squared_error(&mut self, pred: Var, target: f64) -> Result<Var, NnError> {
        let p = self
            .value(pred)
            .item()
            .ok_or_else(|| NnError::NonScalarOutput(self.value(pred).shape().to_vec()))?;
        let ng = self.needs(pred);
        Ok(self.push(
            Tensor::scalar((p - target).powi(2)),
            Op::SquaredError { pred, target },
            ng,
        ))
    }

    /// Gradients of the one-element `output` with respect to every
    /// [`Tape::param`] leaf that influenced it.
    pub fn backward(&self, output: Var) -> Result<Gradients, NnError> {
        let out = self.value(output);
        if out.numel() != 1 {
            return Err(NnError::NonScalarOutput(out.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::from_parts(out.shape().to_vec(), vec![1.0]));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let mut send = |v: Var, t: Tensor| {
                if !self.needs(v) {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Linear { x, w, b } => {
                    let (gx, gw, gb) =
                        ops::linear_backward(self.value(*x), self.value(*w), &g, self.needs(*x));
                    if let Some(gx) = gx {
                        send(*x, gx);
                    }
                    send(*w, gw);
                    send(*b, gb);
                }
                Op::Relu(x) => send(*x, ops::relu_backward(self.value(*x), &g)),
                Op::Tanh(x) => send(*x, ops::tanh_backward(&node.value, &g)),
                Op::Softplus(x) => send(*x, ops::softplus_backward(self.value(*x), &g)),
                Op::NormalizeL1(x) => send(
                    *x,
                    ops::normalize_l1_backward(self.value(*x), &node.value, &g),
                ),
                Op::WeightedSumRows { x, weights } => send(
                    *x,
                    ops::weighted_sum_rows_backward(self.value(*x), weights, &g),
                ),
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::L1Distance(u, v) => {
                    let (du, dv) =
                        ops::l1_distance_backward(self.value(*u), self.value(*v), g.data()[0]);
                    send(*u, du);
                    send(*v, dv);
                }
                Op::MinPoolSum(u, v) => {
                    let (du, dv) =
                        ops::min_pool_sum_backward(self.value(*u), self.value(*v), g.data()[0]);
                    send(*u, du);
                    send(*v, dv);
                }
                Op::SquaredError { pred, target } => {
                    let p = self.value(*pred);
                    let d = 2.0 * (p.data()[0] - target) * g.data()[0];
                    send(*pred, Tensor::from_parts(p.shape().to_vec(), vec![d]));
                }
            }
        }
        Ok(Gradients(grads))
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients(Vec<Option<Tensor>>);

impl Gradients {
    /// Gradient for `v`, or `None` if `v` did not influence the output.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.0.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.0.get_mut(v.0).and_then(Option::take)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_gradients_by_hand() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[[1.0, 2.0]]).unwrap());
        let w = tape.param(Tensor::from_rows(&[[0.5, -1.0], [2.0, 0.0]]).unwrap());
        let b = tape.param(Tensor::vector(vec![0.0, 1.0]));
        let y = tape.linear(x, w, b).unwrap();
        let y = tape.weighted_sum_rows(y, vec![1.0]).unwrap();
        let zero = tape.constant(Tensor::zeros(&[2]));
        // y = [4.5, 0.0]; |y - 0|₁ hits the kink in the second coordinate
        let l = tape.l1_distance(y, zero).unwrap();
        assert_eq!(tape.value(l).item(), Some(4.5));
        assert_eq!(tape.kink_margin(), 0.0);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[1.0, 0.0, 2.0, 0.0]);
        assert_eq!(g.get(b).unwrap().data(), &[1.0, 0.0]);
        assert!(g.get(x).is_none());
    }

    #[test]
    fn shared_leaf_accumulates() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::vector(vec![3.0]));
        let s = tape.add(p, p).unwrap();
        let l = tape.squared_error(s, 0.0).unwrap();
        // (2p)² → 8p = 24
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(p).unwrap().data(), &[24.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(p), Err(NnError::NonScalarOutput(_))));
    }
}
