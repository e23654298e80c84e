use std::sync::Arc;

use super::ops::{self, Elementwise, HingeWitness};
use super::{Activation, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Linear {
        w: Var,
        b: Var,
        x: Var,
    },
    Conv1d {
        w: Var,
        b: Var,
        x: Var,
    },
    Activation {
        kind: Activation,
        x: Var,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Elementwise {
        kind: Elementwise,
        a: Var,
        b: Var,
    },
    Abs {
        x: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    StackColumns {
        columns: Vec<Var>,
    },
    NormalizeColumns {
        x: Var,
        norms: Vec<T>,
    },
    InnerProducts {
        a: Var,
        b: Var,
    },
    MaxHinge {
        s: Var,
        margin: T,
        witness: HingeWitness,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Tensor<T>,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Wengert list of primitive applications. Nodes are appended in
/// evaluation order; [`Tape::backward`] walks them in reverse.
#[derive(Clone, Debug, Default)]
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

/// Gradients indexed by [`Var`]. Entries are `None` for values that do
/// not depend on any trainable leaf or were not reached from the output.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`. Used to reuse
    /// bound parameters across many independent forward passes.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(Arc::new(value), true)
    }

    /// A trainable leaf sharing storage with the caller.
    pub fn param_shared(&mut self, value: Arc<Tensor<T>>) -> Var {
        self.leaf(value, true)
    }

    /// A leaf that never receives a gradient (e.g. frozen base embeddings).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(Arc::new(value), false)
    }

    fn leaf(&mut self, value: Arc<Tensor<T>>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name.into()));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn linear(&mut self, w: Var, b: Var, x: Var) -> Result<Var> {
        let y = ops::linear(self.value(w), self.value(b), self.value(x))?;
        self.push("linear", y, Op::Linear { w, b, x }, &[w, b, x])
    }

    pub fn conv1d_same(&mut self, w: Var, b: Var, x: Var) -> Result<Var> {
        let y = ops::conv1d_same(self.value(w), self.value(b), self.value(x))?;
        self.push("conv1d", y, Op::Conv1d { w, b, x }, &[w, b, x])
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Result<Var> {
        let y = ops::activation(kind, self.value(x));
        self.push("activation", y, Op::Activation { kind, x }, &[x])
    }

    pub fn maxpool_time(&mut self, x: Var) -> Result<Var> {
        let (y, argmax) = ops::maxpool_time(self.value(x))?;
        self.push("maxpool_time", y, Op::MaxPool { x, argmax }, &[x])
    }

    pub fn elementwise(&mut self, kind: Elementwise, a: Var, b: Var) -> Result<Var> {
        let y = ops::elementwise(kind, self.value(a), self.value(b))?;
        self.push("elementwise", y, Op::Elementwise { kind, a, b }, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Mul, a, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Sub, a, b)
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        let y = self.value(x).map(|v| v.abs());
        self.push("abs", y, Op::Abs { x }, &[x])
    }

    /// Concatenates rank-1 values end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            v.dims1("concat")?;
            data.extend_from_slice(v.data());
        }
        self.push(
            "concat",
            Tensor::vector(data),
            Op::Concat { parts: parts.to_vec() },
            parts,
        )
    }

    /// Stacks equal-length rank-1 values as the columns of a matrix.
    pub fn stack_columns(&mut self, columns: &[Var]) -> Result<Var> {
        let cols: Vec<&[T]> = columns.iter().map(|&c| self.value(c).data()).collect();
        for &c in columns {
            self.value(c).dims1("stack_columns")?;
        }
        let y = Tensor::from_columns(&cols)?;
        self.push(
            "stack_columns",
            y,
            Op::StackColumns {
                columns: columns.to_vec(),
            },
            columns,
        )
    }

    pub fn normalize_columns(&mut self, x: Var) -> Result<Var> {
        let (y, norms) = ops::normalize_columns(self.value(x))?;
        self.push("normalize_columns", y, Op::NormalizeColumns { x, norms }, &[x])
    }

    pub fn inner_products(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::inner_products(self.value(a), self.value(b))?;
        self.push("inner_products", y, Op::InnerProducts { a, b }, &[a, b])
    }

    pub fn max_hinge(&mut self, s: Var, margin: T) -> Result<Var> {
        let (loss, witness) = ops::max_hinge_loss(self.value(s), margin)?;
        self.push(
            "max_hinge",
            Tensor::scalar(loss),
            Op::MaxHinge { s, margin, witness },
            &[s],
        )
    }

    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (loss, probs) = ops::softmax_cross_entropy(self.value(logits), labels)?;
        self.push(
            "softmax_cross_entropy",
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// Propagates `seed` (the gradient of some scalar w.r.t. `output`)
    /// back to every recorded value. The tape is left intact, so backward
    /// may be called repeatedly.
    pub fn backward(&self, output: Var, seed: Tensor<T>) -> Result<Gradients<T>> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward called before any forward pass".into()));
        }
        if output.0 >= self.nodes.len() {
            return Err(Error::State(format!(
                "output {} is not on this tape ({} nodes)",
                output.0,
                self.nodes.len()
            )));
        }
        if seed.shape() != self.value(output).shape() {
            return Err(Error::shape(
                "backward",
                format!(
                    "seed shape {:?} does not match output shape {:?}",
                    seed.shape(),
                    self.value(output).shape()
                ),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed);
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].as_ref() else { continue };
            let contributions = self.vjp(node, g);
            for (var, delta) in contributions {
                if !self.nodes[var.0].requires_grad {
                    continue;
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.add_assign(&delta),
                    slot @ None => *slot = Some(delta),
                }
            }
        }
        for (idx, g) in grads.iter_mut().enumerate() {
            if !self.nodes[idx].requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn vjp(&self, node: &Node<T>, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        match &node.op {
            Op::Leaf => Vec::new(),
            &Op::Linear { w, b, x } => {
                let need_dx = self.nodes[x.0].requires_grad;
                let grads = ops::linear_backward(self.value(w), self.value(x), g, need_dx);
                let mut out = vec![(w, grads.w), (b, grads.b)];
                if let Some(dx) = grads.x {
                    out.push((x, dx));
                }
                out
            }
            &Op::Conv1d { w, b, x } => {
                let grads = ops::conv1d_same_backward(self.value(w), self.value(x), g);
                vec![(w, grads.w), (b, grads.b), (x, grads.x)]
            }
            &Op::Activation { kind, x } => {
                vec![(x, ops::activation_backward(kind, self.value(x), &node.value, g))]
            }
            Op::MaxPool { x, argmax } => {
                let t = self.value(*x).shape()[1];
                vec![(*x, ops::maxpool_time_backward(argmax, t, g))]
            }
            &Op::Elementwise { kind, a, b } => match kind {
                Elementwise::Add => vec![(a, g.clone()), (b, g.clone())],
                Elementwise::Sub => vec![(a, g.clone()), (b, g.map(|v| -v))],
                Elementwise::Mul => {
                    let da = zip_map(g, self.value(b), |gv, bv| gv * bv);
                    let db = zip_map(g, self.value(a), |gv, av| gv * av);
                    vec![(a, da), (b, db)]
                }
            },
            &Op::Abs { x } => {
                let dx = zip_map(g, self.value(x), |gv, xv| {
                    if xv > T::zero() {
                        gv
                    } else if xv < T::zero() {
                        -gv
                    } else {
                        T::zero()
                    }
                });
                vec![(x, dx)]
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let n = self.value(p).len();
                        let piece = Tensor::vector(g.data()[offset..offset + n].to_vec());
                        offset += n;
                        (p, piece)
                    })
                    .collect()
            }
            Op::StackColumns { columns } => columns
                .iter()
                .enumerate()
                .map(|(c, &var)| (var, Tensor::vector(g.column(c))))
                .collect(),
            Op::NormalizeColumns { x, norms } => {
                vec![(*x, ops::normalize_columns_backward(&node.value, norms, g))]
            }
            &Op::InnerProducts { a, b } => {
                let (da, db) = ops::inner_products_backward(self.value(a), self.value(b), g);
                vec![(a, da), (b, db)]
            }
            Op::MaxHinge { s, margin, witness } => {
                let ds = ops::max_hinge_backward(self.value(*s), *margin, witness, g.data()[0]);
                vec![(*s, ds)]
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                vec![(*logits, ops::softmax_cross_entropy_backward(probs, labels, g.data()[0]))]
            }
        }
    }
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shapes checked on forward")
}
