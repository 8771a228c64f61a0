use crate::numcore::Tensor;
use crate::{Error, Result, Scalar};

/// Handle into a [`Graph`]'s tensor arena.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

/// One recorded operation. Forward runs eagerly when the node is pushed;
/// whatever state backward needs is captured inside the op value.
pub(crate) trait GraphOp<S: Scalar> {
    fn name(&self) -> &'static str;
    fn backward(&self, ctx: &mut BackwardCtx<'_, S>);
}

pub(crate) struct Node<S: Scalar> {
    pub inputs: Vec<TensorId>,
    pub output: TensorId,
    pub op: Box<dyn GraphOp<S>>,
}

/// Context handed to an op's backward pass. Fields are public (crate-wide)
/// so ops can borrow input data and input gradients simultaneously.
pub(crate) struct BackwardCtx<'a, S: Scalar> {
    pub inputs: &'a [TensorId],
    pub tensors: &'a [Tensor<S>],
    pub output: TensorId,
    pub grad_out: &'a [S],
    pub grads: &'a mut [Vec<S>],
}

impl<'a, S: Scalar> BackwardCtx<'a, S> {
    pub fn in_data(&self, k: usize) -> &[S] {
        self.tensors[self.inputs[k].0].data()
    }

    pub fn in_shape(&self, k: usize) -> &[usize] {
        self.tensors[self.inputs[k].0].shape()
    }

    pub fn out_data(&self) -> &[S] {
        self.tensors[self.output.0].data()
    }
}

/// Reverse-mode tape. Single-threaded per instance; gradients are recomputed
/// from scratch on every `backward` call, so repeated calls are deterministic.
pub struct Graph<S: Scalar> {
    pub(crate) tensors: Vec<Tensor<S>>,
    trainable: Vec<bool>,
    nodes: Vec<Node<S>>,
    grads: Vec<Vec<S>>,
    has_grads: bool,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph {
            tensors: Vec::new(),
            trainable: Vec::new(),
            nodes: Vec::new(),
            grads: Vec::new(),
            has_grads: false,
        }
    }

    /// Register an input tensor. Trainable leaves are the ones optimizers read
    /// gradients for; constants participate in backward like any other tensor.
    pub fn leaf(&mut self, t: Tensor<S>, trainable: bool) -> TensorId {
        let id = TensorId(self.tensors.len());
        self.tensors.push(t);
        self.trainable.push(trainable);
        id
    }

    pub fn constant(&mut self, t: Tensor<S>) -> TensorId {
        self.leaf(t, false)
    }

    pub(crate) fn push_node(
        &mut self,
        inputs: Vec<TensorId>,
        out: Tensor<S>,
        op: Box<dyn GraphOp<S>>,
    ) -> TensorId {
        let output = TensorId(self.tensors.len());
        self.tensors.push(out);
        self.trainable.push(false);
        self.nodes.push(Node {
            inputs,
            output,
            op,
        });
        output
    }

    pub fn value(&self, id: TensorId) -> &Tensor<S> {
        &self.tensors[id.0]
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        self.tensors[id.0].shape()
    }

    /// Gradient of the last `backward` target w.r.t. `id`. `None` before any
    /// backward call.
    pub fn grad(&self, id: TensorId) -> Option<&[S]> {
        if self.has_grads {
            Some(&self.grads[id.0])
        } else {
            None
        }
    }

    pub fn n_tensors(&self) -> usize {
        self.tensors.len()
    }

    /// Reverse sweep from a scalar loss. Gradients of every tensor in the tape
    /// are (re)computed; previous gradients are discarded.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if !self.tensors[loss.0].is_scalar() {
            return Err(Error::contract(
                "backward",
                format!(
                    "loss must be scalar, got shape {:?}",
                    self.tensors[loss.0].shape()
                ),
            ));
        }
        self.grads.clear();
        self.grads
            .extend(self.tensors.iter().map(|t| vec![S::zero(); t.numel()]));
        self.grads[loss.0][0] = S::one();

        let Graph {
            tensors,
            nodes,
            grads,
            ..
        } = self;
        for node in nodes.iter().rev() {
            let grad_out = grads[node.output.0].clone();
            let mut ctx = BackwardCtx {
                inputs: &node.inputs,
                tensors,
                output: node.output,
                grad_out: &grad_out,
                grads,
            };
            node.op.backward(&mut ctx);
        }
        self.has_grads = true;
        Ok(())
    }
}
