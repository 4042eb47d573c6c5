//! Minimal reverse-mode differentiation over dense n-dimensional arrays.
//!
//! A [`Tape`] owns every array produced during a forward pass; each op
//! appends one node, so the record is already in topological order.
//! [`Tape::backward`] accumulates gradients by a single reverse sweep.
//! [`Tape::replay`] recomputes all values in place after leaf values
//! change, which is what the finite-difference checker in [`check`]
//! uses to evaluate perturbed losses without rebuilding the graph.
//!
//! Everything is `f64`. Every forward op verifies that its output is
//! finite and fails with [`AdError::NonFinite`] otherwise.

mod backward;
pub mod check;
mod eval;

use thiserror::Error;

/// Margin around the arccos clamp boundary inside which gradient checks
/// are unreliable; forwards that touch it set [`Tape::near_clamp`].
pub const NEAR_CLAMP_MARGIN: f64 = 1e-3;

/// Epsilon inside the layer-normalize variance.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum AdError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite values produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss node, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Constant,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Affine { x: NodeId, scale: f64, shift: f64 },
    MatMul(NodeId, NodeId),
    BatchMatMul(NodeId, NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
    ConcatRows(Vec<NodeId>),
    ConcatCols(NodeId, NodeId),
    ConcatScalars(Vec<NodeId>),
    SliceRows { x: NodeId, start: usize, end: usize },
    SliceCols { x: NodeId, start: usize, end: usize },
    RowSoftmax(NodeId),
    Relu(NodeId),
    Gelu(NodeId),
    Sigmoid(NodeId),
    Sqrt(NodeId),
    Rsqrt(NodeId),
    LayerNorm(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    MeanRows(NodeId),
    SqNorm(NodeId),
    AcosClamped(NodeId),
    Cross3(NodeId, NodeId),
    MulScalar { x: NodeId, s: NodeId },
    AddRowVec { x: NodeId, v: NodeId },
    MulRowVec { x: NodeId, v: NodeId },
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) shape: Vec<usize>,
    pub(crate) values: Vec<f64>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Gradients of one backward pass, indexed by node. Nodes with no path
/// to the loss report zeros.
pub struct Gradients {
    bufs: Vec<Option<Vec<f64>>>,
    sizes: Vec<usize>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Vec<f64> {
        match &self.bufs[id.0] {
            Some(b) => b.clone(),
            None => vec![0.0; self.sizes[id.0]],
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    near_clamp: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// True when any arccos input of the latest forward/replay came
    /// within [`NEAR_CLAMP_MARGIN`] of the clamp boundary.
    pub fn near_clamp(&self) -> bool {
        self.near_clamp
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].values
    }

    /// Value of a single-element node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].values.len(), 1);
        self.nodes[id.0].values[0]
    }

    /// Inserts a differentiable parameter.
    pub fn leaf(&mut self, values: Vec<f64>, shape: Vec<usize>) -> Result<NodeId, AdError> {
        self.insert_input(Op::Leaf, values, shape)
    }

    /// Inserts a non-learnable input.
    pub fn constant(&mut self, values: Vec<f64>, shape: Vec<usize>) -> Result<NodeId, AdError> {
        self.insert_input(Op::Constant, values, shape)
    }

    pub fn constant_scalar(&mut self, v: f64) -> Result<NodeId, AdError> {
        self.constant(vec![v], vec![1])
    }

    fn insert_input(
        &mut self,
        op: Op,
        values: Vec<f64>,
        shape: Vec<usize>,
    ) -> Result<NodeId, AdError> {
        if values.len() != numel(&shape) {
            return Err(AdError::ShapeMismatch {
                op: "input",
                detail: format!("{} values for shape {:?}", values.len(), shape),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(AdError::NonFinite { op: "input" });
        }
        self.nodes.push(Node { op, shape, values });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Overwrites one entry of a leaf (used by the gradient checker).
    pub fn set_leaf_entry(&mut self, id: NodeId, index: usize, value: f64) {
        debug_assert!(matches!(self.nodes[id.0].op, Op::Leaf | Op::Constant));
        self.nodes[id.0].values[index] = value;
    }

    pub fn leaf_entry(&self, id: NodeId, index: usize) -> f64 {
        self.nodes[id.0].values[index]
    }

    /// Recomputes every non-input node in place. Needed after leaf
    /// values change.
    pub fn replay(&mut self) -> Result<(), AdError> {
        self.near_clamp = false;
        for i in 0..self.nodes.len() {
            let (prefix, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            if matches!(node.op, Op::Leaf | Op::Constant) {
                continue;
            }
            let mut flag = false;
            eval::eval_into(prefix, &node.op, &node.shape, &mut node.values, &mut flag)?;
            self.near_clamp |= flag;
            if !node.values.iter().all(|v| v.is_finite()) {
                return Err(AdError::NonFinite {
                    op: eval::op_name(&node.op),
                });
            }
        }
        Ok(())
    }

    fn push_op(&mut self, op: Op, shape: Vec<usize>) -> Result<NodeId, AdError> {
        let mut values = vec![0.0; numel(&shape)];
        let mut flag = false;
        eval::eval_into(&self.nodes, &op, &shape, &mut values, &mut flag)?;
        self.near_clamp |= flag;
        if !values.iter().all(|v| v.is_finite()) {
            return Err(AdError::NonFinite {
                op: eval::op_name(&op),
            });
        }
        self.nodes.push(Node { op, shape, values });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<Vec<usize>, AdError> {
        let sa = &self.nodes[a.0].shape;
        let sb = &self.nodes[b.0].shape;
        if sa != sb {
            return Err(AdError::ShapeMismatch {
                op,
                detail: format!("{sa:?} vs {sb:?}"),
            });
        }
        Ok(sa.clone())
    }

    fn dims2(&self, op: &'static str, id: NodeId) -> Result<(usize, usize), AdError> {
        match self.nodes[id.0].shape.as_slice() {
            &[n, m] => Ok((n, m)),
            other => Err(AdError::ShapeMismatch {
                op,
                detail: format!("expected 2-d, got {other:?}"),
            }),
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let shape = self.same_shape("add", a, b)?;
        self.push_op(Op::Add(a, b), shape)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let shape = self.same_shape("sub", a, b)?;
        self.push_op(Op::Sub(a, b), shape)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let shape = self.same_shape("mul", a, b)?;
        self.push_op(Op::Mul(a, b), shape)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let shape = self.same_shape("div", a, b)?;
        self.push_op(Op::Div(a, b), shape)
    }

    /// `scale · x + shift`, elementwise with constants.
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> Result<NodeId, AdError> {
        let shape = self.nodes[x.0].shape.clone();
        self.push_op(Op::Affine { x, scale, shift }, shape)
    }

    pub fn scale(&mut self, x: NodeId, scale: f64) -> Result<NodeId, AdError> {
        self.affine(x, scale, 0.0)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let (n, k) = self.dims2("matmul", a)?;
        let (k2, m) = self.dims2("matmul", b)?;
        if k != k2 {
            return Err(AdError::ShapeMismatch {
                op: "matmul",
                detail: format!("inner dims {k} vs {k2}"),
            });
        }
        self.push_op(Op::MatMul(a, b), vec![n, m])
    }

    /// Batched 3-d matmul: `[b,n,k] × [b,k,m] → [b,n,m]`.
    pub fn batch_matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let sa = self.nodes[a.0].shape.clone();
        let sb = self.nodes[b.0].shape.clone();
        match (sa.as_slice(), sb.as_slice()) {
            (&[ba, n, k], &[bb, k2, m]) if ba == bb && k == k2 => {
                self.push_op(Op::BatchMatMul(a, b), vec![ba, n, m])
            }
            _ => Err(AdError::ShapeMismatch {
                op: "batch_matmul",
                detail: format!("{sa:?} vs {sb:?}"),
            }),
        }
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        let (n, m) = self.dims2("transpose", x)?;
        self.push_op(Op::Transpose(x), vec![m, n])
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId, AdError> {
        if numel(&shape) != self.nodes[x.0].values.len() {
            return Err(AdError::ShapeMismatch {
                op: "reshape",
                detail: format!("{:?} -> {:?}", self.nodes[x.0].shape, shape),
            });
        }
        self.push_op(Op::Reshape(x), shape)
    }

    /// Stacks 2-d blocks with equal column counts along axis 0.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId, AdError> {
        if parts.is_empty() {
            return Err(AdError::ShapeMismatch {
                op: "concat_rows",
                detail: "no inputs".into(),
            });
        }
        let (_, d) = self.dims2("concat_rows", parts[0])?;
        let mut rows = 0;
        for &p in parts {
            let (r, d2) = self.dims2("concat_rows", p)?;
            if d2 != d {
                return Err(AdError::ShapeMismatch {
                    op: "concat_rows",
                    detail: format!("column counts {d} vs {d2}"),
                });
            }
            rows += r;
        }
        self.push_op(Op::ConcatRows(parts.to_vec()), vec![rows, d])
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let (n, p) = self.dims2("concat_cols", a)?;
        let (n2, q) = self.dims2("concat_cols", b)?;
        if n != n2 {
            return Err(AdError::ShapeMismatch {
                op: "concat_cols",
                detail: format!("row counts {n} vs {n2}"),
            });
        }
        self.push_op(Op::ConcatCols(a, b), vec![n, p + q])
    }

    /// Gathers single-element nodes into a `[1, n]` row vector.
    pub fn concat_scalars(&mut self, parts: &[NodeId]) -> Result<NodeId, AdError> {
        for &p in parts {
            if self.nodes[p.0].values.len() != 1 {
                return Err(AdError::ShapeMismatch {
                    op: "concat_scalars",
                    detail: format!("non-scalar input of shape {:?}", self.nodes[p.0].shape),
                });
            }
        }
        self.push_op(Op::ConcatScalars(parts.to_vec()), vec![1, parts.len()])
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId, AdError> {
        let (n, d) = self.dims2("slice_rows", x)?;
        if start >= end || end > n {
            return Err(AdError::ShapeMismatch {
                op: "slice_rows",
                detail: format!("{start}..{end} of {n} rows"),
            });
        }
        self.push_op(Op::SliceRows { x, start, end }, vec![end - start, d])
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId, AdError> {
        let (n, d) = self.dims2("slice_cols", x)?;
        if start >= end || end > d {
            return Err(AdError::ShapeMismatch {
                op: "slice_cols",
                detail: format!("{start}..{end} of {d} cols"),
            });
        }
        self.push_op(Op::SliceCols { x, start, end }, vec![n, end - start])
    }

    /// Softmax along the last axis.
    pub fn row_softmax(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        let shape = self.nodes[x.0].shape.clone();
        if shape.is_empty() {
            return Err(AdError::ShapeMismatch {
                op: "row_softmax",
                detail: "scalar input".into(),
            });
        }
        self.push_op(Op::RowSoftmax(x), shape)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        let shape = self.nodes[x.0].shape.clone();
        self.push_op(Op::Relu(x), shape)
    }

    /// Tanh-approximation gelu:
    /// `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        let shape = self.nodes[x.0].shape.clone();
        self.push_op(Op::Gelu(x), shape)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        let shape = self.nodes[x.0].shape.clone();
        self.push_op(Op::Sigmoid(x), shape)
    }

    pub fn sqrt(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        let shape = self.nodes[x.0].shape.clone();
        self.push_op(Op::Sqrt(x), shape)
    }

    /// `x^(-1/2)` elementwise.
    pub fn rsqrt(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        let shape = self.nodes[x.0].shape.clone();
        self.push_op(Op::Rsqrt(x), shape)
    }

    /// Normalizes the last axis to zero mean and unit variance
    /// (epsilon-stabilized); affine gain/bias are separate ops.
    pub fn layer_norm(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        let shape = self.nodes[x.0].shape.clone();
        if shape.is_empty() {
            return Err(AdError::ShapeMismatch {
                op: "layer_norm",
                detail: "scalar input".into(),
            });
        }
        self.push_op(Op::LayerNorm(x), shape)
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        self.push_op(Op::Sum(x), vec![1])
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        self.push_op(Op::Mean(x), vec![1])
    }

    /// Column means of a 2-d array: `[n,d] → [1,d]`.
    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        let (_, d) = self.dims2("mean_rows", x)?;
        self.push_op(Op::MeanRows(x), vec![1, d])
    }

    /// Sum of squares, a scalar.
    pub fn sqnorm(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        self.push_op(Op::SqNorm(x), vec![1])
    }

    /// Elementwise `arccos(clamp(x, −1+ε, 1−ε))` with the geodesic
    /// clamp epsilon; the derivative is zero in the clamped region.
    pub fn acos_clamped(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        let shape = self.nodes[x.0].shape.clone();
        self.push_op(Op::AcosClamped(x), shape)
    }

    /// Cross product of two 3-vectors (any shape with 3 elements).
    pub fn cross3(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        if self.nodes[a.0].values.len() != 3 || self.nodes[b.0].values.len() != 3 {
            return Err(AdError::ShapeMismatch {
                op: "cross3",
                detail: "inputs must have 3 elements".into(),
            });
        }
        let shape = self.nodes[a.0].shape.clone();
        self.push_op(Op::Cross3(a, b), shape)
    }

    /// Multiplies every element of `x` by a single-element node `s`.
    pub fn mul_scalar(&mut self, x: NodeId, s: NodeId) -> Result<NodeId, AdError> {
        if self.nodes[s.0].values.len() != 1 {
            return Err(AdError::ShapeMismatch {
                op: "mul_scalar",
                detail: format!("scale has shape {:?}", self.nodes[s.0].shape),
            });
        }
        let shape = self.nodes[x.0].shape.clone();
        self.push_op(Op::MulScalar { x, s }, shape)
    }

    /// Adds a length-`d` vector to every row of `[n,d]`.
    pub fn add_rowvec(&mut self, x: NodeId, v: NodeId) -> Result<NodeId, AdError> {
        let (_, d) = self.dims2("add_rowvec", x)?;
        if self.nodes[v.0].values.len() != d {
            return Err(AdError::ShapeMismatch {
                op: "add_rowvec",
                detail: format!("vector numel {} vs {d} columns", self.nodes[v.0].values.len()),
            });
        }
        let shape = self.nodes[x.0].shape.clone();
        self.push_op(Op::AddRowVec { x, v }, shape)
    }

    /// Multiplies every row of `[n,d]` elementwise with a length-`d`
    /// vector.
    pub fn mul_rowvec(&mut self, x: NodeId, v: NodeId) -> Result<NodeId, AdError> {
        let (_, d) = self.dims2("mul_rowvec", x)?;
        if self.nodes[v.0].values.len() != d {
            return Err(AdError::ShapeMismatch {
                op: "mul_rowvec",
                detail: format!("vector numel {} vs {d} columns", self.nodes[v.0].values.len()),
            });
        }
        let shape = self.nodes[x.0].shape.clone();
        self.push_op(Op::MulRowVec { x, v }, shape)
    }

    /// Dot product of equally shaped arrays, as `sum(a ⊙ b)`.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let prod = self.mul(a, b)?;
        self.sum(prod)
    }

    /// Reverse sweep from a scalar `loss` node. Leaves with no path to
    /// the loss report zero gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, AdError> {
        backward::backward(&self.nodes, loss)
    }
}
