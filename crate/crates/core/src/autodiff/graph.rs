//! Tape of primitive tensor operations with reverse-mode gradients.
//!
//! Nodes are appended in evaluation order, so the node vector is always a
//! valid topological order and backward is a single reverse sweep. Parameter
//! leaves are the only nodes whose gradients callers normally read, but the
//! gradient of any node that depends on a parameter is available.

use crate::error::{Error, Result};
use crate::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise maps with a closed-form derivative.
#[derive(Clone, Copy, Debug)]
pub enum Unary {
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    /// Natural log; strictly positive inputs only.
    Log,
    Scale(f64),
    /// `x + c`.
    Offset(f64),
    /// Clamp into `[lo, hi]`; gradient passes only inside the interval.
    Clamp(f64, f64),
    /// User-supplied value and derivative.
    Custom {
        f: fn(f64) -> f64,
        df: fn(f64) -> f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Mul,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// `[n×m] + [m]` broadcast over rows.
    AddRow(NodeId, NodeId),
    Binary(Binary, NodeId, NodeId),
    Unary(Unary, NodeId),
    Mean(NodeId),
    Sum(NodeId),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> Result<NodeId> {
        self.leaf(value, true)
    }

    /// Leaf treated as a constant during backward.
    pub fn constant(&mut self, value: Tensor) -> Result<NodeId> {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor, param: bool) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: param,
            param,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn is_param(&self, id: NodeId) -> bool {
        self.nodes[id.0].param
    }

    /// All parameter leaves in creation order.
    pub fn params(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].param)
            .map(NodeId)
            .collect()
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul(a, b))
    }

    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        self.push(Op::AddRow(x, bias))
    }

    pub fn binary(&mut self, kind: Binary, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Binary(kind, a, b))
    }

    pub fn unary(&mut self, kind: Unary, x: NodeId) -> Result<NodeId> {
        self.push(Op::Unary(kind, x))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Binary::Add, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn leaky_relu(&mut self, x: NodeId, alpha: f64) -> Result<NodeId> {
        self.unary(Unary::LeakyRelu(alpha), x)
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Unary::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Unary::Log, x)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.unary(Unary::Scale(c), x)
    }

    pub fn offset(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.unary(Unary::Offset(c), x)
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        self.unary(Unary::Clamp(lo, hi), x)
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Mean(x))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sum(x))
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let value = eval(&op, &self.nodes)?;
        let requires_grad = inputs(&op).iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: false,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Re-evaluates every node with some leaves replaced. The op sequence is
    /// unchanged, so identical leaves reproduce identical values bit-for-bit.
    pub fn replay(&self, overrides: &[(NodeId, Tensor)]) -> Result<Graph> {
        let mut out = Graph {
            nodes: Vec::with_capacity(self.nodes.len()),
        };
        for (i, node) in self.nodes.iter().enumerate() {
            let value = match node.op {
                Op::Leaf => {
                    match overrides.iter().find(|(id, _)| id.0 == i) {
                        Some((_, v)) => {
                            if v.shape() != node.value.shape() {
                                return Err(Error::dim("replay", node.value.shape(), v.shape()));
                            }
                            v.clone()
                        }
                        None => node.value.clone(),
                    }
                }
                _ => eval(&node.op, &out.nodes)?,
            };
            out.nodes.push(Node {
                value,
                op: node.op.clone(),
                requires_grad: node.requires_grad,
                param: node.param,
            });
        }
        Ok(out)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(root.value.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(upstream) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &upstream, &mut grads);
            }
            grads[i] = Some(upstream);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, up: &Tensor, grads: &mut [Option<Tensor>]) {
        let needs = |id: NodeId| self.nodes[id.0].requires_grad;
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let (n, k) = (av.shape()[0], av.shape()[1]);
                let m = bv.shape()[1];
                if needs(a) {
                    let g = accumulator(grads, a, av.shape());
                    matmul_nt(up.data(), bv.data(), g, n, m, k);
                }
                if needs(b) {
                    let g = accumulator(grads, b, bv.shape());
                    matmul_tn(av.data(), up.data(), g, n, k, m);
                }
            }
            Op::AddRow(x, bias) => {
                if needs(x) {
                    let g = accumulator(grads, x, up.shape());
                    for (o, u) in g.iter_mut().zip(up.data()) {
                        *o += u;
                    }
                }
                if needs(bias) {
                    let m = self.nodes[bias.0].value.len();
                    let g = accumulator(grads, bias, self.nodes[bias.0].value.shape());
                    for row in up.data().chunks(m) {
                        for (o, u) in g.iter_mut().zip(row) {
                            *o += u;
                        }
                    }
                }
            }
            Op::Binary(kind, a, b) => {
                for (this, other) in [(a, b), (b, a)] {
                    if !needs(this) {
                        continue;
                    }
                    let ov = self.nodes[other.0].value.data();
                    let g = accumulator(grads, this, up.shape());
                    match kind {
                        Binary::Add => {
                            for (o, u) in g.iter_mut().zip(up.data()) {
                                *o += u;
                            }
                        }
                        Binary::Mul => {
                            for ((o, u), w) in g.iter_mut().zip(up.data()).zip(ov) {
                                *o += u * w;
                            }
                        }
                    }
                }
            }
            Op::Unary(kind, x) => {
                if !needs(x) {
                    return;
                }
                let xv = self.nodes[x.0].value.data();
                let yv = node.value.data();
                let g = accumulator(grads, x, up.shape());
                for i in 0..g.len() {
                    g[i] += up.data()[i] * unary_derivative(kind, xv[i], yv[i]);
                }
            }
            Op::Mean(x) | Op::Sum(x) => {
                if !needs(x) {
                    return;
                }
                let xv = &self.nodes[x.0].value;
                let scale = match node.op {
                    Op::Mean(_) => 1.0 / xv.len() as f64,
                    _ => 1.0,
                };
                let u = up.item() * scale;
                let g = accumulator(grads, x, xv.shape());
                for o in g.iter_mut() {
                    *o += u;
                }
            }
        }
    }
}

fn accumulator<'a>(grads: &'a mut [Option<Tensor>], id: NodeId, shape: &[usize]) -> &'a mut [f64] {
    grads[id.0]
        .get_or_insert_with(|| Tensor::zeros(shape))
        .data_mut()
}

fn inputs(op: &Op) -> Vec<NodeId> {
    match *op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) | Op::AddRow(a, b) | Op::Binary(_, a, b) => vec![a, b],
        Op::Unary(_, x) | Op::Mean(x) | Op::Sum(x) => vec![x],
    }
}

fn unary_value(kind: Unary, x: f64) -> f64 {
    match kind {
        Unary::LeakyRelu(a) => {
            if x > 0.0 {
                x
            } else {
                a * x
            }
        }
        Unary::Tanh => x.tanh(),
        Unary::Sigmoid => sigmoid(x),
        Unary::Log => x.ln(),
        Unary::Scale(c) => c * x,
        Unary::Offset(c) => x + c,
        Unary::Clamp(lo, hi) => x.clamp(lo, hi),
        Unary::Custom { f, .. } => f(x),
    }
}

fn unary_derivative(kind: Unary, x: f64, y: f64) -> f64 {
    match kind {
        Unary::LeakyRelu(a) => {
            if x > 0.0 {
                1.0
            } else {
                a
            }
        }
        Unary::Tanh => 1.0 - y * y,
        Unary::Sigmoid => y * (1.0 - y),
        Unary::Log => 1.0 / x,
        Unary::Scale(c) => c,
        Unary::Offset(_) => 1.0,
        Unary::Clamp(lo, hi) => {
            if (lo..=hi).contains(&x) {
                1.0
            } else {
                0.0
            }
        }
        Unary::Custom { df, .. } => df(x),
    }
}

/// Logistic function kept strictly inside `(0, 1)` so that `log(s)` and
/// `log(1 - s)` stay finite even for saturated logits.
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn eval(op: &Op, nodes: &[Node]) -> Result<Tensor> {
    let val = |id: NodeId| &nodes[id.0].value;
    let out = match *op {
        Op::Leaf => unreachable!("leaves are never re-evaluated"),
        Op::MatMul(a, b) => {
            let (av, bv) = (val(a), val(b));
            match (av.shape(), bv.shape()) {
                ([n, k], [k2, m]) if k == k2 => {
                    let mut out = vec![0.0; n * m];
                    matmul_nn(av.data(), bv.data(), &mut out, *n, *k, *m);
                    Tensor::matrix(*n, *m, out)?
                }
                (l, r) => return Err(Error::dim("matmul", l, r)),
            }
        }
        Op::AddRow(x, bias) => {
            let (xv, bv) = (val(x), val(bias));
            match (xv.shape(), bv.shape()) {
                ([_, m], [m2]) if m == m2 => {
                    let mut out = xv.data().to_vec();
                    for row in out.chunks_mut(*m) {
                        for (o, b) in row.iter_mut().zip(bv.data()) {
                            *o += b;
                        }
                    }
                    Tensor::new(xv.shape().to_vec(), out)?
                }
                (l, r) => return Err(Error::dim("add_row", l, r)),
            }
        }
        Op::Binary(kind, a, b) => {
            let (av, bv) = (val(a), val(b));
            if av.shape() != bv.shape() {
                return Err(Error::dim(
                    match kind {
                        Binary::Add => "add",
                        Binary::Mul => "mul",
                    },
                    av.shape(),
                    bv.shape(),
                ));
            }
            let data = av
                .data()
                .iter()
                .zip(bv.data())
                .map(|(x, y)| match kind {
                    Binary::Add => x + y,
                    Binary::Mul => x * y,
                })
                .collect();
            Tensor::new(av.shape().to_vec(), data)?
        }
        Op::Unary(kind, x) => {
            let xv = val(x);
            if matches!(kind, Unary::Log) {
                if let Some(bad) = xv.data().iter().find(|v| **v <= 0.0) {
                    return Err(Error::Domain {
                        op: "log",
                        detail: format!("non-positive input {bad}"),
                    });
                }
            }
            let data = xv.data().iter().map(|&v| unary_value(kind, v)).collect();
            Tensor::new(xv.shape().to_vec(), data)?
        }
        Op::Mean(x) | Op::Sum(x) => {
            let xv = val(x);
            if xv.is_empty() {
                return Err(Error::EmptyInput { op: "reduce" });
            }
            let mut s = 0.0;
            for v in xv.data() {
                s += v;
            }
            if let Op::Mean(_) = op {
                s /= xv.len() as f64;
            }
            Tensor::scalar(s)
        }
    };
    if !out.all_finite() {
        return Err(Error::NonFinite { op: op_name(op) });
    }
    Ok(out)
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::AddRow(..) => "add_row",
        Op::Binary(..) => "binary",
        Op::Unary(..) => "unary",
        Op::Mean(_) => "mean",
        Op::Sum(_) => "sum",
    }
}

/// Result of a backward sweep: one optional gradient per node.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `id`, or zeros shaped like its value when the loss does
    /// not depend on it.
    pub fn get_or_zeros(&self, graph: &Graph, id: NodeId) -> Tensor {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(graph.value(id).shape()))
    }

    pub fn for_nodes(&self, graph: &Graph, ids: &[NodeId]) -> Vec<Tensor> {
        ids.iter().map(|&id| self.get_or_zeros(graph, id)).collect()
    }
}
