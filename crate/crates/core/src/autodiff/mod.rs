//! Reverse-mode automatic differentiation with higher-order support.
//!
//! A [`Var`] is an immutable node in a functional graph. Backward rules are
//! themselves written in terms of `Var` primitives, so with
//! `create_graph = true` the gradients returned by [`grad`] are ordinary
//! differentiable nodes and can be differentiated again. This is what makes
//! the meta gradient through an inner SGD step exact.
//!
//! With `create_graph = false` every operand of a backward rule is detached
//! first, so the result is a set of constants and no second graph is kept.

mod finite_diff;

pub use finite_diff::{finite_difference_gradient, max_relative_error};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

fn next_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Which primitive produced a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpTag {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    AddScalar,
    Scale,
    AddRow,
    MatMul,
    Transpose,
    Tanh,
    Exp,
    Log,
    Sum,
    Mean,
    SumRows,
    SumCols,
    Broadcast,
    BroadcastCols,
    BroadcastRows,
    RowSoftmax,
    RowLogSoftmax,
    GatherCols,
    ScatterCols,
    GatherRows,
    ScatterRows,
}

type Indices = Arc<[usize]>;

#[derive(Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    AddScalar(Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    SumCols(Var),
    Broadcast(Var),
    BroadcastCols(Var),
    BroadcastRows(Var),
    RowSoftmax(Var),
    RowLogSoftmax(Var),
    GatherCols(Var, Indices),
    ScatterCols(Var, Indices),
    GatherRows(Var, Indices),
    ScatterRows(Var, Indices),
}

impl Op {
    fn parents(&self) -> Vec<&Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | AddRow(a, b) | MatMul(a, b) => {
                vec![a, b]
            }
            Neg(a)
            | AddScalar(a)
            | Scale(a, _)
            | Transpose(a)
            | Tanh(a)
            | Exp(a)
            | Log(a)
            | Sum(a)
            | Mean(a)
            | SumRows(a)
            | SumCols(a)
            | Broadcast(a)
            | BroadcastCols(a)
            | BroadcastRows(a)
            | RowSoftmax(a)
            | RowLogSoftmax(a)
            | GatherCols(a, _)
            | ScatterCols(a, _)
            | GatherRows(a, _)
            | ScatterRows(a, _) => vec![a],
        }
    }
}

struct Node {
    id: u64,
    value: Arc<Tensor>,
    tag: OpTag,
    op: Op,
    requires_grad: bool,
}

/// Handle to an immutable graph node. Cloning is cheap (reference count).
#[derive(Clone)]
pub struct Var(Arc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("op", &self.0.tag)
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

fn mismatch(op: &'static str, a: Shape, b: Shape) -> Error {
    Error::ShapeMismatch { op, lhs: a.to_string(), rhs: b.to_string() }
}

impl Var {
    fn from_parts(value: Tensor, tag: OpTag, op: Op) -> Var {
        let requires_grad = op.parents().iter().any(|p| p.requires_grad());
        // Constant subgraphs keep no parents.
        let op = if requires_grad { op } else { Op::Leaf };
        Var(Arc::new(Node { id: next_id(), value: Arc::new(value), tag, op, requires_grad }))
    }

    /// A leaf that gradients can be taken with respect to.
    pub fn param(value: Tensor) -> Var {
        Var(Arc::new(Node {
            id: next_id(),
            value: Arc::new(value),
            tag: OpTag::Leaf,
            op: Op::Leaf,
            requires_grad: true,
        }))
    }

    pub fn constant(value: Tensor) -> Var {
        Var(Arc::new(Node {
            id: next_id(),
            value: Arc::new(value),
            tag: OpTag::Leaf,
            op: Op::Leaf,
            requires_grad: false,
        }))
    }

    pub fn scalar(v: f64) -> Var {
        Var::constant(Tensor::scalar(v))
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var {
        if !self.requires_grad() {
            return self.clone();
        }
        Var(Arc::new(Node {
            id: next_id(),
            value: Arc::clone(&self.0.value),
            tag: OpTag::Leaf,
            op: Op::Leaf,
            requires_grad: false,
        }))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> Shape {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn op_tag(&self) -> OpTag {
        self.0.tag
    }

    /// Value of a `1×1` node.
    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }

    fn same_shape(&self, other: &Var, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(mismatch(op, self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Var) -> Result<Var> {
        self.same_shape(other, "add")?;
        let v = self.value().zip(other.value(), |a, b| a + b);
        Ok(Var::from_parts(v, OpTag::Add, Op::Add(self.clone(), other.clone())))
    }

    pub fn sub(&self, other: &Var) -> Result<Var> {
        self.same_shape(other, "sub")?;
        let v = self.value().zip(other.value(), |a, b| a - b);
        Ok(Var::from_parts(v, OpTag::Sub, Op::Sub(self.clone(), other.clone())))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var) -> Result<Var> {
        self.same_shape(other, "mul")?;
        let v = self.value().zip(other.value(), |a, b| a * b);
        Ok(Var::from_parts(v, OpTag::Mul, Op::Mul(self.clone(), other.clone())))
    }

    /// Elementwise quotient.
    pub fn div(&self, other: &Var) -> Result<Var> {
        self.same_shape(other, "div")?;
        let v = self.value().zip(other.value(), |a, b| a / b);
        Ok(Var::from_parts(v, OpTag::Div, Op::Div(self.clone(), other.clone())))
    }

    pub fn neg(&self) -> Var {
        Var::from_parts(self.value().map(|a| -a), OpTag::Neg, Op::Neg(self.clone()))
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        Var::from_parts(self.value().map(|a| a + c), OpTag::AddScalar, Op::AddScalar(self.clone()))
    }

    pub fn scale(&self, c: f64) -> Var {
        Var::from_parts(self.value().map(|a| a * c), OpTag::Scale, Op::Scale(self.clone(), c))
    }

    /// `B×C` plus a `1×C` row added to every row.
    pub fn add_row(&self, row: &Var) -> Result<Var> {
        let (s, r) = (self.shape(), row.shape());
        if r.rows != 1 || r.cols != s.cols {
            return Err(mismatch("add_row", s, r));
        }
        let mut v = self.value().clone();
        let cols = s.cols;
        let bias = row.value().data();
        for chunk in v.data_mut().chunks_mut(cols.max(1)) {
            for (x, b) in chunk.iter_mut().zip(bias) {
                *x += b;
            }
        }
        Ok(Var::from_parts(v, OpTag::AddRow, Op::AddRow(self.clone(), row.clone())))
    }

    pub fn matmul(&self, other: &Var) -> Result<Var> {
        let (a, b) = (self.shape(), other.shape());
        if a.cols != b.rows {
            return Err(mismatch("matmul", a, b));
        }
        let v = self.value().matmul(other.value());
        Ok(Var::from_parts(v, OpTag::MatMul, Op::MatMul(self.clone(), other.clone())))
    }

    pub fn t(&self) -> Var {
        Var::from_parts(self.value().transpose(), OpTag::Transpose, Op::Transpose(self.clone()))
    }

    pub fn tanh(&self) -> Var {
        Var::from_parts(self.value().map(f64::tanh), OpTag::Tanh, Op::Tanh(self.clone()))
    }

    pub fn exp(&self) -> Var {
        Var::from_parts(self.value().map(f64::exp), OpTag::Exp, Op::Exp(self.clone()))
    }

    pub fn ln(&self) -> Var {
        Var::from_parts(self.value().map(f64::ln), OpTag::Log, Op::Log(self.clone()))
    }

    /// Sum of all elements, `1×1`.
    pub fn sum(&self) -> Var {
        Var::from_parts(Tensor::scalar(self.value().sum()), OpTag::Sum, Op::Sum(self.clone()))
    }

    /// Mean of all elements, `1×1`.
    pub fn mean(&self) -> Result<Var> {
        let n = self.value().len();
        if n == 0 {
            return Err(Error::Shape("mean of an empty tensor".into()));
        }
        let v = Tensor::scalar(self.value().sum() / n as f64);
        Ok(Var::from_parts(v, OpTag::Mean, Op::Mean(self.clone())))
    }

    /// Per-row sums, `B×1`.
    pub fn sum_rows(&self) -> Var {
        Var::from_parts(self.value().sum_rows(), OpTag::SumRows, Op::SumRows(self.clone()))
    }

    /// Per-column sums, `1×C`.
    pub fn sum_cols(&self) -> Var {
        Var::from_parts(self.value().sum_cols(), OpTag::SumCols, Op::SumCols(self.clone()))
    }

    /// Repeat a `1×1` node to `shape`.
    pub fn broadcast(&self, shape: Shape) -> Result<Var> {
        if self.shape() != Shape::SCALAR {
            return Err(mismatch("broadcast", self.shape(), shape));
        }
        let v = Tensor::full(shape, self.value().data()[0]);
        Ok(Var::from_parts(v, OpTag::Broadcast, Op::Broadcast(self.clone())))
    }

    /// Repeat a `B×1` column across `cols` columns.
    pub fn broadcast_cols(&self, cols: usize) -> Result<Var> {
        let s = self.shape();
        if s.cols != 1 {
            return Err(mismatch("broadcast_cols", s, Shape::new(s.rows, cols)));
        }
        let mut data = Vec::with_capacity(s.rows * cols);
        for &x in self.value().data() {
            data.extend(std::iter::repeat_n(x, cols));
        }
        let v = Tensor::new(Shape::new(s.rows, cols), data)?;
        Ok(Var::from_parts(v, OpTag::BroadcastCols, Op::BroadcastCols(self.clone())))
    }

    /// Repeat a `1×C` row down `rows` rows.
    pub fn broadcast_rows(&self, rows: usize) -> Result<Var> {
        let s = self.shape();
        if s.rows != 1 {
            return Err(mismatch("broadcast_rows", s, Shape::new(rows, s.cols)));
        }
        let data = self.value().data().repeat(rows);
        let v = Tensor::new(Shape::new(rows, s.cols), data)?;
        Ok(Var::from_parts(v, OpTag::BroadcastRows, Op::BroadcastRows(self.clone())))
    }

    pub fn row_softmax(&self) -> Result<Var> {
        if self.shape().cols == 0 {
            return Err(Error::Shape("row_softmax over zero columns".into()));
        }
        let v = self.value().row_softmax();
        Ok(Var::from_parts(v, OpTag::RowSoftmax, Op::RowSoftmax(self.clone())))
    }

    pub fn row_log_softmax(&self) -> Result<Var> {
        if self.shape().cols == 0 {
            return Err(Error::Shape("row_log_softmax over zero columns".into()));
        }
        let v = self.value().row_log_softmax();
        Ok(Var::from_parts(v, OpTag::RowLogSoftmax, Op::RowLogSoftmax(self.clone())))
    }

    /// Picks `self[r, idx[r]]` for every row, giving `B×1`.
    pub fn gather_cols(&self, idx: &[usize]) -> Result<Var> {
        let s = self.shape();
        if idx.len() != s.rows {
            return Err(mismatch("gather_cols", s, Shape::new(idx.len(), 1)));
        }
        if let Some(&bad) = idx.iter().find(|&&c| c >= s.cols) {
            return Err(Error::Shape(format!("gather_cols: column {bad} out of range for {s}")));
        }
        let v = Tensor::column(idx.iter().enumerate().map(|(r, &c)| self.value().get(r, c)).collect());
        Ok(Var::from_parts(v, OpTag::GatherCols, Op::GatherCols(self.clone(), idx.into())))
    }

    /// Adjoint of [`Var::gather_cols`]: places a `B×1` column into a zero `B×cols`.
    pub fn scatter_cols(&self, idx: &[usize], cols: usize) -> Result<Var> {
        let s = self.shape();
        if s.cols != 1 || idx.len() != s.rows {
            return Err(mismatch("scatter_cols", s, Shape::new(idx.len(), cols)));
        }
        if let Some(&bad) = idx.iter().find(|&&c| c >= cols) {
            return Err(Error::Shape(format!("scatter_cols: column {bad} out of range for {cols}")));
        }
        let mut v = Tensor::zeros(Shape::new(s.rows, cols));
        for (r, &c) in idx.iter().enumerate() {
            v.data_mut()[r * cols + c] = self.value().data()[r];
        }
        Ok(Var::from_parts(v, OpTag::ScatterCols, Op::ScatterCols(self.clone(), idx.into())))
    }

    /// Stacks `self[idx[i], :]`, giving `len(idx)×C` (embedding lookup).
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Var> {
        let s = self.shape();
        if let Some(&bad) = idx.iter().find(|&&r| r >= s.rows) {
            return Err(Error::Shape(format!("gather_rows: row {bad} out of range for {s}")));
        }
        let mut data = Vec::with_capacity(idx.len() * s.cols);
        for &r in idx {
            data.extend_from_slice(self.value().row_slice(r));
        }
        let v = Tensor::new(Shape::new(idx.len(), s.cols), data)?;
        Ok(Var::from_parts(v, OpTag::GatherRows, Op::GatherRows(self.clone(), idx.into())))
    }

    /// Adjoint of [`Var::gather_rows`]: sums row `i` into output row `idx[i]`.
    pub fn scatter_rows(&self, idx: &[usize], rows: usize) -> Result<Var> {
        let s = self.shape();
        if idx.len() != s.rows {
            return Err(mismatch("scatter_rows", s, Shape::new(idx.len(), s.cols)));
        }
        if let Some(&bad) = idx.iter().find(|&&r| r >= rows) {
            return Err(Error::Shape(format!("scatter_rows: row {bad} out of range for {rows}")));
        }
        let c = s.cols;
        let mut v = Tensor::zeros(Shape::new(rows, c));
        for (i, &r) in idx.iter().enumerate() {
            let src = self.value().row_slice(i);
            for (o, x) in v.data_mut()[r * c..(r + 1) * c].iter_mut().zip(src) {
                *o += x;
            }
        }
        Ok(Var::from_parts(v, OpTag::ScatterRows, Op::ScatterRows(self.clone(), idx.into())))
    }
}

/// Post-order over nodes that require grad, reachable from `root`.
fn topo_order(root: &Var) -> Vec<Var> {
    let mut order = Vec::new();
    let mut seen = HashSet::new();
    let mut stack: Vec<(Var, bool)> = vec![(root.clone(), false)];
    while let Some((v, expanded)) = stack.pop() {
        if expanded {
            order.push(v);
            continue;
        }
        if !v.requires_grad() || !seen.insert(v.id()) {
            continue;
        }
        stack.push((v.clone(), true));
        for p in v.0.op.parents().into_iter().rev() {
            if p.requires_grad() && !seen.contains(&p.id()) {
                stack.push((p.clone(), false));
            }
        }
    }
    order
}

/// Vector-Jacobian products of `node` given its output adjoint `g`.
/// Returns `(parent, contribution)` pairs for parents that require grad.
fn backward_rule(node: &Var, g: &Var, create_graph: bool) -> Result<Vec<(Var, Var)>> {
    let keep = |v: &Var| if create_graph { v.clone() } else { v.detach() };
    let y = keep(node);
    let mut out = Vec::with_capacity(2);
    let mut push = |p: &Var, contrib: Var| {
        if p.requires_grad() {
            out.push((p.clone(), contrib));
        }
    };
    use Op::*;
    match &node.0.op {
        Leaf => {}
        Add(a, b) => {
            push(a, g.clone());
            push(b, g.clone());
        }
        Sub(a, b) => {
            push(a, g.clone());
            push(b, g.neg());
        }
        Mul(a, b) => {
            if a.requires_grad() {
                push(a, g.mul(&keep(b))?);
            }
            if b.requires_grad() {
                push(b, g.mul(&keep(a))?);
            }
        }
        Div(a, b) => {
            let bk = keep(b);
            if a.requires_grad() {
                push(a, g.div(&bk)?);
            }
            if b.requires_grad() {
                push(b, g.mul(&keep(a))?.div(&bk.mul(&bk)?)?.neg());
            }
        }
        Neg(a) => push(a, g.neg()),
        AddScalar(a) => push(a, g.clone()),
        Scale(a, c) => push(a, g.scale(*c)),
        AddRow(a, r) => {
            push(a, g.clone());
            if r.requires_grad() {
                push(r, g.sum_cols());
            }
        }
        MatMul(a, b) => {
            if a.requires_grad() {
                push(a, g.matmul(&keep(b).t())?);
            }
            if b.requires_grad() {
                push(b, keep(a).t().matmul(g)?);
            }
        }
        Transpose(a) => push(a, g.t()),
        Tanh(a) => {
            let d = y.mul(&y)?.scale(-1.0).add_scalar(1.0);
            push(a, g.mul(&d)?);
        }
        Exp(a) => push(a, g.mul(&y)?),
        Log(a) => push(a, g.div(&keep(a))?),
        Sum(a) => push(a, g.broadcast(a.shape())?),
        Mean(a) => {
            let n = a.value().len() as f64;
            push(a, g.broadcast(a.shape())?.scale(1.0 / n));
        }
        SumRows(a) => push(a, g.broadcast_cols(a.shape().cols)?),
        SumCols(a) => push(a, g.broadcast_rows(a.shape().rows)?),
        Broadcast(a) => push(a, g.sum()),
        BroadcastCols(a) => push(a, g.sum_rows()),
        BroadcastRows(a) => push(a, g.sum_cols()),
        RowSoftmax(a) => {
            let cols = a.shape().cols;
            let inner = g.mul(&y)?.sum_rows().broadcast_cols(cols)?;
            push(a, y.mul(&g.sub(&inner)?)?);
        }
        RowLogSoftmax(a) => {
            let cols = a.shape().cols;
            let probs = y.exp();
            let total = g.sum_rows().broadcast_cols(cols)?;
            push(a, g.sub(&probs.mul(&total)?)?);
        }
        GatherCols(a, idx) => push(a, g.scatter_cols(idx, a.shape().cols)?),
        ScatterCols(a, idx) => push(a, g.gather_cols(idx)?),
        GatherRows(a, idx) => push(a, g.scatter_rows(idx, a.shape().rows)?),
        ScatterRows(a, idx) => push(a, g.gather_rows(idx)?),
    }
    Ok(out)
}

/// Gradients of the scalar `loss` with respect to each of `wrt`.
///
/// Parameters that do not influence `loss` get a zero gradient. With
/// `create_graph` the returned nodes are differentiable functions of the
/// graph's leaves.
pub fn grad(loss: &Var, wrt: &[Var], create_graph: bool) -> Result<Vec<Var>> {
    if loss.shape() != Shape::SCALAR {
        return Err(Error::NonScalarLoss(loss.shape().to_string()));
    }
    let mut adjoints: HashMap<u64, Var> = HashMap::new();
    if loss.requires_grad() {
        adjoints.insert(loss.id(), Var::scalar(1.0));
    }
    let targets: HashSet<u64> = wrt.iter().map(Var::id).collect();
    let order = topo_order(loss);
    for node in order.iter().rev() {
        let Some(g) = adjoints.remove(&node.id()) else { continue };
        if targets.contains(&node.id()) {
            // Keep the adjoint for the caller; leaves have no parents anyway.
            adjoints.insert(node.id(), g.clone());
        }
        for (parent, contrib) in backward_rule(node, &g, create_graph)? {
            let acc = match adjoints.remove(&parent.id()) {
                Some(prev) => prev.add(&contrib)?,
                None => contrib,
            };
            adjoints.insert(parent.id(), acc);
        }
    }
    Ok(wrt
        .iter()
        .map(|w| match adjoints.get(&w.id()) {
            Some(g) if create_graph => g.clone(),
            Some(g) => g.detach(),
            None => Var::constant(Tensor::zeros(w.shape())),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: f64) -> Var {
        Var::param(Tensor::scalar(v))
    }

    #[test]
    fn primitive_examples() {
        let a = Var::constant(Tensor::row(vec![1.0, 2.0]));
        let b = Var::constant(Tensor::row(vec![3.0, 4.0]));
        assert_eq!(a.add(&b).unwrap().value().data(), &[4.0, 6.0]);
        let z = Var::constant(Tensor::row(vec![0.0, 0.0]));
        assert_eq!(z.row_softmax().unwrap().value().data(), &[0.5, 0.5]);
        let m = a.matmul(&b.t()).unwrap();
        assert_eq!(m.value().data(), &[11.0]);
    }

    #[test]
    fn shape_errors_name_the_primitive() {
        let a = Var::constant(Tensor::row(vec![1.0, 2.0]));
        let b = Var::constant(Tensor::row(vec![1.0, 2.0, 3.0]));
        let err = a.add(&b).unwrap_err().to_string();
        assert!(err.contains("add") && err.contains("[1x2]") && err.contains("[1x3]"), "{err}");
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("matmul"), "{err}");
    }

    #[test]
    fn square_and_cube_derivatives() {
        let x = p(3.0);
        let y = x.mul(&x).unwrap();
        let g = grad(&y, &[x.clone()], false).unwrap();
        assert_eq!(g[0].item().unwrap(), 6.0);

        let x = p(2.0);
        let cube = x.mul(&x).unwrap().mul(&x).unwrap();
        let g1 = grad(&cube, &[x.clone()], true).unwrap();
        assert!(g1[0].requires_grad());
        assert!((g1[0].item().unwrap() - 12.0).abs() < 1e-12);
        let g2 = grad(&g1[0], &[x.clone()], true).unwrap();
        assert!((g2[0].item().unwrap() - 12.0).abs() < 1e-9);
        let g3 = grad(&g2[0], &[x], false).unwrap();
        assert!((g3[0].item().unwrap() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn unreachable_parameter_gets_zero() {
        let x = p(1.0);
        let unused = Var::param(Tensor::row(vec![1.0, 2.0]));
        let y = x.scale(4.0);
        let g = grad(&y, &[x, unused], false).unwrap();
        assert_eq!(g[0].item().unwrap(), 4.0);
        assert_eq!(g[1].value().data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let x = Var::param(Tensor::row(vec![1.0, 2.0]));
        assert!(matches!(grad(&x, &[x.clone()], false), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn constant_subgraphs_drop_parents() {
        let a = Var::scalar(2.0);
        let b = a.mul(&a).unwrap();
        assert!(!b.requires_grad());
        assert_eq!(b.op_tag(), OpTag::Mul);
        let g = grad(&b, &[a], false).unwrap();
        assert_eq!(g[0].item().unwrap(), 0.0);
    }

    #[test]
    fn first_order_grad_is_detached() {
        let x = p(1.5);
        let y = x.tanh();
        let g = grad(&y, &[x], false).unwrap();
        assert!(!g[0].requires_grad());
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // f = (x*y) + (x*y)*x at x=2, y=3: df/dx = y + 2xy = 15, df/dy = x + x^2 = 6
        let x = p(2.0);
        let y = p(3.0);
        let xy = x.mul(&y).unwrap();
        let f = xy.add(&xy.mul(&x).unwrap()).unwrap();
        let g = grad(&f, &[x, y], false).unwrap();
        assert_eq!(g[0].item().unwrap(), 15.0);
        assert_eq!(g[1].item().unwrap(), 6.0);
    }
}
