//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation eagerly, in topological order, together
//! with its value. [`Tape::gradient`] walks the tape backwards from a scalar
//! root and accumulates adjoints. Because the operations are kept, the same
//! graph can be re-run with new input bindings through [`Tape::evaluate`],
//! which is what the finite-difference oracle in [`check`] relies on.
//!
//! Graph structure (neighborhoods, padding) is expressed with index lists:
//! [`Tape::gather_rows`], [`Tape::segment_sum`] and the fused
//! [`Tape::edge_attention`] kernel.

mod attention;
pub mod check;

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use thiserror::Error;

pub use attention::EdgeList;
pub use check::{finite_difference_check, FdReport};

use crate::feasible::project_row;
use crate::Mat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("shape mismatch in {op}: operand shapes {shapes:?}")]
    Shape {
        op: &'static str,
        shapes: Vec<(usize, usize)>,
    },
    #[error("gradient root must be 1x1, found {0}x{1}")]
    NonScalarRoot(usize, usize),
    #[error("no input named {0:?} on this tape")]
    UnknownInput(String),
    #[error("index {index} out of range for {op} with {len} rows")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },
}

pub type AdResult<T> = Result<T, AdError>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Const,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var, f64),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sqrt(Var),
    Relu(Var),
    Softplus(Var),
    Sum(Var),
    RowSum(Var),
    ColSum(Var),
    SegmentSum { x: Var, seg: Arc<[usize]>, n: usize },
    GatherRows { x: Var, idx: Arc<[usize]> },
    Reshape { x: Var, rows: usize, cols: usize },
    LogSumExp(Var),
    RowNormalize { x: Var, eps: f64 },
    EdgeAttention { q: Var, k: Var, v: Var, pilot: Option<Var>, edges: Arc<EdgeList> },
    ProjectRows { x: Var, radius_sq: f64 },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Const => "const",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Square(_) => "square",
            Op::Sqrt(_) => "sqrt",
            Op::Relu(_) => "relu",
            Op::Softplus(_) => "softplus",
            Op::Sum(_) => "sum",
            Op::RowSum(_) => "row_sum",
            Op::ColSum(_) => "col_sum",
            Op::SegmentSum { .. } => "segment_sum",
            Op::GatherRows { .. } => "gather_rows",
            Op::Reshape { .. } => "reshape",
            Op::LogSumExp(_) => "log_sum_exp",
            Op::RowNormalize { .. } => "row_normalize",
            Op::EdgeAttention { .. } => "edge_attention",
            Op::ProjectRows { .. } => "project_rows",
        }
    }
}

struct Node {
    op: Op,
    value: Mat,
}

/// Recorded expression graph with cached forward values.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    inputs: HashMap<String, Var>,
}

/// Adjoints produced by one backward pass.
pub struct Gradients {
    adjoints: Vec<Option<Mat>>,
    shapes: Vec<(usize, usize)>,
    inputs: HashMap<String, Var>,
    /// Number of nodes whose adjoint rule ran.
    pub visited: usize,
}

impl Gradients {
    /// Adjoint of `v`; zeros when `v` does not reach the root.
    pub fn get(&self, v: Var) -> Mat {
        self.adjoints[v.0].clone().unwrap_or_else(|| Array2::zeros(self.shapes[v.0]))
    }

    pub fn by_name(&self, name: &str) -> AdResult<Mat> {
        let v = *self.inputs.get(name).ok_or_else(|| AdError::UnknownInput(name.to_string()))?;
        Ok(self.get(v))
    }

    /// Consume the adjoint of `v` without copying.
    pub fn take(&mut self, v: Var) -> Mat {
        self.adjoints[v.0].take().unwrap_or_else(|| Array2::zeros(self.shapes[v.0]))
    }
}

fn standard(m: Mat) -> Mat {
    if m.is_standard_layout() {
        m
    } else {
        m.as_standard_layout().into_owned()
    }
}

fn shape(m: &Mat) -> (usize, usize) {
    m.dim()
}

/// `b` may match `a` or broadcast along rows, columns or both.
fn broadcastable(a: (usize, usize), b: (usize, usize)) -> bool {
    (b.0 == a.0 || b.0 == 1) && (b.1 == a.1 || b.1 == 1)
}

/// Sum `g` down to `target` shape (inverse of broadcasting).
fn reduce_to(g: Mat, target: (usize, usize)) -> Mat {
    let mut g = g;
    if target.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if target.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

/// Elementwise `f(a, b)` with `b` broadcast to the shape of `a`, on
/// contiguous slices.
fn binary(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    let (r, c) = a.dim();
    let (av, bv) = (
        a.as_slice().expect("standard layout"),
        b.as_slice().expect("standard layout"),
    );
    let mut out = Vec::with_capacity(r * c);
    match b.dim() {
        (br, bc) if (br, bc) == (r, c) => out.extend(av.iter().zip(bv).map(|(&x, &y)| f(x, y))),
        (1, bc) if bc == c => {
            for row in av.chunks_exact(c.max(1)) {
                out.extend(row.iter().zip(bv).map(|(&x, &y)| f(x, y)));
            }
        }
        (br, 1) if br == r => {
            for (row, &y) in av.chunks_exact(c.max(1)).zip(bv) {
                out.extend(row.iter().map(|&x| f(x, y)));
            }
        }
        _ => {
            let y = bv[0];
            out.extend(av.iter().map(|&x| f(x, y)));
        }
    }
    out.truncate(r * c);
    Array2::from_shape_vec((r, c), out).expect("length matches")
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
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

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1x1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    fn push_value(&mut self, op: Op, value: Mat) -> Var {
        self.nodes.push(Node {
            op,
            value: standard(value),
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> AdResult<Var> {
        let value = self.compute(&op)?;
        Ok(self.push_value(op, value))
    }

    /// Named input; rebinding by name is possible through [`Tape::evaluate`].
    ///
    /// Panics if the name is already taken.
    pub fn input(&mut self, name: impl Into<String>, value: Mat) -> Var {
        let name = name.into();
        assert!(!self.inputs.contains_key(&name), "duplicate tape input {name:?}");
        let v = self.push_value(Op::Input, value);
        self.inputs.insert(name, v);
        v
    }

    pub fn input_var(&self, name: &str) -> Option<Var> {
        self.inputs.get(name).copied()
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.keys().map(String::as_str)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push_value(Op::Const, value)
    }

    pub fn scalar_constant(&mut self, value: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), value))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> AdResult<Var> {
        self.push(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> AdResult<Var> {
        self.push(Op::Transpose(a))
    }

    /// `a + b` with `b` broadcast along rows and/or columns when it is a
    /// row vector, column vector or scalar.
    pub fn add(&mut self, a: Var, b: Var) -> AdResult<Var> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> AdResult<Var> {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> AdResult<Var> {
        self.push(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> AdResult<Var> {
        self.push(Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> AdResult<Var> {
        self.push(Op::Scale(a, c))
    }

    pub fn offset(&mut self, a: Var, c: f64) -> AdResult<Var> {
        self.push(Op::Offset(a, c))
    }

    pub fn neg(&mut self, a: Var) -> AdResult<Var> {
        self.scale(a, -1.0)
    }

    pub fn exp(&mut self, a: Var) -> AdResult<Var> {
        self.push(Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> AdResult<Var> {
        self.push(Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> AdResult<Var> {
        self.push(Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> AdResult<Var> {
        self.push(Op::Sqrt(a))
    }

    /// ReLU; the derivative at exactly 0 is taken as 0.
    pub fn relu(&mut self, a: Var) -> AdResult<Var> {
        self.push(Op::Relu(a))
    }

    pub fn softplus(&mut self, a: Var) -> AdResult<Var> {
        self.push(Op::Softplus(a))
    }

    /// Sum of all entries, as `1x1`.
    pub fn sum(&mut self, a: Var) -> AdResult<Var> {
        self.push(Op::Sum(a))
    }

    /// `r x c -> r x 1`.
    pub fn row_sum(&mut self, a: Var) -> AdResult<Var> {
        self.push(Op::RowSum(a))
    }

    /// `r x c -> 1 x c`.
    pub fn col_sum(&mut self, a: Var) -> AdResult<Var> {
        self.push(Op::ColSum(a))
    }

    /// Row `r` of `x` is added into output row `seg[r]`; output has `n` rows.
    pub fn segment_sum(&mut self, x: Var, seg: Arc<[usize]>, n: usize) -> AdResult<Var> {
        self.push(Op::SegmentSum { x, seg, n })
    }

    /// Output row `r` is row `idx[r]` of `x`.
    pub fn gather_rows(&mut self, x: Var, idx: Arc<[usize]>) -> AdResult<Var> {
        self.push(Op::GatherRows { x, idx })
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> AdResult<Var> {
        self.push(Op::Reshape { x, rows, cols })
    }

    /// `ln sum exp` over all entries with a max shift, as `1x1`.
    pub fn log_sum_exp(&mut self, x: Var) -> AdResult<Var> {
        self.push(Op::LogSumExp(x))
    }

    /// Per-row standardization `(x - mean) / sqrt(var + eps)`.
    pub fn row_normalize(&mut self, x: Var, eps: f64) -> AdResult<Var> {
        self.push(Op::RowNormalize { x, eps })
    }

    /// Masked exponential-kernel attention over the neighborhoods in `edges`.
    ///
    /// For destination row `i` and each incoming edge `e = (j -> i)` with
    /// scalar attribute `a_e` and mask `w_e`:
    ///
    /// ```text
    /// s_e     = q_i . (k_j + a_e p) / sqrt(D)
    /// alpha_e = w_e exp(s_e) / sum_u w_u exp(s_u)
    /// out_i   = sum_e alpha_e (v_j + a_e p)
    /// ```
    ///
    /// where `p` is the optional `1 x D` pilot row. A destination with no
    /// unmasked edge gets a zero row.
    pub fn edge_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        pilot: Option<Var>,
        edges: Arc<EdgeList>,
    ) -> AdResult<Var> {
        self.push(Op::EdgeAttention { q, k, v, pilot, edges })
    }

    /// Row-wise projection onto `{x >= 0, ||x||^2 <= radius_sq}`.
    pub fn project_rows(&mut self, x: Var, radius_sq: f64) -> AdResult<Var> {
        self.push(Op::ProjectRows { x, radius_sq })
    }

    /// `x W + b` with `b` a `1 x out` row.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> AdResult<Var> {
        let h = self.matmul(x, w)?;
        match b {
            Some(b) => self.add(h, b),
            None => Ok(h),
        }
    }

    fn val(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    fn compute(&self, op: &Op) -> AdResult<Mat> {
        let err = |shapes: Vec<(usize, usize)>| AdError::Shape { op: op.name(), shapes };
        let out = match op {
            Op::Input | Op::Const => unreachable!("leaf nodes carry their own value"),
            Op::MatMul(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                if a.ncols() != b.nrows() {
                    return Err(err(vec![shape(a), shape(b)]));
                }
                a.dot(b)
            }
            Op::Transpose(a) => self.val(*a).t().as_standard_layout().into_owned(),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                if !broadcastable(shape(a), shape(b)) {
                    return Err(err(vec![shape(a), shape(b)]));
                }
                match op {
                    Op::Add(..) => binary(a, b, |x, y| x + y),
                    Op::Sub(..) => binary(a, b, |x, y| x - y),
                    Op::Mul(..) => binary(a, b, |x, y| x * y),
                    _ => binary(a, b, |x, y| x / y),
                }
            }
            Op::Scale(a, c) => self.val(*a) * *c,
            Op::Offset(a, c) => self.val(*a) + *c,
            Op::Exp(a) => self.val(*a).mapv(f64::exp),
            Op::Log(a) => self.val(*a).mapv(f64::ln),
            Op::Square(a) => self.val(*a).mapv(|x| x * x),
            Op::Sqrt(a) => self.val(*a).mapv(f64::sqrt),
            Op::Relu(a) => self.val(*a).mapv(|x| if x > 0.0 { x } else { 0.0 }),
            Op::Softplus(a) => self.val(*a).mapv(softplus),
            Op::Sum(a) => Array2::from_elem((1, 1), self.val(*a).sum()),
            Op::RowSum(a) => self.val(*a).sum_axis(Axis(1)).insert_axis(Axis(1)),
            Op::ColSum(a) => self.val(*a).sum_axis(Axis(0)).insert_axis(Axis(0)),
            Op::SegmentSum { x, seg, n } => {
                let x = self.val(*x);
                if seg.len() != x.nrows() {
                    return Err(err(vec![shape(x), (seg.len(), 1)]));
                }
                let mut out = Array2::zeros((*n, x.ncols()));
                for (r, &s) in seg.iter().enumerate() {
                    if s >= *n {
                        return Err(AdError::Index { op: "segment_sum", index: s, len: *n });
                    }
                    let mut row = out.row_mut(s);
                    row += &x.row(r);
                }
                out
            }
            Op::GatherRows { x, idx } => {
                let x = self.val(*x);
                if let Some(&bad) = idx.iter().find(|&&i| i >= x.nrows()) {
                    return Err(AdError::Index { op: "gather_rows", index: bad, len: x.nrows() });
                }
                x.select(Axis(0), idx)
            }
            Op::Reshape { x, rows, cols } => {
                let x = self.val(*x);
                if x.len() != rows * cols {
                    return Err(err(vec![shape(x), (*rows, *cols)]));
                }
                x.as_standard_layout()
                    .into_owned()
                    .into_shape_with_order((*rows, *cols))
                    .expect("length checked")
            }
            Op::LogSumExp(a) => {
                let a = self.val(*a);
                let max = a.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                let s: f64 = a.iter().map(|x| (x - max).exp()).sum();
                Array2::from_elem((1, 1), max + s.ln())
            }
            Op::RowNormalize { x, eps } => {
                let mut out = self.val(*x).to_owned();
                for mut row in out.rows_mut() {
                    let n = row.len() as f64;
                    let mean = row.sum() / n;
                    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    let inv = 1.0 / (var + eps).sqrt();
                    row.mapv_inplace(|v| (v - mean) * inv);
                }
                out
            }
            Op::EdgeAttention { q, k, v, pilot, edges } => {
                let (q, k, v) = (self.val(*q), self.val(*k), self.val(*v));
                let p = pilot.map(|p| self.val(p));
                let d = q.ncols();
                let pilot_ok = p.is_none_or(|p| p.dim() == (1, d));
                if k.ncols() != d
                    || v.ncols() != d
                    || q.nrows() != edges.n_dst()
                    || k.nrows() != edges.n_src
                    || v.nrows() != edges.n_src
                    || !pilot_ok
                {
                    let mut shapes = vec![shape(q), shape(k), shape(v)];
                    shapes.extend(p.map(shape));
                    return Err(err(shapes));
                }
                attention::forward(q, k, v, p, edges)
            }
            Op::ProjectRows { x, radius_sq } => {
                let mut out = self.val(*x).to_owned();
                for mut row in out.rows_mut() {
                    project_row(row.as_slice_mut().expect("standard layout"), *radius_sq);
                }
                out
            }
        };
        Ok(out)
    }

    /// Rebind the named inputs in `bindings` and recompute every node.
    /// Returns the new value of `root`.
    pub fn evaluate(&mut self, root: Var, bindings: &HashMap<String, Mat>) -> AdResult<Mat> {
        for (name, value) in bindings {
            let v = *self.inputs.get(name).ok_or_else(|| AdError::UnknownInput(name.clone()))?;
            self.nodes[v.0].value = standard(value.clone());
        }
        self.replay()?;
        Ok(self.val(root).clone())
    }

    /// Replace one input value and recompute the tape.
    pub fn set_input(&mut self, name: &str, value: Mat) -> AdResult<()> {
        let v = *self.inputs.get(name).ok_or_else(|| AdError::UnknownInput(name.to_string()))?;
        self.nodes[v.0].value = standard(value);
        self.replay()
    }

    fn replay(&mut self) -> AdResult<()> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Input | Op::Const) {
                continue;
            }
            let value = self.compute(&self.nodes[i].op)?;
            self.nodes[i].value = standard(value);
        }
        Ok(())
    }

    /// First node (in evaluation order) holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| n.value.iter().any(|v| !v.is_finite()))
            .map(|(i, n)| (i, n.op.name()))
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    /// Backward pass from a `1x1` root.
    pub fn gradient(&self, root: Var) -> AdResult<Gradients> {
        let (r, c) = self.shape(root);
        if (r, c) != (1, 1) {
            return Err(AdError::NonScalarRoot(r, c));
        }
        let mut adj: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        adj[root.0] = Some(Array2::ones((1, 1)));
        let mut visited = 0;
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            visited += 1;
            self.backprop(i, &g, &mut adj);
            adj[i] = Some(g);
        }
        Ok(Gradients {
            adjoints: adj,
            shapes: self.nodes.iter().map(|n| n.value.dim()).collect(),
            inputs: self.inputs.clone(),
            visited,
        })
    }

    fn backprop(&self, i: usize, g: &Mat, adj: &mut [Option<Mat>]) {
        let acc = |adj: &mut [Option<Mat>], v: Var, d: Mat| match &mut adj[v.0] {
            Some(a) => *a += &d,
            slot @ None => *slot = Some(d),
        };
        let y = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Input | Op::Const => {}
            Op::MatMul(a, b) => {
                acc(adj, *a, g.dot(&self.val(*b).t()));
                acc(adj, *b, self.val(*a).t().dot(g));
            }
            Op::Transpose(a) => acc(adj, *a, g.t().as_standard_layout().into_owned()),
            Op::Add(a, b) => {
                acc(adj, *a, g.clone());
                acc(adj, *b, reduce_to(g.clone(), self.shape(*b)));
            }
            Op::Sub(a, b) => {
                acc(adj, *a, g.clone());
                acc(adj, *b, reduce_to(-g, self.shape(*b)));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                acc(adj, *a, g * bv);
                acc(adj, *b, reduce_to(g * av, self.shape(*b)));
            }
            Op::Div(a, b) => {
                let bv = self.val(*b);
                acc(adj, *a, g / bv);
                acc(adj, *b, reduce_to(-(g * y) / bv, self.shape(*b)));
            }
            Op::Scale(a, c) => acc(adj, *a, g * *c),
            Op::Offset(a, _) => acc(adj, *a, g.clone()),
            Op::Exp(a) => acc(adj, *a, g * y),
            Op::Log(a) => acc(adj, *a, g / self.val(*a)),
            Op::Square(a) => acc(adj, *a, g * self.val(*a) * 2.0),
            Op::Sqrt(a) => acc(adj, *a, g / &(y * 2.0)),
            Op::Relu(a) => {
                let mut d = g.clone();
                d.zip_mut_with(self.val(*a), |d, &x| {
                    if x <= 0.0 {
                        *d = 0.0
                    }
                });
                acc(adj, *a, d)
            }
            Op::Softplus(a) => {
                let mut d = g.clone();
                d.zip_mut_with(self.val(*a), |d, &x| *d *= logistic(x));
                acc(adj, *a, d)
            }
            Op::Sum(a) => acc(adj, *a, Array2::from_elem(self.shape(*a), g[[0, 0]])),
            Op::RowSum(a) => {
                let (r, c) = self.shape(*a);
                acc(adj, *a, g.broadcast((r, c)).expect("column broadcast").to_owned())
            }
            Op::ColSum(a) => {
                let (r, c) = self.shape(*a);
                acc(adj, *a, g.broadcast((r, c)).expect("row broadcast").to_owned())
            }
            Op::SegmentSum { x, seg, .. } => acc(adj, *x, g.select(Axis(0), seg)),
            Op::GatherRows { x, idx } => {
                let mut d = Array2::zeros(self.shape(*x));
                for (r, &src) in idx.iter().enumerate() {
                    let mut row = d.row_mut(src);
                    row += &g.row(r);
                }
                acc(adj, *x, d)
            }
            Op::Reshape { x, .. } => {
                let s = self.shape(*x);
                acc(adj, *x, g.clone().into_shape_with_order(s).expect("same length"))
            }
            Op::LogSumExp(a) => {
                let lse = y[[0, 0]];
                acc(adj, *a, self.val(*a).mapv(|x| g[[0, 0]] * (x - lse).exp()))
            }
            Op::RowNormalize { x, eps } => {
                let xv = self.val(*x);
                let mut d = Array2::zeros(xv.dim());
                for ((mut dr, xr), (yr, gr)) in d.rows_mut().into_iter().zip(xv.rows()).zip(y.rows().into_iter().zip(g.rows())) {
                    let n = xr.len() as f64;
                    let mean = xr.sum() / n;
                    let var = xr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    let inv = 1.0 / (var + eps).sqrt();
                    let g_mean = gr.sum() / n;
                    let gy_mean = gr.iter().zip(yr.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
                    for ((dv, &gv), &yv) in dr.iter_mut().zip(gr.iter()).zip(yr.iter()) {
                        *dv = inv * (gv - g_mean - yv * gy_mean);
                    }
                }
                acc(adj, *x, d)
            }
            Op::EdgeAttention { q, k, v, pilot, edges } => {
                let p = pilot.map(|p| self.val(p));
                let grads = attention::backward(self.val(*q), self.val(*k), self.val(*v), p, edges, g);
                acc(adj, *q, grads.q);
                acc(adj, *k, grads.k);
                acc(adj, *v, grads.v);
                if let (Some(pv), Some(gp)) = (pilot, grads.pilot) {
                    acc(adj, *pv, gp);
                }
            }
            Op::ProjectRows { x, radius_sq } => {
                let xv = self.val(*x);
                let mut d = g.clone();
                let radius = radius_sq.sqrt();
                for (mut dr, xr) in d.rows_mut().into_iter().zip(xv.rows()) {
                    let norm_sq: f64 = xr.iter().map(|v| if *v > 0.0 { v * v } else { 0.0 }).sum();
                    if norm_sq > *radius_sq {
                        let norm = norm_sq.sqrt();
                        // d(r c/|c|) = r/|c| (I - c c^T/|c|^2)
                        let cg: f64 = xr.iter().zip(dr.iter()).map(|(x, g)| if *x > 0.0 { x * g } else { 0.0 }).sum();
                        for (dv, &xv) in dr.iter_mut().zip(xr.iter()) {
                            let c = if xv > 0.0 { xv } else { 0.0 };
                            *dv = radius / norm * (*dv - c * cg / norm_sq);
                        }
                    }
                    for (dv, &xv) in dr.iter_mut().zip(xr.iter()) {
                        if xv <= 0.0 {
                            *dv = 0.0;
                        }
                    }
                }
                acc(adj, *x, d)
            }
        }
    }
}

#[cfg(test)]
mod tests;
