//! Matrix-valued reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of one forward pass. Values are dense
//! `f64` matrices; graph aggregations take their sparsity pattern as a shared
//! [`Csr`]. [`Tape::backward`] walks the record in reverse and returns the
//! gradient of a scalar output with respect to every registered parameter.

use std::collections::BTreeMap;
use std::rc::Rc;

use ndarray::{Array2, Axis, Zip};

use crate::error::{Error, Result};
use crate::graph::Csr;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    /// `a * b^T`
    MatMulT(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    MulScalarVar(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    NeighborSum(usize, Rc<Csr>),
    EdgeReluSum(usize, usize, Rc<Csr>),
    SegmentSum(usize, Rc<[usize]>),
    SegmentMean(usize, Rc<[usize]>),
    Gather(usize, Rc<[usize]>),
    L2NormalizeRows(usize),
    SoftmaxCrossEntropy(usize, Rc<[usize]>, Reduction),
    SumSquares(usize),
    Sum(usize),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Gradients keyed by parameter path.
pub type GradientSet = BTreeMap<String, Array2<f64>>;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, usize)>,
    frozen: bool,
}

fn shape(a: &Array2<f64>) -> (usize, usize) {
    (a.nrows(), a.ncols())
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// A tape whose parameters are recorded as constants: forward only.
    pub fn inference() -> Self {
        Tape {
            frozen: true,
            ..Tape::default()
        }
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: usize) -> bool {
        self.nodes[v].needs_grad
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Registers a trainable parameter under `path`.
    pub fn param(&mut self, path: impl Into<String>, value: &Array2<f64>) -> Var {
        if self.frozen {
            return self.constant(value.clone());
        }
        let v = self.push(value.clone(), Op::Leaf, true);
        self.params.push((path.into(), v.0));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.ncols() != y.nrows() {
            return Err(Error::Shape(format!("matmul {:?} x {:?}", shape(x), shape(y))));
        }
        let out = x.dot(y);
        let ng = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(out, Op::MatMul(a.0, b.0), ng))
    }

    /// `a * b^T`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.ncols() != y.ncols() {
            return Err(Error::Shape(format!("matmul_t {:?} x {:?}^T", shape(x), shape(y))));
        }
        let out = x.dot(&y.t());
        let ng = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(out, Op::MatMulT(a.0, b.0), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.dim() != y.dim() {
            return Err(Error::Shape(format!("add {:?} + {:?}", shape(x), shape(y))));
        }
        let out = x + y;
        let ng = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(out, Op::Add(a.0, b.0), ng))
    }

    /// Adds the `1 x m` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.nrows() != 1 || b.ncols() != x.ncols() {
            return Err(Error::Shape(format!("add_row {:?} + {:?}", shape(x), shape(b))));
        }
        let out = x + b;
        let ng = self.needs(a.0) || self.needs(bias.0);
        Ok(self.push(out, Op::AddRow(a.0, bias.0), ng))
    }

    /// Multiplies `a` by the `1 x 1` value `s`.
    pub fn mul_scalar_var(&mut self, a: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.dim() != (1, 1) {
            return Err(Error::Shape(format!("scalar operand has shape {:?}", shape(sv))));
        }
        let out = self.value(a) * sv[[0, 0]];
        let ng = self.needs(a.0) || self.needs(s.0);
        Ok(self.push(out, Op::MulScalarVar(a.0, s.0), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        let ng = self.needs(a.0);
        self.push(out, Op::Scale(a.0, c), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|v| v.max(0.0));
        let ng = self.needs(a.0);
        self.push(out, Op::Relu(a.0), ng)
    }

    fn check_rows(&self, a: Var, n: usize, what: &str) -> Result<()> {
        let r = self.value(a).nrows();
        if r != n {
            return Err(Error::Shape(format!("{what}: {r} rows, graph has {n} nodes")));
        }
        Ok(())
    }

    /// `out_i = sum_{j in N(i)} a_j`
    pub fn neighbor_sum(&mut self, a: Var, graph: &Rc<Csr>) -> Result<Var> {
        self.check_rows(a, graph.node_count(), "neighbor_sum")?;
        let x = self.value(a);
        let mut out = Array2::zeros(x.dim());
        for i in 0..graph.node_count() {
            let mut row = out.row_mut(i);
            for &j in graph.neighbors(i) {
                row += &x.row(j);
            }
        }
        let ng = self.needs(a.0);
        Ok(self.push(out, Op::NeighborSum(a.0, graph.clone()), ng))
    }

    /// `out_i = sum_{e = (i, j)} relu(a_j + edge_e)`, with `edge` holding one
    /// row per adjacency entry.
    pub fn edge_relu_sum(&mut self, a: Var, edge: Var, graph: &Rc<Csr>) -> Result<Var> {
        self.check_rows(a, graph.node_count(), "edge_relu_sum")?;
        let (x, e) = (self.value(a), self.value(edge));
        if e.nrows() != graph.nnz() || e.ncols() != x.ncols() {
            return Err(Error::Shape(format!(
                "edge_relu_sum: edge rows {:?}, expected ({}, {})",
                shape(e),
                graph.nnz(),
                x.ncols()
            )));
        }
        let mut out = Array2::zeros(x.dim());
        for i in 0..graph.node_count() {
            let mut row = out.row_mut(i);
            for k in graph.entry_range(i) {
                let j = graph.targets()[k];
                Zip::from(&mut row)
                    .and(x.row(j))
                    .and(e.row(k))
                    .for_each(|o, &xv, &ev| *o += (xv + ev).max(0.0));
            }
        }
        let ng = self.needs(a.0) || self.needs(edge.0);
        Ok(self.push(out, Op::EdgeReluSum(a.0, edge.0, graph.clone()), ng))
    }

    fn check_segments(&self, a: Var, offsets: &[usize]) -> Result<()> {
        let n = self.value(a).nrows();
        if offsets.first() != Some(&0) || offsets.last() != Some(&n) || offsets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Shape(format!(
                "segment offsets must partition {n} rows into non-empty segments"
            )));
        }
        Ok(())
    }

    /// Row sums over the segments `offsets[s]..offsets[s + 1]`.
    pub fn segment_sum(&mut self, a: Var, offsets: &Rc<[usize]>) -> Result<Var> {
        self.check_segments(a, offsets)?;
        let x = self.value(a);
        let mut out = Array2::zeros((offsets.len() - 1, x.ncols()));
        for s in 0..offsets.len() - 1 {
            let seg = x.slice(ndarray::s![offsets[s]..offsets[s + 1], ..]);
            out.row_mut(s).assign(&seg.sum_axis(Axis(0)));
        }
        let ng = self.needs(a.0);
        Ok(self.push(out, Op::SegmentSum(a.0, offsets.clone()), ng))
    }

    pub fn segment_mean(&mut self, a: Var, offsets: &Rc<[usize]>) -> Result<Var> {
        self.check_segments(a, offsets)?;
        let x = self.value(a);
        let mut out = Array2::zeros((offsets.len() - 1, x.ncols()));
        for s in 0..offsets.len() - 1 {
            let seg = x.slice(ndarray::s![offsets[s]..offsets[s + 1], ..]);
            let count = (offsets[s + 1] - offsets[s]) as f64;
            out.row_mut(s).assign(&(seg.sum_axis(Axis(0)) / count));
        }
        let ng = self.needs(a.0);
        Ok(self.push(out, Op::SegmentMean(a.0, offsets.clone()), ng))
    }

    pub fn gather(&mut self, a: Var, rows: &Rc<[usize]>) -> Result<Var> {
        let x = self.value(a);
        if let Some(&r) = rows.iter().find(|&&r| r >= x.nrows()) {
            return Err(Error::Shape(format!("gather row {r} of {}", x.nrows())));
        }
        let out = x.select(Axis(0), rows);
        let ng = self.needs(a.0);
        Ok(self.push(out, Op::Gather(a.0, rows.clone()), ng))
    }

    /// Scales every row to unit Euclidean norm (norms floored at 1e-12).
    pub fn l2_normalize_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let n = row.dot(&row).sqrt().max(1e-12);
            row /= n;
        }
        let ng = self.needs(a.0);
        self.push(out, Op::L2NormalizeRows(a.0), ng)
    }

    /// Softmax cross-entropy of `logits` rows against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &Rc<[usize]>, reduction: Reduction) -> Result<Var> {
        let z = self.value(logits);
        if targets.len() != z.nrows() || targets.iter().any(|&t| t >= z.ncols()) {
            return Err(Error::Shape(format!(
                "cross entropy: {} targets for logits {:?}",
                targets.len(),
                shape(z)
            )));
        }
        let mut total = 0.0;
        for (row, &t) in z.rows().into_iter().zip(targets.iter()) {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.mapv(|v| (v - m).exp()).sum().ln();
            total += lse - row[t];
        }
        if reduction == Reduction::Mean && !targets.is_empty() {
            total /= targets.len() as f64;
        }
        let ng = self.needs(logits.0);
        Ok(self.push(
            Array2::from_elem((1, 1), total),
            Op::SoftmaxCrossEntropy(logits.0, targets.clone(), reduction),
            ng,
        ))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().map(|v| v * v).sum();
        let ng = self.needs(a.0);
        self.push(Array2::from_elem((1, 1), s), Op::SumSquares(a.0), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let ng = self.needs(a.0);
        self.push(Array2::from_elem((1, 1), s), Op::Sum(a.0), ng)
    }

    /// Reverse pass from the `1 x 1` value `loss`. Parameters the loss does
    /// not depend on receive zero gradients. Fails on non-finite gradients,
    /// naming the offending parameter.
    pub fn backward(&self, loss: Var) -> Result<GradientSet> {
        if self.value(loss).dim() != (1, 1) {
            return Err(Error::Shape("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones((1, 1)));

        fn acc(grads: &mut [Option<Array2<f64>>], i: usize, g: Array2<f64>) {
            match &mut grads[i] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let val = |i: usize| &self.nodes[i].value;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, g.dot(&val(*b).t()));
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, val(*a).t().dot(&g));
                    }
                }
                Op::MatMulT(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, g.dot(val(*b)));
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, g.t().dot(val(*a)));
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, g);
                    }
                }
                Op::AddRow(a, bias) => {
                    if self.needs(*bias) {
                        acc(&mut grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.needs(*a) {
                        acc(&mut grads, *a, g);
                    }
                }
                Op::MulScalarVar(a, s) => {
                    let sv = val(*s)[[0, 0]];
                    if self.needs(*s) {
                        let ds = (&g * val(*a)).sum();
                        acc(&mut grads, *s, Array2::from_elem((1, 1), ds));
                    }
                    if self.needs(*a) {
                        acc(&mut grads, *a, g * sv);
                    }
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::Relu(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| {
                        if y <= 0.0 {
                            *d = 0.0
                        }
                    });
                    acc(&mut grads, *a, d);
                }
                Op::NeighborSum(a, graph) => {
                    let mut d = Array2::zeros(val(*a).dim());
                    for i in 0..graph.node_count() {
                        let gi = g.row(i);
                        for &j in graph.neighbors(i) {
                            let mut r = d.row_mut(j);
                            r += &gi;
                        }
                    }
                    acc(&mut grads, *a, d);
                }
                Op::EdgeReluSum(a, e, graph) => {
                    let (x, ev) = (val(*a), val(*e));
                    let mut dx = Array2::zeros(x.dim());
                    let mut de = Array2::zeros(ev.dim());
                    for i in 0..graph.node_count() {
                        let gi = g.row(i);
                        for k in graph.entry_range(i) {
                            let j = graph.targets()[k];
                            let mut dxj = dx.row_mut(j);
                            let mut dek = de.row_mut(k);
                            for c in 0..x.ncols() {
                                if x[[j, c]] + ev[[k, c]] > 0.0 {
                                    dxj[c] += gi[c];
                                    dek[c] = gi[c];
                                }
                            }
                        }
                    }
                    if self.needs(*a) {
                        acc(&mut grads, *a, dx);
                    }
                    if self.needs(*e) {
                        acc(&mut grads, *e, de);
                    }
                }
                Op::SegmentSum(a, offsets) | Op::SegmentMean(a, offsets) => {
                    let mean = matches!(node.op, Op::SegmentMean(..));
                    let mut d = Array2::zeros(val(*a).dim());
                    for s in 0..offsets.len() - 1 {
                        let count = (offsets[s + 1] - offsets[s]) as f64;
                        let gs = if mean { &g.row(s) / count } else { g.row(s).to_owned() };
                        for r in offsets[s]..offsets[s + 1] {
                            d.row_mut(r).assign(&gs);
                        }
                    }
                    acc(&mut grads, *a, d);
                }
                Op::Gather(a, rows) => {
                    let mut d = Array2::zeros(val(*a).dim());
                    for (k, &r) in rows.iter().enumerate() {
                        let mut dr = d.row_mut(r);
                        dr += &g.row(k);
                    }
                    acc(&mut grads, *a, d);
                }
                Op::L2NormalizeRows(a) => {
                    let x = val(*a);
                    let y = &node.value;
                    let mut d = Array2::zeros(x.dim());
                    for r in 0..x.nrows() {
                        let n = x.row(r).dot(&x.row(r)).sqrt().max(1e-12);
                        let proj = y.row(r).dot(&g.row(r));
                        let row = (&g.row(r) - &(&y.row(r) * proj)) / n;
                        d.row_mut(r).assign(&row);
                    }
                    acc(&mut grads, *a, d);
                }
                Op::SoftmaxCrossEntropy(logits, targets, reduction) => {
                    let z = val(*logits);
                    let scale = g[[0, 0]]
                        * match reduction {
                            Reduction::Mean if !targets.is_empty() => 1.0 / targets.len() as f64,
                            _ => 1.0,
                        };
                    let mut d = Array2::zeros(z.dim());
                    for (r, &t) in targets.iter().enumerate() {
                        let row = z.row(r);
                        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                        let e = row.mapv(|v| (v - m).exp());
                        let total = e.sum();
                        let mut dr = d.row_mut(r);
                        dr.assign(&(e / total * scale));
                        dr[t] -= scale;
                    }
                    acc(&mut grads, *logits, d);
                }
                Op::SumSquares(a) => {
                    let d = val(*a) * (2.0 * g[[0, 0]]);
                    acc(&mut grads, *a, d);
                }
                Op::Sum(a) => {
                    let d = Array2::from_elem(val(*a).dim(), g[[0, 0]]);
                    acc(&mut grads, *a, d);
                }
            }
        }

        let mut out = GradientSet::new();
        for (path, idx) in &self.params {
            let g = grads[*idx]
                .take()
                .unwrap_or_else(|| Array2::zeros(self.nodes[*idx].value.dim()));
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(path.clone()));
            }
            match out.get_mut(path) {
                Some(existing) => *existing += &g,
                None => {
                    out.insert(path.clone(), g);
                }
            }
        }
        Ok(out)
    }
}
