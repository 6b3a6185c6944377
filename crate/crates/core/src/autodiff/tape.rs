use crate::mrf::{PaddedClique, PairwiseGraph};

use super::contract::{contract, ContractScratch};
use super::tensor::{gemm, Tensor};
use super::TensorError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Sparse row-weighted neighbour aggregation, `out_i = sum_j w_ij * h_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregator {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl Aggregator {
    fn from_rows(rows: impl Iterator<Item = Vec<(usize, f64)>>) -> Self {
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        for row in rows {
            for (j, w) in row {
                cols.push(j);
                weights.push(w);
            }
            offsets.push(cols.len());
        }
        Aggregator {
            offsets,
            cols,
            weights,
        }
    }

    /// Mean over neighbours; isolated nodes aggregate to zero.
    pub fn mean(graph: &PairwiseGraph) -> Self {
        Self::from_rows(graph.adjacency.iter().map(|nbrs| {
            let w = 1.0 / nbrs.len() as f64;
            nbrs.iter().map(|&j| (j, w)).collect()
        }))
    }

    /// Symmetric-normalised sum over the neighbourhood including the node
    /// itself, with degrees counted after adding the self loop.
    pub fn gcn(graph: &PairwiseGraph) -> Self {
        let deg: Vec<f64> = (0..graph.n_vars)
            .map(|i| (graph.degree(i) + 1) as f64)
            .collect();
        Self::from_rows(graph.adjacency.iter().enumerate().map(|(i, nbrs)| {
            let mut row: Vec<(usize, f64)> = nbrs
                .iter()
                .map(|&j| (j, 1.0 / (deg[i] * deg[j]).sqrt()))
                .collect();
            row.push((i, 1.0 / deg[i]));
            row.sort_by_key(|e| e.0);
            row
        }))
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }
}

enum Value<'a> {
    Owned(Tensor),
    Borrowed(&'a Tensor),
}

impl Value<'_> {
    fn get(&self) -> &Tensor {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

enum Op<'a> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRowBias(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    ConcatCols(Vec<Var>),
    Aggregate(Var, &'a Aggregator),
    MaskedSoftmax(Var, f64),
    InnerProduct(Var, Var),
    CliqueContract {
        probs: Var,
        table: &'a [f64],
        scope: &'a [usize],
    },
    CliqueSum {
        probs: Var,
        cliques: &'a [PaddedClique],
    },
}

struct Node<'a> {
    value: Value<'a>,
    op: Op<'a>,
}

/// Records a forward computation so that gradients can be replayed in
/// reverse. Leaves may borrow their tensors, so parameters are not copied
/// per step.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op<'a>) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.nodes[v.0].value.get()
    }

    /// A leaf owning its value.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// A leaf borrowing its value, typically a model parameter.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Borrowed(t),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, 0.0, &mut out);
        Ok(self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("add", ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds a `1 x m` bias to every row of an `n x m` matrix.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(bias));
        if ta.shape().len() != 2 || tb.shape() != [1, ta.cols()] {
            return Err(mismatch("add_row_bias", ta, tb));
        }
        let m = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + tb.data()[i % m])
            .collect();
        let out = Tensor::matrix(ta.rows(), m, data);
        Ok(self.push(out, Op::AddRowBias(a, bias)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = self.value(a);
        let out = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|x| c * x).collect(),
        )
        .expect("same shape");
        self.push(out, Op::Scale(a, c))
    }

    /// Elementwise `max(x, 0)`; the derivative at 0 is taken as 0.
    pub fn relu(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let out = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|x| x.max(0.0)).collect(),
        )
        .expect("same shape");
        self.push(out, Op::Relu(a))
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = self.value(*parts.first().ok_or(TensorError::Empty("concat_cols"))?);
        let rows = first.rows();
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() != 2 || t.rows() != rows {
                return Err(mismatch("concat_cols", first, t));
            }
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        Ok(self.push(
            Tensor::matrix(rows, total, data),
            Op::ConcatCols(parts.to_vec()),
        ))
    }

    /// Weighted neighbour aggregation of the rows of `h`.
    pub fn aggregate(&mut self, h: Var, agg: &'a Aggregator) -> Result<Var, TensorError> {
        let th = self.value(h);
        if th.rows() != agg.n_rows() {
            return Err(TensorError::ShapeMismatch {
                op: "aggregate",
                left: th.shape().to_vec(),
                right: vec![agg.n_rows()],
            });
        }
        let d = th.cols();
        let mut out = vec![0.0; th.rows() * d];
        for i in 0..agg.n_rows() {
            let o = &mut out[i * d..(i + 1) * d];
            for (j, w) in agg.row(i) {
                for (x, y) in o.iter_mut().zip(th.row(j)) {
                    *x += w * y;
                }
            }
        }
        let out = Tensor::matrix(th.rows(), d, out);
        Ok(self.push(out, Op::Aggregate(h, agg)))
    }

    /// Row-wise `softmax((logits + mask) / temperature)`, where `mask` holds
    /// 0 for allowed entries and `-inf` for excluded ones.
    pub fn masked_softmax(
        &mut self,
        logits: Var,
        mask: &[f64],
        temperature: f64,
    ) -> Result<Var, TensorError> {
        if !(temperature > 0.0) {
            return Err(TensorError::NonPositiveTemperature(temperature));
        }
        let tl = self.value(logits);
        if tl.len() != mask.len() || tl.shape().len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "masked_softmax",
                left: tl.shape().to_vec(),
                right: vec![mask.len()],
            });
        }
        let s = tl.cols();
        let mut out = Vec::with_capacity(tl.len());
        for i in 0..tl.rows() {
            let z: Vec<f64> = tl
                .row(i)
                .iter()
                .zip(&mask[i * s..(i + 1) * s])
                .map(|(l, m)| (l + m) / temperature)
                .collect();
            let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if top == f64::NEG_INFINITY {
                return Err(TensorError::EmptyMaskRow(i));
            }
            let e: Vec<f64> = z.iter().map(|v| (v - top).exp()).collect();
            let sum: f64 = e.iter().sum();
            out.extend(e.iter().map(|v| v / sum));
        }
        let out = Tensor::matrix(tl.rows(), s, out);
        Ok(self.push(out, Op::MaskedSoftmax(logits, temperature)))
    }

    /// Sum of elementwise products, as a `1 x 1` tensor.
    pub fn inner_product(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() {
            return Err(mismatch("inner_product", ta, tb));
        }
        let v = ta
            .data()
            .iter()
            .zip(tb.data())
            .fold(0.0, |acc, (x, y)| acc + x * y);
        Ok(self.push(Tensor::scalar(v), Op::InnerProduct(a, b)))
    }

    /// `<table, p_{scope[0]} (x) p_{scope[1]} (x) ...>` where `p_i` is row `i`
    /// of the `n x S` matrix `probs` and `table` is `S^|scope|` row-major.
    pub fn clique_contract(
        &mut self,
        probs: Var,
        table: &'a [f64],
        scope: &'a [usize],
    ) -> Result<Var, TensorError> {
        let tp = self.value(probs);
        let s = tp.cols();
        if table.len() != s.pow(scope.len() as u32) || scope.iter().any(|&v| v >= tp.rows()) {
            return Err(TensorError::ShapeMismatch {
                op: "clique_contract",
                left: tp.shape().to_vec(),
                right: vec![table.len()],
            });
        }
        let rows: Vec<&[f64]> = scope.iter().map(|&v| tp.row(v)).collect();
        let v = contract(table, s, &rows, None, &mut ContractScratch::default())[0];
        Ok(self.push(
            Tensor::scalar(v),
            Op::CliqueContract {
                probs,
                table,
                scope,
            },
        ))
    }

    /// Sum of [`Tape::clique_contract`] over many cliques, as one node.
    pub fn clique_sum(
        &mut self,
        probs: Var,
        cliques: &'a [PaddedClique],
    ) -> Result<Var, TensorError> {
        let tp = self.value(probs);
        let s = tp.cols();
        let mut scratch = ContractScratch::default();
        let mut rows: Vec<&[f64]> = Vec::new();
        let mut total = 0.0;
        for c in cliques {
            if c.table.len() != s.pow(c.scope.len() as u32)
                || c.scope.iter().any(|&v| v >= tp.rows())
            {
                return Err(TensorError::ShapeMismatch {
                    op: "clique_sum",
                    left: tp.shape().to_vec(),
                    right: vec![c.table.len()],
                });
            }
            rows.clear();
            rows.extend(c.scope.iter().map(|&v| tp.row(v)));
            total += contract(&c.table, s, &rows, None, &mut scratch)[0];
        }
        Ok(self.push(Tensor::scalar(total), Op::CliqueSum { probs, cliques }))
    }

    /// Reverse accumulation from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(TensorError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut scratch = ContractScratch::default();
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let out = node.value.get();
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    let ga = slot(&mut grads, *a, ta.len());
                    gemm(m, n, k, &g, false, tb.data(), true, 1.0, ga);
                    let gb = slot(&mut grads, *b, tb.len());
                    gemm(k, m, n, ta.data(), true, &g, false, 1.0, gb);
                }
                Op::Add(a, b) => {
                    for v in [a, b] {
                        let s = slot(&mut grads, *v, g.len());
                        s.iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    }
                }
                Op::AddRowBias(a, bias) => {
                    let sa = slot(&mut grads, *a, g.len());
                    sa.iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    let m = self.value(*bias).len();
                    let sb = slot(&mut grads, *bias, m);
                    for (i, y) in g.iter().enumerate() {
                        sb[i % m] += y;
                    }
                }
                Op::Scale(a, c) => {
                    let s = slot(&mut grads, *a, g.len());
                    s.iter_mut().zip(&g).for_each(|(x, y)| *x += c * y);
                }
                Op::Relu(a) => {
                    let s = slot(&mut grads, *a, g.len());
                    for ((x, y), o) in s.iter_mut().zip(&g).zip(out.data()) {
                        if *o > 0.0 {
                            *x += y;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let total = out.cols();
                    let mut start = 0;
                    for &p in parts {
                        let t = self.value(p);
                        let w = t.cols();
                        let s = slot(&mut grads, p, t.len());
                        for i in 0..out.rows() {
                            let src = &g[i * total + start..i * total + start + w];
                            s[i * w..(i + 1) * w]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(x, y)| *x += y);
                        }
                        start += w;
                    }
                }
                Op::Aggregate(h, agg) => {
                    let d = out.cols();
                    let s = slot(&mut grads, *h, out.len());
                    for i in 0..agg.n_rows() {
                        let gi = &g[i * d..(i + 1) * d];
                        for (j, w) in agg.row(i) {
                            s[j * d..(j + 1) * d]
                                .iter_mut()
                                .zip(gi)
                                .for_each(|(x, y)| *x += w * y);
                        }
                    }
                }
                Op::MaskedSoftmax(logits, t) => {
                    let c = out.cols();
                    let s = slot(&mut grads, *logits, out.len());
                    for i in 0..out.rows() {
                        let p = out.row(i);
                        let gi = &g[i * c..(i + 1) * c];
                        let dot: f64 = p.iter().zip(gi).map(|(a, b)| a * b).sum();
                        for ((x, pa), ga) in s[i * c..(i + 1) * c].iter_mut().zip(p).zip(gi) {
                            *x += pa * (ga - dot) / t;
                        }
                    }
                }
                Op::InnerProduct(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let g0 = g[0];
                    let sa = slot(&mut grads, *a, ta.len());
                    sa.iter_mut().zip(tb.data()).for_each(|(x, y)| *x += g0 * y);
                    let sb = slot(&mut grads, *b, tb.len());
                    sb.iter_mut().zip(ta.data()).for_each(|(x, y)| *x += g0 * y);
                }
                Op::CliqueContract {
                    probs,
                    table,
                    scope,
                } => {
                    let tp = self.value(*probs);
                    let s = slot(&mut grads, *probs, tp.len());
                    clique_grad(tp, table, scope, g[0], s, &mut scratch);
                }
                Op::CliqueSum { probs, cliques } => {
                    let tp = self.value(*probs);
                    let s = slot(&mut grads, *probs, tp.len());
                    for c in cliques.iter() {
                        clique_grad(tp, &c.table, &c.scope, g[0], s, &mut scratch);
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn clique_grad(
    probs: &Tensor,
    table: &[f64],
    scope: &[usize],
    g: f64,
    out: &mut [f64],
    scratch: &mut ContractScratch,
) {
    let s = probs.cols();
    let rows: Vec<&[f64]> = scope.iter().map(|&v| probs.row(v)).collect();
    for (axis, &v) in scope.iter().enumerate() {
        let partial = contract(table, s, &rows, Some(axis), scratch);
        for (x, y) in out[v * s..(v + 1) * s].iter_mut().zip(partial) {
            *x += g * y;
        }
    }
}

/// Adjoints of every node reached from the loss.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`, shaped like `v`'s value. Nodes the loss
    /// does not depend on get zeros.
    pub fn wrt(&self, tape: &Tape<'_>, v: Var) -> Tensor {
        let shape = tape.value(v).shape().to_vec();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }
}
