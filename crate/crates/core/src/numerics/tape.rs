//! Reverse-mode gradient recording over dense matrices.
//!
//! A [`Tape`] lives for one forward pass. Every operation appends a node
//! holding its value and the inputs it was computed from; [`Tape::backward`]
//! walks the nodes in reverse, accumulating adjoints, and writes the
//! resulting parameter gradients into a [`ParamRegistry`]. The tape is
//! consumed by `backward`, so the recorded graph is freed afterwards.

use std::collections::HashMap;
use std::sync::Arc;

use super::tensor::{matmul_at_into, matmul_bt_into};
use super::{logsumexp_rows, row_softmax, NumericsError, ParamId, ParamRegistry, Tensor};

/// Probabilities are clipped into `[PROB_CLIP, 1 - PROB_CLIP]` before taking logs.
pub const PROB_CLIP: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Gather(Var, Vec<Option<usize>>),
    MeanRows(Var),
    LogSumExpRows(Var),
    RowSoftmax(Var),
    SumAll(Var),
    NeighborMean(Var, Arc<Vec<Vec<usize>>>),
    Bce(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients for the parameters reachable from a loss, in registry order.
#[derive(Debug, Clone, Default)]
pub struct ParamGrads {
    pub grads: Vec<(ParamId, Vec<f64>)>,
}

impl ParamGrads {
    pub fn scale(&mut self, factor: f64) {
        for (_, g) in &mut self.grads {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Adds into the registry and leaves every other parameter with a zero gradient.
    pub fn accumulate_into(&self, registry: &mut ParamRegistry) {
        for id in registry.ids().collect::<Vec<_>>() {
            if registry.tensor(id).grad().is_none() {
                registry.tensor_mut(id).zero_grad();
            }
        }
        for (id, g) in &self.grads {
            registry.tensor_mut(*id).accumulate_grad(g);
        }
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var, NumericsError> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A constant input; receives no gradient outside the tape.
    pub fn constant(&mut self, value: Tensor) -> Result<Var, NumericsError> {
        self.push(value, Op::Leaf, "constant")
    }

    /// Records a parameter once per tape and returns the same handle on later calls.
    pub fn param(&mut self, registry: &ParamRegistry, name: &str) -> Result<Var, NumericsError> {
        let id = registry.id(name)?;
        if let Some(v) = self.params.get(&id) {
            return Ok(*v);
        }
        let src = registry.tensor(id);
        let value = Tensor::new(src.rows(), src.cols(), src.data().to_vec())?;
        let v = self.push(value, Op::Param, "param")?;
        self.params.insert(id, v);
        Ok(v)
    }

    /// Which side of every non-differentiable point the recorded pass took:
    /// the sign of each ReLU input and whether each BCE probability was
    /// clipped. Two passes with equal patterns lie on the same smooth piece.
    pub fn kink_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => out.extend(self.value(*x).data().iter().map(|&a| a > 0.0)),
                Op::Bce(p, _) => out.extend(
                    self.value(*p)
                        .data()
                        .iter()
                        .map(|&q| (PROB_CLIP..=1.0 - PROB_CLIP).contains(&q)),
                ),
                _ => {}
            }
        }
        out
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(NumericsError::ShapeMismatch {
                op: "add",
                left: sa,
                right: sb,
            });
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        self.push(Tensor::new(sa.0, sa.1, data)?, Op::Add(a, b), "add")
    }

    /// `x + bias` where `bias` is `1 x cols` and is added to every row.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, NumericsError> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sb != (1, sx.1) {
            return Err(NumericsError::ShapeMismatch {
                op: "add_row",
                left: sx,
                right: sb,
            });
        }
        let b = self.value(bias).data();
        let data = self
            .value(x)
            .data()
            .chunks(sx.1.max(1))
            .flat_map(|row| row.iter().zip(b).map(|(v, w)| v + w))
            .collect();
        self.push(Tensor::new(sx.0, sx.1, data)?, Op::AddRow(x, bias), "add_row")
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var, NumericsError> {
        let v = self.map(x, |a| a * factor)?;
        self.push(v, Op::Scale(x, factor), "scale")
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, NumericsError> {
        let v = self.map(x, f64::tanh)?;
        self.push(v, Op::Tanh(x), "tanh")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, NumericsError> {
        let v = self.map(x, |a| a.max(0.0))?;
        self.push(v, Op::Relu(x), "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, NumericsError> {
        let v = self.map(x, sigmoid)?;
        self.push(v, Op::Sigmoid(x), "sigmoid")
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, NumericsError> {
        let v = self.value(x).transpose();
        self.push(v, Op::Transpose(x), "transpose")
    }

    fn map(&self, x: Var, f: impl Fn(f64) -> f64) -> Result<Tensor, NumericsError> {
        let t = self.value(x);
        Tensor::new(t.rows(), t.cols(), t.data().iter().map(|&a| f(a)).collect())
    }

    /// Horizontal concatenation; all parts must share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let rows = parts
            .first()
            .map(|&p| self.shape(p).0)
            .ok_or(NumericsError::EmptyInput { op: "concat_cols" })?;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_cols",
                    left: self.shape(parts[0]),
                    right: self.shape(p),
                });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        self.push(
            Tensor::new(rows, cols, data)?,
            Op::ConcatCols(parts.to_vec()),
            "concat_cols",
        )
    }

    /// Vertical concatenation; all parts must share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let cols = parts
            .first()
            .map(|&p| self.shape(p).1)
            .ok_or(NumericsError::EmptyInput { op: "concat_rows" })?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            if self.shape(p).1 != cols {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_rows",
                    left: self.shape(parts[0]),
                    right: self.shape(p),
                });
            }
            rows += self.shape(p).0;
            data.extend_from_slice(self.value(p).data());
        }
        self.push(
            Tensor::new(rows, cols, data)?,
            Op::ConcatRows(parts.to_vec()),
            "concat_rows",
        )
    }

    /// Selects rows by index; `None` yields a zero row.
    pub fn gather_rows(&mut self, x: Var, index: &[Option<usize>]) -> Result<Var, NumericsError> {
        let (rows, cols) = self.shape(x);
        let mut data = Vec::with_capacity(index.len() * cols);
        for idx in index {
            match *idx {
                Some(r) if r < rows => data.extend_from_slice(self.value(x).row(r)),
                Some(r) => return Err(NumericsError::RowOutOfRange { row: r, rows }),
                None => data.extend(std::iter::repeat_n(0.0, cols)),
            }
        }
        self.push(
            Tensor::new(index.len(), cols, data)?,
            Op::Gather(x, index.to_vec()),
            "gather_rows",
        )
    }

    pub fn select_rows(&mut self, x: Var, index: &[usize]) -> Result<Var, NumericsError> {
        let idx: Vec<_> = index.iter().copied().map(Some).collect();
        self.gather_rows(x, &idx)
    }

    /// Column means, `N x d -> 1 x d`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var, NumericsError> {
        let t = self.value(x);
        if t.rows() == 0 {
            return Err(NumericsError::EmptyInput { op: "mean_rows" });
        }
        let n = t.rows() as f64;
        let mut out = vec![0.0; t.cols()];
        for r in 0..t.rows() {
            out.iter_mut().zip(t.row(r)).for_each(|(o, v)| *o += v);
        }
        out.iter_mut().for_each(|o| *o /= n);
        self.push(Tensor::row_vector(&out), Op::MeanRows(x), "mean_rows")
    }

    /// Columnwise log-sum-exp, `N x d -> 1 x d`.
    pub fn logsumexp_rows(&mut self, x: Var) -> Result<Var, NumericsError> {
        let v = logsumexp_rows(self.value(x))?;
        self.push(v, Op::LogSumExpRows(x), "logsumexp_rows")
    }

    pub fn row_softmax(&mut self, x: Var) -> Result<Var, NumericsError> {
        let v = row_softmax(self.value(x));
        self.push(v, Op::RowSoftmax(x), "row_softmax")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, NumericsError> {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x), "sum")
    }

    /// Row `i` of the result is the mean of the rows of `x` listed in
    /// `neighbors[i]`, or zero when the list is empty.
    ///
    /// Each coordinate is summed in ascending value order, so the result does
    /// not depend on how the neighbor lists are ordered.
    pub fn neighbor_mean(
        &mut self,
        x: Var,
        neighbors: Arc<Vec<Vec<usize>>>,
    ) -> Result<Var, NumericsError> {
        let t = self.value(x);
        let cols = t.cols();
        let mut data = vec![0.0; neighbors.len() * cols];
        let mut scratch = Vec::new();
        for (i, list) in neighbors.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            if let Some(&bad) = list.iter().find(|&&j| j >= t.rows()) {
                return Err(NumericsError::RowOutOfRange {
                    row: bad,
                    rows: t.rows(),
                });
            }
            let n = list.len() as f64;
            for c in 0..cols {
                scratch.clear();
                scratch.extend(list.iter().map(|&j| t.get(j, c)));
                scratch.sort_by(f64::total_cmp);
                data[i * cols + c] = scratch.iter().sum::<f64>() / n;
            }
        }
        let out = Tensor::new(neighbors.len(), cols, data)?;
        self.push(out, Op::NeighborMean(x, neighbors), "neighbor_mean")
    }

    /// Summed binary cross-entropy of probabilities against 0/1 targets.
    pub fn bce(&mut self, probs: Var, targets: &[f64]) -> Result<Var, NumericsError> {
        let p = self.value(probs);
        if p.len() != targets.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "bce",
                left: p.shape(),
                right: (1, targets.len()),
            });
        }
        let loss = bce_value(p.data(), targets);
        self.push(Tensor::scalar(loss), Op::Bce(probs, targets.to_vec()), "bce")
    }

    /// Reverse pass from a scalar loss; returns gradients of every parameter recorded on this tape.
    pub fn param_gradients(&self, loss: Var) -> Result<ParamGrads, NumericsError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(NumericsError::NonScalarLoss(shape));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if let Op::Param = node.op {
                adj[idx] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut adj);
        }
        let mut grads: Vec<_> = self
            .params
            .iter()
            .filter_map(|(&id, &v)| adj.get(v.0).and_then(|g| g.clone()).map(|g| (id, g)))
            .collect();
        grads.sort_by_key(|(id, _)| *id);
        Ok(ParamGrads { grads })
    }

    /// Consumes the tape, accumulating gradients into `registry`.
    /// Parameters the loss does not reach end up with zero gradients.
    pub fn backward(self, loss: Var, registry: &mut ParamRegistry) -> Result<(), NumericsError> {
        let grads = self.param_gradients(loss)?;
        grads.accumulate_into(registry);
        Ok(())
    }

    fn propagate(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = self.shape(*b).1;
                let mut ga = vec![0.0; m * k];
                matmul_bt_into(g, self.value(*b).data(), &mut ga, m, n, k);
                add_into(adj, *a, &ga);
                let mut gb = vec![0.0; k * n];
                matmul_at_into(self.value(*a).data(), g, &mut gb, m, k, n);
                add_into(adj, *b, &gb);
            }
            Op::Add(a, b) => {
                add_into(adj, *a, g);
                add_into(adj, *b, g);
            }
            Op::AddRow(x, bias) => {
                add_into(adj, *x, g);
                let cols = y.cols();
                let mut gb = vec![0.0; cols];
                for row in g.chunks(cols.max(1)) {
                    gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                add_into(adj, *bias, &gb);
            }
            Op::Scale(x, s) => {
                let gx: Vec<f64> = g.iter().map(|v| v * s).collect();
                add_into(adj, *x, &gx);
            }
            Op::Tanh(x) => {
                let gx: Vec<f64> = g.iter().zip(y.data()).map(|(g, t)| g * (1.0 - t * t)).collect();
                add_into(adj, *x, &gx);
            }
            Op::Relu(x) => {
                let input = self.value(*x).data();
                let gx: Vec<f64> = g
                    .iter()
                    .zip(input)
                    .map(|(g, &a)| if a > 0.0 { *g } else { 0.0 })
                    .collect();
                add_into(adj, *x, &gx);
            }
            Op::Sigmoid(x) => {
                let gx: Vec<f64> = g.iter().zip(y.data()).map(|(g, s)| g * s * (1.0 - s)).collect();
                add_into(adj, *x, &gx);
            }
            Op::Transpose(x) => {
                let gt = Tensor::new(y.rows(), y.cols(), g.to_vec())
                    .expect("adjoint shape")
                    .transpose();
                add_into(adj, *x, gt.data());
            }
            Op::ConcatCols(parts) => {
                let rows = y.rows();
                let total = y.cols();
                let mut offset = 0;
                for &p in parts {
                    let pc = self.shape(p).1;
                    let mut gp = Vec::with_capacity(rows * pc);
                    for r in 0..rows {
                        gp.extend_from_slice(&g[r * total + offset..r * total + offset + pc]);
                    }
                    add_into(adj, p, &gp);
                    offset += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    add_into(adj, p, &g[offset..offset + len]);
                    offset += len;
                }
            }
            Op::Gather(x, index) => {
                let (rows, cols) = self.shape(*x);
                let mut gx = vec![0.0; rows * cols];
                for (out_row, idx) in index.iter().enumerate() {
                    if let Some(r) = idx {
                        let src = &g[out_row * cols..(out_row + 1) * cols];
                        gx[r * cols..(r + 1) * cols]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(a, b)| *a += b);
                    }
                }
                add_into(adj, *x, &gx);
            }
            Op::MeanRows(x) => {
                let (rows, _) = self.shape(*x);
                let n = rows as f64;
                let gx: Vec<f64> = (0..rows).flat_map(|_| g.iter().map(move |v| v / n)).collect();
                add_into(adj, *x, &gx);
            }
            Op::LogSumExpRows(x) => {
                let input = self.value(*x);
                let cols = input.cols();
                let mut gx = vec![0.0; input.len()];
                for r in 0..input.rows() {
                    for c in 0..cols {
                        gx[r * cols + c] = g[c] * (input.get(r, c) - y.data()[c]).exp();
                    }
                }
                add_into(adj, *x, &gx);
            }
            Op::RowSoftmax(x) => {
                let cols = y.cols();
                let mut gx = vec![0.0; y.len()];
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = &g[r * cols..(r + 1) * cols];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        gx[r * cols + c] = yr[c] * (gr[c] - dot);
                    }
                }
                add_into(adj, *x, &gx);
            }
            Op::SumAll(x) => {
                let gx = vec![g[0]; self.value(*x).len()];
                add_into(adj, *x, &gx);
            }
            Op::NeighborMean(x, neighbors) => {
                let (rows, cols) = self.shape(*x);
                let mut gx = vec![0.0; rows * cols];
                for (i, list) in neighbors.iter().enumerate() {
                    if list.is_empty() {
                        continue;
                    }
                    let n = list.len() as f64;
                    let gi = &g[i * cols..(i + 1) * cols];
                    for &j in list {
                        gx[j * cols..(j + 1) * cols]
                            .iter_mut()
                            .zip(gi)
                            .for_each(|(a, b)| *a += b / n);
                    }
                }
                add_into(adj, *x, &gx);
            }
            Op::Bce(p, targets) => {
                let probs = self.value(*p).data();
                let gx: Vec<f64> = probs
                    .iter()
                    .zip(targets)
                    .map(|(&q, &t)| {
                        if q < PROB_CLIP || q > 1.0 - PROB_CLIP {
                            0.0
                        } else {
                            g[0] * (-t / q + (1.0 - t) / (1.0 - q))
                        }
                    })
                    .collect();
                add_into(adj, *p, &gx);
            }
        }
    }
}

fn add_into(adj: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    match &mut adj[v.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g.to_vec()),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-sum(t ln p + (1 - t) ln(1 - p))` with clipped probabilities.
pub fn bce_value(probs: &[f64], targets: &[f64]) -> f64 {
    probs
        .iter()
        .zip(targets)
        .map(|(&q, &t)| {
            let q = q.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            -(t * q.ln() + (1.0 - t) * (1.0 - q).ln())
        })
        .sum()
}
