//! Dense-tensor engine with reverse-mode automatic differentiation.
//!
//! All trainable math in the pipeline runs through a [`Tape`]: a define-by-run
//! record of operations, rebuilt for every forward pass. Tensors live inside
//! the tape and are addressed by [`TensorId`]; a node stores its f64 data
//! (row-major), shape, and the operation that produced it. `backward` walks
//! the record in reverse and accumulates gradients.
//!
//! A tape and its tensors are confined to one thread; independent tapes may
//! run in parallel.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::ParamStore;

/// Clamp bound for binary cross entropy predictions.
pub const BCE_EPS: f64 = 1e-7;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    Scale { a: TensorId, c: f64 },
    AddScalar { a: TensorId, s: TensorId },
    AddRowBroadcast { m: TensorId, row: TensorId },
    MatMul { a: TensorId, b: TensorId },
    Transpose { a: TensorId },
    MatVec { m: TensorId, v: TensorId },
    MatTVec { m: TensorId, v: TensorId },
    EmbedRows { table: TensorId, ids: Vec<usize> },
    MeanRows { a: TensorId, start: usize, end: usize },
    StackRows { parts: Vec<TensorId> },
    Sigmoid { a: TensorId },
    Softmax { a: TensorId },
    Bce { pred: TensorId, target: TensorId },
    Sum { a: TensorId },
    Mean { a: TensorId },
}

#[derive(Debug, Clone)]
struct Node {
    data: Vec<f64>,
    shape: Vec<usize>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// Define-by-run operation record. One forward pass builds it, one
/// `backward` call populates gradients for every tensor reachable from
/// the loss.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_ids: BTreeMap<String, TensorId>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Does any input of this op require gradients? Results inherit the
    /// flag so backward can skip constant subgraphs.
    fn op_requires_grad(&self, op: &Op) -> bool {
        let rg = |id: &TensorId| self.nodes[id.0].requires_grad;
        match op {
            Op::Leaf => false,
            Op::Add { a, b }
            | Op::Mul { a, b }
            | Op::MatMul { a, b }
            | Op::AddScalar { a, s: b }
            | Op::AddRowBroadcast { m: a, row: b }
            | Op::MatVec { m: a, v: b }
            | Op::MatTVec { m: a, v: b }
            | Op::Bce { pred: a, target: b } => rg(a) || rg(b),
            Op::Scale { a, .. }
            | Op::Transpose { a }
            | Op::MeanRows { a, .. }
            | Op::Sigmoid { a }
            | Op::Softmax { a }
            | Op::Sum { a }
            | Op::Mean { a } => rg(a),
            Op::EmbedRows { table, .. } => rg(table),
            Op::StackRows { parts } => parts.iter().any(rg),
        }
    }

    fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, op: Op) -> TensorId {
        debug_assert_eq!(data.len(), numel(&shape));
        let requires_grad = requires_grad || self.op_requires_grad(&op);
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            data,
            shape,
            requires_grad,
            grad: None,
            op,
        });
        id
    }

    /// Record a leaf tensor.
    pub fn leaf(&mut self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Result<TensorId> {
        if data.len() != numel(&shape) {
            return Err(Error::contract(format!(
                "leaf: data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(self.push(data, shape, requires_grad, Op::Leaf))
    }

    /// Leaf with `requires_grad = false`.
    pub fn constant(&mut self, data: Vec<f64>, shape: Vec<usize>) -> Result<TensorId> {
        self.leaf(data, shape, false)
    }

    /// Scalar constant.
    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.push(vec![v], vec![1], false, Op::Leaf)
    }

    /// Register a named parameter from `store` as a trainable leaf. After
    /// `backward`, its gradient is retrievable via [`Tape::grad_by_name`].
    /// Registering the same name again returns the existing leaf, so a tape
    /// evaluating several sentences accumulates one gradient per parameter.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<TensorId> {
        if let Some(&id) = self.param_ids.get(name) {
            return Ok(id);
        }
        let p = store
            .get(name)
            .ok_or_else(|| Error::contract(format!("unknown parameter {name:?}")))?;
        let id = self.leaf(p.data.clone(), p.shape.clone(), true)?;
        self.param_ids.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Value of a scalar tensor.
    pub fn value(&self, id: TensorId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].data.len(), 1);
        self.nodes[id.0].data[0]
    }

    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn grad_by_name(&self, name: &str) -> Option<&[f64]> {
        self.param_ids.get(name).and_then(|id| self.grad(*id))
    }

    /// Names of the parameters registered on this tape, sorted.
    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.param_ids.keys().map(|s| s.as_str())
    }

    fn rows_cols(&self, id: TensorId, op: &'static str) -> Result<(usize, usize)> {
        let shape = self.shape(id);
        if shape.len() != 2 {
            return Err(Error::dimension(op, shape, &[]));
        }
        Ok((shape[0], shape[1]))
    }

    // ── Forward operations ────────────────────────────────────────────

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dimension("add", self.shape(a), self.shape(b)));
        }
        let data: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(data, shape, false, Op::Add { a, b }))
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dimension("mul", self.shape(a), self.shape(b)));
        }
        let data: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(data, shape, false, Op::Mul { a, b }))
    }

    /// Multiply by a compile-time constant.
    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let data: Vec<f64> = self.data(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.push(data, shape, false, Op::Scale { a, c })
    }

    /// Broadcast-add a scalar tensor to every element of `a`.
    pub fn add_scalar(&mut self, a: TensorId, s: TensorId) -> Result<TensorId> {
        if self.data(s).len() != 1 {
            return Err(Error::dimension("add_scalar", self.shape(a), self.shape(s)));
        }
        let sv = self.data(s)[0];
        let data: Vec<f64> = self.data(a).iter().map(|x| x + sv).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(data, shape, false, Op::AddScalar { a, s }))
    }

    /// Add a D-vector to every row of an N×D matrix.
    pub fn add_row_broadcast(&mut self, m: TensorId, row: TensorId) -> Result<TensorId> {
        let (rows, cols) = self.rows_cols(m, "add_row_broadcast")?;
        if self.shape(row) != [cols] {
            return Err(Error::dimension(
                "add_row_broadcast",
                self.shape(m),
                self.shape(row),
            ));
        }
        let row_data = self.data(row);
        let mut data = Vec::with_capacity(rows * cols);
        for chunk in self.data(m).chunks(cols) {
            for (v, r) in chunk.iter().zip(row_data) {
                data.push(v + r);
            }
        }
        Ok(self.push(data, vec![rows, cols], false, Op::AddRowBroadcast { m, row }))
    }

    /// Matrix product of `a: [M×K]` and `b: [K×P]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, k) = self.rows_cols(a, "matmul")?;
        let (k2, p) = self.rows_cols(b, "matmul")?;
        if k != k2 {
            return Err(Error::dimension("matmul", self.shape(a), self.shape(b)));
        }
        let data = matmul_raw(self.data(a), self.data(b), m, k, p);
        Ok(self.push(data, vec![m, p], false, Op::MatMul { a, b }))
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let (rows, cols) = self.rows_cols(a, "transpose")?;
        let src = self.data(a);
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                data[c * rows + r] = src[r * cols + c];
            }
        }
        Ok(self.push(data, vec![cols, rows], false, Op::Transpose { a }))
    }

    /// `m: [R×C]` times `v: [C]` giving `[R]`.
    pub fn matvec(&mut self, m: TensorId, v: TensorId) -> Result<TensorId> {
        let (rows, cols) = self.rows_cols(m, "matvec")?;
        if self.shape(v) != [cols] {
            return Err(Error::dimension("matvec", self.shape(m), self.shape(v)));
        }
        let md = self.data(m);
        let vd = self.data(v);
        let mut data = vec![0.0; rows];
        for r in 0..rows {
            let mut acc = 0.0;
            for c in 0..cols {
                acc += md[r * cols + c] * vd[c];
            }
            data[r] = acc;
        }
        Ok(self.push(data, vec![rows], false, Op::MatVec { m, v }))
    }

    /// `mᵀ` times `v`: `m: [R×C]`, `v: [R]` giving `[C]`.
    pub fn matvec_t(&mut self, m: TensorId, v: TensorId) -> Result<TensorId> {
        let (rows, cols) = self.rows_cols(m, "matvec_t")?;
        if self.shape(v) != [rows] {
            return Err(Error::dimension("matvec_t", self.shape(m), self.shape(v)));
        }
        let md = self.data(m);
        let vd = self.data(v);
        let mut data = vec![0.0; cols];
        for c in 0..cols {
            let mut acc = 0.0;
            for r in 0..rows {
                acc += md[r * cols + c] * vd[r];
            }
            data[c] = acc;
        }
        Ok(self.push(data, vec![cols], false, Op::MatTVec { m, v }))
    }

    /// Gather rows of an embedding table: `table: [V×D]`, output `[N×D]`
    /// with row i = table[ids[i]]. Repeated ids share (and accumulate into)
    /// the same table row.
    pub fn embed_rows(&mut self, table: TensorId, ids: &[usize]) -> Result<TensorId> {
        let (vocab, dim) = self.rows_cols(table, "embed_rows")?;
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab) {
            return Err(Error::contract(format!(
                "embed_rows: id {bad} out of range for table with {vocab} rows"
            )));
        }
        let src = self.data(table);
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            data.extend_from_slice(&src[id * dim..(id + 1) * dim]);
        }
        Ok(self.push(
            data,
            vec![ids.len(), dim],
            false,
            Op::EmbedRows {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Arithmetic mean of rows `start..=end` of a matrix, as a `[D]` vector.
    pub fn mean_rows(&mut self, a: TensorId, start: usize, end: usize) -> Result<TensorId> {
        let (rows, cols) = self.rows_cols(a, "mean_rows")?;
        if start > end || end >= rows {
            return Err(Error::contract(format!(
                "mean_rows: span ({start}, {end}) out of bounds for {rows} rows"
            )));
        }
        let src = self.data(a);
        let len = (end - start + 1) as f64;
        let mut data = vec![0.0; cols];
        for r in start..=end {
            for c in 0..cols {
                data[c] += src[r * cols + c];
            }
        }
        for v in &mut data {
            *v /= len;
        }
        Ok(self.push(data, vec![cols], false, Op::MeanRows { a, start, end }))
    }

    /// Stack equal-length vectors as the rows of a new matrix.
    pub fn stack_rows(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::contract("stack_rows: empty part list"));
        }
        let width = self.data(parts[0]).len();
        for &p in parts {
            let shape = self.shape(p);
            if shape.len() != 1 || shape[0] != width {
                return Err(Error::dimension("stack_rows", &[width], shape));
            }
        }
        let mut data = Vec::with_capacity(parts.len() * width);
        for &p in parts {
            data.extend_from_slice(self.data(p));
        }
        Ok(self.push(
            data,
            vec![parts.len(), width],
            false,
            Op::StackRows {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Elementwise logistic function.
    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let data: Vec<f64> = self.data(a).iter().map(|&x| sigmoid_scalar(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(data, shape, false, Op::Sigmoid { a })
    }

    /// Softmax over the last dimension (a 1-D tensor is one row), computed
    /// with max-subtraction.
    pub fn softmax(&mut self, a: TensorId) -> Result<TensorId> {
        let shape = self.shape(a).to_vec();
        let width = *shape.last().unwrap_or(&0);
        if width == 0 || numel(&shape) == 0 {
            return Err(Error::dimension("softmax", &shape, &[]));
        }
        let mut data = self.data(a).to_vec();
        for row in data.chunks_mut(width) {
            softmax_row(row);
        }
        Ok(self.push(data, shape, false, Op::Softmax { a }))
    }

    /// Mean binary cross entropy between predictions and (possibly soft)
    /// targets of the same shape. Predictions are clamped to
    /// `[BCE_EPS, 1 - BCE_EPS]` before the logarithms.
    pub fn binary_cross_entropy(&mut self, pred: TensorId, target: TensorId) -> Result<TensorId> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::dimension(
                "binary_cross_entropy",
                self.shape(pred),
                self.shape(target),
            ));
        }
        let n = self.data(pred).len() as f64;
        let mut acc = 0.0;
        for (&p, &t) in self.data(pred).iter().zip(self.data(target)) {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            acc -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        }
        Ok(self.push(vec![acc / n], vec![1], false, Op::Bce { pred, target }))
    }

    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let total: f64 = self.data(a).iter().sum();
        self.push(vec![total], vec![1], false, Op::Sum { a })
    }

    pub fn mean(&mut self, a: TensorId) -> TensorId {
        let n = self.data(a).len() as f64;
        let total: f64 = self.data(a).iter().sum();
        self.push(vec![total / n], vec![1], false, Op::Mean { a })
    }

    // ── Backward ──────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Every tensor on the tape receives a
    /// gradient buffer; tensors not on a path to the loss keep zeros.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::contract(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        for node in &mut self.nodes {
            node.grad = Some(vec![0.0; node.data.len()]);
        }
        self.nodes[loss.0].grad.as_mut().unwrap()[0] = 1.0;

        for i in (0..=loss.0).rev() {
            let grad = self.nodes[i].grad.clone().unwrap();
            if grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add { a, b } => {
                    self.accumulate(a, &grad);
                    self.accumulate(b, &grad);
                }
                Op::Mul { a, b } => {
                    let da: Vec<f64> = grad
                        .iter()
                        .zip(self.data(b))
                        .map(|(g, y)| g * y)
                        .collect();
                    let db: Vec<f64> = grad
                        .iter()
                        .zip(self.data(a))
                        .map(|(g, x)| g * x)
                        .collect();
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::Scale { a, c } => {
                    let da: Vec<f64> = grad.iter().map(|g| g * c).collect();
                    self.accumulate(a, &da);
                }
                Op::AddScalar { a, s } => {
                    self.accumulate(a, &grad);
                    let ds = [grad.iter().sum::<f64>()];
                    self.accumulate(s, &ds);
                }
                Op::AddRowBroadcast { m, row } => {
                    self.accumulate(m, &grad);
                    let cols = self.shape(row)[0];
                    let mut drow = vec![0.0; cols];
                    for chunk in grad.chunks(cols) {
                        for (d, g) in drow.iter_mut().zip(chunk) {
                            *d += g;
                        }
                    }
                    self.accumulate(row, &drow);
                }
                Op::MatMul { a, b } => {
                    let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                    let p = self.shape(b)[1];
                    // dA = dC·Bᵀ, dB = Aᵀ·dC
                    let bt = transpose_raw(self.data(b), k, p);
                    let da = matmul_raw(&grad, &bt, m, p, k);
                    let at = transpose_raw(self.data(a), m, k);
                    let db = matmul_raw(&at, &grad, k, m, p);
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::Transpose { a } => {
                    let (rows, cols) = (self.shape(a)[0], self.shape(a)[1]);
                    let da = transpose_raw(&grad, cols, rows);
                    self.accumulate(a, &da);
                }
                Op::MatVec { m, v } => {
                    let (rows, cols) = (self.shape(m)[0], self.shape(m)[1]);
                    let vd = self.data(v).to_vec();
                    let md = self.data(m).to_vec();
                    let mut dm = vec![0.0; rows * cols];
                    let mut dv = vec![0.0; cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            dm[r * cols + c] += grad[r] * vd[c];
                            dv[c] += md[r * cols + c] * grad[r];
                        }
                    }
                    self.accumulate(m, &dm);
                    self.accumulate(v, &dv);
                }
                Op::MatTVec { m, v } => {
                    let (rows, cols) = (self.shape(m)[0], self.shape(m)[1]);
                    let vd = self.data(v).to_vec();
                    let md = self.data(m).to_vec();
                    let mut dm = vec![0.0; rows * cols];
                    let mut dv = vec![0.0; rows];
                    for r in 0..rows {
                        for c in 0..cols {
                            dm[r * cols + c] += vd[r] * grad[c];
                            dv[r] += md[r * cols + c] * grad[c];
                        }
                    }
                    self.accumulate(m, &dm);
                    self.accumulate(v, &dv);
                }
                Op::EmbedRows { table, ids } => {
                    let dim = self.shape(table)[1];
                    let mut dt = vec![0.0; self.data(table).len()];
                    for (i, &id) in ids.iter().enumerate() {
                        for c in 0..dim {
                            dt[id * dim + c] += grad[i * dim + c];
                        }
                    }
                    self.accumulate(table, &dt);
                }
                Op::MeanRows { a, start, end } => {
                    let cols = self.shape(a)[1];
                    let len = (end - start + 1) as f64;
                    let mut da = vec![0.0; self.data(a).len()];
                    for r in start..=end {
                        for c in 0..cols {
                            da[r * cols + c] += grad[c] / len;
                        }
                    }
                    self.accumulate(a, &da);
                }
                Op::StackRows { parts } => {
                    let width = self.data(parts[0]).len();
                    for (i, &p) in parts.iter().enumerate() {
                        self.accumulate(p, &grad[i * width..(i + 1) * width]);
                    }
                }
                Op::Sigmoid { a } => {
                    let da: Vec<f64> = grad
                        .iter()
                        .zip(&self.nodes[i].data)
                        .map(|(g, &y)| g * y * (1.0 - y))
                        .collect();
                    self.accumulate(a, &da);
                }
                Op::Softmax { a } => {
                    let width = *self.nodes[i].shape.last().unwrap();
                    let out = self.nodes[i].data.clone();
                    let mut da = vec![0.0; out.len()];
                    for (row_idx, (y_row, g_row)) in
                        out.chunks(width).zip(grad.chunks(width)).enumerate()
                    {
                        let dot: f64 = y_row.iter().zip(g_row).map(|(y, g)| y * g).sum();
                        for c in 0..width {
                            da[row_idx * width + c] = y_row[c] * (g_row[c] - dot);
                        }
                    }
                    self.accumulate(a, &da);
                }
                Op::Bce { pred, target } => {
                    let g = grad[0];
                    let n = self.data(pred).len() as f64;
                    let pd = self.data(pred).to_vec();
                    let td = self.data(target).to_vec();
                    if self.nodes[pred.0].requires_grad {
                        let mut dp = vec![0.0; pd.len()];
                        for (idx, (&p, &t)) in pd.iter().zip(&td).enumerate() {
                            // zero slope where the clamp is active
                            if p > BCE_EPS && p < 1.0 - BCE_EPS {
                                dp[idx] = g * (p - t) / (p * (1.0 - p)) / n;
                            }
                        }
                        self.accumulate(pred, &dp);
                    }
                    if self.nodes[target.0].requires_grad {
                        let mut dt = vec![0.0; td.len()];
                        for (idx, &p) in pd.iter().enumerate() {
                            let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                            dt[idx] = g * ((1.0 - pc).ln() - pc.ln()) / n;
                        }
                        self.accumulate(target, &dt);
                    }
                }
                Op::Sum { a } => {
                    let g = grad[0];
                    let da = vec![g; self.data(a).len()];
                    self.accumulate(a, &da);
                }
                Op::Mean { a } => {
                    let n = self.data(a).len() as f64;
                    let g = grad[0] / n;
                    let da = vec![g; self.data(a).len()];
                    self.accumulate(a, &da);
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: TensorId, delta: &[f64]) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let grad = self.nodes[id.0].grad.as_mut().unwrap();
        debug_assert_eq!(grad.len(), delta.len());
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    /// Gradients of all registered parameters, by name.
    pub fn param_grads(&self) -> BTreeMap<String, Vec<f64>> {
        self.param_ids
            .iter()
            .map(|(name, id)| {
                let g = self
                    .grad(*id)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; self.data(*id).len()]);
                (name.clone(), g)
            })
            .collect()
    }
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        for l in 0..k {
            let av = a[i * k + l];
            if av == 0.0 {
                continue;
            }
            for j in 0..p {
                out[i * p + j] += av * b[l * p + j];
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Compare the reverse-mode gradient of `loss_fn` against central finite
/// differences, coordinate by coordinate, over every parameter the closure
/// registers. Returns the maximum relative error with denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
///
/// `loss_fn` must be deterministic; this is checked by evaluating it twice
/// at the unperturbed point and requiring bitwise identical losses.
pub fn grad_check<F>(store: &ParamStore, eps: f64, mut loss_fn: F) -> Result<f64>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<TensorId>,
{
    if eps <= 0.0 {
        return Err(Error::contract("grad_check: eps must be positive"));
    }

    let eval = |store: &ParamStore, loss_fn: &mut F| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = loss_fn(store, &mut tape)?;
        Ok(tape.value(loss))
    };

    let base = eval(store, &mut loss_fn)?;
    let again = eval(store, &mut loss_fn)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::contract(format!(
            "grad_check: loss_fn is not deterministic ({base} vs {again})"
        )));
    }

    let mut tape = Tape::new();
    let loss = loss_fn(store, &mut tape)?;
    tape.backward(loss)?;
    let analytic = tape.param_grads();

    let mut max_rel = 0.0_f64;
    for (name, grads) in &analytic {
        #[allow(clippy::needless_range_loop)]
        for coord in 0..grads.len() {
            let mut plus = store.clone();
            plus.get_mut(name).unwrap().data[coord] += eps;
            let lp = eval(&plus, &mut loss_fn)?;

            let mut minus = store.clone();
            minus.get_mut(name).unwrap().data[coord] -= eps;
            let lm = eval(&minus, &mut loss_fn)?;

            let numeric = (lp - lm) / (2.0 * eps);
            let a = grads[coord];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
