use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use super::kernels::{self, gemm};
use super::{Gradients, ParamStore, TensorError};

/// Handle to a value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    BroadcastRows(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Rc<[usize]>),
    SegmentSum(Var, Rc<[usize]>),
    SegmentSoftmax(Var, Rc<[usize]>, usize),
    ScaleRows(Var, Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    LayerNorm(Var, Vec<f64>),
    Sum(Var),
    Scale(Var, f64),
    Softmax(Var),
    LogSoftmax(Var),
    CrossEntropy(Var, usize, Vec<f64>),
}

#[derive(Debug)]
struct Node<'p> {
    rows: usize,
    cols: usize,
    value: Cow<'p, [f64]>,
    op: Op,
    needs_grad: bool,
}

/// Records operations for one forward pass. Parameters are borrowed from a
/// [`ParamStore`]; [`Tape::backward`] may run once.
#[derive(Debug, Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
    params: Vec<&'p str>,
    param_vars: HashMap<&'p str, Var>,
    released: bool,
}

fn shape_err(op: &'static str, left: (usize, usize), right: (usize, usize)) -> TensorError {
    TensorError::Shape { op, left, right }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { rows, cols, value: Cow::Owned(value), op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn row(&self, v: Var, r: usize) -> &[f64] {
        let n = &self.nodes[v.0];
        &n.value[r * n.cols..(r + 1) * n.cols]
    }

    /// Input data that needs no gradient.
    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var, TensorError> {
        if data.len() != rows * cols {
            return Err(shape_err("constant", (rows, cols), (data.len(), 1)));
        }
        Ok(self.push(rows, cols, data, Op::Leaf, &[]))
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.push(rows, cols, vec![0.0; rows * cols], Op::Leaf, &[])
    }

    /// A trainable parameter; repeated requests return the same handle.
    pub fn param(&mut self, store: &'p ParamStore, name: &str) -> Result<Var, TensorError> {
        if let Some(&v) = self.param_vars.get(name) {
            return Ok(v);
        }
        let (key, t) = store.params.get_key_value(name).ok_or_else(|| TensorError::UnknownParam(name.into()))?;
        let (rows, cols) = t.matrix_shape();
        self.params.push(key.as_str());
        self.nodes.push(Node {
            rows,
            cols,
            value: Cow::Borrowed(&t.data),
            op: Op::Param(self.params.len() - 1),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(key.as_str(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let ((m, k), (k2, n)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(shape_err("matmul", (m, k), (k2, n)));
        }
        let out = kernels::matmul(self.value(a), self.value(b), m, k, n);
        Ok(self.push(m, n, out, Op::MatMul(a, b), &[a, b]))
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<(usize, usize, Vec<f64>), TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, sa, sb));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        Ok((sa.0, sa.1, out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (r, c, out) = self.zip("add", a, b, |x, y| x + y)?;
        Ok(self.push(r, c, out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (r, c, out) = self.zip("sub", a, b, |x, y| x - y)?;
        Ok(self.push(r, c, out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (r, c, out) = self.zip("hadamard", a, b, |x, y| x * y)?;
        Ok(self.push(r, c, out, Op::Mul(a, b), &[a, b]))
    }

    fn row_op(&mut self, op: &'static str, a: Var, row: Var, f: impl Fn(f64, f64) -> f64) -> Result<(usize, usize, Vec<f64>), TensorError> {
        let ((r, c), sr) = (self.shape(a), self.shape(row));
        if sr != (1, c) {
            return Err(shape_err(op, (r, c), sr));
        }
        let rv = self.value(row);
        let out = self.value(a).chunks(c.max(1)).flat_map(|x| x.iter().zip(rv).map(|(x, y)| f(*x, *y))).collect();
        Ok((r, c, out))
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (r, c, out) = self.row_op("add_row", a, row, |x, y| x + y)?;
        Ok(self.push(r, c, out, Op::AddRow(a, row), &[a, row]))
    }

    /// Multiplies every row of `a` elementwise by a `1 x c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (r, c, out) = self.row_op("mul_row", a, row, |x, y| x * y)?;
        Ok(self.push(r, c, out, Op::MulRow(a, row), &[a, row]))
    }

    /// Repeats a `1 x c` row `n` times.
    pub fn broadcast_rows(&mut self, row: Var, n: usize) -> Result<Var, TensorError> {
        let (r, c) = self.shape(row);
        if r != 1 {
            return Err(shape_err("broadcast_rows", (r, c), (1, c)));
        }
        let out = self.value(row).repeat(n);
        Ok(self.push(n, c, out, Op::BroadcastRows(row), &[row]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let rows = self.shape(parts[0]).0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(shape_err("concat_cols", self.shape(parts[0]), self.shape(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.row(p, r));
            }
        }
        Ok(self.push(rows, cols, out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var, TensorError> {
        let (r, c) = self.shape(a);
        if start + width > c {
            return Err(shape_err("slice_cols", (r, c), (start, width)));
        }
        let out = (0..r).flat_map(|i| self.row(a, i)[start..start + width].to_vec()).collect();
        Ok(self.push(r, width, out, Op::SliceCols(a, start), &[a]))
    }

    /// Row `i` of the output is row `idx[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: &Rc<[usize]>) -> Result<Var, TensorError> {
        let (r, c) = self.shape(a);
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx.iter() {
            if i >= r {
                return Err(TensorError::Index { index: i, len: r });
            }
            out.extend_from_slice(self.row(a, i));
        }
        Ok(self.push(idx.len(), c, out, Op::GatherRows(a, idx.clone()), &[a]))
    }

    /// Sums rows of `a` into `num_segments` rows by `seg[i]`; empty segments are zero.
    pub fn segment_sum(&mut self, a: Var, seg: &Rc<[usize]>, num_segments: usize) -> Result<Var, TensorError> {
        let (r, c) = self.shape(a);
        if seg.len() != r {
            return Err(shape_err("segment_sum", (r, c), (seg.len(), 1)));
        }
        let mut out = vec![0.0; num_segments * c];
        for (i, &s) in seg.iter().enumerate() {
            if s >= num_segments {
                return Err(TensorError::Index { index: s, len: num_segments });
            }
            for (o, x) in out[s * c..(s + 1) * c].iter_mut().zip(self.row(a, i)) {
                *o += x;
            }
        }
        Ok(self.push(num_segments, c, out, Op::SegmentSum(a, seg.clone()), &[a]))
    }

    /// Softmax of an `n x 1` column within groups given by `seg`.
    pub fn segment_softmax(&mut self, a: Var, seg: &Rc<[usize]>, num_segments: usize) -> Result<Var, TensorError> {
        let (r, c) = self.shape(a);
        if c != 1 || seg.len() != r {
            return Err(shape_err("segment_softmax", (r, c), (seg.len(), 1)));
        }
        let x = self.value(a);
        let mut max = vec![f64::NEG_INFINITY; num_segments];
        for (i, &s) in seg.iter().enumerate() {
            if s >= num_segments {
                return Err(TensorError::Index { index: s, len: num_segments });
            }
            max[s] = max[s].max(x[i]);
        }
        let mut out: Vec<f64> = x.iter().zip(seg.iter()).map(|(v, &s)| (v - max[s]).exp()).collect();
        let mut z = vec![0.0; num_segments];
        for (o, &s) in out.iter().zip(seg.iter()) {
            z[s] += o;
        }
        for (o, &s) in out.iter_mut().zip(seg.iter()) {
            *o /= z[s];
        }
        Ok(self.push(r, 1, out, Op::SegmentSoftmax(a, seg.clone(), num_segments), &[a]))
    }

    /// Multiplies row `i` of `a` by the scalar `w[i]` of an `n x 1` column.
    pub fn scale_rows(&mut self, a: Var, w: Var) -> Result<Var, TensorError> {
        let ((r, c), sw) = (self.shape(a), self.shape(w));
        if sw != (r, 1) {
            return Err(shape_err("scale_rows", (r, c), sw));
        }
        let wv = self.value(w);
        let out = (0..r).flat_map(|i| self.row(a, i).iter().map(move |x| x * wv[i])).collect();
        Ok(self.push(r, c, out, Op::ScaleRows(a, w), &[a, w]))
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| f(*x)).collect();
        self.push(r, c, out, op, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), kernels::sigmoid)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| x * c)
    }

    /// Row-wise normalization to zero mean and unit variance (no affine part).
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut out = vec![0.0; r * c];
        let inv = kernels::layer_norm_rows(self.value(a), r, c, &mut out);
        self.push(r, c, out, Op::LayerNorm(a, inv), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(1, 1, vec![s], Op::Sum(a), &[a])
    }

    /// Softmax over all elements.
    pub fn softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut out = vec![0.0; r * c];
        kernels::softmax_into(self.value(a), &mut out);
        self.push(r, c, out, Op::Softmax(a), &[a])
    }

    /// Log-softmax over all elements.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = super::log_softmax_values(self.value(a));
        self.push(r, c, out, Op::LogSoftmax(a), &[a])
    }

    /// `-log softmax(logits)[target]` over all elements of `logits`.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, TensorError> {
        let x = self.value(logits);
        if target >= x.len() {
            return Err(TensorError::Index { index: target, len: x.len() });
        }
        let mut p = vec![0.0; x.len()];
        kernels::softmax_into(x, &mut p);
        let loss = kernels::log_sum_exp(x) - x[target];
        Ok(self.push(1, 1, vec![loss], Op::CrossEntropy(logits, target, p), &[logits]))
    }

    /// Reverse pass from a `1 x 1` loss. Returns the gradient of every
    /// parameter used on this tape; may be called once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, TensorError> {
        if self.released {
            return Err(TensorError::AlreadyReleased);
        }
        if self.shape(loss) != (1, 1) {
            return Err(TensorError::NonScalarLoss(self.shape(loss)));
        }
        self.released = true;
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = BTreeMap::new();

        fn buf<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> Option<&'a mut Vec<f64>> {
            let n = &nodes[v.0];
            if !n.needs_grad {
                return None;
            }
            Some(grads[v.0].get_or_insert_with(|| vec![0.0; n.rows * n.cols]))
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            let (rows, cols) = (node.rows, node.cols);
            let y = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => {
                    out.insert(self.params[*p].to_string(), g);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = (nodes[a.0].rows, nodes[a.0].cols);
                    let n = cols;
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        gemm(m, n, k, &g, (n as isize, 1), &nodes[b.0].value, (1, n as isize), 1.0, da);
                    }
                    if let Some(db) = buf(&mut grads, nodes, *b) {
                        gemm(k, m, n, &nodes[a.0].value, (1, k as isize), &g, (n as isize, 1), 1.0, db);
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        da.iter_mut().zip(&g).for_each(|(d, x)| *d += x);
                    }
                    if let Some(db) = buf(&mut grads, nodes, *b) {
                        db.iter_mut().zip(&g).for_each(|(d, x)| *d += sign * x);
                    }
                }
                Op::Mul(a, b) => {
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        da.iter_mut().zip(&g).zip(nodes[b.0].value.iter()).for_each(|((d, x), w)| *d += x * w);
                    }
                    if let Some(db) = buf(&mut grads, nodes, *b) {
                        db.iter_mut().zip(&g).zip(nodes[a.0].value.iter()).for_each(|((d, x), w)| *d += x * w);
                    }
                }
                Op::AddRow(a, r) => {
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        da.iter_mut().zip(&g).for_each(|(d, x)| *d += x);
                    }
                    if let Some(dr) = buf(&mut grads, nodes, *r) {
                        for row in g.chunks(cols.max(1)) {
                            dr.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                        }
                    }
                }
                Op::MulRow(a, r) => {
                    let rv = &nodes[r.0].value;
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        for (drow, grow) in da.chunks_mut(cols.max(1)).zip(g.chunks(cols.max(1))) {
                            drow.iter_mut().zip(grow).zip(rv.iter()).for_each(|((d, x), w)| *d += x * w);
                        }
                    }
                    let av = &nodes[a.0].value;
                    if let Some(dr) = buf(&mut grads, nodes, *r) {
                        for (arow, grow) in av.chunks(cols.max(1)).zip(g.chunks(cols.max(1))) {
                            dr.iter_mut().zip(grow).zip(arow).for_each(|((d, x), w)| *d += x * w);
                        }
                    }
                }
                Op::BroadcastRows(r) => {
                    if let Some(dr) = buf(&mut grads, nodes, *r) {
                        for row in g.chunks(cols.max(1)) {
                            dr.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = nodes[p.0].cols;
                        if let Some(dp) = buf(&mut grads, nodes, *p) {
                            for r in 0..rows {
                                let src = &g[r * cols + off..r * cols + off + w];
                                dp[r * w..(r + 1) * w].iter_mut().zip(src).for_each(|(d, x)| *d += x);
                            }
                        }
                        off += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let ac = nodes[a.0].cols;
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        for r in 0..rows {
                            let dst = &mut da[r * ac + start..r * ac + start + cols];
                            dst.iter_mut().zip(&g[r * cols..(r + 1) * cols]).for_each(|(d, x)| *d += x);
                        }
                    }
                }
                Op::GatherRows(a, idx) => {
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        for (r, &src) in idx.iter().enumerate() {
                            let dst = &mut da[src * cols..(src + 1) * cols];
                            dst.iter_mut().zip(&g[r * cols..(r + 1) * cols]).for_each(|(d, x)| *d += x);
                        }
                    }
                }
                Op::SegmentSum(a, seg) => {
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        for (r, &s) in seg.iter().enumerate() {
                            let dst = &mut da[r * cols..(r + 1) * cols];
                            dst.iter_mut().zip(&g[s * cols..(s + 1) * cols]).for_each(|(d, x)| *d += x);
                        }
                    }
                }
                Op::SegmentSoftmax(a, seg, nseg) => {
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        let mut dot = vec![0.0; *nseg];
                        for (j, &s) in seg.iter().enumerate() {
                            dot[s] += y[j] * g[j];
                        }
                        for (j, &s) in seg.iter().enumerate() {
                            da[j] += y[j] * (g[j] - dot[s]);
                        }
                    }
                }
                Op::ScaleRows(a, w) => {
                    let wv = &nodes[w.0].value;
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        for r in 0..rows {
                            let dst = &mut da[r * cols..(r + 1) * cols];
                            dst.iter_mut().zip(&g[r * cols..(r + 1) * cols]).for_each(|(d, x)| *d += x * wv[r]);
                        }
                    }
                    let av = &nodes[a.0].value;
                    if let Some(dw) = buf(&mut grads, nodes, *w) {
                        for r in 0..rows {
                            let gr = &g[r * cols..(r + 1) * cols];
                            dw[r] += gr.iter().zip(&av[r * cols..(r + 1) * cols]).map(|(x, v)| x * v).sum::<f64>();
                        }
                    }
                }
                Op::Relu(a) => {
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        da.iter_mut().zip(&g).zip(y.iter()).for_each(|((d, x), o)| {
                            if *o > 0.0 {
                                *d += x
                            }
                        });
                    }
                }
                Op::Tanh(a) => {
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        da.iter_mut().zip(&g).zip(y.iter()).for_each(|((d, x), o)| *d += x * (1.0 - o * o));
                    }
                }
                Op::Sigmoid(a) => {
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        da.iter_mut().zip(&g).zip(y.iter()).for_each(|((d, x), o)| *d += x * o * (1.0 - o));
                    }
                }
                Op::Scale(a, c) => {
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        da.iter_mut().zip(&g).for_each(|(d, x)| *d += c * x);
                    }
                }
                Op::LayerNorm(a, inv) => {
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        for r in 0..rows {
                            let gr = &g[r * cols..(r + 1) * cols];
                            let yr = &y[r * cols..(r + 1) * cols];
                            let mg = gr.iter().sum::<f64>() / cols as f64;
                            let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                            for ((d, gx), yx) in da[r * cols..(r + 1) * cols].iter_mut().zip(gr).zip(yr) {
                                *d += inv[r] * (gx - mg - yx * mgy);
                            }
                        }
                    }
                }
                Op::Sum(a) => {
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        da.iter_mut().for_each(|d| *d += g[0]);
                    }
                }
                Op::Softmax(a) => {
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        let dot: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
                        da.iter_mut().zip(&g).zip(y.iter()).for_each(|((d, x), o)| *d += o * (x - dot));
                    }
                }
                Op::LogSoftmax(a) => {
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        let total: f64 = g.iter().sum();
                        da.iter_mut().zip(&g).zip(y.iter()).for_each(|((d, x), o)| *d += x - o.exp() * total);
                    }
                }
                Op::CrossEntropy(a, t, p) => {
                    if let Some(da) = buf(&mut grads, nodes, *a) {
                        for (j, (d, pj)) in da.iter_mut().zip(p).enumerate() {
                            *d += g[0] * (pj - if j == *t { 1.0 } else { 0.0 });
                        }
                    }
                }
            }
        }
        // Parameters registered but unreachable from the loss get zero gradients.
        for (p, name) in self.params.iter().enumerate() {
            if !out.contains_key(*name) {
                let v = self.param_vars[name];
                let n = &self.nodes[v.0];
                debug_assert!(matches!(n.op, Op::Param(q) if q == p));
                out.insert(name.to_string(), vec![0.0; n.rows * n.cols]);
            }
        }
        Ok(Gradients(out))
    }
}
