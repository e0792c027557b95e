use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvDims, LstmCache, LstmDims};
use super::Array;
use crate::error::{Error, Result};

/// Clamp applied to probabilities inside the cross-entropy logarithms.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => kernels::sigmoid(z),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the output `y = act(z)`.
    fn slope(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Bce,
    Mse,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Linear { x: usize, w: usize, b: Option<usize>, rows: usize, n: usize, m: usize },
    Act { x: usize, kind: Activation },
    Concat { xs: Vec<usize> },
    ConcatCols { a: usize, b: usize, rows: usize, wa: usize, wb: usize },
    Reshape { x: usize },
    Gather { table: usize, cols: usize, indices: Vec<usize> },
    Pool { x: usize, rows: usize, cols: usize, mode: PoolMode, mask: Option<Vec<bool>>, picks: Vec<usize>, count: usize },
    Lstm { x: usize, wx: usize, wh: usize, b: usize, dims: LstmDims, cache: LstmCache },
    Conv { x: usize, e: Option<usize>, k: usize, b: usize, dims: ConvDims },
    Loss { pred: usize, target: Vec<f64>, kind: LossKind },
}

#[derive(Debug)]
struct Node {
    value: Array,
    op: Op,
    needs_grad: bool,
}

/// One recorded forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar with respect to every node that needed one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
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

    fn push(&mut self, value: Array, op: Op, needs_grad: bool, name: &str) -> Result<Var> {
        if let Some(bad) = value.data().iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{name} (value {bad})")));
        }
        self.consumed = false;
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn leaf(&mut self, value: Array, requires_grad: bool) -> Result<Var> {
        self.push(value, Op::Leaf, requires_grad, "leaf")
    }

    pub fn constant(&mut self, value: Array) -> Result<Var> {
        self.leaf(value, false)
    }

    /// `x · wᵀ + b` on a vector `[n]` or row batch `[r, n]` with `w: [m, n]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if ws.len() != 2 {
            return Err(shape_err("linear", format!("weight must be 2-d, got {ws:?}")));
        }
        let (m, n) = (ws[0], ws[1]);
        let (rows, out_shape) = match xs.as_slice() {
            [k] if *k == n => (1, vec![m]),
            [r, k] if *k == n => (*r, vec![*r, m]),
            _ => return Err(shape_err("linear", format!("input {xs:?} does not match weight {ws:?}"))),
        };
        if let Some(b) = b {
            if self.shape(b) != [m] {
                return Err(shape_err("linear", format!("bias {:?} for {m} outputs", self.shape(b))));
            }
        }
        let y = kernels::linear_forward(
            self.value(x).data(),
            rows,
            n,
            self.value(w).data(),
            m,
            b.map(|b| self.value(b).data()),
        );
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(Array::new(&out_shape, y)?, Op::Linear { x: x.0, w: w.0, b: b.map(|b| b.0), rows, n, m }, needs, "linear")
    }

    pub fn activate(&mut self, x: Var, kind: Activation) -> Result<Var> {
        if kind == Activation::Identity {
            return Ok(x);
        }
        let src = self.value(x);
        let data = src.data().iter().map(|&z| kind.apply(z)).collect();
        let value = Array::new(src.shape(), data)?;
        let needs = self.needs(x);
        self.push(value, Op::Act { x: x.0, kind }, needs, "activation")
    }

    /// `act(w · x + b)`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var, act: Activation) -> Result<Var> {
        let z = self.linear(x, w, Some(b))?;
        self.activate(z, act)
    }

    /// Concatenates the flattened inputs into one vector.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(shape_err("concat", "no inputs".into()));
        }
        let mut data = Vec::with_capacity(xs.iter().map(|&v| self.value(v).len()).sum());
        for &v in xs {
            data.extend_from_slice(self.value(v).data());
        }
        let needs = xs.iter().any(|&v| self.needs(v));
        self.push(Array::vector(data), Op::Concat { xs: xs.iter().map(|v| v.0).collect() }, needs, "concat")
    }

    /// `[r, p] | [r, q] -> [r, p + q]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(shape_err("concat_cols", format!("{sa:?} and {sb:?}")));
        }
        let (rows, wa, wb) = (sa[0], sa[1], sb[1]);
        let mut data = Vec::with_capacity(rows * (wa + wb));
        for r in 0..rows {
            data.extend_from_slice(&self.value(a).data()[r * wa..(r + 1) * wa]);
            data.extend_from_slice(&self.value(b).data()[r * wb..(r + 1) * wb]);
        }
        let needs = self.needs(a) || self.needs(b);
        self.push(Array::new(&[rows, wa + wb], data)?, Op::ConcatCols { a: a.0, b: b.0, rows, wa, wb }, needs, "concat_cols")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = Array::new(shape, self.value(x).data().to_vec())
            .map_err(|_| shape_err("reshape", format!("{:?} -> {shape:?}", self.shape(x))))?;
        let needs = self.needs(x);
        self.push(value, Op::Reshape { x: x.0 }, needs, "reshape")
    }

    /// Rows of a 2-d table, in the given order: `[len(indices), cols]`.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return Err(shape_err("gather_rows", format!("table must be 2-d, got {s:?}")));
        }
        let (rows, cols) = (s[0], s[1]);
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= rows {
                return Err(shape_err("gather_rows", format!("row {i} of {rows}")));
            }
            data.extend_from_slice(&self.value(table).data()[i * cols..(i + 1) * cols]);
        }
        let needs = self.needs(table);
        let op = Op::Gather { table: table.0, cols, indices: indices.to_vec() };
        self.push(Array::new(&[indices.len(), cols], data)?, op, needs, "gather_rows")
    }

    /// Column-wise pooling over rows. `[r, c] -> [c]` or, per group,
    /// `[g, r, c] -> [g, c]`. Masked-out rows are ignored; max pooling
    /// credits the first maximal row.
    pub fn pool(&mut self, x: Var, mode: PoolMode, mask: Option<&[bool]>) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let (groups, rows, cols, out_shape) = match s.as_slice() {
            [r, c] => (1, *r, *c, vec![*c]),
            [g, r, c] => (*g, *r, *c, vec![*g, *c]),
            _ => return Err(shape_err("pool", format!("expected 2-d or 3-d input, got {s:?}"))),
        };
        if let Some(m) = mask {
            if m.len() != rows {
                return Err(shape_err("pool", format!("mask of {} for {rows} rows", m.len())));
            }
        }
        let live = |r: usize| mask.is_none_or(|m| m[r]);
        let count = (0..rows).filter(|&r| live(r)).count();
        if count == 0 {
            return Err(Error::InvalidArgument("pool over zero unmasked rows".into()));
        }
        let data = self.value(x).data();
        let mut out = vec![0.0; groups * cols];
        let mut picks = Vec::new();
        match mode {
            PoolMode::Avg => {
                for g in 0..groups {
                    for r in (0..rows).filter(|&r| live(r)) {
                        let row = &data[(g * rows + r) * cols..(g * rows + r + 1) * cols];
                        for (o, v) in out[g * cols..(g + 1) * cols].iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                }
                out.iter_mut().for_each(|o| *o /= count as f64);
            }
            PoolMode::Max => {
                picks = vec![0; groups * cols];
                for g in 0..groups {
                    for c in 0..cols {
                        let mut best = f64::NEG_INFINITY;
                        let mut arg = 0;
                        for r in (0..rows).filter(|&r| live(r)) {
                            let v = data[(g * rows + r) * cols + c];
                            if v > best {
                                best = v;
                                arg = r;
                            }
                        }
                        out[g * cols + c] = best;
                        picks[g * cols + c] = arg;
                    }
                }
            }
        }
        let needs = self.needs(x);
        let op = Op::Pool { x: x.0, rows, cols, mode, mask: mask.map(<[bool]>::to_vec), picks, count };
        self.push(Array::new(&out_shape, out)?, op, needs, "pool")
    }

    /// LSTM over `[t, d]` or a batch `[b, t, d]`, from zero state, returning
    /// all hidden states. `wx: [4h, d]`, `wh: [4h, h]`, `b: [4h]`, gate
    /// blocks ordered input, forget, candidate, output.
    pub fn lstm(&mut self, x: Var, wx: Var, wh: Var, b: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let (batch, steps, input) = match s.as_slice() {
            [t, d] => (1, *t, *d),
            [b, t, d] => (*b, *t, *d),
            _ => return Err(shape_err("lstm", format!("expected 2-d or 3-d input, got {s:?}"))),
        };
        let hs = self.shape(wh).to_vec();
        if hs.len() != 2 || hs[0] != 4 * hs[1] {
            return Err(shape_err("lstm", format!("recurrent weight {hs:?} is not [4h, h]")));
        }
        let hidden = hs[1];
        if self.shape(wx) != [4 * hidden, input] || self.shape(b) != [4 * hidden] {
            return Err(shape_err(
                "lstm",
                format!("input weight {:?} / bias {:?} for input {input}, hidden {hidden}", self.shape(wx), self.shape(b)),
            ));
        }
        if steps == 0 {
            return Err(shape_err("lstm", "sequence has no steps".into()));
        }
        let dims = LstmDims { batch, steps, input, hidden };
        let (out, cache) = kernels::lstm_forward(
            self.value(x).data(),
            dims,
            self.value(wx).data(),
            self.value(wh).data(),
            self.value(b).data(),
        );
        let shape = if s.len() == 2 { vec![steps, hidden] } else { vec![batch, steps, hidden] };
        let needs = [x, wx, wh, b].iter().any(|&v| self.needs(v));
        let op = Op::Lstm { x: x.0, wx: wx.0, wh: wh.0, b: b.0, dims, cache };
        self.push(Array::new(&shape, out)?, op, needs, "lstm")
    }

    /// Width-2 convolution along the sequence axis: row `t` of the result is
    /// `k · [x_t | x_{t+1} | e_t] + b`, one row per consecutive pair. `x` is
    /// `[t, d]` or `[b, t, d]`; optional `edge` features are `[.., t - 1, de]`;
    /// `k: [f, 2d + de]`.
    pub fn conv1d_k2(&mut self, x: Var, edge: Option<Var>, k: Var, b: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let (batch, steps, input) = match s.as_slice() {
            [t, d] => (1, *t, *d),
            [b, t, d] => (*b, *t, *d),
            _ => return Err(shape_err("conv1d_k2", format!("expected 2-d or 3-d input, got {s:?}"))),
        };
        if steps < 2 {
            return Err(shape_err("conv1d_k2", format!("needs at least 2 steps, got {steps}")));
        }
        let edge_width = match edge {
            None => 0,
            Some(e) => {
                let es = self.shape(e);
                let ok = match es {
                    [t, w] => batch == 1 && s.len() == 2 && *t == steps - 1 && *w > 0,
                    [bb, t, w] => *bb == batch && *t == steps - 1 && *w > 0,
                    _ => false,
                };
                if !ok {
                    return Err(shape_err("conv1d_k2", format!("edge features {es:?} for input {s:?}")));
                }
                *es.last().unwrap()
            }
        };
        let ks = self.shape(k).to_vec();
        if ks.len() != 2 || ks[1] != 2 * input + edge_width || self.shape(b) != [ks[0]] {
            return Err(shape_err(
                "conv1d_k2",
                format!("kernel {ks:?} / bias {:?} for window {}", self.shape(b), 2 * input + edge_width),
            ));
        }
        let dims = ConvDims { batch, steps, input, edge: edge_width, filters: ks[0] };
        let out = kernels::conv_forward(
            self.value(x).data(),
            edge.map(|e| self.value(e).data()),
            dims,
            self.value(k).data(),
            self.value(b).data(),
        );
        let shape = if s.len() == 2 { vec![steps - 1, ks[0]] } else { vec![batch, steps - 1, ks[0]] };
        let needs = self.needs(x) || edge.is_some_and(|e| self.needs(e)) || self.needs(k) || self.needs(b);
        let op = Op::Conv { x: x.0, e: edge.map(|e| e.0), k: k.0, b: b.0, dims };
        self.push(Array::new(&shape, out)?, op, needs, "conv1d_k2")
    }

    /// Mean binary cross-entropy or mean squared error as a `[1]` array.
    pub fn loss(&mut self, pred: Var, target: &[f64], kind: LossKind) -> Result<Var> {
        let p = self.value(pred).data();
        if p.len() != target.len() || p.is_empty() {
            return Err(shape_err("loss", format!("{} predictions for {} targets", p.len(), target.len())));
        }
        let n = p.len() as f64;
        let value = match kind {
            LossKind::Bce => {
                if let Some(t) = target.iter().find(|&&t| t != 0.0 && t != 1.0) {
                    return Err(Error::InvalidArgument(format!("cross-entropy target {t} not in {{0, 1}}")));
                }
                if let Some(r) = p.iter().find(|&&r| !(0.0..=1.0).contains(&r)) {
                    return Err(Error::InvalidArgument(format!("cross-entropy prediction {r} outside [0, 1]")));
                }
                -p.iter()
                    .zip(target)
                    .map(|(&r, &t)| {
                        let r = r.clamp(LOG_EPS, 1.0 - LOG_EPS);
                        t * r.ln() + (1.0 - t) * (1.0 - r).ln()
                    })
                    .sum::<f64>()
                    / n
            }
            LossKind::Mse => p.iter().zip(target).map(|(r, t)| (r - t) * (r - t)).sum::<f64>() / n,
        };
        let needs = self.needs(pred);
        self.push(Array::vector(vec![value]), Op::Loss { pred: pred.0, target: target.to_vec(), kind }, needs, "loss")
    }

    /// Reverse pass from a single-element node. A tape can be differentiated
    /// once per recorded forward pass.
    pub fn backward(&mut self, root: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::BackwardTwice);
        }
        if self.value(root).len() != 1 {
            return Err(shape_err("backward", format!("root must be scalar, got {:?}", self.shape(root))));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.needs_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let mut acc = |idx: usize, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[idx].needs_grad {
                return;
            }
            let slot = grads[idx].get_or_insert_with(|| vec![0.0; nodes[idx].value.len()]);
            f(slot);
        };
        let add = |dst: &mut [f64], src: &[f64]| {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b, rows, n, m } => {
                let (xv, wv) = (nodes[*x].value.data(), nodes[*w].value.data());
                acc(*x, &mut |dx| kernels::linear_backward(xv, *rows, *n, wv, *m, g, Some(dx), None, None));
                acc(*w, &mut |dw| kernels::linear_backward(xv, *rows, *n, wv, *m, g, None, Some(dw), None));
                if let Some(b) = b {
                    acc(*b, &mut |db| kernels::linear_backward(xv, *rows, *n, wv, *m, g, None, None, Some(db)));
                }
            }
            Op::Act { x, kind } => {
                let (z, y) = (nodes[*x].value.data(), node.value.data());
                acc(*x, &mut |dx| {
                    for k in 0..dx.len() {
                        dx[k] += g[k] * kind.slope(z[k], y[k]);
                    }
                });
            }
            Op::Concat { xs } => {
                let mut off = 0;
                for &x in xs {
                    let len = nodes[x].value.len();
                    acc(x, &mut |dx| add(dx, &g[off..off + len]));
                    off += len;
                }
            }
            Op::ConcatCols { a, b, rows, wa, wb } => {
                let w = wa + wb;
                acc(*a, &mut |da| {
                    for r in 0..*rows {
                        add(&mut da[r * wa..(r + 1) * wa], &g[r * w..r * w + wa]);
                    }
                });
                acc(*b, &mut |db| {
                    for r in 0..*rows {
                        add(&mut db[r * wb..(r + 1) * wb], &g[r * w + wa..(r + 1) * w]);
                    }
                });
            }
            Op::Reshape { x } => acc(*x, &mut |dx| add(dx, g)),
            Op::Gather { table, cols, indices } => acc(*table, &mut |dt| {
                for (k, &i) in indices.iter().enumerate() {
                    add(&mut dt[i * cols..(i + 1) * cols], &g[k * cols..(k + 1) * cols]);
                }
            }),
            Op::Pool { x, rows, cols, mode, mask, picks, count } => {
                let groups = node.value.len() / cols;
                acc(*x, &mut |dx| match mode {
                    PoolMode::Avg => {
                        let scale = 1.0 / *count as f64;
                        for gi in 0..groups {
                            for r in 0..*rows {
                                if mask.as_ref().is_some_and(|m| !m[r]) {
                                    continue;
                                }
                                let dst = &mut dx[(gi * rows + r) * cols..(gi * rows + r + 1) * cols];
                                for c in 0..*cols {
                                    dst[c] += g[gi * cols + c] * scale;
                                }
                            }
                        }
                    }
                    PoolMode::Max => {
                        for gi in 0..groups {
                            for c in 0..*cols {
                                let r = picks[gi * cols + c];
                                dx[(gi * rows + r) * cols + c] += g[gi * cols + c];
                            }
                        }
                    }
                });
            }
            Op::Lstm { x, wx, wh, b, dims, cache } => {
                let grads_out = kernels::lstm_backward(
                    nodes[*x].value.data(),
                    *dims,
                    nodes[*wx].value.data(),
                    nodes[*wh].value.data(),
                    node.value.data(),
                    cache,
                    g,
                );
                acc(*x, &mut |d| add(d, &grads_out.dx));
                acc(*wx, &mut |d| add(d, &grads_out.dwx));
                acc(*wh, &mut |d| add(d, &grads_out.dwh));
                acc(*b, &mut |d| add(d, &grads_out.dbias));
            }
            Op::Conv { x, e, k, b, dims } => {
                let grads_out = kernels::conv_backward(
                    nodes[*x].value.data(),
                    e.map(|e| nodes[e].value.data()),
                    *dims,
                    nodes[*k].value.data(),
                    g,
                );
                acc(*x, &mut |d| add(d, &grads_out.dx));
                if let (Some(e), Some(de)) = (e, grads_out.de.as_ref()) {
                    acc(*e, &mut |d| add(d, de));
                }
                acc(*k, &mut |d| add(d, &grads_out.dk));
                acc(*b, &mut |d| add(d, &grads_out.dbias));
            }
            Op::Loss { pred, target, kind } => {
                let p = nodes[*pred].value.data();
                let n = p.len() as f64;
                acc(*pred, &mut |dp| {
                    for k in 0..dp.len() {
                        let d = match kind {
                            LossKind::Bce => {
                                let r = p[k].clamp(LOG_EPS, 1.0 - LOG_EPS);
                                (-target[k] / r + (1.0 - target[k]) / (1.0 - r)) / n
                            }
                            LossKind::Mse => 2.0 * (p[k] - target[k]) / n,
                        };
                        dp[k] += g[0] * d;
                    }
                });
            }
        }
    }
}
