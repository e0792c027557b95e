//! Raw forward/backward loops behind the fused tape operations.

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `y[r, m] = x[r, n] · w[m, n]ᵀ + b[m]`
pub(crate) fn linear_forward(x: &[f64], rows: usize, n: usize, w: &[f64], m: usize, b: Option<&[f64]>) -> Vec<f64> {
    let mut y = vec![0.0; rows * m];
    for r in 0..rows {
        let xr = &x[r * n..(r + 1) * n];
        let yr = &mut y[r * m..(r + 1) * m];
        for (j, out) in yr.iter_mut().enumerate() {
            *out = dot(&w[j * n..(j + 1) * n], xr) + b.map_or(0.0, |b| b[j]);
        }
    }
    y
}

/// Accumulates the gradients of [`linear_forward`] given `dy`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    x: &[f64],
    rows: usize,
    n: usize,
    w: &[f64],
    m: usize,
    dy: &[f64],
    dx: Option<&mut [f64]>,
    dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    if let Some(dx) = dx {
        for r in 0..rows {
            let dxr = &mut dx[r * n..(r + 1) * n];
            for j in 0..m {
                let g = dy[r * m + j];
                if g != 0.0 {
                    axpy(g, &w[j * n..(j + 1) * n], dxr);
                }
            }
        }
    }
    if let Some(dw) = dw {
        for r in 0..rows {
            let xr = &x[r * n..(r + 1) * n];
            for j in 0..m {
                let g = dy[r * m + j];
                if g != 0.0 {
                    axpy(g, xr, &mut dw[j * n..(j + 1) * n]);
                }
            }
        }
    }
    if let Some(db) = db {
        for r in 0..rows {
            for j in 0..m {
                db[j] += dy[r * m + j];
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LstmDims {
    pub batch: usize,
    pub steps: usize,
    pub input: usize,
    pub hidden: usize,
}

/// Saved activations of an LSTM forward pass, laid out `[batch, step, ·]`.
#[derive(Clone, Debug)]
pub(crate) struct LstmCache {
    /// Post-activation gates `i, f, g, o`, each `hidden` wide.
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
}

/// Standard LSTM recurrence from zero initial state. Gate rows of `wx`
/// (`4h × d`), `wh` (`4h × h`) and `bias` (`4h`) are ordered input, forget,
/// candidate, output. Returns every hidden state `[batch, steps, hidden]`.
pub(crate) fn lstm_forward(x: &[f64], dims: LstmDims, wx: &[f64], wh: &[f64], bias: &[f64]) -> (Vec<f64>, LstmCache) {
    let LstmDims { batch, steps, input: d, hidden: h } = dims;
    let mut out = vec![0.0; batch * steps * h];
    let mut gates = vec![0.0; batch * steps * 4 * h];
    let mut cells = vec![0.0; batch * steps * h];
    let mut tanh_cells = vec![0.0; batch * steps * h];
    let mut z = vec![0.0; 4 * h];
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for b in 0..batch {
        h_prev.iter_mut().for_each(|v| *v = 0.0);
        c_prev.iter_mut().for_each(|v| *v = 0.0);
        for t in 0..steps {
            let xt = &x[(b * steps + t) * d..(b * steps + t + 1) * d];
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = bias[k] + dot(&wx[k * d..(k + 1) * d], xt) + dot(&wh[k * h..(k + 1) * h], &h_prev);
            }
            let base = b * steps + t;
            let g_row = &mut gates[base * 4 * h..(base + 1) * 4 * h];
            for j in 0..h {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[h + j]);
                let g = z[2 * h + j].tanh();
                let o = sigmoid(z[3 * h + j]);
                g_row[j] = i;
                g_row[h + j] = f;
                g_row[2 * h + j] = g;
                g_row[3 * h + j] = o;
                let c = f * c_prev[j] + i * g;
                let tc = c.tanh();
                cells[base * h + j] = c;
                tanh_cells[base * h + j] = tc;
                out[base * h + j] = o * tc;
            }
            h_prev.copy_from_slice(&out[base * h..(base + 1) * h]);
            c_prev.copy_from_slice(&cells[base * h..(base + 1) * h]);
        }
    }
    (out, LstmCache { gates, cells, tanh_cells })
}

pub(crate) struct LstmGrads {
    pub dx: Vec<f64>,
    pub dwx: Vec<f64>,
    pub dwh: Vec<f64>,
    pub dbias: Vec<f64>,
}

/// Backpropagation through time for [`lstm_forward`].
pub(crate) fn lstm_backward(
    x: &[f64],
    dims: LstmDims,
    wx: &[f64],
    wh: &[f64],
    out: &[f64],
    cache: &LstmCache,
    d_out: &[f64],
) -> LstmGrads {
    let LstmDims { batch, steps, input: d, hidden: h } = dims;
    let mut dx = vec![0.0; x.len()];
    let mut dwx = vec![0.0; wx.len()];
    let mut dwh = vec![0.0; wh.len()];
    let mut dbias = vec![0.0; 4 * h];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for b in 0..batch {
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        dc_next.iter_mut().for_each(|v| *v = 0.0);
        for t in (0..steps).rev() {
            let base = b * steps + t;
            let g_row = &cache.gates[base * 4 * h..(base + 1) * 4 * h];
            for j in 0..h {
                let (i, f, g, o) = (g_row[j], g_row[h + j], g_row[2 * h + j], g_row[3 * h + j]);
                let tc = cache.tanh_cells[base * h + j];
                let c_prev = if t > 0 { cache.cells[(base - 1) * h + j] } else { 0.0 };
                let dh = d_out[base * h + j] + dh_next[j];
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                dz[j] = dc * g * i * (1.0 - i);
                dz[h + j] = dc * c_prev * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - g * g);
                dz[3 * h + j] = d_o * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            let xt = &x[base * d..(base + 1) * d];
            let dxt = &mut dx[base * d..(base + 1) * d];
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (k, &g) in dz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                dbias[k] += g;
                axpy(g, xt, &mut dwx[k * d..(k + 1) * d]);
                axpy(g, &wx[k * d..(k + 1) * d], dxt);
                if t > 0 {
                    let hp = &out[(base - 1) * h..base * h];
                    axpy(g, hp, &mut dwh[k * h..(k + 1) * h]);
                    axpy(g, &wh[k * h..(k + 1) * h], &mut dh_next);
                }
            }
        }
    }
    LstmGrads { dx, dwx, dwh, dbias }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub steps: usize,
    pub input: usize,
    pub edge: usize,
    pub filters: usize,
}

impl ConvDims {
    pub fn window(&self) -> usize {
        2 * self.input + self.edge
    }
}

fn conv_window(x: &[f64], e: Option<&[f64]>, dims: ConvDims, b: usize, t: usize, buf: &mut [f64]) {
    let d = dims.input;
    let row = |s: usize| &x[(b * dims.steps + s) * d..(b * dims.steps + s + 1) * d];
    buf[..d].copy_from_slice(row(t));
    buf[d..2 * d].copy_from_slice(row(t + 1));
    if let Some(e) = e {
        let de = dims.edge;
        let off = (b * (dims.steps - 1) + t) * de;
        buf[2 * d..].copy_from_slice(&e[off..off + de]);
    }
}

/// Width-2 convolution: output row `t` is `k · [x_t | x_{t+1} | e_t] + bias`.
pub(crate) fn conv_forward(x: &[f64], e: Option<&[f64]>, dims: ConvDims, k: &[f64], bias: &[f64]) -> Vec<f64> {
    let w = dims.window();
    let f = dims.filters;
    let rows = dims.steps - 1;
    let mut out = vec![0.0; dims.batch * rows * f];
    let mut buf = vec![0.0; w];
    for b in 0..dims.batch {
        for t in 0..rows {
            conv_window(x, e, dims, b, t, &mut buf);
            let o = &mut out[(b * rows + t) * f..(b * rows + t + 1) * f];
            for (j, oj) in o.iter_mut().enumerate() {
                *oj = bias[j] + dot(&k[j * w..(j + 1) * w], &buf);
            }
        }
    }
    out
}

pub(crate) struct ConvGrads {
    pub dx: Vec<f64>,
    pub de: Option<Vec<f64>>,
    pub dk: Vec<f64>,
    pub dbias: Vec<f64>,
}

pub(crate) fn conv_backward(x: &[f64], e: Option<&[f64]>, dims: ConvDims, k: &[f64], d_out: &[f64]) -> ConvGrads {
    let w = dims.window();
    let d = dims.input;
    let f = dims.filters;
    let rows = dims.steps - 1;
    let mut dx = vec![0.0; x.len()];
    let mut de = e.map(|e| vec![0.0; e.len()]);
    let mut dk = vec![0.0; k.len()];
    let mut dbias = vec![0.0; f];
    let mut buf = vec![0.0; w];
    let mut dbuf = vec![0.0; w];
    for b in 0..dims.batch {
        for t in 0..rows {
            conv_window(x, e, dims, b, t, &mut buf);
            dbuf.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..f {
                let g = d_out[(b * rows + t) * f + j];
                if g == 0.0 {
                    continue;
                }
                dbias[j] += g;
                axpy(g, &buf, &mut dk[j * w..(j + 1) * w]);
                axpy(g, &k[j * w..(j + 1) * w], &mut dbuf);
            }
            let r0 = (b * dims.steps + t) * d;
            for i in 0..d {
                dx[r0 + i] += dbuf[i];
                dx[r0 + d + i] += dbuf[d + i];
            }
            if let Some(de) = de.as_mut() {
                let off = (b * rows + t) * dims.edge;
                for i in 0..dims.edge {
                    de[off + i] += dbuf[2 * d + i];
                }
            }
        }
    }
    ConvGrads { dx, de, dk, dbias }
}
