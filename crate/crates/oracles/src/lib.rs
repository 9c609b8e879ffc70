//! Naive, loop-by-loop reference computations. Written for obviousness, not
//! speed, and sharing no code with the engine under test.

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `t[i][j][k] = u[i] * v[j] * w[k]`, row-major.
pub fn outer3(u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
    let mut t = Vec::new();
    for &a in u {
        for &b in v {
            for &c in w {
                t.push(a * b * c);
            }
        }
    }
    t
}

/// Valid cross-correlation of one `[d, h, w]` cube with `filters` kernels of
/// extent `[kd, kh, kw]`. Returns the `[filters, od, oh, ow]` output and its
/// spatial extents.
pub fn conv3d(
    input: &[f64],
    extents: [usize; 3],
    kernels: &[f64],
    kernel: [usize; 3],
    bias: &[f64],
    stride: usize,
) -> (Vec<f64>, [usize; 3]) {
    let [d, h, w] = extents;
    let [kd, kh, kw] = kernel;
    let out = [(d - kd) / stride + 1, (h - kh) / stride + 1, (w - kw) / stride + 1];
    let at = |z: usize, y: usize, x: usize| input[(z * h + y) * w + x];
    let kat = |f: usize, z: usize, y: usize, x: usize| kernels[((f * kd + z) * kh + y) * kw + x];
    let mut result = Vec::new();
    for (f, &b) in bias.iter().enumerate() {
        for oz in 0..out[0] {
            for oy in 0..out[1] {
                for ox in 0..out[2] {
                    let mut acc = b;
                    for z in 0..kd {
                        for y in 0..kh {
                            for x in 0..kw {
                                acc += kat(f, z, y, x) * at(oz * stride + z, oy * stride + y, ox * stride + x);
                            }
                        }
                    }
                    result.push(acc);
                }
            }
        }
    }
    (result, out)
}

/// `out[j] = b[j] + sum_i x[i] * w[i][j]` for a row-major `[rows, cols]` `w`.
pub fn dense(x: &[f64], w: &[f64], cols: usize, b: &[f64]) -> Vec<f64> {
    (0..cols)
        .map(|j| {
            let mut acc = b[j];
            for (i, xi) in x.iter().enumerate() {
                acc += xi * w[i * cols + j];
            }
            acc
        })
        .collect()
}

/// One LSTM cell update, one scalar at a time. Weights are row-major
/// `[input, 4h]` and `[h, 4h]`, gate columns packed as `[i, g, f, o]`.
pub fn lstm_step(x: &[f64], h: &[f64], c: &[f64], w_x: &[f64], w_h: &[f64], bias: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hidden = h.len();
    let cols = 4 * hidden;
    let pre = |gate: usize, u: usize| {
        let col = gate * hidden + u;
        let mut z = bias[col];
        for (i, xi) in x.iter().enumerate() {
            z += xi * w_x[i * cols + col];
        }
        for (i, hi) in h.iter().enumerate() {
            z += hi * w_h[i * cols + col];
        }
        z
    };
    let mut h_next = Vec::new();
    let mut c_next = Vec::new();
    for (u, &c_prev) in c.iter().enumerate().take(hidden) {
        let input_gate = sigmoid(pre(0, u));
        let candidate = pre(1, u).tanh();
        let forget_gate = sigmoid(pre(2, u));
        let output_gate = sigmoid(pre(3, u));
        let cell = forget_gate * c_prev + input_gate * candidate;
        c_next.push(cell);
        h_next.push(output_gate * cell.tanh());
    }
    (h_next, c_next)
}

/// `(f(x + eps) - f(x - eps)) / 2eps`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

pub fn mae(pred: &[f64], target: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..pred.len() {
        total += (pred[i] - target[i]).abs();
    }
    total / pred.len() as f64
}

/// Two-pass sample correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx.sqrt() * vy.sqrt())
}

/// Positive-class F1 from a confusion-matrix count, zero counted positive.
/// `None` when neither side has a positive.
pub fn f1(pred: &[f64], target: &[f64]) -> Option<f64> {
    let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(target) {
        match (*p >= 0.0, *t >= 0.0) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fneg += 1.0,
            (false, false) => {}
        }
    }
    if tp + fp + fneg == 0.0 {
        return None;
    }
    Some(2.0 * tp / (2.0 * tp + fp + fneg))
}

/// Seven-class index by counting the rounding boundaries `y` has passed.
pub fn class7(y: f64) -> usize {
    let y = y.clamp(-3.0, 3.0);
    let mut class = 0;
    for boundary in [-2.5, -1.5, -0.5] {
        if y > boundary {
            class += 1;
        }
    }
    for boundary in [0.5, 1.5, 2.5] {
        if y >= boundary {
            class += 1;
        }
    }
    class
}

/// Noise-free synthetic label: mean over steps of `l[k][0] v[k][0] a[k][0]`
/// plus `v[cue][1] a[cue][1]`, clamped to `[-3, 3]`. Sequences are row-major
/// `[t_k, d]`.
pub fn synth_label(language: &[f64], visual: &[f64], acoustic: &[f64], dims: [usize; 4], cue: usize) -> f64 {
    let [t_k, d_l, d_v, d_a] = dims;
    let mut sync = 0.0;
    for k in 0..t_k {
        sync += language[k * d_l] * visual[k * d_v] * acoustic[k * d_a];
    }
    sync /= t_k as f64;
    let asynchronous = visual[cue * d_v + 1] * acoustic[cue * d_a + 1];
    (sync + asynchronous).clamp(-3.0, 3.0)
}
