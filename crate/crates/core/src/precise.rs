//! Double-double arithmetic and a forward-only evaluation of the training
//! loss in it.
//!
//! A central difference with a step of `1e-5` resolves a gradient only to
//! about `ulp(loss) / 1e-5`, roughly `1e-11` in `f64`. Gradients reaching the
//! LSTMs through the trilinear cube are routinely that small, so the
//! gradient check takes its differences on this ~106-bit evaluation instead.
//! Parameters are looked up by name, which keeps this path independent of
//! the network code it checks.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::data::MultimodalInstance;
use crate::error::{bail, Result};
use crate::layers::{Activation, BN_EPSILON};
use crate::model::{HoseqConfig, ModelMode};
use crate::params::ParamStore;

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn split(a: f64) -> (f64, f64) {
    const SPLITTER: f64 = 134_217_729.0; // 2^27 + 1
    let t = SPLITTER * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    (p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
}

const LN2: Dd = Dd { hi: core::f64::consts::LN_2, lo: 2.319_046_813_846_299_6e-17 };

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    fn renorm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn is_positive(self) -> bool {
        self.hi > 0.0 || (self.hi == 0.0 && self.lo > 0.0)
    }

    /// Exact multiplication by `2^k`.
    fn scale2(self, k: i32) -> Self {
        Self { hi: libm::scalbn(self.hi, k), lo: libm::scalbn(self.lo, k) }
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Self::ZERO;
        }
        let mut y = Self::from(libm::sqrt(self.hi));
        for _ in 0..2 {
            y = y + (self - y * y) / (y + y);
        }
        y
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Self::from(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Self::ZERO;
        }
        const HALVINGS: i32 = 10;
        let k = libm::round(self.hi / LN2.hi);
        let r = (self - LN2 * Self::from(k)).scale2(-HALVINGS);
        // Taylor series of e^r - 1; |r| < 4e-4 so 12 terms are far past
        // double-double precision.
        let mut term = r;
        let mut sum = r;
        for n in 2..=12 {
            term = term * r / Self::from(n as f64);
            sum = sum + term;
        }
        // (1 + s)^2 - 1 = s (2 + s) keeps the small part accurate.
        for _ in 0..HALVINGS {
            sum = sum * (sum + Self::from(2.0));
        }
        (sum + Self::ONE).scale2(k as i32)
    }

    pub fn tanh(self) -> Self {
        let neg = self.hi < 0.0;
        let a = if neg { -self } else { self };
        let e = (-(a + a)).exp();
        let t = (Self::ONE - e) / (Self::ONE + e);
        if neg {
            -t
        } else {
            t
        }
    }

    pub fn sigmoid(self) -> Self {
        if self.hi >= 0.0 {
            Self::ONE / (Self::ONE + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::ONE + e)
        }
    }
}

impl From<f64> for Dd {
    fn from(hi: f64) -> Self {
        Self { hi, lo: 0.0 }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::renorm(s, e + f)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        Dd::renorm(p, e + (self.hi * b.lo + self.lo * b.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::from(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::from(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from(q3)
    }
}

/// Loss in double-double together with a fingerprint of which rectifiers
/// were active. Two evaluations with the same fingerprint lie on the same
/// smooth piece of the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceLoss {
    pub value: Dd,
    pub regime: u64,
}

struct Params<'a> {
    store: &'a ParamStore,
    activation: Activation,
    regime: u64,
}

impl Params<'_> {
    fn activate(&mut self, x: &[Dd]) -> Vec<Dd> {
        x.iter()
            .map(|&v| match self.activation {
                Activation::Sigmoid => v.sigmoid(),
                Activation::Tanh => v.tanh(),
                Activation::Relu => {
                    let on = v.is_positive();
                    self.regime = (self.regime ^ u64::from(on)).wrapping_mul(0x0100_0000_01b3);
                    if on {
                        v
                    } else {
                        Dd::ZERO
                    }
                }
                Activation::Identity => v,
            })
            .collect()
    }

    fn get(&self, name: &str) -> Result<(&[usize], Vec<Dd>)> {
        let Some(id) = self.store.id(name) else {
            bail!(Config, "parameter {name:?} is not registered");
        };
        let t = self.store.value(id);
        Ok((t.shape(), t.data().iter().map(|&x| Dd::from(x)).collect()))
    }

    /// `x W + b` for `W: [in, out]`.
    fn dense(&self, name: &str, x: &[Dd]) -> Result<Vec<Dd>> {
        let (shape, w) = self.get(&format!("{name}.w"))?;
        let (_, b) = self.get(&format!("{name}.b"))?;
        let (rows, cols) = (shape[0], shape[1]);
        if rows != x.len() {
            bail!(Dimension, "{name}: input width {} for a {rows}-row weight", x.len());
        }
        let mut out = b;
        for (i, xi) in x.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o = *o + *xi * w[i * cols + j];
            }
        }
        Ok(out)
    }

    /// Final hidden state of the LSTM `name` over the rows of `seq`.
    fn lstm(&self, name: &str, seq: &[f64], width: usize) -> Result<Vec<Dd>> {
        let (shape, w_x) = self.get(&format!("{name}.w_x"))?;
        let four_h = shape[1];
        let (_, w_h) = self.get(&format!("{name}.w_h"))?;
        let (_, bias) = self.get(&format!("{name}.bias"))?;
        let hidden = four_h / 4;
        let mut h = vec![Dd::ZERO; hidden];
        let mut c = vec![Dd::ZERO; hidden];
        for row in seq.chunks_exact(width) {
            let mut z = bias.clone();
            for (i, &x) in row.iter().enumerate() {
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj = *zj + Dd::from(x) * w_x[i * four_h + j];
                }
            }
            for (i, &hi) in h.iter().enumerate() {
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj = *zj + hi * w_h[i * four_h + j];
                }
            }
            for u in 0..hidden {
                let ig = z[u].sigmoid();
                let g = z[hidden + u].tanh();
                let fg = z[2 * hidden + u].sigmoid();
                let og = z[3 * hidden + u].sigmoid();
                c[u] = fg * c[u] + ig * g;
                h[u] = og * c[u].tanh();
            }
        }
        Ok(h)
    }

    /// Valid 3D convolution of the cube `u ⊗ v ⊗ w`, flattened filter-major.
    fn cube_conv(&self, name: &str, biased: bool, u: &[Dd], v: &[Dd], w: &[Dd], stride: usize) -> Result<Vec<Dd>> {
        let (shape, kernels) = self.get(&format!("{name}.kernels"))?;
        let (filters, k) = (shape[0], shape[1]);
        let bias = match biased {
            true => self.get(&format!("{name}.bias"))?.1,
            false => vec![Dd::ZERO; filters],
        };
        let n = u.len();
        if k > n {
            bail!(Dimension, "{name}: kernel {k} exceeds cube extent {n}");
        }
        let out = (n - k) / stride + 1;
        let mut result = Vec::with_capacity(filters * out * out * out);
        for (f, &b) in bias.iter().enumerate().take(filters) {
            for a in 0..out {
                for bb in 0..out {
                    for cc in 0..out {
                        let mut acc = b;
                        for p in 0..k {
                            for q in 0..k {
                                for r in 0..k {
                                    let cell = u[a * stride + p] * v[bb * stride + q] * w[cc * stride + r];
                                    acc = acc + kernels[((f * k + p) * k + q) * k + r] * cell;
                                }
                            }
                        }
                        result.push(acc);
                    }
                }
            }
        }
        Ok(result)
    }

    /// Training-mode batch normalisation over `rows`.
    fn batchnorm(&self, name: &str, rows: &mut [Vec<Dd>]) -> Result<()> {
        let (_, gamma) = self.get(&format!("{name}.gamma"))?;
        let (_, beta) = self.get(&format!("{name}.beta"))?;
        let n = Dd::from(rows.len() as f64);
        for j in 0..gamma.len() {
            let mean = rows.iter().fold(Dd::ZERO, |s, r| s + r[j]) / n;
            let var = rows.iter().fold(Dd::ZERO, |s, r| s + (r[j] - mean) * (r[j] - mean)) / n;
            let inv = Dd::ONE / (var + Dd::from(BN_EPSILON)).sqrt();
            for r in rows.iter_mut() {
                r[j] = gamma[j] * (r[j] - mean) * inv + beta[j];
            }
        }
        Ok(())
    }
}

fn step_name(base: &str, shared: bool, k: usize) -> String {
    if shared {
        String::from(base)
    } else {
        format!("{base}.s{k:02}")
    }
}

/// Training-mode squared-error loss of `batch` under `config`, evaluated in
/// double-double. Dropout must be disabled.
pub fn reference_loss(
    config: &HoseqConfig,
    store: &ParamStore,
    batch: &[&MultimodalInstance],
) -> Result<ReferenceLoss> {
    if config.common.dropout_rate != 0.0 || config.unique.dropout_rate != 0.0 {
        bail!(Config, "reference loss is defined without dropout");
    }
    if batch.is_empty() {
        bail!(Data, "loss over an empty batch");
    }
    let mut p = Params { store, activation: config.activation, regime: 0xcbf2_9ce4_8422_2325 };
    let mode = config.mode;

    let mut h_com = Vec::new();
    let mut y_com = Vec::new();
    if mode != ModelMode::UniqueOnly {
        let c = &config.common;
        let mut rows = Vec::with_capacity(batch.len());
        for x in batch {
            let mut latent = |tag: &str, seq: &crate::Tensor| -> Result<Vec<Dd>> {
                let h = p.lstm(&format!("common.lstm.{tag}"), seq.data(), seq.shape()[1])?;
                let pre = p.dense(&format!("common.proj.{tag}"), &h)?;
                Ok(p.activate(&pre))
            };
            let l = latent("l", x.language())?;
            let v = latent("v", x.visual())?;
            let a = latent("a", x.acoustic())?;
            rows.push(p.cube_conv("common.conv", !config.batchnorm, &v, &a, &l, c.conv_stride)?);
        }
        if config.batchnorm {
            p.batchnorm("common.bn", &mut rows)?;
        }
        for row in rows {
            let mut h = p.activate(&row);
            for i in 0..c.fc_widths.len() {
                let pre = p.dense(&format!("common.fc.{i}"), &h)?;
                h = p.activate(&pre);
            }
            y_com.push(p.dense("common.head", &h)?[0]);
            h_com.push(h);
        }
    }

    let mut h_uni = Vec::new();
    let mut y_uni = Vec::new();
    if mode != ModelMode::CommonOnly {
        let u = &config.unique;
        let shared = u.share_step_weights;
        let biased = !(config.batchnorm && (shared || batch.first().is_none_or(|x| x.dims().t_k == 1)));
        let mut rows = Vec::new();
        for x in batch {
            for k in 0..x.dims().t_k {
                let (xl, xv, xa) = x.step(k);
                let to_dd = |s: &[f64]| s.iter().map(|&v| Dd::from(v)).collect::<Vec<_>>();
                let proj = step_name("unique.step_proj", shared, k);
                let pre = p.dense(&format!("{proj}.l"), &to_dd(xl))?;
                let l = p.activate(&pre);
                let pre = p.dense(&format!("{proj}.v"), &to_dd(xv))?;
                let v = p.activate(&pre);
                let pre = p.dense(&format!("{proj}.a"), &to_dd(xa))?;
                let a = p.activate(&pre);
                let conv = step_name("unique.step_conv", shared, k);
                rows.push(p.cube_conv(&conv, biased, &v, &a, &l, u.conv_stride)?);
            }
        }
        if config.batchnorm {
            p.batchnorm("unique.bn", &mut rows)?;
        }
        let mut rows = rows.into_iter();
        for x in batch {
            let mut pool = vec![Dd::ZERO; u.step_fc_width];
            for k in 0..x.dims().t_k {
                let z = p.activate(&rows.next().expect("one row per step"));
                let pre = p.dense(&step_name("unique.step_fc", shared, k), &z)?;
                let h_k = p.activate(&pre);
                pool.iter_mut().zip(&h_k).for_each(|(s, h)| *s = *s + *h);
            }
            let pre = p.dense("unique.pool", &pool)?;
            let h = p.activate(&pre);
            y_uni.push(p.dense("unique.head", &h)?[0]);
            h_uni.push(h);
        }
    }

    let predictions: Vec<Dd> = match mode {
        ModelMode::CommonOnly => y_com,
        ModelMode::UniqueOnly => y_uni,
        ModelMode::Full => h_com
            .iter()
            .zip(&h_uni)
            .map(|(c, u)| {
                let mean: Vec<Dd> = c.iter().zip(u).map(|(a, b)| (*a + *b).scale2(-1)).collect();
                p.dense("fusion.head", &mean).map(|y| y[0])
            })
            .collect::<Result<_>>()?,
    };
    let mut sum = Dd::ZERO;
    for (y, x) in predictions.iter().zip(batch) {
        let r = *y - Dd::from(x.label());
        sum = sum + r * r;
    }
    Ok(ReferenceLoss { value: sum / Dd::from(batch.len() as f64), regime: p.regime })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Dd, b: f64, tol: f64) -> bool {
        (a.to_f64() - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn arithmetic_beyond_double() {
        let third = Dd::ONE / Dd::from(3.0);
        let back = third * Dd::from(3.0) - Dd::ONE;
        assert!(back.to_f64().abs() < 1e-31);
        let tiny = Dd::from(1.0) + Dd::from(1e-20);
        assert_eq!((tiny - Dd::ONE).to_f64(), 1e-20);
        let two = Dd::from(2.0).sqrt();
        assert!((two * two - Dd::from(2.0)).to_f64().abs() < 1e-30);
    }

    #[test]
    fn transcendental_functions() {
        for x in [-30.0, -2.5, -1e-3, 0.0, 1e-9, 0.7, 3.0, 40.0] {
            assert!(close(Dd::from(x).exp(), libm::exp(x), 1e-15), "exp {x}");
            assert!(close(Dd::from(x).tanh(), libm::tanh(x), 1e-15), "tanh {x}");
            assert!(close(Dd::from(x).sigmoid(), 1.0 / (1.0 + libm::exp(-x)), 1e-15), "sigmoid {x}");
        }
        // e = exp(1) to double-double precision.
        let e = Dd::ONE.exp();
        assert_eq!(e.hi, core::f64::consts::E);
        assert!((e.lo - 1.445_646_891_729_250_2e-16).abs() < 1e-30);
        // exp(a) exp(-a) = 1 well beyond f64 precision.
        let a = Dd::from(0.375) + Dd::from(1e-19);
        assert!((a.exp() * (-a).exp() - Dd::ONE).to_f64().abs() < 1e-29);
    }
}
