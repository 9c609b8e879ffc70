//! Dense row-major `f64` arrays and the structural operations the fusion
//! networks are built from: trilinear outer products, valid 3D convolution,
//! flattening and first-axis reduction.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};

/// Dense n-dimensional array stored in row-major order.
///
/// Every extent is at least 1 and the rank is at least 1, so a `Tensor` is
/// never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        bail!(Dimension, "tensor rank must be at least 1");
    }
    if let Some(axis) = shape.iter().position(|&e| e == 0) {
        bail!(Dimension, "extent of axis {axis} is zero in shape {shape:?}");
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            bail!(
                Dimension,
                "shape {shape:?} needs {len} values, buffer holds {}",
                data.len()
            );
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self { shape: shape.to_vec(), data: vec![value; len] })
    }

    /// Rank-1 tensor holding a copy of `values`.
    pub fn vector(values: &[f64]) -> Result<Self> {
        Self::from_vec(&[values.len()], values.to_vec())
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(parts: &[Tensor]) -> Result<Self> {
        let Some(first) = parts.first() else {
            bail!(Dimension, "cannot stack an empty list of tensors");
        };
        let mut shape = Vec::with_capacity(first.rank() + 1);
        shape.push(parts.len());
        shape.extend_from_slice(&first.shape);
        let mut data = Vec::with_capacity(first.len() * parts.len());
        for (i, p) in parts.iter().enumerate() {
            if p.shape != first.shape {
                bail!(
                    Dimension,
                    "stack part {i} has shape {:?}, expected {:?}",
                    p.shape,
                    first.shape
                );
            }
            data.extend_from_slice(&p.data);
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false; kept for the `len`/`is_empty` pairing lint.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major offset of a multi-index. Panics on rank or bound violations.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.rank(), "index rank mismatch");
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &e)| {
            assert!(i < e, "index {i} out of bounds for extent {e}");
            acc * e + i
        })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let at = self.offset(index);
        self.data[at] = value;
    }

    /// Same buffer under a new shape with the same element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    /// Row-major linearisation into a rank-1 tensor.
    pub fn flatten(&self) -> Tensor {
        Tensor { shape: vec![self.data.len()], data: self.data.clone() }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            bail!(Dimension, "cannot add shape {:?} into {:?}", other.shape, self.shape);
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Sum over axis 0, dropping that axis.
    pub fn sum_over_first_axis(&self) -> Result<Tensor> {
        if self.rank() < 2 {
            bail!(Dimension, "sum over first axis needs rank >= 2, got {}", self.rank());
        }
        let slice = self.data.len() / self.shape[0];
        let mut out = vec![0.0; slice];
        for chunk in self.data.chunks_exact(slice) {
            out.iter_mut().zip(chunk).for_each(|(o, x)| *o += x);
        }
        Ok(Tensor { shape: self.shape[1..].to_vec(), data: out })
    }
}

/// `T[i][j][k] = u[i] * v[j] * w[k]`.
pub fn outer3(u: &[f64], v: &[f64], w: &[f64]) -> Result<Tensor> {
    if u.is_empty() || v.is_empty() || w.is_empty() {
        bail!(
            Dimension,
            "outer product needs non-empty vectors, got lengths {}/{}/{}",
            u.len(),
            v.len(),
            w.len()
        );
    }
    let mut data = Vec::with_capacity(u.len() * v.len() * w.len());
    for &a in u {
        for &b in v {
            let ab = a * b;
            data.extend(w.iter().map(|&c| ab * c));
        }
    }
    Ok(Tensor { shape: vec![u.len(), v.len(), w.len()], data })
}

/// Gradients of a scalar loss with respect to the three factors of
/// [`outer3`], given the gradient with respect to the cube.
pub fn outer3_backward(
    u: &[f64],
    v: &[f64],
    w: &[f64],
    grad: &Tensor,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if grad.shape() != [u.len(), v.len(), w.len()] {
        bail!(
            Dimension,
            "outer product gradient shape {:?} does not match factors {}/{}/{}",
            grad.shape(),
            u.len(),
            v.len(),
            w.len()
        );
    }
    let mut du = vec![0.0; u.len()];
    let mut dv = vec![0.0; v.len()];
    let mut dw = vec![0.0; w.len()];
    let g = grad.data();
    let mut at = 0;
    for (i, &a) in u.iter().enumerate() {
        for (j, &b) in v.iter().enumerate() {
            let row = &g[at..at + w.len()];
            let gw: f64 = row.iter().zip(w).map(|(x, c)| x * c).sum();
            du[i] += b * gw;
            dv[j] += a * gw;
            let ab = a * b;
            dw.iter_mut().zip(row).for_each(|(d, x)| *d += ab * x);
            at += w.len();
        }
    }
    Ok((du, dv, dw))
}

/// Output extent of a valid (unpadded) convolution along one axis.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize) -> usize {
    (input - kernel) / stride + 1
}

fn conv_geometry(input: &Tensor, kernels: &Tensor, stride: usize) -> Result<[usize; 4]> {
    if input.rank() != 3 {
        bail!(Dimension, "conv3d input must be rank 3, got {:?}", input.shape());
    }
    if kernels.rank() != 4 {
        bail!(
            Dimension,
            "conv3d kernel bank must be rank 4 (filters x depth x height x width), got {:?}",
            kernels.shape()
        );
    }
    if stride == 0 {
        bail!(Config, "conv3d stride must be positive");
    }
    let mut out = [kernels.shape()[0], 0, 0, 0];
    for axis in 0..3 {
        let (i, k) = (input.shape()[axis], kernels.shape()[axis + 1]);
        if k > i {
            bail!(Dimension, "kernel extent {k} exceeds input extent {i} on axis {axis}");
        }
        out[axis + 1] = conv_out_extent(i, k, stride);
    }
    Ok(out)
}

/// Valid 3D convolution (cross-correlation) of a single-channel cube with a
/// bank of `F` kernels stacked as `[F, kd, kh, kw]`. Returns `[F, od, oh, ow]`.
pub fn conv3d(input: &Tensor, kernels: &Tensor, bias: &[f64], stride: usize) -> Result<Tensor> {
    let out_shape = conv_geometry(input, kernels, stride)?;
    if bias.len() != out_shape[0] {
        bail!(Dimension, "conv3d has {} kernels but {} biases", out_shape[0], bias.len());
    }
    let [_, ih, iw] = [input.shape()[0], input.shape()[1], input.shape()[2]];
    let [kd, kh, kw] = [kernels.shape()[1], kernels.shape()[2], kernels.shape()[3]];
    let [_, od, oh, ow] = out_shape;
    let ksize = kd * kh * kw;
    let x = input.data();
    let mut out = Vec::with_capacity(out_shape.iter().product());
    for (f, kernel) in kernels.data().chunks_exact(ksize).enumerate() {
        for z in 0..od {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = bias[f];
                    let mut kat = 0;
                    for dz in 0..kd {
                        for dy in 0..kh {
                            let base = ((z * stride + dz) * ih + y * stride + dy) * iw + xo * stride;
                            for (kv, xv) in kernel[kat..kat + kw].iter().zip(&x[base..base + kw]) {
                                acc += kv * xv;
                            }
                            kat += kw;
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    Tensor::from_vec(&out_shape, out)
}

/// Gradients produced by [`conv3d_backward`].
#[derive(Debug, Clone)]
pub struct Conv3dGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Vec<f64>,
}

pub fn conv3d_backward(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    grad_out: &Tensor,
) -> Result<Conv3dGrads> {
    let out_shape = conv_geometry(input, kernels, stride)?;
    if grad_out.shape() != out_shape {
        bail!(
            Dimension,
            "conv3d output gradient has shape {:?}, expected {:?}",
            grad_out.shape(),
            out_shape
        );
    }
    let [_, ih, iw] = [input.shape()[0], input.shape()[1], input.shape()[2]];
    let [kd, kh, kw] = [kernels.shape()[1], kernels.shape()[2], kernels.shape()[3]];
    let [_, od, oh, ow] = out_shape;
    let ksize = kd * kh * kw;
    let x = input.data();
    let mut dx = Tensor::zeros(input.shape())?;
    let mut dk = Tensor::zeros(kernels.shape())?;
    let mut db = vec![0.0; out_shape[0]];
    let g = grad_out.data();
    let per_filter = od * oh * ow;
    for (f, kernel) in kernels.data().chunks_exact(ksize).enumerate() {
        let gk = &mut dk.data_mut()[f * ksize..(f + 1) * ksize];
        let gf = &g[f * per_filter..(f + 1) * per_filter];
        let mut gat = 0;
        for z in 0..od {
            for y in 0..oh {
                for xo in 0..ow {
                    let go = gf[gat];
                    gat += 1;
                    db[f] += go;
                    if go == 0.0 {
                        continue;
                    }
                    let mut kat = 0;
                    for dz in 0..kd {
                        for dy in 0..kh {
                            let base = ((z * stride + dz) * ih + y * stride + dy) * iw + xo * stride;
                            for dxx in 0..kw {
                                gk[kat + dxx] += go * x[base + dxx];
                                dx.data[base + dxx] += go * kernel[kat + dxx];
                            }
                            kat += kw;
                        }
                    }
                }
            }
        }
    }
    Ok(Conv3dGrads { input: dx, kernels: dk, bias: db })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outer3_basis_and_zero() {
        let e1 = [1.0, 0.0];
        let t = outer3(&e1, &e1, &e1).unwrap();
        assert_eq!(t.shape(), [2, 2, 2]);
        assert_eq!(t.get(&[0, 0, 0]), 1.0);
        assert_eq!(t.data().iter().filter(|&&x| x != 0.0).count(), 1);

        let t = outer3(&[0.0, 0.0, 0.0], &[1.5, -2.0], &[3.0]).unwrap();
        assert!(t.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn outer3_small_product() {
        let t = outer3(&[1.0, 2.0], &[3.0], &[4.0]).unwrap();
        assert_eq!(t.get(&[0, 0, 0]), 12.0);
        assert_eq!(t.get(&[1, 0, 0]), 24.0);
    }

    #[test]
    fn outer3_rejects_empty() {
        assert!(matches!(outer3(&[], &[1.0], &[1.0]), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn conv3d_trivial_cases() {
        let k = Tensor::from_vec(&[1, 2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        let out = conv3d(&Tensor::zeros(&[2, 2, 2]).unwrap(), &k, &[0.0], 1).unwrap();
        assert_eq!(out.shape(), [1, 1, 1, 1]);
        assert_eq!(out.data(), [0.0]);

        let ones = Tensor::filled(&[2, 2, 2], 1.0).unwrap();
        let k = Tensor::filled(&[1, 2, 2, 2], 1.0).unwrap();
        assert_eq!(conv3d(&ones, &k, &[0.0], 1).unwrap().data(), [8.0]);
    }

    #[test]
    fn conv3d_rejects_oversized_kernel() {
        let x = Tensor::zeros(&[2, 3, 3]).unwrap();
        let k = Tensor::zeros(&[1, 3, 3, 3]).unwrap();
        assert!(matches!(conv3d(&x, &k, &[0.0], 1), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn conv3d_output_extents() {
        let x = Tensor::zeros(&[5, 5, 5]).unwrap();
        let k = Tensor::zeros(&[3, 2, 2, 2]).unwrap();
        assert_eq!(conv3d(&x, &k, &[0.0; 3], 2).unwrap().shape(), [3, 2, 2, 2]);
        assert_eq!(conv3d(&x, &k, &[0.0; 3], 1).unwrap().shape(), [3, 4, 4, 4]);
    }

    #[test]
    fn flatten_is_row_major() {
        let t = Tensor::from_vec(&[2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let f = t.flatten();
        assert_eq!(f.shape(), [4]);
        assert_eq!(f.data(), [1.0, 2.0, 3.0, 4.0]);
        let s = Tensor::from_vec(&[1, 1, 1], vec![5.0]).unwrap().flatten();
        assert_eq!(s.data(), [5.0]);
    }

    #[test]
    fn sum_over_first_axis_cases() {
        let t = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.sum_over_first_axis().unwrap().data(), [4.0, 6.0]);
        let one = Tensor::from_vec(&[1, 1], vec![7.5]).unwrap();
        assert_eq!(one.sum_over_first_axis().unwrap().data(), [7.5]);
        let z = Tensor::zeros(&[3, 5]).unwrap().sum_over_first_axis().unwrap();
        assert_eq!(z.shape(), [5]);
        assert!(z.data().iter().all(|&x| x == 0.0));
        assert!(Tensor::vector(&[1.0]).unwrap().sum_over_first_axis().is_err());
    }

    #[test]
    fn shape_validation() {
        assert!(Tensor::zeros(&[]).is_err());
        assert!(Tensor::zeros(&[2, 0]).is_err());
        assert!(Tensor::from_vec(&[2, 2], vec![0.0; 3]).is_err());
    }
}
