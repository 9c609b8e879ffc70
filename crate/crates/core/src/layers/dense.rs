use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::tensor::Tensor;

fn check(x_len: usize, w: &Tensor, b_len: usize) -> Result<(usize, usize)> {
    if w.rank() != 2 {
        bail!(Dimension, "dense weight must be a matrix, got shape {:?}", w.shape());
    }
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    if x_len != rows {
        bail!(Dimension, "dense input has length {x_len}, weight expects {rows}");
    }
    if b_len != cols {
        bail!(Dimension, "dense bias has length {b_len}, weight produces {cols}");
    }
    Ok((rows, cols))
}

/// `out = xᵀW + b` with `W` stored as `[in, out]`.
pub fn dense(x: &[f64], w: &Tensor, b: &[f64]) -> Result<Vec<f64>> {
    let (_, cols) = check(x.len(), w, b.len())?;
    let mut out = b.to_vec();
    for (xi, row) in x.iter().zip(w.data().chunks_exact(cols)) {
        if *xi == 0.0 {
            continue;
        }
        out.iter_mut().zip(row).for_each(|(o, wij)| *o += xi * wij);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Vec<f64>,
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

pub fn dense_backward(x: &[f64], w: &Tensor, grad_out: &[f64]) -> Result<DenseGrads> {
    let (rows, cols) = check(x.len(), w, grad_out.len())?;
    let mut dw = vec![0.0; rows * cols];
    let mut dx = vec![0.0; rows];
    for (i, (row, drow)) in w.data().chunks_exact(cols).zip(dw.chunks_exact_mut(cols)).enumerate() {
        let xi = x[i];
        let mut acc = 0.0;
        for ((wij, dwij), g) in row.iter().zip(drow.iter_mut()).zip(grad_out) {
            acc += wij * g;
            *dwij = xi * g;
        }
        dx[i] = acc;
    }
    Ok(DenseGrads {
        input: dx,
        weight: Tensor::from_vec(&[rows, cols], dw)?,
        bias: grad_out.to_vec(),
    })
}
