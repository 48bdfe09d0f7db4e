//! Dense kernels behind the tape ops.
//!
//! `matmul` accepts `[.., m, k] x [k, n]` (the right operand broadcast over
//! the leading axes) and `[b.., m, k] x [b.., k, n]` with equal batch axes.

use crate::ad::tensor::Tensor;
use crate::error::{Error, Result};

/// `c = a * b (+ c)` on row-major blocks, with optional transposition of
/// either operand expressed through strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slice lengths are checked above against the (m, k, n) extents
    // and the strides never address past them.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

struct MatmulDims {
    batches: usize,
    m: usize,
    k: usize,
    n: usize,
    rhs_batched: bool,
}

fn matmul_dims(a: &[usize], b: &[usize]) -> Result<MatmulDims> {
    let bad = || Error::Shape {
        op: "matmul",
        detail: format!("{a:?} x {b:?}"),
    };
    if a.len() < 2 || b.len() < 2 {
        return Err(bad());
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != k2 {
        return Err(bad());
    }
    if b.len() == 2 {
        let lead: usize = a[..a.len() - 2].iter().product();
        Ok(MatmulDims {
            batches: 1,
            m: lead * m,
            k,
            n,
            rhs_batched: false,
        })
    } else if a.len() == b.len() && a[..a.len() - 2] == b[..b.len() - 2] {
        Ok(MatmulDims {
            batches: a[..a.len() - 2].iter().product(),
            m,
            k,
            n,
            rhs_batched: true,
        })
    } else {
        Err(bad())
    }
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let d = matmul_dims(a.shape(), b.shape())?;
    let mut out = vec![0.0; d.batches * d.m * d.n];
    for t in 0..d.batches {
        let ab = &a.data()[t * d.m * d.k..(t + 1) * d.m * d.k];
        let bb = if d.rhs_batched {
            &b.data()[t * d.k * d.n..(t + 1) * d.k * d.n]
        } else {
            b.data()
        };
        gemm(d.m, d.k, d.n, ab, false, bb, false, &mut out[t * d.m * d.n..(t + 1) * d.m * d.n], false);
    }
    let mut shape = a.shape()[..a.rank() - 1].to_vec();
    shape.push(d.n);
    Tensor::new(shape, out)
}

/// `da += g * b^T`
pub(crate) fn matmul_grad_lhs(g: &[f64], a: &Tensor, b: &Tensor, da: &mut [f64]) {
    let d = matmul_dims(a.shape(), b.shape()).expect("validated in forward");
    for t in 0..d.batches {
        let gb = &g[t * d.m * d.n..(t + 1) * d.m * d.n];
        let bb = if d.rhs_batched {
            &b.data()[t * d.k * d.n..(t + 1) * d.k * d.n]
        } else {
            b.data()
        };
        gemm(d.m, d.n, d.k, gb, false, bb, true, &mut da[t * d.m * d.k..(t + 1) * d.m * d.k], true);
    }
}

/// `db += a^T * g`
pub(crate) fn matmul_grad_rhs(g: &[f64], a: &Tensor, b: &Tensor, db: &mut [f64]) {
    let d = matmul_dims(a.shape(), b.shape()).expect("validated in forward");
    for t in 0..d.batches {
        let gb = &g[t * d.m * d.n..(t + 1) * d.m * d.n];
        let ab = &a.data()[t * d.m * d.k..(t + 1) * d.m * d.k];
        let out = if d.rhs_batched {
            &mut db[t * d.k * d.n..(t + 1) * d.k * d.n]
        } else {
            &mut db[..]
        };
        gemm(d.k, d.m, d.n, ab, true, gb, false, out, true);
    }
}

/// Swaps the last two axes of a raw buffer laid out with `shape`.
pub(crate) fn transpose_last_raw(data: &[f64], shape: &[usize]) -> Vec<f64> {
    let r = shape.len();
    let (rows, cols) = (shape[r - 2], shape[r - 1]);
    let mut out = vec![0.0; data.len()];
    for (src, dst) in data.chunks(rows * cols).zip(out.chunks_mut(rows * cols)) {
        for i in 0..rows {
            for j in 0..cols {
                dst[j * rows + i] = src[i * cols + j];
            }
        }
    }
    out
}

pub(crate) fn transpose_last(a: &Tensor) -> Result<Tensor> {
    if a.rank() < 2 {
        return Err(Error::Shape {
            op: "transpose",
            detail: format!("needs rank >= 2, got {:?}", a.shape()),
        });
    }
    let mut shape = a.shape().to_vec();
    let r = shape.len();
    shape.swap(r - 1, r - 2);
    Tensor::new(shape, transpose_last_raw(a.data(), a.shape()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive_product() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 - 2.5).collect();
        let b: Vec<f64> = (0..12).map(|v| (v as f64).sin()).collect();
        let ta = Tensor::new([2, 3], a.clone()).unwrap();
        let tb = Tensor::new([3, 4], b.clone()).unwrap();
        let c = matmul(&ta, &tb).unwrap();
        assert_eq!(c.shape(), &[2, 4]);
        for (x, y) in c.data().iter().zip(naive(&a, &b, 2, 3, 4)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_lhs_broadcasts_rhs() {
        let a = Tensor::new([2, 2, 3], (0..12).map(f64::from).collect()).unwrap();
        let b = Tensor::new([3, 1], vec![1.0, 1.0, 1.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 2, 1]);
        assert_eq!(c.data(), &[3.0, 12.0, 21.0, 30.0]);
    }

    #[test]
    fn transpose_round_trip() {
        let a = Tensor::new([2, 2, 3], (0..12).map(f64::from).collect()).unwrap();
        let t = transpose_last(&a).unwrap();
        assert_eq!(t.shape(), &[2, 3, 2]);
        assert_eq!(&t.data()[..6], &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        assert_eq!(transpose_last(&t).unwrap(), a);
    }
}
