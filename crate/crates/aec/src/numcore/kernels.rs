//! Shared inner loops.
//!
//! The offline (autodiff) forward and the streaming forward must produce
//! bit-identical values, so both are built on these kernels and every kernel
//! fixes its floating-point accumulation order: output starts from the bias,
//! then input contributions are added in ascending index order.

use crate::Scalar;

/// `out = b + x * w` for one row. `w` is row-major `(i_dim, o_dim)`.
pub fn affine_row<S: Scalar>(x: &[S], w: &[S], b: &[S], out: &mut [S]) {
    let o_dim = b.len();
    debug_assert_eq!(x.len() * o_dim, w.len());
    debug_assert_eq!(out.len(), o_dim);
    out.copy_from_slice(b);
    for (xi, wrow) in x.iter().zip(w.chunks_exact(o_dim)) {
        let xi = *xi;
        for (o, wv) in out.iter_mut().zip(wrow) {
            *o = *o + xi * *wv;
        }
    }
}

/// Row-batched affine map: `x` is `(rows, i_dim)`, `w` is `(i_dim, o_dim)`.
pub fn affine_rows<S: Scalar>(x: &[S], i_dim: usize, w: &[S], b: &[S], out: &mut [S]) {
    let o_dim = b.len();
    for (xrow, orow) in x.chunks_exact(i_dim).zip(out.chunks_exact_mut(o_dim)) {
        affine_row(xrow, w, b, orow);
    }
}

/// `out = a * b^T`: `a` is `(rows, k)`, `b` is `(j_dim, k)`, `out` is `(rows, j_dim)`.
/// Used by backward passes (gradient w.r.t. an affine input).
pub fn matmul_abt<S: Scalar>(a: &[S], k: usize, b: &[S], out: &mut [S]) {
    let j_dim = b.len() / k;
    for (arow, orow) in a.chunks_exact(k).zip(out.chunks_exact_mut(j_dim)) {
        for (o, brow) in orow.iter_mut().zip(b.chunks_exact(k)) {
            let mut acc = S::zero();
            for (av, bv) in arow.iter().zip(brow) {
                acc = acc + *av * *bv;
            }
            *o = acc;
        }
    }
}

pub fn sigmoid_scalar<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Numerically stabilized softmax of one row, in place.
pub fn softmax_row<S: Scalar>(row: &mut [S]) {
    let mut max = S::neg_infinity();
    for v in row.iter() {
        if *v > max {
            max = *v;
        }
    }
    let mut sum = S::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    let inv = S::one() / sum;
    for v in row.iter_mut() {
        *v = *v * inv;
    }
}
