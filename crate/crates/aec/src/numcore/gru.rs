//! Gated recurrent unit.
//!
//! Gate order is fixed as (reset `r`, update `z`, candidate `n`):
//!
//! ```text
//! r = sigmoid(x*W_ih[r] + b_ih[r] + h*W_hh[r] + b_hh[r])
//! z = sigmoid(x*W_ih[z] + b_ih[z] + h*W_hh[z] + b_hh[z])
//! n = tanh  (x*W_ih[n] + b_ih[n] + r .* (h*W_hh[n] + b_hh[n]))
//! h' = (1 - z) .* n + z .* h
//! ```
//!
//! `W_ih` is `(i, 3n)`, `W_hh` is `(n, 3n)`, biases are `(3n)`, with the three
//! gate blocks laid out side by side in that order.

use crate::numcore::graph::{BackwardCtx, Graph, GraphOp, TensorId};
use crate::numcore::kernels::{affine_row, affine_rows, matmul_abt, sigmoid_scalar};
use crate::numcore::ops::GruIds;
use crate::numcore::Tensor;
use crate::{Error, Result, Scalar};

/// Borrowed views of one GRU's weights, for the non-graph step API.
#[derive(Clone, Copy)]
pub struct GruWeights<'a, S> {
    pub w_ih: &'a [S],
    pub w_hh: &'a [S],
    pub b_ih: &'a [S],
    pub b_hh: &'a [S],
}

impl<'a, S: Scalar> GruWeights<'a, S> {
    pub fn hidden(&self) -> usize {
        self.b_ih.len() / 3
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.len() / self.b_ih.len()
    }

    fn validate(&self, x_len: usize, h_len: usize) -> Result<()> {
        let g3 = self.b_ih.len();
        if g3 == 0 || g3 % 3 != 0 || self.b_hh.len() != g3 {
            return Err(Error::dim(
                "gru_step",
                format!("gate biases {} / {} not a multiple of 3", g3, self.b_hh.len()),
            ));
        }
        let n = g3 / 3;
        if h_len != n || self.w_hh.len() != n * g3 || self.w_ih.len() != x_len * g3 {
            return Err(Error::dim(
                "gru_step",
                format!(
                    "x {}, h {}, w_ih {}, w_hh {} inconsistent with hidden {}",
                    x_len,
                    h_len,
                    self.w_ih.len(),
                    self.w_hh.len(),
                    n
                ),
            ));
        }
        Ok(())
    }
}

/// Per-element gate math once the two affine maps are done. `gx` and `gh`
/// are the input-side and hidden-side pre-activations (each `3n`). Optional
/// `saved` slices capture what the sequence op's backward pass replays.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gru_gates<S: Scalar>(
    gx: &[S],
    gh: &[S],
    h_prev: &[S],
    h_out: &mut [S],
    mut saved: Option<(&mut [S], &mut [S], &mut [S], &mut [S])>,
) {
    let n = h_out.len();
    for j in 0..n {
        let r = sigmoid_scalar(gx[j] + gh[j]);
        let z = sigmoid_scalar(gx[n + j] + gh[n + j]);
        let ghn = gh[2 * n + j];
        let cand = (gx[2 * n + j] + r * ghn).tanh();
        h_out[j] = (S::one() - z) * cand + z * h_prev[j];
        if let Some((sr, sz, sn, sghn)) = saved.as_mut() {
            sr[j] = r;
            sz[j] = z;
            sn[j] = cand;
            sghn[j] = ghn;
        }
    }
}

/// One GRU step for a single feature row. The streaming forward and the
/// recorded sequence op both reduce to this, so they agree bit for bit.
pub(crate) fn gru_row_step<S: Scalar>(
    gx: &[S],
    h_prev: &[S],
    w_hh: &[S],
    b_hh: &[S],
    gh_scratch: &mut [S],
    h_out: &mut [S],
    saved: Option<(&mut [S], &mut [S], &mut [S], &mut [S])>,
) {
    affine_row(h_prev, w_hh, b_hh, gh_scratch);
    gru_gates(gx, gh_scratch, h_prev, h_out, saved);
}

/// Single step, allocating API: `h' = gru(x, h)`.
pub fn gru_step<S: Scalar>(x: &[S], h: &[S], w: &GruWeights<'_, S>) -> Result<Vec<S>> {
    w.validate(x.len(), h.len())?;
    let g3 = w.b_ih.len();
    let mut gx = vec![S::zero(); g3];
    affine_row(x, w.w_ih, w.b_ih, &mut gx);
    let mut gh = vec![S::zero(); g3];
    let mut out = vec![S::zero(); h.len()];
    gru_row_step(&gx, h, w.w_hh, w.b_hh, &mut gh, &mut out, None);
    Ok(out)
}

#[derive(Clone, Copy, PartialEq)]
enum SeqAxis {
    Time,
    Freq,
}

/// GRU run across one axis of a `(t, f, i)` tensor with the other axis as
/// batch. Time sequences carry state across frames (one independent sequence
/// per frequency bin); frequency sequences sweep low to high within each
/// frame and restart from a zero state every frame.
struct GruSeqOp<S> {
    axis: SeqAxis,
    t: usize,
    f: usize,
    i_dim: usize,
    n: usize,
    // Saved activations, laid out (step, batch_row, n).
    r: Vec<S>,
    z: Vec<S>,
    cand: Vec<S>,
    ghn: Vec<S>,
}

impl<S: Scalar> GruSeqOp<S> {
    fn steps(&self) -> usize {
        match self.axis {
            SeqAxis::Time => self.t,
            SeqAxis::Freq => self.f,
        }
    }

    fn batch(&self) -> usize {
        match self.axis {
            SeqAxis::Time => self.f,
            SeqAxis::Freq => self.t,
        }
    }

    /// Row index into the `(t*f)`-row layout for (step, batch_row).
    fn row(&self, step: usize, b: usize) -> usize {
        match self.axis {
            SeqAxis::Time => step * self.f + b,
            SeqAxis::Freq => b * self.f + step,
        }
    }
}

impl<S: Scalar> GraphOp<S> for GruSeqOp<S> {
    fn name(&self) -> &'static str {
        "gru_seq"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let n = self.n;
        let g3 = 3 * n;
        let steps = self.steps();
        let batch = self.batch();
        let rows = self.t * self.f;

        let out = ctx.tensors[ctx.output.0].data();
        let x = ctx.tensors[ctx.inputs[0].0].data();
        let w_ih = ctx.tensors[ctx.inputs[1].0].data();
        let w_hh = ctx.tensors[ctx.inputs[2].0].data();
        let g = ctx.grad_out;

        let mut dgx = vec![S::zero(); rows * g3];
        let mut dh = vec![S::zero(); batch * n];
        let mut dwhh = vec![S::zero(); n * g3];
        let mut dbhh = vec![S::zero(); g3];
        let mut dgh = vec![S::zero(); g3];
        let zeros = vec![S::zero(); n];

        for step in (0..steps).rev() {
            for b in 0..batch {
                let row = self.row(step, b);
                let sidx = (step * batch + b) * n;
                let h_prev: &[S] = if step == 0 {
                    &zeros
                } else {
                    &out[self.row(step - 1, b) * n..][..n]
                };
                let r = &self.r[sidx..][..n];
                let z = &self.z[sidx..][..n];
                let cand = &self.cand[sidx..][..n];
                let ghn = &self.ghn[sidx..][..n];
                let gout = &g[row * n..][..n];
                let dgx_row = &mut dgx[row * g3..][..g3];
                let dh_row = &mut dh[b * n..][..n];

                for j in 0..n {
                    let dht = gout[j] + dh_row[j];
                    let dz = dht * (h_prev[j] - cand[j]);
                    let dcand = dht * (S::one() - z[j]);
                    let dn_pre = dcand * (S::one() - cand[j] * cand[j]);
                    let dr = dn_pre * ghn[j];
                    let da_r = dr * r[j] * (S::one() - r[j]);
                    let da_z = dz * z[j] * (S::one() - z[j]);
                    let dghn = dn_pre * r[j];
                    dgx_row[j] = da_r;
                    dgx_row[n + j] = da_z;
                    dgx_row[2 * n + j] = dn_pre;
                    dgh[j] = da_r;
                    dgh[n + j] = da_z;
                    dgh[2 * n + j] = dghn;
                    // Direct path through the update gate; the recurrent
                    // matvec contribution is added below.
                    dh_row[j] = dht * z[j];
                }
                for (m, (hm, dwrow)) in h_prev.iter().zip(dwhh.chunks_exact_mut(g3)).enumerate() {
                    let hm = *hm;
                    for (dw, dg) in dwrow.iter_mut().zip(&dgh) {
                        *dw = *dw + hm * *dg;
                    }
                    let wrow = &w_hh[m * g3..][..g3];
                    let mut acc = S::zero();
                    for (wv, dg) in wrow.iter().zip(&dgh) {
                        acc = acc + *wv * *dg;
                    }
                    dh_row[m] = dh_row[m] + acc;
                }
                for (db, dg) in dbhh.iter_mut().zip(&dgh) {
                    *db = *db + *dg;
                }
            }
        }

        // Input-side affine backward, batched over every (t, f) row.
        {
            let mut dx = vec![S::zero(); rows * self.i_dim];
            matmul_abt(&dgx, g3, w_ih, &mut dx);
            let gx_in = &mut ctx.grads[ctx.inputs[0].0];
            for (a, v) in gx_in.iter_mut().zip(&dx) {
                *a = *a + *v;
            }
        }
        {
            let gwih = &mut ctx.grads[ctx.inputs[1].0];
            for (xrow, dgrow) in x.chunks_exact(self.i_dim).zip(dgx.chunks_exact(g3)) {
                for (xi, gwrow) in xrow.iter().zip(gwih.chunks_exact_mut(g3)) {
                    let xi = *xi;
                    for (gw, dg) in gwrow.iter_mut().zip(dgrow) {
                        *gw = *gw + xi * *dg;
                    }
                }
            }
        }
        {
            let gwhh = &mut ctx.grads[ctx.inputs[2].0];
            for (a, v) in gwhh.iter_mut().zip(&dwhh) {
                *a = *a + *v;
            }
        }
        {
            let gbih = &mut ctx.grads[ctx.inputs[3].0];
            for dgrow in dgx.chunks_exact(g3) {
                for (a, v) in gbih.iter_mut().zip(dgrow) {
                    *a = *a + *v;
                }
            }
        }
        {
            let gbhh = &mut ctx.grads[ctx.inputs[4].0];
            for (a, v) in gbhh.iter_mut().zip(&dbhh) {
                *a = *a + *v;
            }
        }
    }
}

impl<S: Scalar> Graph<S> {
    /// GRU along time: `(t, f, i) -> (t, f, n)`, causal, one sequence per bin.
    pub fn gru_time(&mut self, x: TensorId, ids: &GruIds) -> Result<TensorId> {
        self.gru_seq(x, ids, SeqAxis::Time)
    }

    /// GRU along frequency: `(t, f, i) -> (t, f, n)`, low to high, state reset
    /// every frame.
    pub fn gru_freq(&mut self, x: TensorId, ids: &GruIds) -> Result<TensorId> {
        self.gru_seq(x, ids, SeqAxis::Freq)
    }

    fn gru_seq(&mut self, x: TensorId, ids: &GruIds, axis: SeqAxis) -> Result<TensorId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(Error::dim(
                "gru_seq",
                format!("expected rank-3 (t, f, i), got {:?}", xs),
            ));
        }
        let (t, f, i_dim) = (xs[0], xs[1], xs[2]);
        let ws = self.shape(ids.w_ih).to_vec();
        let g3 = self.value(ids.b_ih).numel();
        if g3 == 0 || g3 % 3 != 0 {
            return Err(Error::dim("gru_seq", format!("bias length {} not 3n", g3)));
        }
        let n = g3 / 3;
        if ws != [i_dim, g3]
            || self.shape(ids.w_hh) != [n, g3]
            || self.value(ids.b_hh).numel() != g3
        {
            return Err(Error::dim(
                "gru_seq",
                format!(
                    "weights {:?}/{:?} inconsistent with input {} hidden {}",
                    ws,
                    self.shape(ids.w_hh),
                    i_dim,
                    n
                ),
            ));
        }

        let rows = t * f;
        let mut gx_all = vec![S::zero(); rows * g3];
        affine_rows(
            self.value(x).data(),
            i_dim,
            self.value(ids.w_ih).data(),
            self.value(ids.b_ih).data(),
            &mut gx_all,
        );

        let mut op = GruSeqOp {
            axis,
            t,
            f,
            i_dim,
            n,
            r: vec![S::zero(); rows * n],
            z: vec![S::zero(); rows * n],
            cand: vec![S::zero(); rows * n],
            ghn: vec![S::zero(); rows * n],
        };
        let steps = op.steps();
        let batch = op.batch();

        let w_hh = self.value(ids.w_hh).data().to_vec();
        let b_hh = self.value(ids.b_hh).data().to_vec();
        let mut out = vec![S::zero(); rows * n];
        let mut h = vec![S::zero(); batch * n];
        let mut gh = vec![S::zero(); g3];
        let mut h_new = vec![S::zero(); n];
        for step in 0..steps {
            for b in 0..batch {
                let row = op.row(step, b);
                let sidx = (step * batch + b) * n;
                gru_row_step(
                    &gx_all[row * g3..][..g3],
                    &h[b * n..][..n],
                    &w_hh,
                    &b_hh,
                    &mut gh,
                    &mut h_new,
                    Some((
                        &mut op.r[sidx..sidx + n],
                        &mut op.z[sidx..sidx + n],
                        &mut op.cand[sidx..sidx + n],
                        &mut op.ghn[sidx..sidx + n],
                    )),
                );
                h[b * n..][..n].copy_from_slice(&h_new);
                out[row * n..][..n].copy_from_slice(&h_new);
            }
        }

        Ok(self.push_node(
            vec![x, ids.w_ih, ids.w_hh, ids.b_ih, ids.b_hh],
            Tensor::new(vec![t, f, n], out),
            Box::new(op),
        ))
    }
}
