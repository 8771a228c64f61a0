//! Model-specific fused graph ops: delay correlation, attention alignment,
//! expected delay, and complex convolving mask application.
//!
//! Each op's forward is phrased frame by frame through the `pub(crate)`
//! kernels at the top of this file, and the streaming path calls the same
//! kernels with the same accumulation order, which is what makes offline and
//! streaming outputs bit-identical.

use crate::numcore::{BackwardCtx, Graph, GraphOp, Tensor, TensorId};
use crate::{Error, Result, Scalar};

/// Per-channel correlation of two `(f, c)` frames: `out[c] += sum_f a*b`.
/// Caller zeroes `out`; bins accumulate in ascending order.
pub(crate) fn corr_frames<S: Scalar>(a: &[S], b: &[S], out: &mut [S]) {
    let c = out.len();
    for (ar, br) in a.chunks_exact(c).zip(b.chunks_exact(c)) {
        for ((o, av), bv) in out.iter_mut().zip(ar).zip(br) {
            *o = *o + *av * *bv;
        }
    }
}

/// Full inner product of two equal-length frames, ascending order.
pub(crate) fn dot_frames<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (av, bv) in a.iter().zip(b) {
        acc = acc + *av * *bv;
    }
    acc
}

/// `dst += w * src`, element order ascending.
pub(crate) fn axpy_frame<S: Scalar>(w: S, src: &[S], dst: &mut [S]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = *d + w * *s;
    }
}

/// Attention-weighted expected delay of one score row: `sum_d row[d] * d`.
pub(crate) fn expected_delay_row<S: Scalar>(row: &[S]) -> S {
    let mut acc = S::zero();
    for (d, v) in row.iter().enumerate() {
        acc = acc + *v * S::of_usize(d);
    }
    acc
}

/// Apply one frame of complex convolving masks. `mask_row` is `(f,
/// kt*kf*2)`; `spec_frames[tau]` is the input spectrum frame at `t - tau`
/// (`(f, 2)` interleaved re/im), already zero-padded by the caller when the
/// frame predates the signal. Frequency taps are centered: tap `phi` reads
/// bin `f + phi - kf/2`, skipping out-of-range bins.
pub(crate) fn ccm_apply_frame<S: Scalar>(
    mask_row: &[S],
    spec_frames: &[&[S]],
    kt: usize,
    kf: usize,
    bins: usize,
    out: &mut [S],
) {
    let off = kf / 2;
    let width = kt * kf * 2;
    for f in 0..bins {
        let m = &mask_row[f * width..][..width];
        let mut re = S::zero();
        let mut im = S::zero();
        for (tau, frame) in spec_frames.iter().enumerate().take(kt) {
            for phi in 0..kf {
                let fs = f + phi;
                if fs < off || fs - off >= bins {
                    continue;
                }
                let fs = fs - off;
                let mr = m[(tau * kf + phi) * 2];
                let mi = m[(tau * kf + phi) * 2 + 1];
                let yr = frame[2 * fs];
                let yi = frame[2 * fs + 1];
                re = re + mr * yr - mi * yi;
                im = im + mr * yi + mi * yr;
            }
        }
        out[2 * f] = re;
        out[2 * f + 1] = im;
    }
}

/// `out(t, d, c) = sum_f mic(t, f, c) * ref(t - d, f, c)`, zero when the
/// lagged frame predates the signal.
struct DelayCorrelationOp {
    t: usize,
    f: usize,
    c: usize,
    h: usize,
}

impl<S: Scalar> GraphOp<S> for DelayCorrelationOp {
    fn name(&self) -> &'static str {
        "delay_correlation"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let (t_dim, f_dim, c_dim, h) = (self.t, self.f, self.c, self.h);
        let mic = ctx.tensors[ctx.inputs[0].0].data();
        let refr = ctx.tensors[ctx.inputs[1].0].data();
        let g = ctx.grad_out;
        // Split borrows: accumulate into local buffers, then add once.
        let mut dmic = vec![S::zero(); mic.len()];
        let mut dref = vec![S::zero(); refr.len()];
        for t in 0..t_dim {
            for d in 0..h.min(t + 1) {
                let grow = &g[(t * h + d) * c_dim..][..c_dim];
                let src = t - d;
                for f in 0..f_dim {
                    let mrow = &mic[(t * f_dim + f) * c_dim..][..c_dim];
                    let rrow = &refr[(src * f_dim + f) * c_dim..][..c_dim];
                    let dm = &mut dmic[(t * f_dim + f) * c_dim..][..c_dim];
                    for ((dmv, gv), rv) in dm.iter_mut().zip(grow).zip(rrow) {
                        *dmv = *dmv + *gv * *rv;
                    }
                    let dr = &mut dref[(src * f_dim + f) * c_dim..][..c_dim];
                    for ((drv, gv), mv) in dr.iter_mut().zip(grow).zip(mrow) {
                        *drv = *drv + *gv * *mv;
                    }
                }
            }
        }
        for (a, v) in ctx.grads[ctx.inputs[0].0].iter_mut().zip(&dmic) {
            *a = *a + *v;
        }
        for (a, v) in ctx.grads[ctx.inputs[1].0].iter_mut().zip(&dref) {
            *a = *a + *v;
        }
    }
}

/// `out(t, f, c) = sum_d attn(t, d) * ref(t - d, f, c)`.
struct AttentionApplyOp {
    t: usize,
    f: usize,
    c: usize,
    h: usize,
}

impl<S: Scalar> GraphOp<S> for AttentionApplyOp {
    fn name(&self) -> &'static str {
        "attention_apply"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let (t_dim, fc, h) = (self.t, self.f * self.c, self.h);
        let attn = ctx.tensors[ctx.inputs[0].0].data();
        let refr = ctx.tensors[ctx.inputs[1].0].data();
        let g = ctx.grad_out;
        let mut dattn = vec![S::zero(); attn.len()];
        let mut dref = vec![S::zero(); refr.len()];
        for t in 0..t_dim {
            let gframe = &g[t * fc..][..fc];
            for d in 0..h.min(t + 1) {
                let src = t - d;
                let rframe = &refr[src * fc..][..fc];
                dattn[t * h + d] = dattn[t * h + d] + dot_frames(gframe, rframe);
                axpy_frame(attn[t * h + d], gframe, &mut dref[src * fc..][..fc]);
            }
        }
        for (a, v) in ctx.grads[ctx.inputs[0].0].iter_mut().zip(&dattn) {
            *a = *a + *v;
        }
        for (a, v) in ctx.grads[ctx.inputs[1].0].iter_mut().zip(&dref) {
            *a = *a + *v;
        }
    }
}

/// `out(t) = sum_d attn(t, d) * d`.
struct ExpectedDelayOp {
    h: usize,
}

impl<S: Scalar> GraphOp<S> for ExpectedDelayOp {
    fn name(&self) -> &'static str {
        "expected_delay"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let ga = &mut ctx.grads[ctx.inputs[0].0];
        for (grow, gv) in ga.chunks_exact_mut(self.h).zip(ctx.grad_out) {
            for (d, a) in grow.iter_mut().enumerate() {
                *a = *a + *gv * S::of_usize(d);
            }
        }
    }
}

/// Complex convolving mask application; see [`ccm_apply_frame`].
struct CcmApplyOp {
    t: usize,
    f: usize,
    kt: usize,
    kf: usize,
}

impl<S: Scalar> GraphOp<S> for CcmApplyOp {
    fn name(&self) -> &'static str {
        "ccm_apply"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let (t_dim, f_dim, kt, kf) = (self.t, self.f, self.kt, self.kf);
        let off = kf / 2;
        let width = kt * kf * 2;
        let mask = ctx.tensors[ctx.inputs[0].0].data();
        let spec = ctx.tensors[ctx.inputs[1].0].data();
        let g = ctx.grad_out;
        let mut dmask = vec![S::zero(); mask.len()];
        let mut dspec = vec![S::zero(); spec.len()];
        for t in 0..t_dim {
            for f in 0..f_dim {
                let gr = g[(t * f_dim + f) * 2];
                let gi = g[(t * f_dim + f) * 2 + 1];
                let m = &mask[(t * f_dim + f) * width..][..width];
                let dm = &mut dmask[(t * f_dim + f) * width..][..width];
                for tau in 0..kt.min(t + 1) {
                    let ts = t - tau;
                    for phi in 0..kf {
                        let fs = f + phi;
                        if fs < off || fs - off >= f_dim {
                            continue;
                        }
                        let fs = fs - off;
                        let yr = spec[(ts * f_dim + fs) * 2];
                        let yi = spec[(ts * f_dim + fs) * 2 + 1];
                        let mr = m[(tau * kf + phi) * 2];
                        let mi = m[(tau * kf + phi) * 2 + 1];
                        dm[(tau * kf + phi) * 2] = dm[(tau * kf + phi) * 2] + gr * yr + gi * yi;
                        dm[(tau * kf + phi) * 2 + 1] =
                            dm[(tau * kf + phi) * 2 + 1] - gr * yi + gi * yr;
                        dspec[(ts * f_dim + fs) * 2] =
                            dspec[(ts * f_dim + fs) * 2] + gr * mr + gi * mi;
                        dspec[(ts * f_dim + fs) * 2 + 1] =
                            dspec[(ts * f_dim + fs) * 2 + 1] - gr * mi + gi * mr;
                    }
                }
            }
        }
        for (a, v) in ctx.grads[ctx.inputs[0].0].iter_mut().zip(&dmask) {
            *a = *a + *v;
        }
        for (a, v) in ctx.grads[ctx.inputs[1].0].iter_mut().zip(&dspec) {
            *a = *a + *v;
        }
    }
}

impl<S: Scalar> Graph<S> {
    /// Score every (frame, candidate delay) pair per channel by correlating
    /// the two encodings over frequency: `(t, f, c) x (t, f, c) -> (t, h, c)`.
    pub fn delay_correlation(
        &mut self,
        mic: TensorId,
        reference: TensorId,
        h: usize,
    ) -> Result<TensorId> {
        let ms = self.shape(mic).to_vec();
        if ms.len() != 3 || self.shape(reference) != ms || h == 0 {
            return Err(Error::dim(
                "delay_correlation",
                format!(
                    "mic {:?} vs ref {:?}, history {}",
                    ms,
                    self.shape(reference),
                    h
                ),
            ));
        }
        let (t_dim, f_dim, c_dim) = (ms[0], ms[1], ms[2]);
        let micd = self.value(mic).data();
        let refd = self.value(reference).data();
        let fc = f_dim * c_dim;
        let mut out = vec![S::zero(); t_dim * h * c_dim];
        for t in 0..t_dim {
            for d in 0..h.min(t + 1) {
                corr_frames(
                    &micd[t * fc..][..fc],
                    &refd[(t - d) * fc..][..fc],
                    &mut out[(t * h + d) * c_dim..][..c_dim],
                );
            }
        }
        Ok(self.push_node(
            vec![mic, reference],
            Tensor::new(vec![t_dim, h, c_dim], out),
            Box::new(DelayCorrelationOp {
                t: t_dim,
                f: f_dim,
                c: c_dim,
                h,
            }),
        ))
    }

    /// Align the reference with per-frame attention over candidate delays:
    /// `(t, h) x (t, f, c) -> (t, f, c)`.
    pub fn attention_apply(&mut self, attn: TensorId, reference: TensorId) -> Result<TensorId> {
        let ash = self.shape(attn).to_vec();
        let rs = self.shape(reference).to_vec();
        if ash.len() != 2 || rs.len() != 3 || ash[0] != rs[0] {
            return Err(Error::dim(
                "attention_apply",
                format!("attention {:?} vs reference {:?}", ash, rs),
            ));
        }
        let (t_dim, h) = (ash[0], ash[1]);
        let (f_dim, c_dim) = (rs[1], rs[2]);
        let fc = f_dim * c_dim;
        let attnd = self.value(attn).data();
        let refd = self.value(reference).data();
        let mut out = vec![S::zero(); t_dim * fc];
        for t in 0..t_dim {
            for d in 0..h.min(t + 1) {
                axpy_frame(
                    attnd[t * h + d],
                    &refd[(t - d) * fc..][..fc],
                    &mut out[t * fc..][..fc],
                );
            }
        }
        Ok(self.push_node(
            vec![attn, reference],
            Tensor::new(vec![t_dim, f_dim, c_dim], out),
            Box::new(AttentionApplyOp {
                t: t_dim,
                f: f_dim,
                c: c_dim,
                h,
            }),
        ))
    }

    /// Soft delay estimate per frame from an attention row: `(t, h) -> (t)`.
    pub fn expected_delay(&mut self, attn: TensorId) -> Result<TensorId> {
        let ash = self.shape(attn).to_vec();
        if ash.len() != 2 {
            return Err(Error::dim(
                "expected_delay",
                format!("expected rank-2 attention, got {:?}", ash),
            ));
        }
        let (t_dim, h) = (ash[0], ash[1]);
        let out: Vec<S> = self
            .value(attn)
            .data()
            .chunks_exact(h)
            .map(expected_delay_row)
            .collect();
        Ok(self.push_node(
            vec![attn],
            Tensor::new(vec![t_dim], out),
            Box::new(ExpectedDelayOp { h }),
        ))
    }

    /// Apply complex convolving masks to a spectrum:
    /// `(t, f, kt*kf*2) x (t, f, 2) -> (t, f, 2)`.
    pub fn ccm_apply(
        &mut self,
        mask: TensorId,
        spec: TensorId,
        kt: usize,
        kf: usize,
    ) -> Result<TensorId> {
        let ms = self.shape(mask).to_vec();
        let ss = self.shape(spec).to_vec();
        if ms.len() != 3
            || ss.len() != 3
            || ss[2] != 2
            || ms[0] != ss[0]
            || ms[1] != ss[1]
            || ms[2] != kt * kf * 2
            || kt == 0
            || kf % 2 == 0
        {
            return Err(Error::dim(
                "ccm_apply",
                format!("mask {:?} vs spec {:?} with taps ({}, {})", ms, ss, kt, kf),
            ));
        }
        let (t_dim, f_dim) = (ss[0], ss[1]);
        let width = kt * kf * 2;
        let maskd = self.value(mask).data();
        let specd = self.value(spec).data();
        let zeros = vec![S::zero(); f_dim * 2];
        let mut out = vec![S::zero(); t_dim * f_dim * 2];
        let mut frames: Vec<&[S]> = Vec::with_capacity(kt);
        for t in 0..t_dim {
            frames.clear();
            for tau in 0..kt {
                frames.push(if tau <= t {
                    &specd[(t - tau) * f_dim * 2..][..f_dim * 2]
                } else {
                    &zeros
                });
            }
            ccm_apply_frame(
                &maskd[t * f_dim * width..][..f_dim * width],
                &frames,
                kt,
                kf,
                f_dim,
                &mut out[t * f_dim * 2..][..f_dim * 2],
            );
        }
        Ok(self.push_node(
            vec![mask, spec],
            Tensor::new(vec![t_dim, f_dim, 2], out),
            Box::new(CcmApplyOp {
                t: t_dim,
                f: f_dim,
                kt,
                kf,
            }),
        ))
    }
}
