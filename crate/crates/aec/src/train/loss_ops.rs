//! Autodiff counterparts of the loss functions, plus graph-side synthesis.
//!
//! Each op captures its fixed side (targets, labels, masks) as plain data
//! and takes only the model output as a graph input. Forward values come
//! from the functions in [`super::losses`], so a graph node and its scalar
//! twin can never disagree.

use crate::dsp::{synth_frame, StftConfig, SynthBasis};
use crate::numcore::{BackwardCtx, Graph, GraphOp, Tensor, TensorId};
use crate::train::losses::{
    bce_core, bce_grad_at, delay_ce_core, delay_loss_ce, delay_mse_core, envelope_interleaved,
    modulation_core, modulation_env_grad, snr_core, LOG_EPS,
};
use crate::{Error, Result, Scalar};

/// Overlap-add synthesis node. The forward pass divides by the accumulated
/// squared window exactly like the offline synthesis; `scale` keeps that
/// per-sample factor (1 where the normalizer was skipped) for the adjoint.
struct IstftOp<S> {
    basis: SynthBasis<S>,
    hop: usize,
    frame: usize,
    scale: Vec<S>,
}

impl<S: Scalar> GraphOp<S> for IstftOp<S> {
    fn name(&self) -> &'static str {
        "istft_wave"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let (t, bins) = {
            let s = ctx.in_shape(0);
            (s[0], s[1])
        };
        // The output is linear in the spectrum, so the adjoint reuses the
        // synthesis rows: spectrum gradients are window-scaled inner
        // products with the same coefficients the forward pass used.
        let gs: Vec<S> = ctx
            .grad_out
            .iter()
            .zip(&self.scale)
            .map(|(g, s)| *g * *s)
            .collect();
        let gin = &mut ctx.grads[ctx.inputs[0].0];
        for ti in 0..t {
            let grow = &mut gin[ti * 2 * bins..][..2 * bins];
            let start = ti * self.hop;
            for i in 0..self.frame {
                let n = start + i;
                if n >= gs.len() {
                    break;
                }
                let gv = gs[n];
                if gv == S::zero() {
                    continue;
                }
                for (a, c) in grow.iter_mut().zip(self.basis.frame_row(i)) {
                    *a = *a + *c * gv;
                }
            }
        }
    }
}

struct SnrLossOp<S> {
    target: Vec<S>,
    den: S,
    clamped: bool,
}

impl<S: Scalar> GraphOp<S> for SnrLossOp<S> {
    fn name(&self) -> &'static str {
        "snr_loss"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        if self.clamped {
            return;
        }
        let g = ctx.grad_out[0];
        // d/de of -10*log10(num/den) with den = sum (t-e)^2 + eps:
        // (20/ln 10) * (e - t) / den. The numerator has no estimate term.
        let k = g * S::of(20.0 / std::f64::consts::LN_10) / self.den;
        let est = ctx.tensors[ctx.inputs[0].0].data();
        let gin = &mut ctx.grads[ctx.inputs[0].0];
        for ((a, e), t) in gin.iter_mut().zip(est).zip(&self.target) {
            *a = *a + k * (*e - *t);
        }
    }
}

struct ModulationLossOp<S> {
    tgt_env: Vec<S>,
    t: usize,
    f: usize,
}

impl<S: Scalar> GraphOp<S> for ModulationLossOp<S> {
    fn name(&self) -> &'static str {
        "modulation_loss"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let est = ctx.tensors[ctx.inputs[0].0].data();
        let env = envelope_interleaved(est);
        let denv = modulation_env_grad(&env, &self.tgt_env, self.t, self.f, ctx.grad_out[0]);
        let gin = &mut ctx.grads[ctx.inputs[0].0];
        for (k, p) in est.chunks_exact(2).enumerate() {
            let dv = denv[k];
            let m = env[k];
            if dv == S::zero() || m == S::zero() {
                continue;
            }
            gin[2 * k] = gin[2 * k] + dv * p[0] / m;
            gin[2 * k + 1] = gin[2 * k + 1] + dv * p[1] / m;
        }
    }
}

struct VadBceOp {
    labels: Vec<bool>,
}

impl<S: Scalar> GraphOp<S> for VadBceOp {
    fn name(&self) -> &'static str {
        "vad_bce"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let g = ctx.grad_out[0].as_f64();
        let n = self.labels.len();
        let pred = ctx.tensors[ctx.inputs[0].0].data();
        let gin = &mut ctx.grads[ctx.inputs[0].0];
        for ((a, p), y) in gin.iter_mut().zip(pred).zip(&self.labels) {
            *a = *a + S::of(g * bce_grad_at(p.as_f64(), *y, n));
        }
    }
}

struct DelayMseOp {
    class: Vec<usize>,
    valid: Vec<bool>,
    n_valid: usize,
}

impl<S: Scalar> GraphOp<S> for DelayMseOp {
    fn name(&self) -> &'static str {
        "delay_mse"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        if self.n_valid == 0 {
            return;
        }
        let k = ctx.grad_out[0] * S::of(2.0) / S::of_usize(self.n_valid);
        let pred = ctx.tensors[ctx.inputs[0].0].data();
        let gin = &mut ctx.grads[ctx.inputs[0].0];
        for (i, v) in self.valid.iter().enumerate() {
            if *v {
                gin[i] = gin[i] + k * (pred[i] - S::of_usize(self.class[i]));
            }
        }
    }
}

struct DelayCeOp {
    class: Vec<usize>,
    valid: Vec<bool>,
    n_valid: usize,
    h: usize,
}

impl<S: Scalar> GraphOp<S> for DelayCeOp {
    fn name(&self) -> &'static str {
        "delay_ce"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        if self.n_valid == 0 {
            return;
        }
        let g = ctx.grad_out[0].as_f64();
        let att = ctx.tensors[ctx.inputs[0].0].data();
        let gin = &mut ctx.grads[ctx.inputs[0].0];
        for (t, v) in self.valid.iter().enumerate() {
            if *v {
                let idx = t * self.h + self.class[t];
                let a = att[idx].as_f64();
                gin[idx] = gin[idx] + S::of(-g / ((a + LOG_EPS) * self.n_valid as f64));
            }
        }
    }
}

impl<S: Scalar> Graph<S> {
    /// Overlap-add synthesis of an interleaved `(t, f, 2)` spectrum node to
    /// `out_len` samples. Matches [`crate::dsp::istft`] bit for bit so a
    /// trained spectrum scores exactly what the runtime will produce.
    pub fn istft_wave(
        &mut self,
        spec: TensorId,
        cfg: &StftConfig,
        out_len: usize,
    ) -> Result<TensorId> {
        cfg.validate()?;
        let s = self.shape(spec).to_vec();
        if s.len() != 3 || s[2] != 2 || s[1] != cfg.bins() {
            return Err(Error::dim(
                "istft_wave",
                format!("expected (t, {}, 2), got {:?}", cfg.bins(), s),
            ));
        }
        let bins = s[1];
        let basis = SynthBasis::new(cfg);
        let window: Vec<S> = cfg.window();
        let (out, scale) = {
            let data = self.value(spec).data();
            let mut out = vec![S::zero(); out_len];
            let mut wsum = vec![S::zero(); out_len];
            let mut frame = vec![S::zero(); cfg.frame];
            for (ti, row) in data.chunks_exact(2 * bins).enumerate() {
                synth_frame(&basis, row, &mut frame);
                let start = ti * cfg.hop;
                for (i, v) in frame.iter().enumerate() {
                    let n = start + i;
                    if n < out_len {
                        out[n] = out[n] + *v;
                        wsum[n] = wsum[n] + window[i] * window[i];
                    }
                }
            }
            let tiny = S::of(1e-8);
            let mut scale = vec![S::one(); out_len];
            for ((o, w), sc) in out.iter_mut().zip(&wsum).zip(scale.iter_mut()) {
                if *w > tiny {
                    *o = *o / *w;
                    *sc = S::one() / *w;
                }
            }
            (out, scale)
        };
        Ok(self.push_node(
            vec![spec],
            Tensor::new(vec![out_len], out),
            Box::new(IstftOp {
                basis,
                hop: cfg.hop,
                frame: cfg.frame,
                scale,
            }),
        ))
    }

    /// Clamped negative-SNR loss of a waveform node against a fixed target.
    pub fn snr_loss(&mut self, est: TensorId, target: &[S]) -> Result<TensorId> {
        let s = self.shape(est);
        if s.len() != 1 || s[0] != target.len() {
            return Err(Error::dim(
                "snr_loss",
                format!("est {:?} vs target {} samples", s, target.len()),
            ));
        }
        let parts = snr_core(self.value(est).data(), target);
        Ok(self.push_node(
            vec![est],
            Tensor::scalar(parts.value),
            Box::new(SnrLossOp {
                target: target.to_vec(),
                den: parts.den,
                clamped: parts.clamped,
            }),
        ))
    }

    /// Modulation-spectrum distance of an interleaved `(t, f, 2)` spectrum
    /// node against a fixed `(t, f)` target magnitude envelope.
    pub fn modulation_loss(&mut self, est: TensorId, target_env: &[S]) -> Result<TensorId> {
        let s = self.shape(est).to_vec();
        if s.len() != 3 || s[2] != 2 || s[0] * s[1] != target_env.len() {
            return Err(Error::dim(
                "modulation_loss",
                format!("spectrum {:?} vs envelope {}", s, target_env.len()),
            ));
        }
        let (t, f) = (s[0], s[1]);
        let v = {
            let env = envelope_interleaved(self.value(est).data());
            modulation_core(&env, target_env, t, f)
        };
        Ok(self.push_node(
            vec![est],
            Tensor::scalar(v),
            Box::new(ModulationLossOp {
                tgt_env: target_env.to_vec(),
                t,
                f,
            }),
        ))
    }

    /// Mean binary cross-entropy of a `(t)` probability node against 0/1
    /// labels.
    pub fn vad_bce(&mut self, pred: TensorId, labels: &[bool]) -> Result<TensorId> {
        let s = self.shape(pred);
        if s.len() != 1 || s[0] != labels.len() {
            return Err(Error::dim(
                "vad_bce",
                format!("pred {:?} vs labels {} frames", s, labels.len()),
            ));
        }
        let v = bce_core(self.value(pred).data(), labels);
        Ok(self.push_node(
            vec![pred],
            Tensor::scalar(v),
            Box::new(VadBceOp {
                labels: labels.to_vec(),
            }),
        ))
    }

    /// Masked mean squared error of a `(t)` soft delay node against labeled
    /// classes; zero valid frames make a constant-zero node.
    pub fn delay_mse(&mut self, pred: TensorId, class: &[usize], valid: &[bool]) -> Result<TensorId> {
        let s = self.shape(pred);
        if s.len() != 1 || s[0] != class.len() || class.len() != valid.len() {
            return Err(Error::dim(
                "delay_mse",
                format!(
                    "pred {:?} vs class {} vs valid {}",
                    s,
                    class.len(),
                    valid.len()
                ),
            ));
        }
        let l = delay_mse_core(self.value(pred).data(), class, valid);
        Ok(self.push_node(
            vec![pred],
            Tensor::scalar(l.value),
            Box::new(DelayMseOp {
                class: class.to_vec(),
                valid: valid.to_vec(),
                n_valid: l.valid_frames,
            }),
        ))
    }

    /// Masked mean cross-entropy of a `(t, h)` attention node against
    /// labeled classes; a valid label at or past `h` is a contract error.
    pub fn delay_ce(&mut self, att: TensorId, class: &[usize], valid: &[bool]) -> Result<TensorId> {
        let s = self.shape(att).to_vec();
        if s.len() != 2 || s[0] != class.len() || class.len() != valid.len() {
            return Err(Error::dim(
                "delay_ce",
                format!(
                    "attention {:?} vs class {} vs valid {}",
                    s,
                    class.len(),
                    valid.len()
                ),
            ));
        }
        let h = s[1];
        // Validates the label range, then scores.
        delay_loss_ce(self.value(att).data(), h, class, valid)?;
        let l = delay_ce_core(self.value(att).data(), h, class, valid);
        Ok(self.push_node(
            vec![att],
            Tensor::scalar(l.value),
            Box::new(DelayCeOp {
                class: class.to_vec(),
                valid: valid.to_vec(),
                n_valid: l.valid_frames,
                h,
            }),
        ))
    }
}
