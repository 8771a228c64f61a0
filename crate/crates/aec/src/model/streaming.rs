//! Frame-by-frame forward pass with explicit state.
//!
//! Every arithmetic step goes through the same row kernels as the offline
//! graph (`affine_row`, `gru_row_step`, `softmax_row`, the correlation /
//! alignment / mask kernels), with the same fixed accumulation orders, so a
//! streamed pass over a signal is bit-identical to the offline pass — not
//! merely close. The only approximation in streaming mode is that there is
//! none.
//!
//! State held across frames: each block's time-GRU hidden vectors (one per
//! bin) and its unfold window of recent input frames, the last `history`
//! reference-encoder frames for the attention stage, and the last
//! `ccm_taps_time - 1` microphone spectrum frames for the mask application.
//! Frequency-axis GRUs restart every frame and need no state.

use crate::model::ops::{
    axpy_frame, ccm_apply_frame, corr_frames, expected_delay_row,
};
use crate::model::ModelConfig;
use crate::numcore::{affine_row, gru_row_step, mean_rows, sigmoid_scalar, softmax_row};
use crate::numcore::{ParamSet, Tensor};
use crate::{Error, Result, Scalar};

/// One frame of model outputs.
#[derive(Debug, Clone)]
pub struct StreamOutput<S> {
    /// Mid-tap masked spectrum frame, interleaved `(bins, 2)`.
    pub spec_mid: Vec<S>,
    /// Final masked spectrum frame, interleaved `(bins, 2)`.
    pub spec_final: Vec<S>,
    /// Voice-activity probability.
    pub vad: S,
    /// Attention row over candidate delays `(history)`.
    pub attention: Vec<S>,
    /// Soft delay estimate in frames.
    pub expected_delay: S,
}

/// Per-block recurrent state.
struct BlockState<S> {
    /// Time-GRU hidden, `(bins, channels)`.
    hidden: Vec<S>,
    /// Ring of the last `kernel_time - 1` block-input frames, each
    /// `(bins * channels)`; empty when the kernel is 1.
    window: Vec<S>,
}

/// Streaming model state. Create once per signal; feed one spectrum frame
/// pair per [`StreamState::step`].
pub struct StreamState<S> {
    cfg: ModelConfig,
    t: usize,
    blocks: Vec<BlockState<S>>,
    /// Ring of the last `history` reference-encoder frames, `(bins*channels)`
    /// each, slot `t % history`.
    ref_hist: Vec<S>,
    /// Ring of past mic spectrum frames for the mask taps,
    /// `(ccm_taps_time - 1)` frames of `(bins * 2)`.
    mic_hist: Vec<S>,
}

/// Weight slices for one GRU + output projection pair.
struct SubWeights<'a, S> {
    w_ih: &'a [S],
    w_hh: &'a [S],
    b_ih: &'a [S],
    b_hh: &'a [S],
    out_w: &'a [S],
    out_b: &'a [S],
}

struct BlockWeights<'a, S> {
    time: SubWeights<'a, S>,
    freq: SubWeights<'a, S>,
}

fn get<'a, S: Scalar>(params: &'a ParamSet<S>, name: &str) -> Result<&'a Tensor<S>> {
    params
        .get(name)
        .ok_or_else(|| Error::contract("stream", format!("missing parameter {name:?}")))
}

fn sub_weights<'a, S: Scalar>(
    params: &'a ParamSet<S>,
    prefix: &str,
    sub: &str,
) -> Result<SubWeights<'a, S>> {
    Ok(SubWeights {
        w_ih: get(params, &format!("{prefix}.{sub}.gru.w_ih"))?.data(),
        w_hh: get(params, &format!("{prefix}.{sub}.gru.w_hh"))?.data(),
        b_ih: get(params, &format!("{prefix}.{sub}.gru.b_ih"))?.data(),
        b_hh: get(params, &format!("{prefix}.{sub}.gru.b_hh"))?.data(),
        out_w: get(params, &format!("{prefix}.{sub}.out.w"))?.data(),
        out_b: get(params, &format!("{prefix}.{sub}.out.b"))?.data(),
    })
}

fn block_weights<'a, S: Scalar>(
    params: &'a ParamSet<S>,
    prefix: &str,
) -> Result<BlockWeights<'a, S>> {
    Ok(BlockWeights {
        time: sub_weights(params, prefix, "time")?,
        freq: sub_weights(params, prefix, "freq")?,
    })
}

impl<S: Scalar> StreamState<S> {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let fc = cfg.bins * cfg.channels;
        let n_blocks = 2 * cfg.n_enc + cfg.n_fusion;
        let blocks = (0..n_blocks)
            .map(|_| BlockState {
                hidden: vec![S::zero(); fc],
                window: vec![S::zero(); (cfg.kernel_time - 1) * fc],
            })
            .collect();
        Ok(Self {
            cfg: *cfg,
            t: 0,
            blocks,
            ref_hist: vec![S::zero(); cfg.history * fc],
            mic_hist: vec![S::zero(); (cfg.ccm_taps_time - 1) * cfg.bins * 2],
        })
    }

    pub fn frames_processed(&self) -> usize {
        self.t
    }

    /// How many reference frames the attention stage can currently see.
    pub fn ref_frames_buffered(&self) -> usize {
        self.t.min(self.cfg.history)
    }

    /// Process one spectrum frame pair (each interleaved `(bins, 2)`).
    pub fn step(
        &mut self,
        params: &ParamSet<S>,
        mic_frame: &[S],
        ref_frame: &[S],
    ) -> Result<StreamOutput<S>> {
        let cfg = self.cfg;
        let (f_bins, c, h) = (cfg.bins, cfg.channels, cfg.history);
        let fc = f_bins * c;
        if mic_frame.len() != 2 * f_bins || ref_frame.len() != 2 * f_bins {
            return Err(Error::dim(
                "stream",
                format!(
                    "frame lengths {} / {} must be {}",
                    mic_frame.len(),
                    ref_frame.len(),
                    2 * f_bins
                ),
            ));
        }
        let t = self.t;

        // Branch projections: rows of 2 -> channels.
        let mut mic = vec![S::zero(); fc];
        let mut refr = vec![S::zero(); fc];
        {
            let w = get(params, "mic_proj.w")?.data();
            let b = get(params, "mic_proj.b")?.data();
            for (xrow, orow) in mic_frame.chunks_exact(2).zip(mic.chunks_exact_mut(c)) {
                affine_row(xrow, w, b, orow);
            }
            let w = get(params, "ref_proj.w")?.data();
            let b = get(params, "ref_proj.b")?.data();
            for (xrow, orow) in ref_frame.chunks_exact(2).zip(refr.chunks_exact_mut(c)) {
                affine_row(xrow, w, b, orow);
            }
        }

        // Encoders.
        let mut block_idx = 0;
        for i in 1..=cfg.n_enc {
            let w = block_weights(params, &format!("enc_mic{i}"))?;
            mic = block_step(&mic, &mut self.blocks[block_idx], t, &w, &cfg);
            block_idx += 1;
            let w = block_weights(params, &format!("enc_ref{i}"))?;
            refr = block_step(&refr, &mut self.blocks[block_idx], t, &w, &cfg);
            block_idx += 1;
        }

        // The reference ring includes the current frame (delay 0).
        self.ref_hist[(t % h) * fc..][..fc].copy_from_slice(&refr);

        // Attention: correlate, collapse to logits, softmax.
        let mut attention = vec![S::zero(); h];
        {
            let w = get(params, "attn.collapse.w")?.data();
            let b = get(params, "attn.collapse.b")?.data();
            let mut crow = vec![S::zero(); c];
            for (d, logit) in attention.iter_mut().enumerate() {
                for v in crow.iter_mut() {
                    *v = S::zero();
                }
                if d <= t {
                    let frame = &self.ref_hist[((t - d) % h) * fc..][..fc];
                    corr_frames(&mic, frame, &mut crow);
                }
                affine_row(&crow, w, b, std::slice::from_mut(logit));
            }
            softmax_row(&mut attention);
        }
        let expected_delay = expected_delay_row(&attention);

        // Aligned reference.
        let mut aligned = vec![S::zero(); fc];
        for (d, a) in attention.iter().enumerate().take(h.min(t + 1)) {
            let frame = &self.ref_hist[((t - d) % h) * fc..][..fc];
            axpy_frame(*a, frame, &mut aligned);
        }

        // Fusion projection over concatenated rows.
        let mut z = vec![S::zero(); fc];
        {
            let w = get(params, "fusion_proj.w")?.data();
            let b = get(params, "fusion_proj.b")?.data();
            let mut cat = vec![S::zero(); 2 * c];
            for f in 0..f_bins {
                cat[..c].copy_from_slice(&mic[f * c..][..c]);
                cat[c..].copy_from_slice(&aligned[f * c..][..c]);
                affine_row(&cat, w, b, &mut z[f * c..][..c]);
            }
        }

        // Fusion stack with the mid tap.
        let mut tap: Option<Vec<S>> = None;
        for k in 1..=cfg.n_fusion {
            let w = block_weights(params, &format!("fusion{k}"))?;
            z = block_step(&z, &mut self.blocks[block_idx], t, &w, &cfg);
            block_idx += 1;
            if 2 * cfg.n_enc + k == cfg.tap_layer {
                tap = Some(z.clone());
            }
        }
        let tap = tap.ok_or_else(|| Error::contract("stream", "tap layer not reached"))?;

        // Mask heads applied to the mic spectrum taps.
        let (kt, kf) = (cfg.ccm_taps_time, cfg.ccm_taps_freq);
        let width = cfg.mask_width();
        let zeros_spec = vec![S::zero(); f_bins * 2];
        let mut frames: Vec<&[S]> = Vec::with_capacity(kt);
        frames.push(mic_frame);
        for tau in 1..kt {
            frames.push(if tau <= t {
                &self.mic_hist[((t - tau) % (kt - 1)) * f_bins * 2..][..f_bins * 2]
            } else {
                &zeros_spec
            });
        }
        let mut mask = vec![S::zero(); f_bins * width];
        let apply = |params: &ParamSet<S>,
                     head: &str,
                     feat: &[S],
                     mask: &mut Vec<S>|
         -> Result<Vec<S>> {
            let w = get(params, &format!("{head}.w"))?.data();
            let b = get(params, &format!("{head}.b"))?.data();
            for (xrow, mrow) in feat.chunks_exact(c).zip(mask.chunks_exact_mut(width)) {
                affine_row(xrow, w, b, mrow);
            }
            let mut out = vec![S::zero(); f_bins * 2];
            ccm_apply_frame(mask, &frames, kt, kf, f_bins, &mut out);
            Ok(out)
        };
        let spec_mid = apply(params, "ccm_mid", &tap, &mut mask)?;
        let spec_final = apply(params, "ccm_final", &z, &mut mask)?;

        // Voice activity from the pooled mid tap.
        let vad = {
            let mut pooled = vec![S::zero(); c];
            mean_rows(&tap, c, &mut pooled);
            let w = get(params, "vad.w")?.data();
            let b = get(params, "vad.b")?.data();
            let mut v = [S::zero()];
            affine_row(&pooled, w, b, &mut v);
            sigmoid_scalar(v[0])
        };

        // Roll the mic spectrum ring and advance.
        if kt > 1 {
            self.mic_hist[(t % (kt - 1)) * f_bins * 2..][..f_bins * 2]
                .copy_from_slice(mic_frame);
        }
        self.t += 1;

        Ok(StreamOutput {
            spec_mid,
            spec_final,
            vad,
            attention,
            expected_delay,
        })
    }
}

/// One recurrent block on one frame; mirrors the offline `rnn_block` op by
/// op and kernel by kernel.
fn block_step<S: Scalar>(
    x_in: &[S],
    state: &mut BlockState<S>,
    t: usize,
    w: &BlockWeights<'_, S>,
    cfg: &ModelConfig,
) -> Vec<S> {
    let (f_bins, c) = (cfg.bins, cfg.channels);
    let fc = f_bins * c;

    // Time sub-block: causal unfold across frames, GRU step per bin.
    let kt = cfg.kernel_time;
    let mut x_mid = vec![S::zero(); fc];
    {
        let mut u = vec![S::zero(); kt * c];
        let mut gx = vec![S::zero(); 3 * c];
        let mut gh = vec![S::zero(); 3 * c];
        let mut h_new = vec![S::zero(); c];
        let mut o = vec![S::zero(); c];
        for f in 0..f_bins {
            for j in 0..kt {
                let s = t as isize + j as isize - (kt as isize - 1);
                let src: Option<&[S]> = if s < 0 {
                    None
                } else if j == kt - 1 {
                    Some(&x_in[f * c..][..c])
                } else {
                    let slot = (s as usize) % (kt - 1);
                    Some(&state.window[slot * fc + f * c..][..c])
                };
                let dst = &mut u[j * c..][..c];
                match src {
                    Some(row) => dst.copy_from_slice(row),
                    None => dst.iter_mut().for_each(|v| *v = S::zero()),
                }
            }
            affine_row(&u, w.time.w_ih, w.time.b_ih, &mut gx);
            let hid = &mut state.hidden[f * c..][..c];
            gru_row_step(&gx, hid, w.time.w_hh, w.time.b_hh, &mut gh, &mut h_new, None);
            hid.copy_from_slice(&h_new);
            affine_row(&h_new, w.time.out_w, w.time.out_b, &mut o);
            for ((m, x), ov) in x_mid[f * c..][..c].iter_mut().zip(&x_in[f * c..][..c]).zip(&o)
            {
                *m = *x + *ov;
            }
        }
        if kt > 1 {
            state.window[(t % (kt - 1)) * fc..][..fc].copy_from_slice(x_in);
        }
    }

    // Frequency sub-block: unfold across bins within the frame, GRU sweep
    // from low to high bins, state reset each frame.
    let kf = cfg.kernel_freq;
    let mut out = vec![S::zero(); fc];
    {
        let mut u = vec![S::zero(); kf * c];
        let mut gx = vec![S::zero(); 3 * c];
        let mut gh = vec![S::zero(); 3 * c];
        let mut hid = vec![S::zero(); c];
        let mut h_new = vec![S::zero(); c];
        let mut o = vec![S::zero(); c];
        for f in 0..f_bins {
            for j in 0..kf {
                let s = f as isize + j as isize - (kf as isize - 1);
                let dst = &mut u[j * c..][..c];
                if s < 0 {
                    dst.iter_mut().for_each(|v| *v = S::zero());
                } else {
                    dst.copy_from_slice(&x_mid[(s as usize) * c..][..c]);
                }
            }
            affine_row(&u, w.freq.w_ih, w.freq.b_ih, &mut gx);
            gru_row_step(&gx, &hid, w.freq.w_hh, w.freq.b_hh, &mut gh, &mut h_new, None);
            hid.copy_from_slice(&h_new);
            affine_row(&h_new, w.freq.out_w, w.freq.out_b, &mut o);
            for ((ov2, m), ov) in out[f * c..][..c].iter_mut().zip(&x_mid[f * c..][..c]).zip(&o)
            {
                *ov2 = *m + *ov;
            }
        }
    }
    out
}
