//! Loss values, one implementation each.
//!
//! Every loss here is a plain function of slices; the autodiff ops in
//! [`super::loss_ops`] call the same code for their forward pass, so these
//! functions double as exact oracles for the graph. The logarithmic terms
//! (cross-entropy, BCE) are evaluated in double precision because their
//! 1e-12 probability floor sits below `f32` resolution near 1.0 — a
//! saturated single-precision sigmoid must not turn a loss infinite.

use crate::dsp::Spectrogram;
use crate::{Error, Result, Scalar};

/// Modulation-spectrum window length in frames.
pub(crate) const MOD_WIN: usize = 32;
/// Hop between modulation windows in frames.
pub(crate) const MOD_HOP: usize = 16;
/// Guard added to the error energy in the SNR denominator.
pub(crate) const SNR_EPS: f64 = 1e-8;
/// Symmetric clamp on the SNR loss, in dB.
pub(crate) const SNR_CLAMP: f64 = 50.0;
/// Floor keeping probabilities away from 0 and 1 inside logarithms.
pub(crate) const LOG_EPS: f64 = 1e-12;

/// One SNR-loss evaluation plus the pieces its gradient needs.
pub(crate) struct SnrParts<S> {
    pub value: S,
    /// Error energy plus the guard — the only estimate-dependent factor.
    pub den: S,
    /// The raw value fell outside the clamp; the local gradient is zero.
    pub clamped: bool,
}

pub(crate) fn snr_core<S: Scalar>(est: &[S], target: &[S]) -> SnrParts<S> {
    let mut num = S::zero();
    let mut den = S::of(SNR_EPS);
    for (t, e) in target.iter().zip(est) {
        num = num + *t * *t;
        let d = *t - *e;
        den = den + d * d;
    }
    let ratio = num / den;
    // A silent target drives the ratio to 0 and the raw value to +inf;
    // fold that into the top clamp rather than produce a NaN.
    let raw = if ratio > S::zero() {
        -S::of(10.0) * ratio.log10()
    } else {
        S::infinity()
    };
    let (lo, hi) = (S::of(-SNR_CLAMP), S::of(SNR_CLAMP));
    if raw < lo {
        SnrParts { value: lo, den, clamped: true }
    } else if raw > hi {
        SnrParts { value: hi, den, clamped: true }
    } else {
        SnrParts { value: raw, den, clamped: false }
    }
}

/// Negative signal-to-noise ratio of `est` against `target` in dB, clamped
/// to +-50: perfect reconstruction saturates at the floor, and an all-zero
/// estimate scores ~0 because the error energy equals the target energy.
pub fn snr_loss<S: Scalar>(est: &[S], target: &[S]) -> Result<S> {
    if est.len() != target.len() {
        return Err(Error::dim(
            "snr_loss",
            format!("est {} vs target {} samples", est.len(), target.len()),
        ));
    }
    Ok(snr_core(est, target).value)
}

/// Starts of the sliding modulation windows over `t` frames. Only complete
/// windows count; a signal shorter than one window gets a single
/// zero-padded window instead.
pub(crate) fn mod_window_starts(t: usize) -> Vec<usize> {
    if t < MOD_WIN {
        vec![0]
    } else {
        (0..=t - MOD_WIN).step_by(MOD_HOP).collect()
    }
}

/// Twiddle tables for the MOD_WIN-point DFT: `cos/sin(2*pi*k*i/MOD_WIN)`
/// at `[k * MOD_WIN + i]`.
pub(crate) fn mod_tables<S: Scalar>() -> (Vec<S>, Vec<S>) {
    let mut cos_t = vec![S::zero(); MOD_WIN * MOD_WIN];
    let mut sin_t = vec![S::zero(); MOD_WIN * MOD_WIN];
    for k in 0..MOD_WIN {
        for i in 0..MOD_WIN {
            let a = 2.0 * std::f64::consts::PI * (k * i) as f64 / MOD_WIN as f64;
            cos_t[k * MOD_WIN + i] = S::of(a.cos());
            sin_t[k * MOD_WIN + i] = S::of(a.sin());
        }
    }
    (cos_t, sin_t)
}

/// Magnitudes of an interleaved `(t, f, 2)` slab as a `(t, f)` envelope.
pub(crate) fn envelope_interleaved<S: Scalar>(data: &[S]) -> Vec<S> {
    data.chunks_exact(2)
        .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt())
        .collect()
}

/// Gather one zero-padded modulation window of a `(t, f)` envelope column.
fn fill_window<S: Scalar>(env: &[S], t: usize, f: usize, bin: usize, s0: usize, w: &mut [S]) {
    for (i, slot) in w.iter_mut().enumerate() {
        let ti = s0 + i;
        *slot = if ti < t { env[ti * f + bin] } else { S::zero() };
    }
}

/// Mean absolute difference between the modulation spectra of two `(t, f)`
/// magnitude envelopes: per bin, each MOD_WIN-frame window's DFT magnitudes
/// are compared term by term.
pub(crate) fn modulation_core<S: Scalar>(env_est: &[S], env_tgt: &[S], t: usize, f: usize) -> S {
    if f == 0 {
        return S::zero();
    }
    let starts = mod_window_starts(t);
    let (cos_t, sin_t) = mod_tables::<S>();
    let mut we = [S::zero(); MOD_WIN];
    let mut wt = [S::zero(); MOD_WIN];
    let mut acc = S::zero();
    for &s0 in &starts {
        for bin in 0..f {
            fill_window(env_est, t, f, bin, s0, &mut we);
            fill_window(env_tgt, t, f, bin, s0, &mut wt);
            for k in 0..MOD_WIN {
                let row_c = &cos_t[k * MOD_WIN..][..MOD_WIN];
                let row_s = &sin_t[k * MOD_WIN..][..MOD_WIN];
                let mut re_e = S::zero();
                let mut im_e = S::zero();
                let mut re_t = S::zero();
                let mut im_t = S::zero();
                for i in 0..MOD_WIN {
                    re_e = re_e + we[i] * row_c[i];
                    im_e = im_e - we[i] * row_s[i];
                    re_t = re_t + wt[i] * row_c[i];
                    im_t = im_t - wt[i] * row_s[i];
                }
                let m_e = (re_e * re_e + im_e * im_e).sqrt();
                let m_t = (re_t * re_t + im_t * im_t).sqrt();
                acc = acc + (m_e - m_t).abs();
            }
        }
    }
    acc / S::of_usize(starts.len() * f * MOD_WIN)
}

/// Gradient of [`modulation_core`] with respect to the estimate envelope,
/// scaled by `gout`, as a `(t, f)` slab.
pub(crate) fn modulation_env_grad<S: Scalar>(
    env_est: &[S],
    env_tgt: &[S],
    t: usize,
    f: usize,
    gout: S,
) -> Vec<S> {
    let mut denv = vec![S::zero(); t * f];
    if f == 0 {
        return denv;
    }
    let starts = mod_window_starts(t);
    let (cos_t, sin_t) = mod_tables::<S>();
    let scale = gout / S::of_usize(starts.len() * f * MOD_WIN);
    let mut we = [S::zero(); MOD_WIN];
    let mut wt = [S::zero(); MOD_WIN];
    for &s0 in &starts {
        for bin in 0..f {
            fill_window(env_est, t, f, bin, s0, &mut we);
            fill_window(env_tgt, t, f, bin, s0, &mut wt);
            for k in 0..MOD_WIN {
                let row_c = &cos_t[k * MOD_WIN..][..MOD_WIN];
                let row_s = &sin_t[k * MOD_WIN..][..MOD_WIN];
                let mut re_e = S::zero();
                let mut im_e = S::zero();
                let mut re_t = S::zero();
                let mut im_t = S::zero();
                for i in 0..MOD_WIN {
                    re_e = re_e + we[i] * row_c[i];
                    im_e = im_e - we[i] * row_s[i];
                    re_t = re_t + wt[i] * row_c[i];
                    im_t = im_t - wt[i] * row_s[i];
                }
                let m_e = (re_e * re_e + im_e * im_e).sqrt();
                let m_t = (re_t * re_t + im_t * im_t).sqrt();
                // Subgradient 0 at the |.| kink and at a zero magnitude.
                if m_e == S::zero() || m_e == m_t {
                    continue;
                }
                let sgn = if m_e > m_t { S::one() } else { -S::one() };
                let w = scale * sgn / m_e;
                for i in 0..MOD_WIN {
                    let ti = s0 + i;
                    if ti >= t {
                        break;
                    }
                    // d|Z_k| / d env_i = (Re*cos - Im*sin) / |Z_k|
                    let dmde = re_e * row_c[i] - im_e * row_s[i];
                    denv[ti * f + bin] = denv[ti * f + bin] + w * dmde;
                }
            }
        }
    }
    denv
}

/// Modulation-spectrum distance between two equal-shape spectrograms.
pub fn modulation_loss<S: Scalar>(est: &Spectrogram<S>, target: &Spectrogram<S>) -> Result<S> {
    if est.frames != target.frames || est.bins != target.bins {
        return Err(Error::dim(
            "modulation_loss",
            format!(
                "({}, {}) vs ({}, {})",
                est.frames, est.bins, target.frames, target.bins
            ),
        ));
    }
    let env = |s: &Spectrogram<S>| -> Vec<S> {
        s.data()
            .iter()
            .map(|c| (c.re * c.re + c.im * c.im).sqrt())
            .collect()
    };
    Ok(modulation_core(
        &env(est),
        &env(target),
        est.frames,
        est.bins,
    ))
}

/// A delay-loss value together with how many frames actually carried
/// supervision. With zero valid frames the value is 0 by definition and the
/// count is the caller's flag for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayLoss<S> {
    pub value: S,
    pub valid_frames: usize,
}

pub(crate) fn delay_mse_core<S: Scalar>(pred: &[S], class: &[usize], valid: &[bool]) -> DelayLoss<S> {
    let mut acc = S::zero();
    let mut n = 0usize;
    for ((p, c), v) in pred.iter().zip(class).zip(valid) {
        if *v {
            let d = *p - S::of_usize(*c);
            acc = acc + d * d;
            n += 1;
        }
    }
    let value = if n == 0 { S::zero() } else { acc / S::of_usize(n) };
    DelayLoss { value, valid_frames: n }
}

/// Mean squared error between a soft per-frame delay estimate and the
/// labeled class, over the valid frames only.
pub fn delay_loss_mse<S: Scalar>(
    pred: &[S],
    class: &[usize],
    valid: &[bool],
) -> Result<DelayLoss<S>> {
    if pred.len() != class.len() || pred.len() != valid.len() {
        return Err(Error::dim(
            "delay_loss_mse",
            format!(
                "pred {} vs class {} vs valid {}",
                pred.len(),
                class.len(),
                valid.len()
            ),
        ));
    }
    Ok(delay_mse_core(pred, class, valid))
}

pub(crate) fn delay_ce_core<S: Scalar>(
    att: &[S],
    h: usize,
    class: &[usize],
    valid: &[bool],
) -> DelayLoss<S> {
    let mut acc = 0.0f64;
    let mut n = 0usize;
    for (t, (c, v)) in class.iter().zip(valid).enumerate() {
        if *v {
            acc -= (att[t * h + *c].as_f64() + LOG_EPS).ln();
            n += 1;
        }
    }
    let value = if n == 0 { S::zero() } else { S::of(acc / n as f64) };
    DelayLoss { value, valid_frames: n }
}

/// Mean cross-entropy of `(t, h)` attention rows against the labeled class,
/// over the valid frames only. A valid label at or past the row width is a
/// contract violation.
pub fn delay_loss_ce<S: Scalar>(
    att: &[S],
    h: usize,
    class: &[usize],
    valid: &[bool],
) -> Result<DelayLoss<S>> {
    let t = class.len();
    if h == 0 || att.len() != t * h || valid.len() != t {
        return Err(Error::dim(
            "delay_loss_ce",
            format!(
                "attention {} vs {} frames x {} classes (valid {})",
                att.len(),
                t,
                h,
                valid.len()
            ),
        ));
    }
    for (c, v) in class.iter().zip(valid) {
        if *v && *c >= h {
            return Err(Error::contract(
                "delay_loss_ce",
                format!("target class {c} out of range for {h} delay classes"),
            ));
        }
    }
    Ok(delay_ce_core(att, h, class, valid))
}

pub(crate) fn bce_core<S: Scalar>(pred: &[S], labels: &[bool]) -> S {
    if pred.is_empty() {
        return S::zero();
    }
    let mut acc = 0.0f64;
    for (p, y) in pred.iter().zip(labels) {
        let p = p.as_f64().clamp(LOG_EPS, 1.0 - LOG_EPS);
        acc -= if *y { p.ln() } else { (1.0 - p).ln() };
    }
    S::of(acc / pred.len() as f64)
}

/// Per-element BCE derivative in double precision, zero where the
/// probability floor is active.
pub(crate) fn bce_grad_at(p: f64, y: bool, n: usize) -> f64 {
    let pc = p.clamp(LOG_EPS, 1.0 - LOG_EPS);
    if p != pc {
        return 0.0;
    }
    (if y { -1.0 / pc } else { 1.0 / (1.0 - pc) }) / n as f64
}

/// Mean binary cross-entropy between per-frame probabilities and 0/1
/// labels, probabilities floored away from 0 and 1.
pub fn vad_bce<S: Scalar>(pred: &[S], labels: &[bool]) -> Result<S> {
    if pred.len() != labels.len() {
        return Err(Error::dim(
            "vad_bce",
            format!("pred {} vs labels {} frames", pred.len(), labels.len()),
        ));
    }
    Ok(bce_core(pred, labels))
}
