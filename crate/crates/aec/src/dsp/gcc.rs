//! GCC-PHAT time-delay estimation.
//!
//! Estimates how far the microphone signal lags the reference: the
//! cross-power spectrum `MIC .* conj(REF)` is whitened by its magnitude
//! (phase transform), inverted, and scanned over non-negative lags. The
//! whitening floor keeps silent bins from dividing by zero, and both inputs
//! are zero-padded far enough that the scanned lags are linear, not
//! circular, correlation.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::{Error, Result, Scalar};

/// One delay estimate: the best lag and the ratio of the correlation peak to
/// the mean absolute correlation over the scanned range. A sharp genuine
/// peak scores high; a flat, uninformative correlation scores near 1.
#[derive(Debug, Clone, Copy)]
pub struct DelayEstimate {
    pub delay_samples: usize,
    pub confidence: f64,
}

/// Sliding-window analysis parameters, all in samples.
#[derive(Debug, Clone, Copy)]
pub struct GccConfig {
    /// Analysis window length (typically 1 s).
    pub window: usize,
    /// Stride between windows (typically 0.1 s).
    pub hop: usize,
    /// Largest lag scanned, inclusive.
    pub max_delay: usize,
}

impl GccConfig {
    /// 1 s windows, 0.1 s hop at the given sample rate.
    pub fn for_rate(rate: u32, max_delay: usize) -> Self {
        Self {
            window: rate as usize,
            hop: rate as usize / 10,
            max_delay,
        }
    }
}

/// A windowed estimate, tagged with the window's first sample.
#[derive(Debug, Clone, Copy)]
pub struct GccFrame {
    pub start: usize,
    pub est: DelayEstimate,
}

const PHAT_FLOOR: f64 = 1e-12;

/// PHAT-weighted correlation of one window pair; `mic` and `reference` must
/// be the same length. Scans lags `0..=max_delay`.
pub fn gcc_phat_window<S: Scalar>(
    mic: &[S],
    reference: &[S],
    max_delay: usize,
) -> Result<DelayEstimate> {
    if mic.is_empty() || mic.len() != reference.len() {
        return Err(Error::dim(
            "gcc_phat",
            format!("window lengths {} vs {}", mic.len(), reference.len()),
        ));
    }
    let n = (mic.len() + max_delay).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut a: Vec<Complex<f64>> = (0..n)
        .map(|i| {
            let v = if i < mic.len() { mic[i].as_f64() } else { 0.0 };
            Complex::new(v, 0.0)
        })
        .collect();
    let mut b: Vec<Complex<f64>> = (0..n)
        .map(|i| {
            let v = if i < reference.len() {
                reference[i].as_f64()
            } else {
                0.0
            };
            Complex::new(v, 0.0)
        })
        .collect();
    let mut scratch = vec![Complex::new(0.0, 0.0); fwd.get_inplace_scratch_len()];
    fwd.process_with_scratch(&mut a, &mut scratch);
    fwd.process_with_scratch(&mut b, &mut scratch);

    for (g, bv) in a.iter_mut().zip(&b) {
        let cross = *g * bv.conj();
        *g = cross / cross.norm().max(PHAT_FLOOR);
    }
    let mut scratch = vec![Complex::new(0.0, 0.0); inv.get_inplace_scratch_len()];
    inv.process_with_scratch(&mut a, &mut scratch);

    let scan = max_delay.min(n - 1);
    let mut best = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    let mut sum_abs = 0.0;
    for (d, c) in a[..=scan].iter().enumerate() {
        let v = c.re;
        sum_abs += v.abs();
        if v > best_v {
            best_v = v;
            best = d;
        }
    }
    let mean_abs = sum_abs / (scan + 1) as f64;
    let confidence = if mean_abs > 0.0 && best_v > 0.0 {
        best_v / mean_abs
    } else {
        0.0
    };
    Ok(DelayEstimate {
        delay_samples: best,
        confidence,
    })
}

/// Slide `cfg.window`-sample windows across both signals at `cfg.hop` and
/// estimate each one. Signals must be the same length and long enough for at
/// least one full window.
pub fn gcc_phat_track<S: Scalar>(
    mic: &[S],
    reference: &[S],
    cfg: &GccConfig,
) -> Result<Vec<GccFrame>> {
    if mic.len() != reference.len() {
        return Err(Error::dim(
            "gcc_phat",
            format!("signal lengths {} vs {}", mic.len(), reference.len()),
        ));
    }
    if cfg.window == 0 || cfg.hop == 0 || mic.len() < cfg.window {
        return Err(Error::contract(
            "gcc_phat",
            format!(
                "need window {} > 0, hop {} > 0, signal {} >= window",
                cfg.window,
                cfg.hop,
                mic.len()
            ),
        ));
    }
    let mut frames = Vec::new();
    let mut start = 0;
    while start + cfg.window <= mic.len() {
        let est = gcc_phat_window(
            &mic[start..start + cfg.window],
            &reference[start..start + cfg.window],
            cfg.max_delay,
        )?;
        frames.push(GccFrame { start, est });
        start += cfg.hop;
    }
    Ok(frames)
}

/// Single bulk-delay estimate for a whole recording: the median delay over
/// the confident windows (falling back to all windows when none clear the
/// bar), with the median confidence of the windows that voted.
pub fn estimate_delay<S: Scalar>(
    mic: &[S],
    reference: &[S],
    cfg: &GccConfig,
) -> Result<DelayEstimate> {
    const CONFIDENT: f64 = 2.0;
    let frames = gcc_phat_track(mic, reference, cfg)?;
    let mut voters: Vec<&GccFrame> = frames
        .iter()
        .filter(|f| f.est.confidence >= CONFIDENT)
        .collect();
    if voters.is_empty() {
        voters = frames.iter().collect();
    }
    let mut delays: Vec<usize> = voters.iter().map(|f| f.est.delay_samples).collect();
    delays.sort_unstable();
    let mut confs: Vec<f64> = voters.iter().map(|f| f.est.confidence).collect();
    confs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(DelayEstimate {
        delay_samples: delays[delays.len() / 2],
        confidence: confs[confs.len() / 2],
    })
}
