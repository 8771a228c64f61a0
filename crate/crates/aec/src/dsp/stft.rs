//! STFT analysis and weighted-overlap-add synthesis.
//!
//! Frames are 20 ms with a 10 ms hop (50% overlap), windowed by the square
//! root of a half-sample-offset Hann window, `w[i] = sin(pi*(i+0.5)/frame)`,
//! on both analysis and synthesis. At 50% overlap that window pair satisfies
//! `w^2[i] + w^2[i+hop] = 1` exactly, so the per-sample synthesis normalizer
//! is 1.0 everywhere both overlapping frames exist, and the half-sample
//! offset keeps every coefficient strictly positive, so the edge samples
//! covered by a single frame are recovered exactly by the normalizer as
//! well. Frame `t` starts at sample `t*hop` (no centering), which keeps
//! analysis causal.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::{Error, Result, Scalar};

/// Framing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    /// Window length in samples (20 ms).
    pub frame: usize,
    /// Hop in samples (10 ms, half the frame).
    pub hop: usize,
    /// FFT length; at least `frame`, the tail is zero-padded.
    pub fft: usize,
}

impl StftConfig {
    /// 20 ms frame / 10 ms hop for a sample rate, FFT rounded up to a power
    /// of two.
    pub fn for_rate(rate: u32) -> Self {
        let frame = rate as usize / 50;
        Self {
            frame,
            hop: frame / 2,
            fft: frame.next_power_of_two(),
        }
    }

    /// Same framing, explicit FFT length (still must be >= frame).
    pub fn for_rate_with_fft(rate: u32, fft: usize) -> Self {
        Self {
            fft,
            ..Self::for_rate(rate)
        }
    }

    /// One-sided bin count.
    pub fn bins(&self) -> usize {
        self.fft / 2 + 1
    }

    /// Frame count for a signal: `ceil(len / hop)`.
    pub fn frames_for(&self, len: usize) -> usize {
        len.div_ceil(self.hop)
    }

    /// Square root of the half-sample-offset Hann window:
    /// `w[i] = sin(pi*(i+0.5)/frame)`, strictly positive on `[0, frame)`.
    pub fn window<S: Scalar>(&self) -> Vec<S> {
        (0..self.frame)
            .map(|i| {
                S::of((std::f64::consts::PI * (i as f64 + 0.5) / self.frame as f64).sin())
            })
            .collect()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.frame != 2 * self.hop {
            return Err(Error::contract(
                "stft",
                format!("frame {} must be twice hop {}", self.frame, self.hop),
            ));
        }
        if self.fft < self.frame || self.fft % 2 != 0 {
            return Err(Error::contract(
                "stft",
                format!("fft {} must be even and >= frame {}", self.fft, self.frame),
            ));
        }
        Ok(())
    }
}

/// One-sided complex spectrogram, `(frames, bins)` row-major.
#[derive(Debug, Clone)]
pub struct Spectrogram<S> {
    pub frames: usize,
    pub bins: usize,
    data: Vec<Complex<S>>,
}

impl<S: Scalar> Spectrogram<S> {
    pub fn new(frames: usize, bins: usize, data: Vec<Complex<S>>) -> Self {
        assert_eq!(data.len(), frames * bins, "spectrogram shape/data mismatch");
        Self { frames, bins, data }
    }

    pub fn at(&self, t: usize, f: usize) -> Complex<S> {
        self.data[t * self.bins + f]
    }

    pub fn row(&self, t: usize) -> &[Complex<S>] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [Complex<S>] {
        &mut self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn data(&self) -> &[Complex<S>] {
        &self.data
    }
}

/// Analyze a signal into `ceil(len/hop)` frames. Frames that run past the
/// end of the signal are zero-padded.
pub fn stft<S: Scalar>(x: &[S], cfg: &StftConfig) -> Result<Spectrogram<S>> {
    cfg.validate()?;
    if x.is_empty() {
        return Err(Error::contract("stft", "empty input signal"));
    }
    let frames = cfg.frames_for(x.len());
    let bins = cfg.bins();
    let window = cfg.window::<S>();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.fft);
    let mut buf = vec![Complex::new(S::zero(), S::zero()); cfg.fft];
    let mut scratch = vec![Complex::new(S::zero(), S::zero()); fft.get_inplace_scratch_len()];
    let mut data = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let start = t * cfg.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            let s = if i < cfg.frame && start + i < x.len() {
                x[start + i] * window[i]
            } else {
                S::zero()
            };
            *b = Complex::new(s, S::zero());
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend_from_slice(&buf[..bins]);
    }
    Ok(Spectrogram::new(frames, bins, data))
}

/// Precomputed real synthesis transform for one frame: maps an interleaved
/// one-sided spectrum row `(re0, im0, re1, im1, ...)` to `frame` windowed
/// time samples. Layout is `(frame, 2*bins)` row-major so the inner product
/// for each output sample is one contiguous pass, and the accumulation order
/// (ascending bin, real before imaginary) is identical wherever the kernel
/// is used — offline synthesis, streaming synthesis, and the training graph.
pub(crate) struct SynthBasis<S> {
    pub frame: usize,
    pub bins: usize,
    coeff: Vec<S>,
}

impl<S: Scalar> SynthBasis<S> {
    /// Coefficient row for output sample `i` of the frame: the inner product
    /// of this row with an interleaved spectrum row yields that sample, so
    /// the same row also gives the adjoint (spectrum gradient) of sample `i`.
    pub(crate) fn frame_row(&self, i: usize) -> &[S] {
        &self.coeff[i * 2 * self.bins..][..2 * self.bins]
    }

    pub(crate) fn new(cfg: &StftConfig) -> Self {
        let bins = cfg.bins();
        let window = cfg.window::<S>();
        let inv_n = 1.0 / cfg.fft as f64;
        let mut coeff = vec![S::zero(); cfg.frame * 2 * bins];
        for i in 0..cfg.frame {
            let row = &mut coeff[i * 2 * bins..][..2 * bins];
            for f in 0..bins {
                // Hermitian expansion of the one-sided spectrum: interior
                // bins count twice, DC and Nyquist once; the imaginary part
                // of DC/Nyquist cannot affect a real signal.
                let weight = if f == 0 || f == bins - 1 { 1.0 } else { 2.0 };
                let angle = 2.0 * std::f64::consts::PI * (f * i) as f64 / cfg.fft as f64;
                let w = window[i].as_f64() * inv_n * weight;
                row[2 * f] = S::of(w * angle.cos());
                row[2 * f + 1] = S::of(if weight == 2.0 { -w * angle.sin() } else { 0.0 });
            }
        }
        Self {
            frame: cfg.frame,
            bins,
            coeff,
        }
    }
}

/// Synthesize one windowed frame from an interleaved spectrum row.
pub(crate) fn synth_frame<S: Scalar>(basis: &SynthBasis<S>, spec_row: &[S], out: &mut [S]) {
    debug_assert_eq!(spec_row.len(), 2 * basis.bins);
    debug_assert_eq!(out.len(), basis.frame);
    for (i, o) in out.iter_mut().enumerate() {
        let row = &basis.coeff[i * 2 * basis.bins..][..2 * basis.bins];
        let mut acc = S::zero();
        for (c, s) in row.iter().zip(spec_row) {
            acc = acc + *c * *s;
        }
        *o = acc;
    }
}

/// Overlap-add synthesis back to `out_len` samples with per-sample window
/// normalization. Exact everywhere for an unmodified spectrum: interior
/// samples get two frames whose squared windows sum to one, edge samples get
/// a single frame undone by the normalizer.
pub fn istft<S: Scalar>(spec: &Spectrogram<S>, cfg: &StftConfig, out_len: usize) -> Result<Vec<S>> {
    cfg.validate()?;
    if spec.bins != cfg.bins() {
        return Err(Error::dim(
            "istft",
            format!("spectrogram has {} bins, config wants {}", spec.bins, cfg.bins()),
        ));
    }
    let basis = SynthBasis::new(cfg);
    let window = cfg.window::<S>();
    let mut out = vec![S::zero(); out_len];
    let mut wsum = vec![S::zero(); out_len];
    let mut inter = vec![S::zero(); 2 * spec.bins];
    let mut frame = vec![S::zero(); cfg.frame];
    for t in 0..spec.frames {
        for (f, c) in spec.row(t).iter().enumerate() {
            inter[2 * f] = c.re;
            inter[2 * f + 1] = c.im;
        }
        synth_frame(&basis, &inter, &mut frame);
        let start = t * cfg.hop;
        for (i, v) in frame.iter().enumerate() {
            let n = start + i;
            if n < out_len {
                out[n] = out[n] + *v;
                wsum[n] = wsum[n] + window[i] * window[i];
            }
        }
    }
    let tiny = S::of(1e-8);
    for (o, w) in out.iter_mut().zip(&wsum) {
        if *w > tiny {
            *o = *o / *w;
        }
    }
    Ok(out)
}
