//! Inference runtime: the frame-by-frame enhancement engine, WAV I/O, and
//! parameter checkpoints.
//!
//! The engine drives the streaming model one spectrum frame at a time,
//! smooths the voice-activity head with a trailing mean, attenuates frames
//! the smoothed head calls speech-free, and synthesizes the output by
//! weighted overlap-add. Output sample `n` is fully determined once frame
//! `floor(n / hop)` has been processed, so the worst-case algorithmic
//! latency is one frame (= two hops): the first sample of an output hop
//! waits for one extra hop of input beyond its own position.

pub mod checkpoint;
pub mod wav;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use wav::{read_wav, write_wav_f32, write_wav_pcm16, WavData};

use crate::dsp::{stft, synth_frame, StftConfig, SynthBasis};
use crate::model::{ModelConfig, StreamState};
use crate::numcore::ParamSet;
use crate::{Error, Result, Scalar};

/// Runtime configuration: model + framing + voice-gating policy.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub model: ModelConfig,
    pub stft: StftConfig,
    /// Trailing window (in frames, >= 1) for smoothing the VAD output.
    pub vad_smooth_frames: usize,
    /// A frame is gated when `1 - smoothed_vad > vad_nospeech_threshold`
    /// (strictly); at exactly the threshold the frame passes untouched.
    pub vad_nospeech_threshold: f64,
    /// Spectrum scale applied to gated frames (0.1 = -20 dB).
    pub mask_factor: f64,
}

impl EngineConfig {
    /// Default model and framing for a sample rate.
    pub fn for_rate(rate: u32) -> Self {
        let stft = StftConfig::for_rate(rate);
        let model = ModelConfig {
            bins: stft.bins(),
            ..ModelConfig::default()
        };
        Self {
            model,
            stft,
            vad_smooth_frames: 5,
            vad_nospeech_threshold: 0.9,
            mask_factor: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.stft.validate()?;
        if self.stft.bins() != self.model.bins {
            return Err(Error::contract(
                "engine",
                format!(
                    "stft yields {} bins but the model expects {}",
                    self.stft.bins(),
                    self.model.bins
                ),
            ));
        }
        if self.vad_smooth_frames == 0 {
            return Err(Error::contract("engine", "vad_smooth_frames must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.vad_nospeech_threshold) {
            return Err(Error::contract(
                "engine",
                "vad_nospeech_threshold must be in [0, 1]",
            ));
        }
        if !(0.0..=1.0).contains(&self.mask_factor) {
            return Err(Error::contract("engine", "mask_factor must be in [0, 1]"));
        }
        Ok(())
    }

    /// Worst-case algorithmic latency in samples (one analysis frame).
    pub fn latency_samples(&self) -> usize {
        self.stft.frame
    }
}

/// Everything the engine produces for one signal.
#[derive(Debug, Clone)]
pub struct EngineOutput<S> {
    /// Enhanced time signal, same length as the input.
    pub enhanced: Vec<S>,
    /// Raw per-frame voice-activity probabilities.
    pub vad: Vec<S>,
    /// Trailing-mean smoothed probabilities.
    pub vad_smoothed: Vec<S>,
    /// Frames attenuated by the gate.
    pub masked: Vec<bool>,
    /// Per-frame soft delay estimate, in frames.
    pub expected_delay: Vec<S>,
}

/// Smooth raw VAD probabilities with a trailing mean over up to
/// `smooth_frames` frames (including the current one) and decide which
/// frames to gate. The comparison is strict: a frame at exactly the
/// threshold is NOT gated.
pub fn mask_decisions<S: Scalar>(
    vad: &[S],
    smooth_frames: usize,
    nospeech_threshold: f64,
) -> (Vec<S>, Vec<bool>) {
    debug_assert!(smooth_frames >= 1);
    let mut smoothed = Vec::with_capacity(vad.len());
    let mut masked = Vec::with_capacity(vad.len());
    for t in 0..vad.len() {
        let lo = (t + 1).saturating_sub(smooth_frames);
        let mut acc = 0.0f64;
        for v in &vad[lo..=t] {
            acc += v.as_f64();
        }
        let mean = acc / (t + 1 - lo) as f64;
        smoothed.push(S::of(mean));
        masked.push(1.0 - mean > nospeech_threshold);
    }
    (smoothed, masked)
}

/// Run the full enhancement chain over equal-length mic and far-end
/// reference signals. Processing is frame-sequential and causal; the
/// overlap-add normalization matches offline synthesis bit for bit, so an
/// ungated run equals `istft` of the model's output spectrum exactly.
pub fn engine_process<S: Scalar>(
    params: &ParamSet<S>,
    cfg: &EngineConfig,
    mic: &[S],
    reference: &[S],
) -> Result<EngineOutput<S>> {
    cfg.validate()?;
    if mic.len() != reference.len() {
        return Err(Error::dim(
            "engine",
            format!(
                "mic has {} samples, reference has {}",
                mic.len(),
                reference.len()
            ),
        ));
    }
    if mic.is_empty() {
        return Err(Error::contract("engine", "empty input"));
    }
    let spec_mic = stft(mic, &cfg.stft)?;
    let spec_ref = stft(reference, &cfg.stft)?;
    let frames = spec_mic.frames;
    let bins = spec_mic.bins;

    let mut state = StreamState::new(&cfg.model)?;
    let basis = SynthBasis::new(&cfg.stft);
    let window = cfg.stft.window::<S>();

    let mut vad = Vec::with_capacity(frames);
    let mut expected_delay = Vec::with_capacity(frames);
    let mut spec_rows: Vec<Vec<S>> = Vec::with_capacity(frames);
    let mut mic_frame = vec![S::zero(); 2 * bins];
    let mut ref_frame = vec![S::zero(); 2 * bins];
    for t in 0..frames {
        for (f, c) in spec_mic.row(t).iter().enumerate() {
            mic_frame[2 * f] = c.re;
            mic_frame[2 * f + 1] = c.im;
        }
        for (f, c) in spec_ref.row(t).iter().enumerate() {
            ref_frame[2 * f] = c.re;
            ref_frame[2 * f + 1] = c.im;
        }
        let out = state.step(params, &mic_frame, &ref_frame)?;
        vad.push(out.vad);
        expected_delay.push(out.expected_delay);
        spec_rows.push(out.spec_final);
    }

    // Gate decisions need only past-and-current VAD values, so computing
    // them after the frame loop is equivalent to computing them inside it.
    let (vad_smoothed, masked) = mask_decisions(&vad, cfg.vad_smooth_frames, cfg.vad_nospeech_threshold);
    let scale = S::of(cfg.mask_factor);
    for (row, m) in spec_rows.iter_mut().zip(&masked) {
        if *m {
            for v in row.iter_mut() {
                *v = *v * scale;
            }
        }
    }

    // Weighted overlap-add, identical accumulation order to offline istft.
    let len = mic.len();
    let mut out = vec![S::zero(); len];
    let mut wsum = vec![S::zero(); len];
    let mut frame_buf = vec![S::zero(); cfg.stft.frame];
    for (t, row) in spec_rows.iter().enumerate() {
        synth_frame(&basis, row, &mut frame_buf);
        let start = t * cfg.stft.hop;
        for (i, v) in frame_buf.iter().enumerate() {
            let n = start + i;
            if n < len {
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

    Ok(EngineOutput {
        enhanced: out,
        vad,
        vad_smoothed,
        masked,
        expected_delay,
    })
}

/// Echo-return-loss enhancement in dB over whole signals:
/// `10*log10(sum(mic^2) / (sum(enhanced^2) + 1e-12))`.
pub fn erle_db<S: Scalar>(mic: &[S], enhanced: &[S]) -> Result<f64> {
    if mic.len() != enhanced.len() {
        return Err(Error::dim(
            "erle",
            format!("{} vs {} samples", mic.len(), enhanced.len()),
        ));
    }
    let mic_e: f64 = mic.iter().map(|v| v.as_f64() * v.as_f64()).sum();
    if mic_e == 0.0 {
        return Err(Error::contract("erle", "microphone signal has zero energy"));
    }
    let enh_e: f64 = enhanced.iter().map(|v| v.as_f64() * v.as_f64()).sum();
    Ok(10.0 * (mic_e / (enh_e + 1e-12)).log10())
}

/// ERLE restricted to samples whose frame (`floor(n / hop)`) is marked
/// active, e.g. to score only far-end-only regions of a double-talk file.
pub fn erle_db_frames<S: Scalar>(
    mic: &[S],
    enhanced: &[S],
    active: &[bool],
    hop: usize,
) -> Result<f64> {
    if mic.len() != enhanced.len() {
        return Err(Error::dim(
            "erle",
            format!("{} vs {} samples", mic.len(), enhanced.len()),
        ));
    }
    if hop == 0 || active.len() < mic.len().div_ceil(hop) {
        return Err(Error::dim(
            "erle",
            format!(
                "{} frame flags cannot cover {} samples at hop {}",
                active.len(),
                mic.len(),
                hop
            ),
        ));
    }
    let mut mic_e = 0.0f64;
    let mut enh_e = 0.0f64;
    for n in 0..mic.len() {
        if active[n / hop] {
            mic_e += mic[n].as_f64() * mic[n].as_f64();
            enh_e += enhanced[n].as_f64() * enhanced[n].as_f64();
        }
    }
    if mic_e == 0.0 {
        return Err(Error::contract(
            "erle",
            "microphone signal has zero energy over the active frames",
        ));
    }
    Ok(10.0 * (mic_e / (enh_e + 1e-12)).log10())
}
