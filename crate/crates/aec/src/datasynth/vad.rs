//! Energy-based voice-activity labeling for clean synthesized targets.
//!
//! A frame is active when its RMS level clears either gate:
//!
//! * the adaptive gate — 12 dB above the 10th-percentile frame level, which
//!   separates speech from the recording's own quiet floor, or
//! * the absolute gate — -45 dBFS, which keeps sustained loud content (where
//!   no frame is 12 dB above the percentile floor) labeled active.
//!
//! Equivalently, the threshold is `min(p10 + margin, absolute)`. Active
//! stretches are extended by a short hangover so weak word endings are not
//! clipped. Framing matches spectral analysis (`ceil(len / hop)` frames of
//! `frame` samples starting at `t * hop`, zero-padded at the tail) so labels
//! align one-to-one with spectrum frames.

use crate::dsp::StftConfig;
use crate::Scalar;

/// Labeling parameters, all levels in dB.
#[derive(Debug, Clone, Copy)]
pub struct VadLabelConfig {
    /// Frame length in samples.
    pub frame: usize,
    /// Hop between frames in samples.
    pub hop: usize,
    /// Adaptive gate: dB above the 10th-percentile frame level.
    pub margin_db: f64,
    /// Absolute gate in dBFS.
    pub absolute_gate_dbfs: f64,
    /// Frames an active stretch is extended after the last loud frame.
    pub hangover_frames: usize,
}

impl VadLabelConfig {
    /// Framing aligned with a spectral analysis configuration.
    pub fn for_stft(cfg: &StftConfig) -> Self {
        Self {
            frame: cfg.frame,
            hop: cfg.hop,
            margin_db: 12.0,
            absolute_gate_dbfs: -45.0,
            hangover_frames: 5,
        }
    }
}

/// Label each frame of `x` as speech-active or not.
pub fn energy_vad<S: Scalar>(x: &[S], cfg: &VadLabelConfig) -> Vec<bool> {
    assert!(cfg.frame > 0 && cfg.hop > 0, "framing must be positive");
    if x.is_empty() {
        return Vec::new();
    }
    let frames = x.len().div_ceil(cfg.hop);
    let mut level_db = Vec::with_capacity(frames);
    for t in 0..frames {
        let start = t * cfg.hop;
        let end = (start + cfg.frame).min(x.len());
        let mut acc = 0.0f64;
        for v in &x[start..end] {
            let v = v.as_f64();
            acc += v * v;
        }
        // The tail frame is zero-padded: divide by the full frame length.
        let rms = (acc / cfg.frame as f64).sqrt();
        level_db.push(20.0 * (rms + 1e-12).log10());
    }
    // Nearest-rank 10th percentile of the frame levels.
    let mut sorted = level_db.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p10 = sorted[(frames - 1) / 10];
    let threshold = (p10 + cfg.margin_db).min(cfg.absolute_gate_dbfs);

    let mut active = vec![false; frames];
    let mut hang = 0usize;
    for t in 0..frames {
        if level_db[t] >= threshold {
            active[t] = true;
            hang = cfg.hangover_frames;
        } else if hang > 0 {
            active[t] = true;
            hang -= 1;
        }
    }
    active
}
