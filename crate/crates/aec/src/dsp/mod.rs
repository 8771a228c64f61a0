//! Signal-processing primitives: framing, STFT/iSTFT, and GCC-PHAT
//! time-delay estimation.

mod gcc;
mod stft;

pub use gcc::{estimate_delay, gcc_phat_track, gcc_phat_window, GccConfig, GccFrame};
pub use stft::{istft, stft, Spectrogram, StftConfig};
pub(crate) use stft::{synth_frame, SynthBasis};

use crate::Scalar;

/// Mono audio with its sample rate.
#[derive(Debug, Clone)]
pub struct AudioBuffer<S> {
    pub samples: Vec<S>,
    pub rate: u32,
}

impl<S: Scalar> AudioBuffer<S> {
    pub fn new(samples: Vec<S>, rate: u32) -> Self {
        Self { samples, rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }
}

/// Map a delay in samples to a frame-delay class in `[0, h1)`: nearest frame
/// count at the given hop, clamped to the last class.
pub fn discretize_delay(delay_samples: usize, hop: usize, h: usize) -> usize {
    assert!(hop > 0 && h > 0, "hop and class count must be positive");
    ((delay_samples + hop / 2) / hop).min(h - 1)
}
