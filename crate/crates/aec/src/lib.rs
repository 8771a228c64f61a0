//! Streaming acoustic echo cancellation.
//!
//! The crate is organized bottom-up:
//!
//! * [`numcore`] - dense tensors with reverse-mode autodiff and Adam
//! * [`dsp`] - STFT/iSTFT, GCC-PHAT time-delay estimation, delay discretization
//! * [`laec`] - NLMS adaptive linear echo canceller and the hybrid front end
//! * [`model`] - the neural canceller: twin encoders, delay attention over a
//!   reference history, recurrent fusion stack, complex convolving mask heads,
//!   voice-activity head; offline (trainable) and streaming forward paths
//! * [`datasynth`] - image-method room impulse responses and seeded scenario
//!   synthesis with per-frame delay/VAD labels
//! * [`train`] - progressive-learning losses and the training loop
//! * [`runtime`] - streaming engine, VAD masking, ERLE, WAV and checkpoint I/O
//! * [`gradcheck`] - finite-difference verification of every operator
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`). The runtime
//! paths use `f32`; gradient checking runs the same code at `f64`.

#![forbid(unsafe_code)]

mod error;
mod scalar;

pub mod datasynth;
pub mod dsp;
pub mod gradcheck;
pub mod laec;
pub mod model;
pub mod numcore;
pub mod runtime;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = numcore::Tensor<f32>;
pub type Tensor64 = numcore::Tensor<f64>;
pub type Graph32 = numcore::Graph<f32>;
pub type Graph64 = numcore::Graph<f64>;
pub type Audio32 = dsp::AudioBuffer<f32>;
pub type Audio64 = dsp::AudioBuffer<f64>;
pub type Spectrogram32 = dsp::Spectrogram<f32>;
pub type Spectrogram64 = dsp::Spectrogram<f64>;
