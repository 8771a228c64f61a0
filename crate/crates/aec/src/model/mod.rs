//! The neural echo canceller.
//!
//! Two spectrum branches (microphone and far-end reference) are projected to
//! a channel space and encoded by recurrent blocks. An attention stage
//! correlates the microphone encoding against the last `history` frames of
//! the reference encoding, turns the per-delay scores into a softmax
//! distribution, and uses it to align the reference. The aligned reference
//! is fused with the microphone encoding and refined by a stack of recurrent
//! blocks; complex convolving masks decode an enhanced spectrum at a mid tap
//! (trained toward an echo-free but still-noisy target) and at the final
//! layer (trained toward the clean near end), and a voice-activity head
//! reads the mid tap.
//!
//! [`forward`] builds the whole computation on an autodiff graph for
//! training; [`streaming`] runs the identical arithmetic one frame at a time
//! with explicit state, producing bit-identical outputs.

pub mod forward;
mod ops;
pub mod streaming;

pub use forward::{build_forward, ForwardOutputs};
pub use streaming::{StreamOutput, StreamState};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numcore::{ParamSet, Tensor};
use crate::{Error, Result, Scalar};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Channel width `c` of every recurrent block.
    pub channels: usize,
    /// Reference history length `h` in frames; attention scores this many
    /// candidate delays per frame.
    pub history: usize,
    /// Encoder blocks per branch.
    pub n_enc: usize,
    /// Fusion blocks after the branches merge.
    pub n_fusion: usize,
    /// Frames gathered by the time unfold feeding each time-axis GRU.
    pub kernel_time: usize,
    /// Bins gathered by the frequency unfold feeding each frequency-axis GRU.
    pub kernel_freq: usize,
    /// Mask taps along time (current frame plus `ccm_taps_time - 1` past).
    pub ccm_taps_time: usize,
    /// Mask taps along frequency, centered; must be odd.
    pub ccm_taps_freq: usize,
    /// Global layer whose output feeds the mid mask head and the VAD head.
    /// Layers count encoder outputs first (mic, then ref, per encoder
    /// round), then fusion blocks.
    pub tap_layer: usize,
    /// Spectrum bins `f` the model is built for.
    pub bins: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 64,
            history: 100,
            n_enc: 1,
            n_fusion: 8,
            kernel_time: 4,
            kernel_freq: 4,
            ccm_taps_time: 2,
            ccm_taps_freq: 3,
            tap_layer: 5,
            bins: 257,
        }
    }
}

impl ModelConfig {
    /// Total depth counted in global layers: each encoder round contributes
    /// the mic and ref block outputs, then each fusion block one more.
    pub fn global_layers(&self) -> usize {
        2 * self.n_enc + self.n_fusion
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::contract("model config", detail));
        if self.channels == 0 || self.history == 0 || self.bins < 2 {
            return bad(format!(
                "channels {}, history {}, bins {} must be positive (bins >= 2)",
                self.channels, self.history, self.bins
            ));
        }
        if self.n_enc == 0 || self.n_fusion == 0 {
            return bad(format!(
                "need at least one encoder ({}) and one fusion block ({})",
                self.n_enc, self.n_fusion
            ));
        }
        if self.kernel_time == 0 || self.kernel_freq == 0 {
            return bad("unfold kernels must be >= 1".into());
        }
        if self.ccm_taps_time == 0 || self.ccm_taps_freq % 2 == 0 {
            return bad(format!(
                "mask taps: time {} must be >= 1, freq {} must be odd",
                self.ccm_taps_time, self.ccm_taps_freq
            ));
        }
        if self.tap_layer <= 2 * self.n_enc || self.tap_layer > self.global_layers() {
            return bad(format!(
                "tap layer {} must be a fusion layer in ({}, {}]",
                self.tap_layer,
                2 * self.n_enc,
                self.global_layers()
            ));
        }
        Ok(())
    }

    /// Mask channels per (t, f) cell: taps_time * taps_freq complex pairs.
    pub(crate) fn mask_width(&self) -> usize {
        self.ccm_taps_time * self.ccm_taps_freq * 2
    }
}

/// One parameter's canonical name, shape, and the fan-in used to scale its
/// initialization.
pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
}

impl ParamSpec {
    fn weight(name: String, shape: Vec<usize>) -> Self {
        let fan_in = shape[0];
        Self {
            name,
            shape,
            fan_in,
        }
    }

    fn bias(name: String, len: usize) -> Self {
        Self {
            name,
            shape: vec![len],
            fan_in: 0,
        }
    }
}

fn block_specs(prefix: &str, cfg: &ModelConfig, out: &mut Vec<ParamSpec>) {
    let c = cfg.channels;
    for (sub, kernel) in [("time", cfg.kernel_time), ("freq", cfg.kernel_freq)] {
        out.push(ParamSpec::weight(
            format!("{prefix}.{sub}.gru.w_ih"),
            vec![kernel * c, 3 * c],
        ));
        out.push(ParamSpec::weight(
            format!("{prefix}.{sub}.gru.w_hh"),
            vec![c, 3 * c],
        ));
        out.push(ParamSpec::bias(format!("{prefix}.{sub}.gru.b_ih"), 3 * c));
        out.push(ParamSpec::bias(format!("{prefix}.{sub}.gru.b_hh"), 3 * c));
        out.push(ParamSpec::weight(format!("{prefix}.{sub}.out.w"), vec![c, c]));
        out.push(ParamSpec::bias(format!("{prefix}.{sub}.out.b"), c));
    }
}

/// Enumerate every parameter in canonical (checkpoint/transfer) order.
pub(crate) fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let c = cfg.channels;
    let mut v = Vec::new();
    v.push(ParamSpec::weight("mic_proj.w".into(), vec![2, c]));
    v.push(ParamSpec::bias("mic_proj.b".into(), c));
    v.push(ParamSpec::weight("ref_proj.w".into(), vec![2, c]));
    v.push(ParamSpec::bias("ref_proj.b".into(), c));
    for i in 1..=cfg.n_enc {
        block_specs(&format!("enc_mic{i}"), cfg, &mut v);
        block_specs(&format!("enc_ref{i}"), cfg, &mut v);
    }
    v.push(ParamSpec::weight("attn.collapse.w".into(), vec![c, 1]));
    v.push(ParamSpec::bias("attn.collapse.b".into(), 1));
    v.push(ParamSpec::weight("fusion_proj.w".into(), vec![2 * c, c]));
    v.push(ParamSpec::bias("fusion_proj.b".into(), c));
    for k in 1..=cfg.n_fusion {
        block_specs(&format!("fusion{k}"), cfg, &mut v);
    }
    v.push(ParamSpec::weight("ccm_mid.w".into(), vec![c, cfg.mask_width()]));
    v.push(ParamSpec::bias("ccm_mid.b".into(), cfg.mask_width()));
    v.push(ParamSpec::weight(
        "ccm_final.w".into(),
        vec![c, cfg.mask_width()],
    ));
    v.push(ParamSpec::bias("ccm_final.b".into(), cfg.mask_width()));
    v.push(ParamSpec::weight("vad.w".into(), vec![c, 1]));
    v.push(ParamSpec::bias("vad.b".into(), 1));
    v
}

/// Trainable parameter count for a configuration.
pub fn param_count(cfg: &ModelConfig) -> usize {
    param_specs(cfg)
        .iter()
        .map(|s| s.shape.iter().product::<usize>())
        .sum()
}

/// Seeded initialization: weights uniform in `+-1/sqrt(fan_in)`, biases
/// zero. Draw order equals registry order, so a seed fully determines every
/// value.
pub fn init_params<S: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ParamSet<S>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    for spec in param_specs(cfg) {
        let n: usize = spec.shape.iter().product();
        let data = if spec.fan_in == 0 {
            vec![S::zero(); n]
        } else {
            let bound = 1.0 / (spec.fan_in as f64).sqrt();
            (0..n)
                .map(|_| S::of(rng.gen_range(-bound..bound)))
                .collect()
        };
        params.push(spec.name, Tensor::new(spec.shape, data));
    }
    Ok(params)
}

/// What [`transfer_init`] did, name by name.
#[derive(Debug, Clone, Default)]
pub struct TransferReport {
    /// Destination tensors overwritten from the source.
    pub copied: Vec<String>,
    /// Destination tensors with no source counterpart (left initialized).
    pub skipped_missing: Vec<String>,
    /// Source tensors with no destination counterpart.
    pub ignored_extra: Vec<String>,
}

/// Copy source parameters into the destination wherever names match. A name
/// match with a shape mismatch is an error; missing and extra names are
/// reported, not errors, so a smaller/larger variant can still seed a model.
pub fn transfer_init<S: Scalar>(
    dst: &mut ParamSet<S>,
    src: &ParamSet<S>,
) -> Result<TransferReport> {
    let mut report = TransferReport::default();
    for entry in dst.iter_mut() {
        match src.get(&entry.name) {
            Some(t) if t.shape() == entry.tensor.shape() => {
                entry.tensor = t.clone();
                report.copied.push(entry.name.clone());
            }
            Some(t) => {
                return Err(Error::ParamShape {
                    name: entry.name.clone(),
                    src: t.shape().to_vec(),
                    dst: entry.tensor.shape().to_vec(),
                });
            }
            None => report.skipped_missing.push(entry.name.clone()),
        }
    }
    for entry in src.iter() {
        if dst.get(&entry.name).is_none() {
            report.ignored_extra.push(entry.name.clone());
        }
    }
    Ok(report)
}

#[cfg(test)]
pub(crate) fn tiny_config() -> ModelConfig {
    ModelConfig {
        channels: 6,
        history: 5,
        n_enc: 1,
        n_fusion: 2,
        kernel_time: 3,
        kernel_freq: 2,
        ccm_taps_time: 2,
        ccm_taps_freq: 3,
        tap_layer: 3,
        bins: 7,
    }
}
