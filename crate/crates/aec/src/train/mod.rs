//! Losses and the training loop.
//!
//! The objective combines two spectrum terms — the mid-tap output scored
//! against the echo-free but still reverberant-noisy near end, the final
//! output against the anechoic near end — with a per-frame delay term and a
//! voice-activity term:
//!
//! ```text
//! total = spec1*L_spec_mid + spec2*L_spec_final + delay*L_delay + vad*L_vad
//! L_spec = 0.1 * modulation(spectra) + 0.9 * snr(synthesized waveforms)
//! ```
//!
//! The delay term supervises only frames whose correlation label is valid,
//! either as squared error on the soft delay estimate or as cross-entropy
//! on the attention row itself. Each optimizer step runs one full utterance
//! (capped at [`UTTERANCE_CAP_SECS`]): forward, combined loss, reverse
//! pass, globally clipped Adam update.
//!
//! Two front-end modes share the architecture. End-to-end feeds the raw
//! microphone and reference spectra. Hybrid first runs the linear canceller
//! (bulk-delay alignment plus NLMS) and feeds the residual and the aligned
//! reference, shifting the delay labels by the compensated bulk delay;
//! because both modes use identical parameter names and shapes, a hybrid
//! checkpoint seeds an end-to-end run by plain name matching.

mod loss_ops;
pub mod losses;

pub use losses::{delay_loss_ce, delay_loss_mse, modulation_loss, snr_loss, vad_bce, DelayLoss};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use crate::datasynth::{frame_delay_targets, Example};
use crate::dsp::{stft, StftConfig};
use crate::laec::{hybrid_preprocess, HybridConfig, NlmsConfig};
use crate::model::forward::spec_to_tensor;
use crate::model::{build_forward, init_params, transfer_init, ForwardOutputs, ModelConfig, TransferReport};
use crate::numcore::{
    adam_step, clip_global_norm, AdamConfig, AdamState, Graph, ParamSet, TensorId,
};
use crate::numcore::Tensor;
use crate::runtime::save_checkpoint;
use crate::{Error, Result, Scalar};

/// Longest utterance fed to one optimizer step, in seconds; longer examples
/// are truncated so a full-sequence step stays bounded.
pub const UTTERANCE_CAP_SECS: usize = 10;

/// Which signals the network trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Raw microphone and reference spectra.
    E2e,
    /// Linear-canceller residual and bulk-delay-aligned reference spectra.
    Hybrid,
}

/// How the delay head is supervised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayLossMode {
    /// Squared error on the soft (expectation) delay estimate.
    Mse,
    /// Cross-entropy on the attention distribution.
    Ce,
}

/// Term weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub spec1: f64,
    pub spec2: f64,
    pub delay: f64,
    pub vad: f64,
    /// Blend of the two ingredients inside each spectrum term.
    pub modulation: f64,
    pub snr: f64,
}

impl LossWeights {
    /// Standard weights: unit spectrum and VAD terms, a 0.1/0.9
    /// modulation/SNR blend, and a delay weight of 100 under MSE or 1 under
    /// cross-entropy — squared frame errors shrink quadratically near the
    /// target while the entropy stays in nats, so the two scales need
    /// different boosts to stay comparable with the other terms.
    pub fn for_mode(mode: DelayLossMode) -> Self {
        Self {
            spec1: 1.0,
            spec2: 1.0,
            delay: match mode {
                DelayLossMode::Mse => 100.0,
                DelayLossMode::Ce => 1.0,
            },
            vad: 1.0,
            modulation: 0.1,
            snr: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.spec1,
            self.spec2,
            self.delay,
            self.vad,
            self.modulation,
            self.snr,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::contract(
                "loss weights",
                format!("{self:?} must all be finite and >= 0"),
            ));
        }
        Ok(())
    }
}

/// One example converted to model-ready tensors and supervision, with the
/// chosen front end already applied (and thereby cached across epochs).
pub struct PreparedExample<S> {
    /// Framing everything below was computed with.
    pub stft: StftConfig,
    /// Interleaved `(t, f, 2)` spectrum of the near-end branch input.
    pub mic_spec: Tensor<S>,
    /// Interleaved `(t, f, 2)` spectrum of the far-end branch input.
    pub ref_spec: Tensor<S>,
    /// Mid-stage waveform target (echo removed, room and noise kept).
    pub target_mid: Vec<S>,
    /// Final waveform target (anechoic direct-path near end).
    pub target_final: Vec<S>,
    /// `(t, f)` magnitude envelope of the mid target's spectrum.
    pub env_mid: Vec<S>,
    /// `(t, f)` magnitude envelope of the final target's spectrum.
    pub env_final: Vec<S>,
    /// Per-frame near-end activity labels.
    pub vad: Vec<bool>,
    /// Per-frame delay classes.
    pub delay_class: Vec<usize>,
    /// Which frames actually carry delay supervision.
    pub delay_valid: Vec<bool>,
}

/// Convert one synthesized example into training inputs and targets.
///
/// The framing is derived from the example's rate and the model's bin
/// count; in hybrid mode the microphone is replaced by the linear
/// canceller's residual, the reference by its aligned copy, and every delay
/// label is shifted down by the compensated bulk delay (labels pushed
/// outside `[0, history)` lose their validity rather than error, since the
/// front end may legitimately over- or under-shift a noisy label).
pub fn prepare_example<S: Scalar>(
    ex: &Example,
    mcfg: &ModelConfig,
    mode: TrainMode,
) -> Result<PreparedExample<S>> {
    mcfg.validate()?;
    let stft_cfg = StftConfig::for_rate_with_fft(ex.rate, (mcfg.bins - 1) * 2);
    stft_cfg.validate()?;
    let cap = UTTERANCE_CAP_SECS * ex.rate as usize;
    let len = ex.mic.len().min(cap);
    if len == 0 {
        return Err(Error::contract("prepare_example", "example has no samples"));
    }
    if ex.reference.len() < len || ex.target_mid.len() < len || ex.target_final.len() < len {
        return Err(Error::dim(
            "prepare_example",
            "mic, reference, and targets must be equally long".to_string(),
        ));
    }
    let frames = stft_cfg.frames_for(len);
    if ex.vad.len() < frames {
        return Err(Error::dim(
            "prepare_example",
            format!("{} vad labels for {} frames", ex.vad.len(), frames),
        ));
    }

    let cast = |v: &[f64]| -> Vec<S> { v.iter().map(|&x| S::of(x)).collect() };
    let (mic_in, ref_in, shift) = match mode {
        TrainMode::E2e => (cast(&ex.mic[..len]), cast(&ex.reference[..len]), 0usize),
        TrainMode::Hybrid => {
            let front = hybrid_preprocess(
                &cast(&ex.mic[..len]),
                &cast(&ex.reference[..len]),
                &HybridConfig {
                    nlms: NlmsConfig::default(),
                    gcc: ex.gcc,
                },
            )?;
            let shift = (front.bulk_delay + stft_cfg.hop / 2) / stft_cfg.hop;
            (front.error, front.aligned_reference, shift)
        }
    };

    let (mut delay_class, mut delay_valid) =
        frame_delay_targets(&ex.delay_windows, &ex.gcc, &stft_cfg, frames);
    for (c, v) in delay_class.iter_mut().zip(delay_valid.iter_mut()) {
        if !*v {
            continue;
        }
        let shifted = *c as isize - shift as isize;
        if shifted < 0 || shifted as usize >= mcfg.history {
            *v = false;
            *c = 0;
        } else {
            *c = shifted as usize;
        }
    }

    let env = |w: &[S]| -> Result<Vec<S>> {
        Ok(stft(w, &stft_cfg)?
            .data()
            .iter()
            .map(|c| (c.re * c.re + c.im * c.im).sqrt())
            .collect())
    };
    let target_mid = cast(&ex.target_mid[..len]);
    let target_final = cast(&ex.target_final[..len]);
    let env_mid = env(&target_mid)?;
    let env_final = env(&target_final)?;
    Ok(PreparedExample {
        stft: stft_cfg,
        mic_spec: spec_to_tensor(&stft(&mic_in, &stft_cfg)?),
        ref_spec: spec_to_tensor(&stft(&ref_in, &stft_cfg)?),
        target_mid,
        target_final,
        env_mid,
        env_final,
        vad: ex.vad[..frames].to_vec(),
        delay_class,
        delay_valid,
    })
}

/// Per-term values of one combined-loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub total: f64,
    pub spec1: f64,
    pub spec2: f64,
    pub delay: f64,
    pub vad: f64,
    /// Frames that carried delay supervision; 0 means the delay term was
    /// zero by definition, not by convergence.
    pub delay_valid_frames: usize,
}

/// One spectrum term: synthesize the spectrum node to a waveform for the
/// SNR part, score the modulation distance on the spectrum itself, blend.
fn stage_loss<S: Scalar>(
    g: &mut Graph<S>,
    spec: TensorId,
    target_wave: &[S],
    target_env: &[S],
    stft_cfg: &StftConfig,
    w: &LossWeights,
) -> Result<TensorId> {
    let wave = g.istft_wave(spec, stft_cfg, target_wave.len())?;
    let snr = g.snr_loss(wave, target_wave)?;
    let md = g.modulation_loss(spec, target_env)?;
    g.weighted_sum(&[(md, S::of(w.modulation)), (snr, S::of(w.snr))])
}

/// Weighted combination of the four scalar terms.
pub(crate) fn combine_terms<S: Scalar>(
    g: &mut Graph<S>,
    spec1: TensorId,
    spec2: TensorId,
    delay: TensorId,
    vad: TensorId,
    w: &LossWeights,
) -> Result<TensorId> {
    g.weighted_sum(&[
        (spec1, S::of(w.spec1)),
        (spec2, S::of(w.spec2)),
        (delay, S::of(w.delay)),
        (vad, S::of(w.vad)),
    ])
}

/// Build the combined objective on the graph and report every term.
pub fn total_loss<S: Scalar>(
    g: &mut Graph<S>,
    fwd: &ForwardOutputs,
    ex: &PreparedExample<S>,
    w: &LossWeights,
    mode: DelayLossMode,
) -> Result<(TensorId, LossBreakdown)> {
    w.validate()?;
    let spec1 = stage_loss(g, fwd.spec_mid, &ex.target_mid, &ex.env_mid, &ex.stft, w)?;
    let spec2 = stage_loss(g, fwd.spec_final, &ex.target_final, &ex.env_final, &ex.stft, w)?;
    let delay = match mode {
        DelayLossMode::Mse => g.delay_mse(fwd.expected_delay, &ex.delay_class, &ex.delay_valid)?,
        DelayLossMode::Ce => g.delay_ce(fwd.attention, &ex.delay_class, &ex.delay_valid)?,
    };
    let vad = g.vad_bce(fwd.vad, &ex.vad)?;
    let total = combine_terms(g, spec1, spec2, delay, vad, w)?;
    let bd = LossBreakdown {
        total: g.value(total).item().as_f64(),
        spec1: g.value(spec1).item().as_f64(),
        spec2: g.value(spec2).item().as_f64(),
        delay: g.value(delay).item().as_f64(),
        vad: g.value(vad).item().as_f64(),
        delay_valid_frames: ex.delay_valid.iter().filter(|v| **v).count(),
    };
    Ok((total, bd))
}

/// Knobs of one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Optimizer steps; each consumes one example, round-robin.
    pub steps: usize,
    pub adam: AdamConfig,
    /// Global gradient-norm ceiling.
    pub clip: f64,
    pub delay_mode: DelayLossMode,
    pub mode: TrainMode,
    /// Seed for the freshly initialized parameters.
    pub init_seed: u64,
    /// When set, the final parameters are written here.
    pub checkpoint_path: Option<PathBuf>,
    /// When set, one text record per step is appended here.
    pub log_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            adam: AdamConfig::default(),
            clip: 5.0,
            delay_mode: DelayLossMode::Mse,
            mode: TrainMode::E2e,
            init_seed: 0,
            checkpoint_path: None,
            log_path: None,
        }
    }
}

/// One row of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub total: f64,
    pub spec1: f64,
    pub spec2: f64,
    pub delay: f64,
    pub vad: f64,
}

/// What a training run produced.
#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub params: ParamSet<S>,
    pub log: Vec<StepRecord>,
    /// Name-by-name report when the run was seeded from another set.
    pub transfer: Option<TransferReport>,
}

/// Run the training loop: initialize (optionally from a source parameter
/// set), prepare every example once, then step through the dataset
/// round-robin — forward, combined loss, reverse pass, clipped Adam update.
/// A non-finite loss aborts with the offending term named.
pub fn train<S: Scalar>(
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    dataset: &[Example],
    init_from: Option<&ParamSet<S>>,
) -> Result<TrainOutcome<S>> {
    mcfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::contract("train", "dataset is empty"));
    }
    let mut params = init_params::<S>(mcfg, tcfg.init_seed)?;
    let transfer = match init_from {
        Some(src) => Some(transfer_init(&mut params, src)?),
        None => None,
    };
    let prepared = dataset
        .iter()
        .map(|ex| prepare_example::<S>(ex, mcfg, tcfg.mode))
        .collect::<Result<Vec<_>>>()?;
    let weights = LossWeights::for_mode(tcfg.delay_mode);
    let sizes: Vec<usize> = params.iter().map(|e| e.tensor.numel()).collect();
    let mut adam = AdamState::new(&sizes);
    let mut log = Vec::with_capacity(tcfg.steps);
    let mut log_file = match &tcfg.log_path {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p)?);
            writeln!(f, "# step total spec1 spec2 delay vad")?;
            Some(f)
        }
        None => None,
    };
    for step in 0..tcfg.steps {
        let ex = &prepared[step % prepared.len()];
        let mut g = Graph::new();
        let fwd = build_forward(&mut g, &params, mcfg, ex.mic_spec.clone(), ex.ref_spec.clone())?;
        let (loss_id, bd) = total_loss(&mut g, &fwd, ex, &weights, tcfg.delay_mode)?;
        for (term, v) in [
            ("spec1", bd.spec1),
            ("spec2", bd.spec2),
            ("delay", bd.delay),
            ("vad", bd.vad),
            ("total", bd.total),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    term,
                    value: v,
                });
            }
        }
        g.backward(loss_id)?;
        let mut grads: Vec<Vec<S>> = fwd
            .param_ids
            .iter()
            .zip(params.iter())
            .map(|(id, e)| match g.grad(*id) {
                Some(s) => s.to_vec(),
                None => vec![S::zero(); e.tensor.numel()],
            })
            .collect();
        clip_global_norm(&mut grads, tcfg.clip);
        let mut views: Vec<&mut [S]> = params.iter_mut().map(|e| e.tensor.data_mut()).collect();
        adam_step(&mut views, &grads, &mut adam, &tcfg.adam);
        drop(views);
        if let Some(f) = &mut log_file {
            writeln!(
                f,
                "{} {} {} {} {} {}",
                step, bd.total, bd.spec1, bd.spec2, bd.delay, bd.vad
            )?;
        }
        log.push(StepRecord {
            step,
            total: bd.total,
            spec1: bd.spec1,
            spec2: bd.spec2,
            delay: bd.delay,
            vad: bd.vad,
        });
    }
    if let Some(f) = &mut log_file {
        f.flush()?;
    }
    if let Some(p) = &tcfg.checkpoint_path {
        save_checkpoint(&params, p)?;
    }
    Ok(TrainOutcome {
        params,
        log,
        transfer,
    })
}
