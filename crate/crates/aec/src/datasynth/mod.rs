//! Synthetic echo-scenario generation.
//!
//! Each example models a loudspeaker/microphone scene: the far-end signal is
//! delayed (transport plus propagation, one bulk figure), convolved with a
//! room response (acoustic echo path), and mixed with an optional near-end
//! talker (its own short room path) and optional background noise:
//!
//! ```text
//! mic  = echo + near + noise
//! echo = rir_far * delay(farend)     scaled to the requested SER
//! near = rir_near * speech           level anchor, entering at unit gain
//! noise                              scaled to the requested SNR
//! ```
//!
//! The far response is time-aligned so its direct-path peak lands exactly
//! at the configured delay; the echo's bulk lag is then the configured
//! value regardless of room geometry. Power ratios are exact by
//! construction and both are anchored on the near-end component. `None`
//! for a ratio means the component is absent (ratio of +inf), with one
//! reading decided by the speech buffer itself: a silent speech buffer with
//! no ratio requested is far-end single talk, and the echo passes through
//! unscaled.
//!
//! Two stage targets accompany the mixture: the reverberant near-end plus
//! noise (everything but echo), and the anechoic direct-path near-end
//! (speech through the free-field version of its own room path). Alongside
//! the audio, every example carries supervision:
//!
//! * voice activity per analysis frame, from the anechoic target
//!   ([`vad::energy_vad`]),
//! * a delay class per correlation window from a GCC-PHAT track over the
//!   isolated echo path ([`crate::dsp::gcc_phat_track`]). A window's label
//!   is valid when its correlation peak is confident *and* agrees with the
//!   consensus (median class of the confident windows) within one class;
//!   [`frame_delay_targets`] expands the windows to per-frame training
//!   targets using only windows that have fully completed by each frame's
//!   end, the same information a causal system would have.
//!
//! Everything is a pure function of the seed.

pub mod rir;
pub mod sources;
pub mod vad;

pub use rir::{image_source_rir, measure_rt60, RoomConfig, SPEED_OF_SOUND};
pub use sources::{noise_like, speech_like};
pub use vad::{energy_vad, VadLabelConfig};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::dsp::{discretize_delay, gcc_phat_track, AudioBuffer, GccConfig, StftConfig};
use crate::runtime::wav;
use crate::{Error, Result};

/// Minimum PHAT peak-to-mean ratio for a window to count as confident.
const LABEL_CONFIDENCE: f64 = 4.0;

/// Mixing parameters for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct MixConfig {
    /// Bulk delay of the echo path in milliseconds.
    pub delay_ms: f64,
    /// Near-end speech-to-echo ratio in dB; `None` means no echo (unless
    /// the speech buffer is silent — see the module docs).
    pub ser_db: Option<f64>,
    /// Near-end speech-to-noise ratio in dB; `None` means no noise.
    pub snr_db: Option<f64>,
    /// Reverberation time of the simulated room.
    pub rt60: f64,
    /// Image-source enumeration order.
    pub max_order: usize,
    /// Number of delay classes (frames) the labels are discretized into.
    pub history: usize,
    /// Drives room geometry and reverberation tails.
    pub seed: u64,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            delay_ms: 200.0,
            ser_db: Some(0.0),
            snr_db: Some(20.0),
            rt60: 0.25,
            max_order: 6,
            history: 100,
            seed: 0,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delay_ms < 0.0 {
            return Err(Error::contract("datasynth", "delay must be >= 0"));
        }
        if self.history == 0 {
            return Err(Error::contract("datasynth", "history must be >= 1"));
        }
        if self.rt60 < 0.0 {
            return Err(Error::contract("datasynth", "rt60 must be >= 0"));
        }
        Ok(())
    }
}

/// One fully-synthetic scene: generated sources plus a [`MixConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub rate: u32,
    pub duration_secs: f64,
    /// Generate a near-end talker; `false` leaves the speech buffer silent
    /// (far-end single talk when `mix.ser_db` is `None`).
    pub near_speech: bool,
    pub mix: MixConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            rate: 16000,
            duration_secs: 4.0,
            near_speech: true,
            mix: MixConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rate < 1000 || self.rate % 50 != 0 {
            return Err(Error::contract(
                "datasynth",
                "rate must be >= 1000 and divisible by 50 for 20 ms framing",
            ));
        }
        if !(self.duration_secs > 0.0) {
            return Err(Error::contract("datasynth", "duration must be positive"));
        }
        self.mix.validate()
    }
}

/// One delay observation from a correlation window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayLabel {
    /// First sample of the window.
    pub start: usize,
    /// Delay class in `[0, history)`.
    pub class: usize,
    /// PHAT peak-to-mean ratio of the window.
    pub confidence: f64,
    /// Confident and within one class of the consensus.
    pub valid: bool,
}

/// Scenario facts recorded with each example.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleMeta {
    pub seed: u64,
    /// Delay classes the labels were discretized into.
    pub history: usize,
    /// Bulk echo delay as configured.
    pub delay_ms: f64,
    /// Bulk echo delay in samples.
    pub echo_delay_samples: usize,
    /// Near-end direct-path propagation delay in samples (the lag of the
    /// anechoic target relative to the dry speech).
    pub near_direct_samples: usize,
    /// Class of the bulk delay.
    pub bulk_delay_class: usize,
    pub ser_db: Option<f64>,
    pub snr_db: Option<f64>,
    pub rt60: f64,
    /// Median class of the confident windows, when any.
    pub consensus_class: Option<usize>,
    /// Median PHAT confidence over all windows.
    pub median_confidence: f64,
}

/// Training example: inputs, stage targets, and supervision.
#[derive(Debug, Clone)]
pub struct Example {
    pub rate: u32,
    /// Microphone capture (echo + near + noise).
    pub mic: Vec<f64>,
    /// Far-end signal as played (undelayed).
    pub reference: Vec<f64>,
    /// First-stage target: reverberant near-end plus noise (echo removed).
    pub target_mid: Vec<f64>,
    /// Final target: anechoic direct-path near-end.
    pub target_final: Vec<f64>,
    /// Per-frame voice activity of the near-end talker.
    pub vad: Vec<bool>,
    /// Per-window delay observations; empty when the scene has no echo.
    pub delay_windows: Vec<DelayLabel>,
    /// Correlation-window geometry the labels were made with.
    pub gcc: GccConfig,
    pub meta: ExampleMeta,
}

/// The mixture components, for tests and oracle evaluation.
#[derive(Debug, Clone)]
pub struct SynthParts {
    pub echo: Vec<f64>,
    pub near: Vec<f64>,
    pub noise: Vec<f64>,
}

/// Linear convolution via FFT, truncated to `out_len` samples.
pub(crate) fn fft_convolve(x: &[f64], h: &[f64], out_len: usize) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; out_len];
    }
    let n = (x.len() + h.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut b: Vec<Complex<f64>> = h.iter().map(|&v| Complex::new(v, 0.0)).collect();
    a.resize(n, Complex::new(0.0, 0.0));
    b.resize(n, Complex::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (av, bv) in a.iter_mut().zip(&b) {
        *av *= bv;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    (0..out_len)
        .map(|i| a.get(i).map(|c| c.re * scale).unwrap_or(0.0))
        .collect()
}

fn delayed(x: &[f64], delay: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; x.len()];
    for n in delay..x.len() {
        out[n] = x[n - delay];
    }
    out
}

fn sum_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Place a point at a random direction and distance from `center`, clamped
/// inside the room with a wall margin. Distances may shrink under clamping;
/// anything at least half the requested minimum is accepted.
fn place_from(
    rng: &mut ChaCha8Rng,
    dims: [f64; 3],
    center: [f64; 3],
    min_d: f64,
    max_d: f64,
) -> [f64; 3] {
    const MARGIN: f64 = 0.15;
    for _ in 0..128 {
        let v = [
            rng.gen_range(-1.0..1.0f64),
            rng.gen_range(-1.0..1.0f64),
            rng.gen_range(-1.0..1.0f64),
        ];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(0.05..=1.0).contains(&norm) {
            continue;
        }
        let d = rng.gen_range(min_d..max_d);
        let mut p = [0.0f64; 3];
        for i in 0..3 {
            p[i] = (center[i] + v[i] / norm * d).clamp(MARGIN, dims[i] - MARGIN);
        }
        let dd = ((p[0] - center[0]).powi(2)
            + (p[1] - center[1]).powi(2)
            + (p[2] - center[2]).powi(2))
        .sqrt();
        if dd >= min_d * 0.5 {
            return p;
        }
    }
    // Deterministic fallback: offset along x.
    let mut p = center;
    p[0] = if center[0] + min_d < dims[0] - MARGIN {
        center[0] + min_d
    } else {
        (center[0] - min_d).max(MARGIN)
    };
    p
}

/// Mix one scene from caller-provided source buffers. All buffers must
/// share one rate and length; see the module docs for the signal model and
/// the reading of `None` ratios.
pub fn make_example(
    speech: &AudioBuffer<f64>,
    noise: &AudioBuffer<f64>,
    farend: &AudioBuffer<f64>,
    cfg: &MixConfig,
) -> Result<(Example, SynthParts)> {
    cfg.validate()?;
    let rate = speech.rate;
    if farend.rate != rate || noise.rate != rate {
        return Err(Error::contract(
            "datasynth",
            format!(
                "source rates differ: speech {rate}, noise {}, farend {}",
                noise.rate, farend.rate
            ),
        ));
    }
    if rate < 1000 || rate % 50 != 0 {
        return Err(Error::contract(
            "datasynth",
            "rate must be >= 1000 and divisible by 50 for 20 ms framing",
        ));
    }
    let len = speech.len();
    if len == 0 || noise.len() != len || farend.len() != len {
        return Err(Error::contract(
            "datasynth",
            format!(
                "source lengths must match and be nonzero: speech {len}, noise {}, farend {}",
                noise.len(),
                farend.len()
            ),
        ));
    }
    let stft_cfg = StftConfig::for_rate(rate);
    let delay = (cfg.delay_ms / 1000.0 * rate as f64).round() as usize;

    let speech_active = sum_sq(&speech.samples) > 0.0;
    if !speech_active && (cfg.ser_db.is_some() || cfg.snr_db.is_some()) {
        return Err(Error::contract(
            "datasynth",
            "speech component has zero energy (needed as the SER/SNR anchor)",
        ));
    }
    // `None` SER with live speech removes the echo; with silent speech it
    // is far-end single talk and the echo passes through unscaled.
    let wants_echo = cfg.ser_db.is_some() || !speech_active;
    if wants_echo {
        if sum_sq(&farend.samples) == 0.0 {
            return Err(Error::contract(
                "datasynth",
                "farend component has zero energy",
            ));
        }
        if delay >= len {
            return Err(Error::contract(
                "datasynth",
                format!("echo delay {delay} samples exceeds the signal length {len}"),
            ));
        }
        if (delay + stft_cfg.hop / 2) / stft_cfg.hop >= cfg.history {
            return Err(Error::contract(
                "datasynth",
                format!(
                    "bulk delay {delay} samples falls outside the {}-class label range",
                    cfg.history
                ),
            ));
        }
    }
    if cfg.snr_db.is_some() && sum_sq(&noise.samples) == 0.0 {
        return Err(Error::contract(
            "datasynth",
            "noise component has zero energy",
        ));
    }

    // Geometry: loudspeaker a couple of meters out, near-end talker close.
    let mut room_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    room_rng.set_stream(4);
    let dims = [
        room_rng.gen_range(4.0..7.0f64),
        room_rng.gen_range(3.0..6.0f64),
        room_rng.gen_range(2.4..3.2f64),
    ];
    let mic_pos = [
        room_rng.gen_range(0.5..dims[0] - 0.5),
        room_rng.gen_range(0.5..dims[1] - 0.5),
        room_rng.gen_range(0.5..dims[2] - 0.5),
    ];
    let far_src = place_from(&mut room_rng, dims, mic_pos, 1.0, 2.5);
    let near_src = place_from(&mut room_rng, dims, mic_pos, 0.2, 0.5);
    let far_room = RoomConfig {
        dims,
        source: far_src,
        mic: mic_pos,
        rt60: cfg.rt60,
        max_order: cfg.max_order,
        seed: room_rng.gen(),
    };
    let near_room = RoomConfig {
        source: near_src,
        seed: room_rng.gen(),
        ..far_room
    };
    let rir_len = (((cfg.rt60 * 1.5) * rate as f64) as usize + rate as usize / 8)
        .max(256)
        .min(len);

    let mut echo = if wants_echo {
        let h_far = image_source_rir(&far_room, rate, rir_len)?;
        // Align the response so the direct-path peak sits exactly at the
        // configured delay: slide the kernel to its peak (keeping what fits
        // of the interpolation pre-ring) and shorten the transport shift by
        // the kept lead-in.
        let idx = far_room.direct_delay_samples(rate);
        let peak = (idx.saturating_sub(1)..=(idx + 1).min(h_far.len() - 1))
            .max_by(|&a, &b| h_far[a].abs().partial_cmp(&h_far[b].abs()).unwrap())
            .unwrap();
        let lead = peak.min(rir::KERNEL_HALF_WIDTH).min(delay);
        fft_convolve(
            &delayed(&farend.samples, delay - lead),
            &h_far[peak - lead..],
            len,
        )
    } else {
        vec![0.0; len]
    };

    let (near, target_final, near_direct) = if speech_active {
        let h_near = image_source_rir(&near_room, rate, rir_len)?;
        let free_room = RoomConfig {
            rt60: 0.0,
            ..near_room
        };
        let h_free = image_source_rir(&free_room, rate, rir_len)?;
        (
            fft_convolve(&speech.samples, &h_near, len),
            fft_convolve(&speech.samples, &h_free, len),
            near_room.direct_delay_samples(rate),
        )
    } else {
        (
            vec![0.0; len],
            vec![0.0; len],
            near_room.direct_delay_samples(rate),
        )
    };

    // Exact level calibration against the near-end anchor.
    if let Some(ser) = cfg.ser_db {
        let p_echo = sum_sq(&echo);
        if p_echo == 0.0 {
            return Err(Error::contract(
                "datasynth",
                "farend component has zero energy",
            ));
        }
        let g = (sum_sq(&near) / (p_echo * 10f64.powf(ser / 10.0))).sqrt();
        for v in echo.iter_mut() {
            *v *= g;
        }
    }
    let noise_scaled = match cfg.snr_db {
        Some(snr) => {
            let g = (sum_sq(&near) / (sum_sq(&noise.samples) * 10f64.powf(snr / 10.0))).sqrt();
            noise.samples.iter().map(|&v| v * g).collect()
        }
        None => vec![0.0; len],
    };

    let mic: Vec<f64> = (0..len)
        .map(|n| echo[n] + near[n] + noise_scaled[n])
        .collect();
    let target_mid: Vec<f64> = (0..len).map(|n| near[n] + noise_scaled[n]).collect();

    let vad = energy_vad(&target_final, &VadLabelConfig::for_stft(&stft_cfg));

    // Delay observations from the isolated echo path, validated against the
    // consensus of the confident windows.
    let gcc_cfg = GccConfig::for_rate(rate, cfg.history * stft_cfg.hop);
    let mut delay_windows = Vec::new();
    let mut median_conf = 0.0;
    let mut consensus_class = None;
    if wants_echo {
        let track = gcc_phat_track(&echo, &farend.samples, &gcc_cfg)?;
        let mut confident: Vec<usize> = Vec::new();
        for f in &track {
            let class = discretize_delay(f.est.delay_samples, stft_cfg.hop, cfg.history);
            if f.est.confidence >= LABEL_CONFIDENCE {
                confident.push(class);
            }
            delay_windows.push(DelayLabel {
                start: f.start,
                class,
                confidence: f.est.confidence,
                valid: false,
            });
        }
        confident.sort_unstable();
        if !confident.is_empty() {
            let consensus = confident[confident.len() / 2];
            consensus_class = Some(consensus);
            for w in delay_windows.iter_mut() {
                w.valid = w.confidence >= LABEL_CONFIDENCE && w.class.abs_diff(consensus) <= 1;
            }
        }
        let mut confs: Vec<f64> = track.iter().map(|f| f.est.confidence).collect();
        confs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if !confs.is_empty() {
            median_conf = confs[confs.len() / 2];
        }
    }

    let meta = ExampleMeta {
        seed: cfg.seed,
        history: cfg.history,
        delay_ms: cfg.delay_ms,
        echo_delay_samples: delay,
        near_direct_samples: near_direct,
        bulk_delay_class: discretize_delay(delay, stft_cfg.hop, cfg.history),
        ser_db: cfg.ser_db,
        snr_db: cfg.snr_db,
        rt60: cfg.rt60,
        consensus_class,
        median_confidence: median_conf,
    };
    Ok((
        Example {
            rate,
            mic,
            reference: farend.samples.clone(),
            target_mid,
            target_final,
            vad,
            delay_windows,
            gcc: gcc_cfg,
            meta,
        },
        SynthParts {
            echo,
            near,
            noise: noise_scaled,
        },
    ))
}

/// Generate the source signals for a scenario and mix them. See
/// [`make_example`].
pub fn synth_example(cfg: &ScenarioConfig) -> Result<(Example, SynthParts)> {
    cfg.validate()?;
    let len = (cfg.duration_secs * cfg.rate as f64).round() as usize;
    let base = ChaCha8Rng::seed_from_u64(cfg.mix.seed);
    let mut far_rng = base.clone();
    far_rng.set_stream(1);
    let mut near_rng = base.clone();
    near_rng.set_stream(2);
    let mut noise_rng = base;
    noise_rng.set_stream(3);
    let farend = AudioBuffer::new(speech_like(&mut far_rng, cfg.rate, len), cfg.rate);
    let speech = if cfg.near_speech {
        AudioBuffer::new(speech_like(&mut near_rng, cfg.rate, len), cfg.rate)
    } else {
        AudioBuffer::new(vec![0.0; len], cfg.rate)
    };
    let noise = AudioBuffer::new(noise_like(&mut noise_rng, cfg.rate, len), cfg.rate);
    make_example(&speech, &noise, &farend, &cfg.mix)
}

/// Expand per-window delay observations to per-frame training targets,
/// causally: frame `t` takes the most recent window that has fully
/// completed by the end of frame `t`, and is unlabeled before the first
/// window completes or when that window is invalid.
pub fn frame_delay_targets(
    labels: &[DelayLabel],
    gcc: &GccConfig,
    stft: &StftConfig,
    frames: usize,
) -> (Vec<usize>, Vec<bool>) {
    let mut class = vec![0usize; frames];
    let mut valid = vec![false; frames];
    for t in 0..frames {
        let end = t * stft.hop + stft.frame;
        if let Some(w) = labels.iter().rev().find(|l| l.start + gcc.window <= end) {
            class[t] = w.class;
            valid[t] = w.valid;
        }
    }
    (class, valid)
}

fn opt_str(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:?}"),
        None => "none".to_string(),
    }
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s == "none" {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::contract("dataset", format!("bad optional number {s:?}")))
}

/// Write examples as float WAVs plus one label sidecar each, with a
/// `manifest.txt` listing the example ids.
pub fn save_examples(dir: &Path, examples: &[Example]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = format!("examples {}\n", examples.len());
    for (i, ex) in examples.iter().enumerate() {
        let id = format!("{i:04}");
        manifest.push_str(&id);
        manifest.push('\n');
        let f32s = |v: &[f64]| -> Vec<f32> { v.iter().map(|&x| x as f32).collect() };
        wav::write_wav_f32(&dir.join(format!("{id}_mic.wav")), &f32s(&ex.mic), ex.rate)?;
        wav::write_wav_f32(&dir.join(format!("{id}_ref.wav")), &f32s(&ex.reference), ex.rate)?;
        wav::write_wav_f32(
            &dir.join(format!("{id}_target_mid.wav")),
            &f32s(&ex.target_mid),
            ex.rate,
        )?;
        wav::write_wav_f32(
            &dir.join(format!("{id}_target_final.wav")),
            &f32s(&ex.target_final),
            ex.rate,
        )?;
        let m = &ex.meta;
        let mut labels = String::new();
        labels.push_str(&format!("# rate {}\n", ex.rate));
        labels.push_str(&format!("# seed {}\n", m.seed));
        labels.push_str(&format!("# history {}\n", m.history));
        labels.push_str(&format!("# delay_ms {:?}\n", m.delay_ms));
        labels.push_str(&format!("# delay_samples {}\n", m.echo_delay_samples));
        labels.push_str(&format!("# near_direct {}\n", m.near_direct_samples));
        labels.push_str(&format!("# bulk_class {}\n", m.bulk_delay_class));
        labels.push_str(&format!("# ser_db {}\n", opt_str(m.ser_db)));
        labels.push_str(&format!("# snr_db {}\n", opt_str(m.snr_db)));
        labels.push_str(&format!("# rt60 {:?}\n", m.rt60));
        labels.push_str(&format!(
            "# consensus {}\n",
            m.consensus_class
                .map(|c| c.to_string())
                .unwrap_or_else(|| "none".to_string())
        ));
        labels.push_str(&format!("# confidence {:?}\n", m.median_confidence));
        labels.push_str(&format!("# gcc_window {}\n", ex.gcc.window));
        labels.push_str(&format!("# gcc_hop {}\n", ex.gcc.hop));
        labels.push_str(&format!("# gcc_max_delay {}\n", ex.gcc.max_delay));
        labels.push_str(&format!("# frames {}\n", ex.vad.len()));
        for &v in &ex.vad {
            labels.push_str(if v { "1\n" } else { "0\n" });
        }
        labels.push_str(&format!("# windows {}\n", ex.delay_windows.len()));
        for w in &ex.delay_windows {
            labels.push_str(&format!(
                "{} {} {:?} {}\n",
                w.start, w.class, w.confidence, w.valid as u8
            ));
        }
        std::fs::write(dir.join(format!("{id}_labels.txt")), labels)?;
    }
    std::fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

fn meta_field<'a>(
    fields: &'a std::collections::HashMap<String, String>,
    key: &str,
) -> Result<&'a str> {
    fields
        .get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| Error::contract("dataset", format!("labels are missing {key:?}")))
}

/// Load a dataset written by [`save_examples`].
pub fn load_examples(dir: &Path) -> Result<Vec<Example>> {
    let manifest = std::fs::read_to_string(dir.join("manifest.txt"))?;
    let mut lines = manifest.lines();
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("examples "))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::contract("dataset", "malformed manifest header"))?;
    let ids: Vec<&str> = lines.collect();
    if ids.len() != count {
        return Err(Error::contract(
            "dataset",
            format!("manifest declares {count} examples, lists {}", ids.len()),
        ));
    }
    let mut out = Vec::with_capacity(count);
    for id in ids {
        let f64s = |w: wav::WavData| -> Vec<f64> { w.samples.iter().map(|&x| x as f64).collect() };
        let mic_w = wav::read_wav(&dir.join(format!("{id}_mic.wav")))?;
        let rate = mic_w.rate;
        let mic = f64s(mic_w);
        let reference = f64s(wav::read_wav(&dir.join(format!("{id}_ref.wav")))?);
        let target_mid = f64s(wav::read_wav(&dir.join(format!("{id}_target_mid.wav")))?);
        let target_final = f64s(wav::read_wav(&dir.join(format!("{id}_target_final.wav")))?);

        let text = std::fs::read_to_string(dir.join(format!("{id}_labels.txt")))?;
        let mut fields = std::collections::HashMap::new();
        let mut vad: Vec<bool> = Vec::new();
        let mut windows: Vec<DelayLabel> = Vec::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("# ") {
                if let Some((k, v)) = rest.split_once(' ') {
                    fields.insert(k.to_string(), v.to_string());
                }
            } else if !line.is_empty() {
                let toks: Vec<&str> = line.split(' ').collect();
                match toks.as_slice() {
                    [v] => vad.push(*v == "1"),
                    [start, class, conf, valid] => windows.push(DelayLabel {
                        start: start.parse().map_err(|_| {
                            Error::contract("dataset", format!("bad window row {line:?}"))
                        })?,
                        class: class.parse().map_err(|_| {
                            Error::contract("dataset", format!("bad window row {line:?}"))
                        })?,
                        confidence: conf.parse().map_err(|_| {
                            Error::contract("dataset", format!("bad window row {line:?}"))
                        })?,
                        valid: *valid == "1",
                    }),
                    _ => {
                        return Err(Error::contract(
                            "dataset",
                            format!("bad label row {line:?}"),
                        ))
                    }
                }
            }
        }
        let parse_count = |key: &str| -> Result<usize> {
            meta_field(&fields, key)?
                .parse::<usize>()
                .map_err(|_| Error::contract("dataset", format!("bad count for {key:?}")))
        };
        if vad.len() != parse_count("frames")? {
            return Err(Error::contract(
                "dataset",
                format!("expected {} vad rows, found {}", parse_count("frames")?, vad.len()),
            ));
        }
        if windows.len() != parse_count("windows")? {
            return Err(Error::contract(
                "dataset",
                format!(
                    "expected {} window rows, found {}",
                    parse_count("windows")?,
                    windows.len()
                ),
            ));
        }
        let parse_num = |key: &str| -> Result<f64> {
            meta_field(&fields, key)?
                .parse::<f64>()
                .map_err(|_| Error::contract("dataset", format!("bad number for {key:?}")))
        };
        let consensus = match meta_field(&fields, "consensus")? {
            "none" => None,
            s => Some(s.parse::<usize>().map_err(|_| {
                Error::contract("dataset", format!("bad consensus class {s:?}"))
            })?),
        };
        let meta = ExampleMeta {
            seed: parse_num("seed")? as u64,
            history: parse_count("history")?,
            delay_ms: parse_num("delay_ms")?,
            echo_delay_samples: parse_count("delay_samples")?,
            near_direct_samples: parse_count("near_direct")?,
            bulk_delay_class: parse_count("bulk_class")?,
            ser_db: parse_opt(meta_field(&fields, "ser_db")?)?,
            snr_db: parse_opt(meta_field(&fields, "snr_db")?)?,
            rt60: parse_num("rt60")?,
            consensus_class: consensus,
            median_confidence: parse_num("confidence")?,
        };
        let gcc = GccConfig {
            window: parse_count("gcc_window")?,
            hop: parse_count("gcc_hop")?,
            max_delay: parse_count("gcc_max_delay")?,
        };
        out.push(Example {
            rate,
            mic,
            reference,
            target_mid,
            target_final,
            vad,
            delay_windows: windows,
            gcc,
            meta,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::estimate_delay;

    fn toy_config() -> ScenarioConfig {
        ScenarioConfig {
            rate: 8000,
            duration_secs: 3.0,
            near_speech: true,
            mix: MixConfig {
                delay_ms: 650.0,
                ser_db: Some(0.0),
                snr_db: Some(15.0),
                rt60: 0.2,
                max_order: 6,
                history: 100,
                seed: 11,
            },
        }
    }

    fn buffers(rate: u32, len: usize, seed: u64) -> (AudioBuffer<f64>, AudioBuffer<f64>, AudioBuffer<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let speech = AudioBuffer::new(speech_like(&mut rng, rate, len), rate);
        let noise = AudioBuffer::new(noise_like(&mut rng, rate, len), rate);
        let farend = AudioBuffer::new(speech_like(&mut rng, rate, len), rate);
        (speech, noise, farend)
    }

    #[test]
    fn mic_is_the_exact_sum_of_its_parts() {
        let (ex, parts) = synth_example(&toy_config()).unwrap();
        for n in 0..ex.mic.len() {
            let sum = parts.echo[n] + parts.near[n] + parts.noise[n];
            assert_eq!(ex.mic[n], sum, "decomposition differs at sample {n}");
            assert_eq!(ex.target_mid[n], parts.near[n] + parts.noise[n]);
        }
        assert!(sum_sq(&ex.target_final) > 0.0);
    }

    #[test]
    fn level_ratios_are_exact() {
        let mut cfg = toy_config();
        cfg.mix.ser_db = Some(-4.0);
        cfg.mix.snr_db = Some(12.0);
        let (_, parts) = synth_example(&cfg).unwrap();
        let ser = 10.0 * (sum_sq(&parts.near) / sum_sq(&parts.echo)).log10();
        assert!((ser - -4.0).abs() < 1e-9, "ser {ser}");
        let snr = 10.0 * (sum_sq(&parts.near) / sum_sq(&parts.noise)).log10();
        assert!((snr - 12.0).abs() < 1e-9, "snr {snr}");
    }

    #[test]
    fn no_ratios_yield_the_reverberant_speech_alone() {
        let mut cfg = toy_config();
        cfg.mix.ser_db = None;
        cfg.mix.snr_db = None;
        let (ex, parts) = synth_example(&cfg).unwrap();
        assert!(parts.echo.iter().all(|&v| v == 0.0));
        assert!(parts.noise.iter().all(|&v| v == 0.0));
        assert_eq!(ex.mic, parts.near, "mic should be the reverberant speech");
        assert_eq!(ex.target_mid, ex.mic, "first-stage target equals the mic");
        assert!(ex.delay_windows.is_empty(), "no echo, no delay labels");
    }

    #[test]
    fn far_end_single_talk_has_silent_targets() {
        let mut cfg = toy_config();
        cfg.near_speech = false;
        cfg.mix.ser_db = None;
        cfg.mix.snr_db = None;
        let (ex, parts) = synth_example(&cfg).unwrap();
        assert!(ex.vad.iter().all(|&a| !a), "no near end means no activity");
        assert!(ex.target_final.iter().all(|&v| v == 0.0));
        assert!(ex.target_mid.iter().all(|&v| v == 0.0));
        assert_eq!(ex.mic, parts.echo, "mic is the unscaled echo");
        assert!(sum_sq(&parts.echo) > 0.0);
    }

    #[test]
    fn zero_energy_inputs_are_named_in_errors() {
        let rate = 8000;
        let len = 2 * rate as usize;
        let (speech, noise, farend) = buffers(rate, len, 3);
        let silent = AudioBuffer::new(vec![0.0; len], rate);
        let msg = |r: Result<(Example, SynthParts)>| r.unwrap_err().to_string();

        let m = msg(make_example(&silent, &noise, &farend, &MixConfig::default()));
        assert!(m.contains("speech"), "{m}");
        let m = msg(make_example(
            &silent,
            &noise,
            &farend,
            &MixConfig {
                ser_db: None,
                snr_db: Some(10.0),
                ..MixConfig::default()
            },
        ));
        assert!(m.contains("speech"), "{m}");
        let m = msg(make_example(&speech, &noise, &silent, &MixConfig::default()));
        assert!(m.contains("farend"), "{m}");
        let m = msg(make_example(&speech, &silent, &farend, &MixConfig::default()));
        assert!(m.contains("noise"), "{m}");
    }

    #[test]
    fn final_target_is_the_delayed_dry_speech() {
        let rate = 8000;
        let len = 2 * rate as usize;
        let (speech, noise, farend) = buffers(rate, len, 4);
        let (ex, _) = make_example(&speech, &noise, &farend, &MixConfig::default()).unwrap();
        // The anechoic target is the dry speech through a unit-peak
        // direct-path kernel: same energy, shifted by the propagation delay.
        let d = ex.meta.near_direct_samples;
        assert!(d > 0);
        let mut dot = 0.0;
        let mut e_a = 0.0;
        let mut e_b = 0.0;
        for n in d..len {
            dot += ex.target_final[n] * speech.samples[n - d];
            e_a += ex.target_final[n] * ex.target_final[n];
            e_b += speech.samples[n - d] * speech.samples[n - d];
        }
        let rho = dot / (e_a * e_b).sqrt();
        assert!(rho > 0.99, "alignment correlation {rho}");
    }

    #[test]
    fn same_seed_reproduces_bit_identically() {
        let cfg = toy_config();
        let (a, pa) = synth_example(&cfg).unwrap();
        let (b, pb) = synth_example(&cfg).unwrap();
        assert_eq!(a.mic, b.mic);
        assert_eq!(a.reference, b.reference);
        assert_eq!(pa.echo, pb.echo);
        assert_eq!(a.delay_windows, b.delay_windows);
        assert_eq!(a.vad, b.vad);
        let mut other = cfg.clone();
        other.mix.seed = 12;
        let (c, _) = synth_example(&other).unwrap();
        assert_ne!(a.mic, c.mic);
    }

    #[test]
    fn delay_labels_recover_the_bulk_delay() {
        let (ex, _) = synth_example(&toy_config()).unwrap();
        // 650 ms at 8 kHz = 5200 samples = exactly class 65 at the 80-sample
        // (10 ms) frame hop.
        assert_eq!(ex.meta.bulk_delay_class, 65);
        let valid: Vec<&DelayLabel> =
            ex.delay_windows.iter().filter(|w| w.valid).collect();
        assert!(
            valid.len() * 2 > ex.delay_windows.len(),
            "most windows should be valid, got {}/{}",
            valid.len(),
            ex.delay_windows.len()
        );
        let mut classes: Vec<usize> = valid.iter().map(|w| w.class).collect();
        classes.sort_unstable();
        let median = classes[classes.len() / 2];
        assert_eq!(median, 65, "median valid class");
        assert_eq!(ex.meta.consensus_class, Some(65));
    }

    #[test]
    fn frame_targets_expand_causally() {
        let (ex, _) = synth_example(&toy_config()).unwrap();
        let stft = StftConfig::for_rate(ex.rate);
        let frames = stft.frames_for(ex.mic.len());
        let (class, valid) = frame_delay_targets(&ex.delay_windows, &ex.gcc, &stft, frames);
        assert_eq!(class.len(), frames);
        // A 1 s analysis window at 8 kHz completes during frame 98 (frame
        // end = 98*80 + 160 = 8000); everything earlier must be unlabeled.
        for t in 0..98 {
            assert!(!valid[t], "frame {t} should be unlabeled");
        }
        assert!(valid[100..].iter().any(|&v| v));
        let labeled: Vec<usize> = (0..frames).filter(|&t| valid[t]).collect();
        assert!(labeled.iter().all(|&t| class[t].abs_diff(65) <= 1));
    }

    #[test]
    fn echo_onset_matches_the_configured_delay() {
        let (ex, parts) = synth_example(&toy_config()).unwrap();
        let est = estimate_delay(&parts.echo, &ex.reference, &ex.gcc).unwrap();
        let hop = StftConfig::for_rate(ex.rate).hop;
        assert!(
            est.delay_samples.abs_diff(ex.meta.echo_delay_samples) <= hop,
            "estimated onset {} vs configured {}",
            est.delay_samples,
            ex.meta.echo_delay_samples
        );
    }

    #[test]
    fn vad_tracks_the_near_end_activity() {
        let (ex, _) = synth_example(&toy_config()).unwrap();
        let active = ex.vad.iter().filter(|&&a| a).count();
        let frac = active as f64 / ex.vad.len() as f64;
        assert!(
            (0.2..0.98).contains(&frac),
            "activity fraction {frac} looks wrong"
        );
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (a, _) = synth_example(&toy_config()).unwrap();
        let mut other = toy_config();
        other.mix.seed = 5;
        other.mix.snr_db = None;
        let (b, _) = synth_example(&other).unwrap();
        save_examples(dir.path(), &[a.clone(), b.clone()]).unwrap();
        let loaded = load_examples(dir.path()).unwrap();
        assert_eq!(loaded.len(), 2);
        for (orig, back) in [a, b].iter().zip(&loaded) {
            assert_eq!(orig.rate, back.rate);
            assert_eq!(orig.meta, back.meta);
            assert_eq!(orig.vad, back.vad);
            assert_eq!(orig.delay_windows, back.delay_windows);
            assert_eq!(orig.gcc.window, back.gcc.window);
            assert_eq!(orig.gcc.hop, back.gcc.hop);
            assert_eq!(orig.gcc.max_delay, back.gcc.max_delay);
            assert_eq!(orig.mic.len(), back.mic.len());
            for (x, y) in orig.mic.iter().zip(&back.mic) {
                assert!((x - y).abs() < 1e-6, "f32 storage should be near-lossless");
            }
        }
    }

    #[test]
    fn echo_is_silent_before_the_transport_delay() {
        let (ex, parts) = synth_example(&toy_config()).unwrap();
        let delay = ex.meta.echo_delay_samples;
        // The interpolation kernel pre-rings slightly ahead of the aligned
        // direct arrival.
        let quiet = delay - (rir::KERNEL_HALF_WIDTH + 1);
        for n in 0..quiet {
            assert!(
                parts.echo[n].abs() < 1e-9,
                "echo energy at sample {n} before the bulk delay {delay}"
            );
        }
        let early: f64 = parts.echo[delay..delay + 4000].iter().map(|v| v * v).sum();
        assert!(early > 0.0);
    }

    #[test]
    fn out_of_range_delay_is_rejected() {
        let mut cfg = toy_config();
        cfg.mix.delay_ms = 1500.0; // beyond 100 classes of 10 ms
        assert!(synth_example(&cfg).is_err());
    }
}
