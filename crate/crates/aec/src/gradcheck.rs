//! Finite-difference verification of the reverse pass.
//!
//! Every operator that can carry gradient — tensor primitives, the recurrent
//! and attention blocks, the loss nodes, and the assembled model — has a
//! named case here. A case builds a scalar loss from one or more trainable
//! leaves, runs the reverse pass once, then re-evaluates the loss at
//! `x ± eps` for a deterministic sample of coordinates and compares the
//! centered difference against the analytic gradient. Everything runs at
//! `f64` so the comparison probes the math, not the precision.
//!
//! The registry is deterministic end to end (fixed seeds, fixed probe
//! coordinates), so a pass is reproducible and a failure names the exact
//! operator that regressed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{stft, StftConfig};
use crate::model::{build_forward, init_params, ModelConfig};
use crate::numcore::{Graph, GruIds, Tensor, TensorId};
use crate::train::{total_loss, DelayLossMode, LossWeights, PreparedExample};
use crate::Result;

/// Relative error above which a case fails.
pub const TOLERANCE: f64 = 1e-4;

/// Step used for the centered differences.
const EPS: f64 = 1e-4;

/// Outcome of one named case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    /// Largest `|analytic - numeric| / max(1, |analytic|, |numeric|)` over
    /// the probed coordinates.
    pub max_rel_err: f64,
    pub pass: bool,
}

fn randv(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// `k` evenly spread indices into a segment of `n`, shifted by `offset`.
fn spread(offset: usize, n: usize, k: usize) -> impl Iterator<Item = usize> {
    let k = k.min(n).max(1);
    let stride = (n / k).max(1);
    (0..n).step_by(stride).take(k).map(move |i| offset + i)
}

/// Up to `per` probe coordinates from every leaf segment.
fn segment_probes(sizes: &[usize], per: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut offset = 0;
    for &n in sizes {
        out.extend(spread(offset, n, per));
        offset += n;
    }
    out
}

/// Compare the analytic gradient of `f` against centered differences at the
/// probed coordinates. `f` maps a flat parameter vector to the loss value
/// and the full gradient of the same length.
fn check<F>(name: &'static str, x0: &[f64], probes: &[usize], f: F) -> CheckResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, grad) = f(x0);
    assert_eq!(grad.len(), x0.len(), "{name}: gradient length");
    let mut x = x0.to_vec();
    let mut max_rel = 0.0f64;
    for &i in probes {
        x[i] = x0[i] + EPS;
        let (fp, _) = f(&x);
        x[i] = x0[i] - EPS;
        let (fm, _) = f(&x);
        x[i] = x0[i];
        let numeric = (fp - fm) / (2.0 * EPS);
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1.0);
        max_rel = max_rel.max(rel);
    }
    CheckResult {
        name,
        max_rel_err: max_rel,
        pass: max_rel < TOLERANCE,
    }
}

/// Reduce any tensor to a scalar against a fixed random weighting, so the
/// incoming gradient of the checked op is non-uniform.
fn reduce_random(g: &mut Graph<f64>, x: TensorId, seed: u64) -> Result<TensorId> {
    let shape = g.shape(x).to_vec();
    let n = g.value(x).numel();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = g.constant(Tensor::new(shape, randv(&mut rng, n, 1.0)));
    let m = g.mul(x, r)?;
    Ok(g.sum_all(m))
}

/// Case over plain leaves: `build` receives one trainable leaf per shape and
/// must return a scalar loss.
fn leaf_case<F>(
    name: &'static str,
    seed: u64,
    scale: f64,
    shapes: &[&[usize]],
    per_leaf_probes: usize,
    build: F,
) -> CheckResult
where
    F: Fn(&mut Graph<f64>, &[TensorId]) -> Result<TensorId>,
{
    let sizes: Vec<usize> = shapes.iter().map(|s| s.iter().product()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = randv(&mut rng, total, scale);
    let probes = segment_probes(&sizes, per_leaf_probes);
    let f = |x: &[f64]| {
        let mut g = Graph::new();
        let mut ids = Vec::with_capacity(shapes.len());
        let mut off = 0;
        for (shape, &n) in shapes.iter().zip(&sizes) {
            ids.push(g.leaf(Tensor::new(shape.to_vec(), x[off..off + n].to_vec()), true));
            off += n;
        }
        let loss = build(&mut g, &ids).expect(name);
        g.backward(loss).expect(name);
        let value = g.value(loss).item();
        let mut grad = Vec::with_capacity(total);
        for (&id, &n) in ids.iter().zip(&sizes) {
            match g.grad(id) {
                Some(s) => grad.extend_from_slice(s),
                None => grad.extend(std::iter::repeat(0.0).take(n)),
            }
        }
        (value, grad)
    };
    check(name, &x0, &probes, f)
}

/// The assembled model under the combined training objective, differentiated
/// with respect to every parameter tensor (two probes each).
fn model_case(name: &'static str, mode: DelayLossMode) -> CheckResult {
    let mcfg = ModelConfig {
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
    };
    let template = init_params::<f64>(&mcfg, 3).expect("init");
    let frames = 6usize;
    let cfg = StftConfig {
        frame: 12,
        hop: 6,
        fft: 12,
    };
    let len = frames * cfg.hop;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let spec_n = frames * mcfg.bins * 2;
    let mic = Tensor::new(vec![frames, mcfg.bins, 2], randv(&mut rng, spec_n, 0.5));
    let reference = Tensor::new(vec![frames, mcfg.bins, 2], randv(&mut rng, spec_n, 0.5));
    let target_mid = randv(&mut rng, len, 0.5);
    let target_final = randv(&mut rng, len, 0.5);
    let env = |w: &[f64]| -> Vec<f64> {
        stft(w, &cfg)
            .expect("target framing")
            .data()
            .iter()
            .map(|c| (c.re * c.re + c.im * c.im).sqrt())
            .collect()
    };
    let prep = PreparedExample {
        stft: cfg,
        mic_spec: mic,
        ref_spec: reference,
        env_mid: env(&target_mid),
        env_final: env(&target_final),
        target_mid,
        target_final,
        vad: vec![true, false, true, true, false, true],
        delay_class: vec![1, 3, 0, 2, 4, 1],
        delay_valid: vec![true, false, true, true, false, true],
    };
    let weights = LossWeights::for_mode(mode);
    let sizes: Vec<usize> = template.iter().map(|e| e.tensor.numel()).collect();
    let x0: Vec<f64> = template
        .iter()
        .flat_map(|e| e.tensor.data().iter().copied())
        .collect();
    let probes = segment_probes(&sizes, 2);
    let f = |x: &[f64]| {
        let mut params = template.clone();
        let mut off = 0;
        for e in params.iter_mut() {
            let n = e.tensor.numel();
            e.tensor.data_mut().copy_from_slice(&x[off..off + n]);
            off += n;
        }
        let mut g = Graph::new();
        let fwd = build_forward(
            &mut g,
            &params,
            &mcfg,
            prep.mic_spec.clone(),
            prep.ref_spec.clone(),
        )
        .expect("forward");
        let (loss, _) = total_loss(&mut g, &fwd, &prep, &weights, mode).expect("loss");
        g.backward(loss).expect("backward");
        let value = g.value(loss).item();
        let mut grad = Vec::with_capacity(x.len());
        for (id, &n) in fwd.param_ids.iter().zip(&sizes) {
            match g.grad(*id) {
                Some(s) => grad.extend_from_slice(s),
                None => grad.extend(std::iter::repeat(0.0).take(n)),
            }
        }
        (value, grad)
    };
    check(name, &x0, &probes, f)
}

/// Run every registered case and report per-case results.
pub fn run_all() -> Vec<CheckResult> {
    let mut out = Vec::new();

    // Tensor primitives.
    out.push(leaf_case(
        "linear",
        11,
        0.8,
        &[&[5, 4], &[4, 3], &[3]],
        4,
        |g, ids| {
            let y = g.linear(ids[0], ids[1], ids[2])?;
            reduce_random(g, y, 101)
        },
    ));
    out.push(leaf_case("softmax-rows", 12, 1.0, &[&[4, 6]], 6, |g, ids| {
        let y = g.softmax_rows(ids[0])?;
        reduce_random(g, y, 102)
    }));
    out.push(leaf_case("sigmoid", 13, 2.0, &[&[30]], 6, |g, ids| {
        let y = g.sigmoid(ids[0]);
        reduce_random(g, y, 103)
    }));
    out.push(leaf_case("add", 14, 1.0, &[&[3, 5], &[3, 5]], 4, |g, ids| {
        let y = g.add(ids[0], ids[1])?;
        reduce_random(g, y, 104)
    }));
    out.push(leaf_case("mul", 15, 1.0, &[&[3, 5], &[3, 5]], 4, |g, ids| {
        let y = g.mul(ids[0], ids[1])?;
        reduce_random(g, y, 105)
    }));
    out.push(leaf_case("scale", 16, 1.0, &[&[12]], 4, |g, ids| {
        let y = g.scale(ids[0], -1.7);
        reduce_random(g, y, 106)
    }));
    out.push(leaf_case("sum-all", 17, 1.0, &[&[7]], 4, |g, ids| {
        Ok(g.sum_all(ids[0]))
    }));
    out.push(leaf_case("reshape", 18, 1.0, &[&[4, 6]], 4, |g, ids| {
        let y = g.reshape(ids[0], vec![3, 8])?;
        reduce_random(g, y, 108)
    }));
    out.push(leaf_case(
        "concat-last",
        19,
        1.0,
        &[&[3, 2], &[3, 5]],
        4,
        |g, ids| {
            let y = g.concat_last(ids[0], ids[1])?;
            reduce_random(g, y, 109)
        },
    ));
    out.push(leaf_case("mean-over-freq", 20, 1.0, &[&[4, 5, 3]], 6, |g, ids| {
        let y = g.mean_over_freq(ids[0])?;
        reduce_random(g, y, 110)
    }));
    out.push(leaf_case("unfold-time", 21, 1.0, &[&[6, 3, 2]], 6, |g, ids| {
        let y = g.unfold_time(ids[0], 3, 1)?;
        reduce_random(g, y, 111)
    }));
    out.push(leaf_case("unfold-freq", 22, 1.0, &[&[4, 6, 2]], 6, |g, ids| {
        let y = g.unfold_freq(ids[0], 2, 1)?;
        reduce_random(g, y, 112)
    }));
    out.push(leaf_case("unfold-seq", 23, 1.0, &[&[10]], 6, |g, ids| {
        let y = g.unfold_seq(ids[0], 4, 2)?;
        reduce_random(g, y, 113)
    }));
    out.push(leaf_case(
        "weighted-sum",
        24,
        1.0,
        &[&[6], &[6]],
        4,
        |g, ids| {
            let a = g.sum_all(ids[0]);
            let b = g.sum_all(ids[1]);
            g.weighted_sum(&[(a, 0.3), (b, 1.2)])
        },
    ));

    // Recurrences: input and all four weight tensors of a 4-wide GRU.
    let gru_shapes: &[&[usize]] = &[&[5, 2, 3], &[3, 12], &[4, 12], &[12], &[12]];
    out.push(leaf_case("gru-time", 25, 0.8, gru_shapes, 4, |g, ids| {
        let gru = GruIds {
            w_ih: ids[1],
            w_hh: ids[2],
            b_ih: ids[3],
            b_hh: ids[4],
        };
        let y = g.gru_time(ids[0], &gru)?;
        reduce_random(g, y, 115)
    }));
    out.push(leaf_case("gru-freq", 26, 0.8, gru_shapes, 4, |g, ids| {
        let gru = GruIds {
            w_ih: ids[1],
            w_hh: ids[2],
            b_ih: ids[3],
            b_hh: ids[4],
        };
        let y = g.gru_freq(ids[0], &gru)?;
        reduce_random(g, y, 116)
    }));

    // Attention and masking blocks.
    out.push(leaf_case(
        "delay-correlation",
        27,
        1.0,
        &[&[5, 4, 3], &[5, 4, 3]],
        6,
        |g, ids| {
            let y = g.delay_correlation(ids[0], ids[1], 3)?;
            reduce_random(g, y, 117)
        },
    ));
    out.push(leaf_case(
        "attention-apply",
        28,
        1.0,
        &[&[5, 3], &[5, 4, 2]],
        6,
        |g, ids| {
            let attn = g.softmax_rows(ids[0])?;
            let y = g.attention_apply(attn, ids[1])?;
            reduce_random(g, y, 118)
        },
    ));
    out.push(leaf_case("expected-delay", 29, 1.0, &[&[5, 4]], 6, |g, ids| {
        let attn = g.softmax_rows(ids[0])?;
        let y = g.expected_delay(attn)?;
        reduce_random(g, y, 119)
    }));
    out.push(leaf_case(
        "ccm-apply",
        30,
        1.0,
        &[&[4, 5, 12], &[4, 5, 2]],
        6,
        |g, ids| {
            let y = g.ccm_apply(ids[0], ids[1], 2, 3)?;
            reduce_random(g, y, 120)
        },
    ));

    // Loss nodes; targets and labels are constants baked per case.
    let cfg = StftConfig {
        frame: 12,
        hop: 6,
        fft: 12,
    };
    out.push(leaf_case("istft-snr", 31, 0.8, &[&[6, 7, 2]], 8, move |g, ids| {
        let mut rng = ChaCha8Rng::seed_from_u64(121);
        let target = randv(&mut rng, 36, 0.5);
        let wave = g.istft_wave(ids[0], &cfg, target.len())?;
        g.snr_loss(wave, &target)
    }));
    out.push(leaf_case("snr", 32, 0.8, &[&[40]], 8, |g, ids| {
        let mut rng = ChaCha8Rng::seed_from_u64(122);
        let target = randv(&mut rng, 40, 0.5);
        g.snr_loss(ids[0], &target)
    }));
    out.push(leaf_case("modulation", 33, 0.8, &[&[6, 7, 2]], 8, |g, ids| {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let env: Vec<f64> = (0..6 * 7).map(|_| rng.gen_range(0.1..1.0)).collect();
        g.modulation_loss(ids[0], &env)
    }));
    out.push(leaf_case("vad-bce", 34, 1.5, &[&[9]], 6, |g, ids| {
        let labels = [true, false, true, true, false, false, true, false, true];
        let p = g.sigmoid(ids[0]);
        g.vad_bce(p, &labels)
    }));
    let classes = [1usize, 3, 0, 2, 4, 1];
    let valid = [true, false, true, true, false, true];
    out.push(leaf_case("delay-mse", 35, 1.0, &[&[6, 5]], 8, move |g, ids| {
        let attn = g.softmax_rows(ids[0])?;
        let d = g.expected_delay(attn)?;
        g.delay_mse(d, &classes, &valid)
    }));
    out.push(leaf_case("delay-ce", 36, 1.0, &[&[6, 5]], 8, move |g, ids| {
        let attn = g.softmax_rows(ids[0])?;
        g.delay_ce(attn, &classes, &valid)
    }));
    out.push(leaf_case("spectrum-blend", 37, 0.8, &[&[6, 7, 2]], 8, move |g, ids| {
        let mut rng = ChaCha8Rng::seed_from_u64(127);
        let target = randv(&mut rng, 36, 0.5);
        let env: Vec<f64> = (0..6 * 7).map(|_| rng.gen_range(0.1..1.0)).collect();
        let wave = g.istft_wave(ids[0], &cfg, target.len())?;
        let snr = g.snr_loss(wave, &target)?;
        let md = g.modulation_loss(ids[0], &env)?;
        g.weighted_sum(&[(md, 0.1), (snr, 0.9)])
    }));

    // The whole network under the combined objective, both delay forms.
    out.push(model_case("full-model-mse", DelayLossMode::Mse));
    out.push(model_case("full-model-ce", DelayLossMode::Ce));

    out
}
