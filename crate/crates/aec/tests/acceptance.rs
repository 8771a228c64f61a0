//! End-to-end acceptance suite. Every test prints one scoreboard line —
//! `ACCEPTANCE <nn> <name>: PASS|FAIL (<detail>)` — and then asserts, so
//! `cargo test --test acceptance` fails if any criterion fails and
//! `-- --nocapture` shows the full scoreboard.

use std::time::{Duration, Instant};

use aec::datasynth::{
    make_example, noise_like, speech_like, synth_example, Example, MixConfig, ScenarioConfig,
};
use aec::dsp::{estimate_delay, gcc_phat_track, istft, stft, AudioBuffer, GccConfig, StftConfig};
use aec::laec::{nlms_run, NlmsConfig};
use aec::model::{build_forward, init_params, param_count, ModelConfig, StreamState};
use aec::numcore::{AdamConfig, Graph, Tensor};
use aec::runtime::{
    engine_process, erle_db, load_checkpoint, read_wav, save_checkpoint, write_wav_f32,
    EngineConfig,
};
use aec::train::{
    prepare_example, total_loss, train, DelayLossMode, LossWeights, StepRecord, TrainConfig,
    TrainMode,
};
use aec::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: usize, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {n:02} {name}: {verdict} ({detail})");
    assert!(pass, "acceptance {n:02} {name}: {detail}");
}

fn noise_f64(seed: u64, n: usize, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Small model over the 7-bin framing used by the pure model checks.
fn small_model() -> ModelConfig {
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

/// The same small model sized for the 21-bin framing of a 2 kHz rate.
fn small_model_2k() -> ModelConfig {
    ModelConfig {
        bins: 21,
        ..small_model()
    }
}

fn scenario_2k(seed: u64, delay_ms: f64, history: usize) -> ScenarioConfig {
    ScenarioConfig {
        rate: 2000,
        duration_secs: 2.0,
        near_speech: true,
        mix: MixConfig {
            delay_ms,
            ser_db: Some(0.0),
            snr_db: Some(20.0),
            rt60: 0.1,
            max_order: 3,
            history,
            seed,
        },
    }
}

/// Toy-training example built for delay learnability: a continuously
/// active (noise-like) far end so every frame carries echo evidence, an
/// echo-dominant mix, a short echo path, and a delay on the 10 ms hop
/// grid so the per-frame correlation peak sits on a single class.
fn toy_train_example(seed: u64, delay_ms: f64, history: usize) -> Example {
    let rate = 2000u32;
    let len = 2 * rate as usize;
    let base = ChaCha8Rng::seed_from_u64(seed);
    let mut far_rng = base.clone();
    far_rng.set_stream(1);
    let mut near_rng = base.clone();
    near_rng.set_stream(2);
    let mut noise_rng = base;
    noise_rng.set_stream(3);
    let farend = AudioBuffer::new(noise_like(&mut far_rng, rate, len), rate);
    let speech = AudioBuffer::new(speech_like(&mut near_rng, rate, len), rate);
    let noise = AudioBuffer::new(noise_like(&mut noise_rng, rate, len), rate);
    let mix = MixConfig {
        delay_ms,
        ser_db: Some(-20.0),
        snr_db: Some(20.0),
        rt60: 0.05,
        max_order: 1,
        history,
        seed,
    };
    make_example(&speech, &noise, &farend, &mix).unwrap().0
}

#[test]
fn c01_gradient_integrity() {
    let t0 = Instant::now();
    let results = aec::gradcheck::run_all();
    let elapsed = t0.elapsed();
    let worst = results
        .iter()
        .map(|r| r.max_rel_err)
        .fold(0.0f64, f64::max);
    let all_pass = !results.is_empty() && results.iter().all(|r| r.pass);
    let pass = all_pass && elapsed < Duration::from_secs(5);
    report(
        1,
        "gradient integrity",
        pass,
        format!(
            "{} ops checked, worst rel err {worst:.2e}, {elapsed:.2?}",
            results.len()
        ),
    );
}

#[test]
fn c02_stft_round_trip() {
    let t0 = Instant::now();
    let cfg = StftConfig::for_rate(16000);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let x = noise_f64(2000 + i, 16000, 1.0);
        let spec = stft(&x, &cfg).unwrap();
        let y = istft(&spec, &cfg, x.len()).unwrap();
        for (a, b) in x.iter().zip(&y) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = t0.elapsed();
    let pass = worst < 1e-6 && elapsed < Duration::from_secs(10);
    report(
        2,
        "stft round trip",
        pass,
        format!("max |x - istft(stft(x))| = {worst:.2e} over 100 signals, {elapsed:.2?}"),
    );
}

#[test]
fn c03_gcc_phat_oracle() {
    let t0 = Instant::now();
    let rate = 16000usize;
    let cfg = GccConfig::for_rate(rate as u32, 12000);

    // Noiseless pure delays recovered exactly, including 650 ms.
    let mut exact = true;
    let mut details = Vec::new();
    for (i, &d) in [0usize, 10, 240, 650 * rate / 1000].iter().enumerate() {
        let far = noise_f64(3000 + i as u64, 3 * rate, 0.5);
        let mut mic = vec![0.0f64; far.len()];
        for n in d..far.len() {
            mic[n] = far[n - d];
        }
        let est = estimate_delay(&mic, &far, &cfg).unwrap();
        if est.delay_samples != d {
            exact = false;
            details.push(format!("{d} -> {}", est.delay_samples));
        }
    }

    // 650 ms truth at 20 dB SNR: at least 95% of windows within one sample.
    let d = 650 * rate / 1000;
    let far = noise_f64(3100, 4 * rate, 0.5);
    let mut mic = vec![0.0f64; far.len()];
    for n in d..far.len() {
        mic[n] = far[n - d];
    }
    let echo_power: f64 = mic.iter().map(|v| v * v).sum::<f64>() / mic.len() as f64;
    let noise_std = (echo_power / 100.0).sqrt(); // 20 dB below the echo
    let mut rng = ChaCha8Rng::seed_from_u64(3200);
    for v in mic.iter_mut() {
        *v += rng.gen_range(-1.0..1.0) * noise_std * 3.0f64.sqrt();
    }
    let frames = gcc_phat_track(&mic, &far, &cfg).unwrap();
    let hits = frames
        .iter()
        .filter(|f| (f.est.delay_samples as i64 - d as i64).abs() <= 1)
        .count();
    let frac = hits as f64 / frames.len() as f64;

    let elapsed = t0.elapsed();
    let pass = exact && frac >= 0.95 && elapsed < Duration::from_secs(30);
    report(
        3,
        "gcc-phat oracle",
        pass,
        format!(
            "pure delays {}, noisy 650 ms within +-1 sample in {:.0}% of {} windows, {elapsed:.2?}",
            if exact {
                "exact".to_string()
            } else {
                format!("WRONG: {}", details.join(", "))
            },
            frac * 100.0,
            frames.len()
        ),
    );
}

#[test]
fn c04_nlms_steady_state() {
    let t0 = Instant::now();
    // Known 64-tap decaying echo path, white far end, no near end.
    let mut rng = ChaCha8Rng::seed_from_u64(4000);
    let path: Vec<f64> = (0..64)
        .map(|i| rng.gen_range(-1.0..1.0) * (-(i as f64) / 20.0).exp())
        .collect();
    let far = noise_f64(4001, 80_000, 0.5);
    let mut mic = vec![0.0f64; far.len()];
    for n in 0..far.len() {
        let mut acc = 0.0;
        for (k, h) in path.iter().enumerate() {
            if n >= k {
                acc += h * far[n - k];
            }
        }
        mic[n] = acc;
    }
    let out = nlms_run(
        &mic,
        &far,
        NlmsConfig {
            taps: 64,
            mu: 0.5,
            eps: 1e-6,
        },
    )
    .unwrap();
    let tail = mic.len() * 3 / 4;
    let erle = erle_db(&mic[tail..], &out.error[tail..]).unwrap();
    let elapsed = t0.elapsed();
    let pass = erle >= 20.0 && elapsed < Duration::from_secs(30);
    report(
        4,
        "nlms steady state",
        pass,
        format!("steady-state ERLE {erle:.1} dB over the last quarter, {elapsed:.2?}"),
    );
}

#[test]
fn c05_alignment_oracle() {
    let (t, h, f, c) = (7usize, 4usize, 5usize, 3usize);
    let mut rng = ChaCha8Rng::seed_from_u64(5000);

    // Soft attention against a brute-force alignment loop.
    let logits = Tensor::new(vec![t, h], noise_f64(5001, t * h, 1.0));
    let reference = Tensor::new(vec![t, f, c], noise_f64(5002, t * f * c, 1.0));
    let mut g = Graph::<f64>::new();
    let l = g.leaf(logits, false);
    let r = g.leaf(reference.clone(), false);
    let attn = g.softmax_rows(l).unwrap();
    let aligned = g.attention_apply(attn, r).unwrap();
    let attn_v = g.value(attn).data().to_vec();
    let out_v = g.value(aligned).data().to_vec();
    let refd = reference.data();
    let mut worst = 0.0f64;
    for ti in 0..t {
        for fi in 0..f {
            for ci in 0..c {
                let mut acc = 0.0;
                for d in 0..h {
                    if d <= ti {
                        acc += attn_v[ti * h + d] * refd[((ti - d) * f + fi) * c + ci];
                    }
                }
                let got = out_v[(ti * f + fi) * c + ci];
                worst = worst.max((got - acc).abs());
            }
        }
    }

    // One-hot attention reproduces exact shifts.
    let mut onehot = vec![0.0f64; t * h];
    let hots: Vec<usize> = (0..t).map(|ti| rng.gen_range(0..h)).collect();
    for (ti, &d) in hots.iter().enumerate() {
        onehot[ti * h + d] = 1.0;
    }
    let mut g = Graph::<f64>::new();
    let a = g.leaf(Tensor::new(vec![t, h], onehot), false);
    let r = g.leaf(reference.clone(), false);
    let aligned = g.attention_apply(a, r).unwrap();
    let out_v = g.value(aligned).data();
    let mut shifts_exact = true;
    for (ti, &d) in hots.iter().enumerate() {
        for k in 0..f * c {
            let want = if d <= ti { refd[(ti - d) * f * c + k] } else { 0.0 };
            if out_v[ti * f * c + k] != want {
                shifts_exact = false;
            }
        }
    }

    // Expected delay of one-hot rows is the hot index, exactly.
    let mut g = Graph::<f64>::new();
    let mut onehot = vec![0.0f64; t * h];
    for (ti, &d) in hots.iter().enumerate() {
        onehot[ti * h + d] = 1.0;
    }
    let a = g.leaf(Tensor::new(vec![t, h], onehot), false);
    let ed = g.expected_delay(a).unwrap();
    let ed_v = g.value(ed).data();
    let delays_exact = hots
        .iter()
        .enumerate()
        .all(|(ti, &d)| ed_v[ti] == d as f64);

    let pass = worst < 1e-6 && shifts_exact && delays_exact;
    report(
        5,
        "alignment oracle",
        pass,
        format!(
            "soft-attention worst abs err {worst:.2e}, one-hot shifts exact: {shifts_exact}, \
             one-hot expected delay exact: {delays_exact}"
        ),
    );
}

#[test]
fn c06_streaming_equivalence() {
    let mcfg = small_model();
    let params = init_params::<f32>(&mcfg, 6001).unwrap();
    let (t, f) = (9usize, mcfg.bins);
    let randt = |seed: u64| -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(
            vec![t, f, 2],
            (0..t * f * 2).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        )
    };
    let mic = randt(6002);
    let rf = randt(6003);

    // Offline forward.
    let mut g = Graph::new();
    let fwd = build_forward(&mut g, &params, &mcfg, mic.clone(), rf.clone()).unwrap();
    let off_final = g.value(fwd.spec_final).data().to_vec();
    let off_vad = g.value(fwd.vad).data().to_vec();
    let off_delay = g.value(fwd.expected_delay).data().to_vec();

    // Streaming, frame by frame.
    let run_stream = |mic: &Tensor<f32>, rf: &Tensor<f32>| -> (Vec<Vec<f32>>, Vec<f32>, Vec<f32>) {
        let mut state = StreamState::new(&mcfg).unwrap();
        let mut rows = Vec::new();
        let mut vads = Vec::new();
        let mut delays = Vec::new();
        for ti in 0..t {
            let mrow = &mic.data()[ti * f * 2..][..f * 2];
            let rrow = &rf.data()[ti * f * 2..][..f * 2];
            let out = state.step(&params, mrow, rrow).unwrap();
            rows.push(out.spec_final);
            vads.push(out.vad);
            delays.push(out.expected_delay);
        }
        (rows, vads, delays)
    };
    let (rows, vads, delays) = run_stream(&mic, &rf);
    let mut worst = 0.0f32;
    for ti in 0..t {
        for k in 0..f * 2 {
            worst = worst.max((rows[ti][k] - off_final[ti * f * 2 + k]).abs());
        }
        worst = worst.max((vads[ti] - off_vad[ti]).abs());
        worst = worst.max((delays[ti] - off_delay[ti]).abs());
    }

    // Causality probe: perturbing frame 5 must leave frames 0..5 untouched
    // and must actually change something at frame 5 or later.
    let mut mic2 = mic.clone();
    for v in &mut mic2.data_mut()[5 * f * 2..6 * f * 2] {
        *v += 1.0;
    }
    let (rows2, vads2, _) = run_stream(&mic2, &rf);
    let prefix_ok = (0..5).all(|ti| rows2[ti] == rows[ti] && vads2[ti] == vads[ti]);
    let suffix_changed = (5..t).any(|ti| rows2[ti] != rows[ti]);

    let pass = worst <= 1e-5 && prefix_ok && suffix_changed;
    report(
        6,
        "streaming equivalence",
        pass,
        format!(
            "max |stream - offline| = {worst:.2e}, causal prefix intact: {prefix_ok}, \
             perturbation visible later: {suffix_changed}"
        ),
    );
}

#[test]
fn c07_loss_composition() {
    let mcfg = small_model_2k();
    let (ex, _) = synth_example(&scenario_2k(7001, 30.0, mcfg.history)).unwrap();
    let prep = prepare_example::<f64>(&ex, &mcfg, TrainMode::E2e).unwrap();
    let params = init_params::<f64>(&mcfg, 7002).unwrap();

    let w_mse = LossWeights::for_mode(DelayLossMode::Mse);
    let w_ce = LossWeights::for_mode(DelayLossMode::Ce);
    let lambda_ok = w_mse.delay == 100.0 && w_ce.delay == 1.0;

    let run = |mode: DelayLossMode| {
        let mut g = Graph::new();
        let fwd = build_forward(
            &mut g,
            &params,
            &mcfg,
            prep.mic_spec.clone(),
            prep.ref_spec.clone(),
        )
        .unwrap();
        let w = LossWeights::for_mode(mode);
        total_loss(&mut g, &fwd, &prep, &w, mode).unwrap().1
    };
    let mse = run(DelayLossMode::Mse);
    let ce = run(DelayLossMode::Ce);
    let err_mse =
        (mse.total - (mse.spec1 + mse.spec2 + 100.0 * mse.delay + mse.vad)).abs();
    let err_ce = (ce.total - (ce.spec1 + ce.spec2 + ce.delay + ce.vad)).abs();
    let others_stable = mse.spec1 == ce.spec1 && mse.spec2 == ce.spec2 && mse.vad == ce.vad;

    let pass = lambda_ok && err_mse < 1e-6 && err_ce < 1e-6 && others_stable;
    report(
        7,
        "loss composition",
        pass,
        format!(
            "weights 100/1: {lambda_ok}, |total - weighted sum| mse {err_mse:.2e} / ce {err_ce:.2e}, \
             non-delay terms mode-invariant: {others_stable}"
        ),
    );
}

#[test]
fn c08_toy_training() {
    let t0 = Instant::now();
    let mcfg = ModelConfig {
        history: 100,
        ..small_model_2k()
    };
    // 16 seeded examples with bulk delays spread over 100..800 ms on the
    // 10 ms hop grid.
    let examples: Vec<Example> = (0..16)
        .map(|i| {
            let delay_ms = 10.0 * (10.0 + (7.0 * i as f64 / 1.5).round());
            toy_train_example(8000 + i as u64, delay_ms, mcfg.history)
        })
        .collect();
    let tcfg = TrainConfig {
        steps: 300,
        adam: AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    let out = train::<f32>(&mcfg, &tcfg, &examples, None).unwrap();

    // Loss drop measured epoch against epoch so both means cover the same
    // 16-example mix.
    let epoch = examples.len();
    let head = out.log[..epoch].iter().map(|r| r.total).sum::<f64>() / epoch as f64;
    let tail = out.log[out.log.len() - epoch..]
        .iter()
        .map(|r| r.total)
        .sum::<f64>()
        / epoch as f64;
    let drop_ok = tail <= 0.1 * head;

    // Held-out constant-delay clips: mean soft-estimate error < 2 frames
    // over the label-carrying frames.
    let mut abs_err_sum = 0.0f64;
    let mut n_err = 0usize;
    for (seed, delay_ms) in [(8900u64, 250.0f64), (8901, 550.0)] {
        let ex = toy_train_example(seed, delay_ms, mcfg.history);
        let prep = prepare_example::<f32>(&ex, &mcfg, TrainMode::E2e).unwrap();
        let mut g = Graph::new();
        let fwd = build_forward(
            &mut g,
            &out.params,
            &mcfg,
            prep.mic_spec.clone(),
            prep.ref_spec.clone(),
        )
        .unwrap();
        let pred = g.value(fwd.expected_delay).data();
        for t in 0..prep.delay_class.len() {
            if prep.delay_valid[t] {
                abs_err_sum += (pred[t] as f64 - prep.delay_class[t] as f64).abs();
                n_err += 1;
            }
        }
    }
    let mean_err = abs_err_sum / n_err.max(1) as f64;
    let elapsed = t0.elapsed();
    let pass = drop_ok && n_err > 0 && mean_err < 2.0 && elapsed < Duration::from_secs(900);
    report(
        8,
        "toy training",
        pass,
        format!(
            "epoch loss {head:.1} -> {tail:.1} ({:.0}% drop), held-out delay error \
             {mean_err:.2} frames over {n_err} labeled frames, {elapsed:.1?}",
            (1.0 - tail / head) * 100.0
        ),
    );
}

#[test]
fn c09_vad_masking_energy() {
    let t0 = Instant::now();
    // Far-end single talk: the mic carries echo only, so the oracle VAD is
    // non-speech everywhere.
    let cfg = ScenarioConfig {
        rate: 2000,
        duration_secs: 2.0,
        near_speech: false,
        mix: MixConfig {
            delay_ms: 30.0,
            ser_db: None,
            snr_db: None,
            rt60: 0.1,
            max_order: 3,
            history: 5,
            seed: 9001,
        },
    };
    let (ex, _) = synth_example(&cfg).unwrap();
    let oracle_all_nospeech = ex.vad.iter().all(|v| !v);

    let mcfg = small_model_2k();
    let params = init_params::<f32>(&mcfg, 9002).unwrap();
    let stft_cfg = StftConfig::for_rate_with_fft(2000, 40);
    let mut ecfg = EngineConfig {
        model: mcfg,
        stft: stft_cfg,
        vad_smooth_frames: 5,
        vad_nospeech_threshold: 1.0, // gate disabled
        mask_factor: 0.1,
    };
    let mic: Vec<f32> = ex.mic.iter().map(|&v| v as f32).collect();
    let far: Vec<f32> = ex.reference.iter().map(|&v| v as f32).collect();
    let open = engine_process(&params, &ecfg, &mic, &far).unwrap();

    // Gate every frame, matching the oracle's all-non-speech call.
    ecfg.vad_nospeech_threshold = 0.3;
    let gated = engine_process(&params, &ecfg, &mic, &far).unwrap();
    let gate_matches_oracle = gated.masked.iter().all(|&m| m);

    let erle_open = erle_db(&mic, &open.enhanced).unwrap();
    let erle_gated = erle_db(&mic, &gated.enhanced).unwrap();
    let gain = erle_gated - erle_open;
    let elapsed = t0.elapsed();
    let pass =
        oracle_all_nospeech && gate_matches_oracle && gain >= 16.0 && elapsed < Duration::from_secs(60);
    report(
        9,
        "vad masking energy",
        pass,
        format!(
            "oracle non-speech everywhere: {oracle_all_nospeech}, gate agrees: \
             {gate_matches_oracle}, ERLE {erle_open:.1} -> {erle_gated:.1} dB (gain {gain:.1}), {elapsed:.1?}"
        ),
    );
}

/// First step at which the trailing `win`-step mean of the total loss
/// reaches `threshold`.
fn first_reach(log: &[StepRecord], threshold: f64, win: usize) -> Option<usize> {
    (win - 1..log.len()).find(|&t| {
        log[t + 1 - win..=t].iter().map(|r| r.total).sum::<f64>() / win as f64 <= threshold
    })
}

#[test]
fn c10_knowledge_transfer() {
    let t0 = Instant::now();
    let mcfg = small_model_2k();
    let examples: Vec<Example> = (0..2)
        .map(|i| {
            synth_example(&scenario_2k(10_000 + i as u64, 30.0, mcfg.history))
                .unwrap()
                .0
        })
        .collect();
    let base = TrainConfig {
        steps: 300,
        adam: AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };

    // Reference run from random initialization.
    let rand_run = train::<f32>(&mcfg, &base, &examples, None).unwrap();
    let win = 6;
    let head = rand_run.log[..win].iter().map(|r| r.total).sum::<f64>() / win as f64;
    let threshold = 0.1 * head;
    let steps_rand = first_reach(&rand_run.log, threshold, win);

    // Hybrid-mode pretraining, then transfer into the end-to-end run.
    let pre = train::<f32>(
        &mcfg,
        &TrainConfig {
            steps: 120,
            mode: TrainMode::Hybrid,
            ..base.clone()
        },
        &examples,
        None,
    )
    .unwrap();
    let xfer_run = train::<f32>(&mcfg, &base, &examples, Some(&pre.params)).unwrap();
    let rep = xfer_run.transfer.as_ref().expect("transfer report");
    let full_transfer = rep.copied.len() == pre.params.len()
        && rep.skipped_missing.is_empty()
        && rep.ignored_extra.is_empty();
    let steps_xfer = first_reach(&xfer_run.log, threshold, win);

    let speedup_ok = match (steps_rand, steps_xfer) {
        (Some(r), Some(x)) => x as f64 <= 0.8 * r as f64,
        _ => false,
    };
    let elapsed = t0.elapsed();
    let pass = full_transfer && speedup_ok && elapsed < Duration::from_secs(600);
    report(
        10,
        "knowledge transfer",
        pass,
        format!(
            "copied {}/{} tensors, steps to 90% threshold: random {:?} vs transfer {:?}, {elapsed:.1?}",
            rep.copied.len(),
            pre.params.len(),
            steps_rand,
            steps_xfer
        ),
    );
}

#[test]
fn c11_parameter_budget() {
    let n = param_count(&ModelConfig::default());
    let target = 1_200_000f64;
    let ratio = n as f64 / target;
    let pass = (0.7..=1.3).contains(&ratio);
    report(
        11,
        "parameter budget",
        pass,
        format!("exact count {n} = {ratio:.2}x the 1.2M budget"),
    );
}

#[test]
fn c12_persistence() {
    let dir = tempfile::tempdir().unwrap();

    // Checkpoint round trip, bit for bit.
    let params = init_params::<f32>(&small_model(), 12_001).unwrap();
    let ckpt = dir.path().join("model.ckpt");
    save_checkpoint(&params, &ckpt).unwrap();
    let back = load_checkpoint(&ckpt).unwrap();
    let ckpt_exact = params.len() == back.len()
        && params.iter().zip(back.iter()).all(|(a, b)| {
            a.name == b.name
                && a.tensor.shape() == b.tensor.shape()
                && a.tensor
                    .data()
                    .iter()
                    .zip(b.tensor.data())
                    .all(|(x, y)| x.to_bits() == y.to_bits())
        });

    // Float WAV round trip, bit for bit.
    let wav = dir.path().join("tone.wav");
    let samples: Vec<f32> = noise_f64(12_002, 4000, 0.9)
        .into_iter()
        .map(|v| v as f32)
        .collect();
    write_wav_f32(&wav, &samples, 16000).unwrap();
    let decoded = read_wav(&wav).unwrap();
    let wav_exact = decoded.rate == 16000
        && decoded.samples.len() == samples.len()
        && decoded
            .samples
            .iter()
            .zip(&samples)
            .all(|(a, b)| a.to_bits() == b.to_bits());

    // Corrupted fixtures surface as their designated errors.
    let bytes = std::fs::read(&ckpt).unwrap();
    let magic_path = dir.path().join("magic.ckpt");
    let mut corrupt = bytes.clone();
    corrupt[0] = b'X';
    std::fs::write(&magic_path, corrupt).unwrap();
    let magic_err = matches!(load_checkpoint(&magic_path), Err(Error::CheckpointMagic(_)));

    let short_path = dir.path().join("short.ckpt");
    std::fs::write(&short_path, &bytes[..bytes.len() - 7]).unwrap();
    let length_err = matches!(load_checkpoint(&short_path), Err(Error::CheckpointLength(_)));

    let dtype_path = dir.path().join("dtype.ckpt");
    let patched = String::from_utf8_lossy(&bytes).replace(" f32 ", " f16 ");
    std::fs::write(&dtype_path, patched.as_bytes()).unwrap();
    let dtype_err = matches!(load_checkpoint(&dtype_path), Err(Error::CheckpointDtype(_)));

    let junk_path = dir.path().join("junk.wav");
    std::fs::write(&junk_path, b"definitely not audio").unwrap();
    let wav_err = matches!(read_wav(&junk_path), Err(Error::WavFormat(_)));

    let pass = ckpt_exact && wav_exact && magic_err && length_err && dtype_err && wav_err;
    report(
        12,
        "persistence",
        pass,
        format!(
            "checkpoint bit-exact: {ckpt_exact}, wav bit-exact: {wav_exact}, corruption errors \
             (magic/length/dtype/wav): {magic_err}/{length_err}/{dtype_err}/{wav_err}"
        ),
    );
}
