//! Deterministic source-signal generators for synthesized scenes.
//!
//! `speech_like` produces utterance/pause alternation: amplitude-modulated
//! harmonic complexes with a drifting fundamental, raised-cosine note
//! envelopes, and hard-zero pauses, plus a quiet breath-noise floor and
//! stronger fricative-like noise bursts. It is not speech, but it shares
//! the properties the models and oracles care about: strong low-frequency
//! harmonics, onsets, silences, nonstationary envelopes, and — critically
//! for correlation-based delay estimation — broadband energy between the
//! harmonics. A purely periodic source is ambiguous under cross-correlation
//! (every pitch-period shift looks alike); the noise components pin the
//! true lag. `noise_like` is one-pole low-passed white noise. Both are pure
//! functions of the RNG state passed in.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Peak level both generators normalize to.
const PEAK: f64 = 0.5;

/// Utterance/pause alternation starting with an utterance at sample 0.
pub fn speech_like(rng: &mut ChaCha8Rng, rate: u32, len: usize) -> Vec<f64> {
    let rate_f = rate as f64;
    let mut x = vec![0.0f64; len];
    let mut pos = 0usize;
    let mut in_utterance = true;
    while pos < len {
        if in_utterance {
            let dur = (rng.gen_range(0.25..0.9) * rate_f) as usize;
            let end = (pos + dur).min(len);
            let seg = end - pos;
            let f0_a: f64 = rng.gen_range(90.0..220.0);
            let f0_b: f64 = rng.gen_range(90.0..220.0);
            let am_hz: f64 = rng.gen_range(2.0..6.0);
            let am_phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let ramp = (rate_f * 0.02) as usize; // 20 ms on/off ramps
            let n_harm = 10usize;
            let mut phase = vec![0.0f64; n_harm];
            // Fricative-like bursts: short raised-cosine gates that open the
            // noise path wide at a few spots inside the utterance.
            let mut burst = vec![0.0f64; seg];
            let n_bursts = 1 + (dur as f64 / rate_f * rng.gen_range(1.0..3.0)) as usize;
            for _ in 0..n_bursts {
                if seg < 8 {
                    break;
                }
                let blen = ((rng.gen_range(0.03..0.09) * rate_f) as usize).max(4);
                let bstart = rng.gen_range(0..seg - 1);
                for (i, g) in burst[bstart..(bstart + blen).min(seg)].iter_mut().enumerate() {
                    let w = 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / blen as f64).cos());
                    *g = g.max(w);
                }
            }
            let mut prev_w = 0.0f64;
            for (i, n) in (pos..end).enumerate() {
                let frac = i as f64 / dur.max(1) as f64;
                let f0 = f0_a + (f0_b - f0_a) * frac;
                let mut s = 0.0;
                for (k, ph) in phase.iter_mut().enumerate() {
                    let h = (k + 1) as f64;
                    *ph += std::f64::consts::TAU * h * f0 / rate_f;
                    s += ph.sin() / h;
                }
                // Breath floor plus bursts, first-difference high-passed so
                // the noise sits between the low harmonics.
                let w: f64 = rng.gen_range(-1.0..1.0);
                let hp = 0.5 * (w - prev_w);
                prev_w = w;
                s += hp * (0.35 + 1.6 * burst[i]);
                // Slow amplitude modulation plus note-edge ramps.
                let am = 0.4
                    + 0.6 * 0.5
                        * (1.0
                            - (std::f64::consts::TAU * am_hz * i as f64 / rate_f + am_phase)
                                .cos());
                let edge_in = ((i + 1) as f64 / ramp.max(1) as f64).min(1.0);
                let edge_out = ((seg - i) as f64 / ramp.max(1) as f64).min(1.0);
                x[n] = s * am * edge_in * edge_out;
            }
            pos = end;
        } else {
            let dur = (rng.gen_range(0.15..0.5) * rate_f) as usize;
            pos = (pos + dur).min(len); // pauses stay exactly zero
        }
        in_utterance = !in_utterance;
    }
    normalize_peak(&mut x);
    x
}

/// One-pole low-passed white noise.
pub fn noise_like(rng: &mut ChaCha8Rng, _rate: u32, len: usize) -> Vec<f64> {
    let a = 0.6f64;
    let mut x = vec![0.0f64; len];
    let mut state = 0.0f64;
    for v in x.iter_mut() {
        let w: f64 = rng.gen_range(-1.0..1.0);
        state = a * state + (1.0 - a) * w;
        *v = state;
    }
    normalize_peak(&mut x);
    x
}

fn normalize_peak(x: &mut [f64]) {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = PEAK / peak;
        for v in x.iter_mut() {
            *v *= g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn speech_like_has_energy_and_true_pauses() {
        let x = speech_like(&mut rng(1), 8000, 4 * 8000);
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - PEAK).abs() < 1e-12);
        // Count exactly-zero samples: pauses are hard zeros, so a few
        // utterance-length runs of them must exist.
        let zeros = x.iter().filter(|v| **v == 0.0).count();
        assert!(
            zeros > 8000 / 2,
            "expected at least half a second of pause, got {zeros} zero samples"
        );
        let energy: f64 = x.iter().map(|v| v * v).sum();
        assert!(energy > 1.0);
    }

    #[test]
    fn speech_like_starts_speaking_immediately() {
        let x = speech_like(&mut rng(2), 8000, 8000);
        let early: f64 = x[..800].iter().map(|v| v * v).sum();
        assert!(early > 1e-4, "first 100 ms should carry energy");
    }

    #[test]
    fn generators_are_deterministic_in_the_rng() {
        let a = speech_like(&mut rng(7), 8000, 16000);
        let b = speech_like(&mut rng(7), 8000, 16000);
        assert_eq!(a, b);
        let c = speech_like(&mut rng(8), 8000, 16000);
        assert_ne!(a, c);
        let n1 = noise_like(&mut rng(9), 8000, 8000);
        let n2 = noise_like(&mut rng(9), 8000, 8000);
        assert_eq!(n1, n2);
    }

    #[test]
    fn speech_like_delay_is_recoverable_by_correlation() {
        // The broadband components must make a long delay unambiguous; a
        // purely harmonic source fails this at pitch-period multiples.
        let rate = 8000;
        let x = speech_like(&mut rng(11), rate, 3 * rate as usize);
        for delay in [800usize, 5200] {
            let mut mic = vec![0.0f64; x.len()];
            for n in delay..x.len() {
                mic[n] = x[n - delay];
            }
            let est = crate::dsp::gcc_phat_window(&mic, &x, 6000).unwrap();
            assert!(
                est.delay_samples.abs_diff(delay) <= 1,
                "estimated {} for true delay {delay}",
                est.delay_samples
            );
        }
    }

    #[test]
    fn noise_like_is_lowpassed() {
        let x = noise_like(&mut rng(3), 8000, 32000);
        // lag-1 autocorrelation of one-pole filtered noise is strongly
        // positive; white noise would sit near zero.
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 1..x.len() {
            num += (x[i] - mean) * (x[i - 1] - mean);
        }
        for v in &x {
            den += (v - mean) * (v - mean);
        }
        let rho = num / den;
        assert!(rho > 0.3, "lag-1 autocorrelation {rho}");
    }
}
