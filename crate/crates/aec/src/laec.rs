//! Linear echo cancellation: a normalized-LMS adaptive filter and the hybrid
//! front end that runs it after bulk-delay alignment.
//!
//! The hybrid front end is the classic two-stage arrangement: estimate the
//! dominant (bulk) delay with GCC-PHAT, shift the reference to undo it, run
//! NLMS against the aligned reference, and hand the residual plus the aligned
//! reference to whatever sits downstream (here, the neural canceller).

use crate::dsp::{estimate_delay, GccConfig};
use crate::{Error, Result, Scalar};

/// NLMS hyperparameters. `w += mu * e * u / (||u||^2 + eps)`.
#[derive(Debug, Clone, Copy)]
pub struct NlmsConfig {
    /// Filter length in taps.
    pub taps: usize,
    /// Normalized step size; stable for `0 < mu < 2`.
    pub mu: f64,
    /// Regularizer in the norm denominator.
    pub eps: f64,
}

impl Default for NlmsConfig {
    fn default() -> Self {
        Self {
            taps: 1024,
            mu: 0.5,
            eps: 1e-6,
        }
    }
}

impl NlmsConfig {
    fn validate(&self) -> Result<()> {
        if self.taps == 0 {
            return Err(Error::contract("nlms", "taps must be >= 1"));
        }
        if !(self.mu > 0.0 && self.mu < 2.0) {
            return Err(Error::contract(
                "nlms",
                format!("mu {} outside stable range (0, 2)", self.mu),
            ));
        }
        if self.eps <= 0.0 {
            return Err(Error::contract("nlms", "eps must be positive"));
        }
        Ok(())
    }
}

/// Streaming NLMS echo canceller. Feed one (reference, mic) pair per sample;
/// it returns the a-priori error and the echo estimate for that sample.
pub struct NlmsFilter<S> {
    weights: Vec<S>,
    hist: Vec<S>,
    /// Ring index of the newest reference sample.
    pos: usize,
    /// Running `||u||^2`, kept in f64 so incremental updates do not drift.
    norm_sq: f64,
    cfg: NlmsConfig,
}

impl<S: Scalar> NlmsFilter<S> {
    pub fn new(cfg: NlmsConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            weights: vec![S::zero(); cfg.taps],
            hist: vec![S::zero(); cfg.taps],
            pos: cfg.taps - 1,
            norm_sq: 0.0,
            cfg,
        })
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    /// Advance one sample: returns `(error, echo_estimate)` where
    /// `error = mic - echo_estimate`, then adapts the weights.
    pub fn process_sample(&mut self, reference: S, mic: S) -> (S, S) {
        let taps = self.cfg.taps;
        self.pos = (self.pos + 1) % taps;
        let dropped = self.hist[self.pos].as_f64();
        self.norm_sq += reference.as_f64() * reference.as_f64() - dropped * dropped;
        self.hist[self.pos] = reference;

        // Tap k reads u(n-k): walk the ring newest-to-oldest as two
        // contiguous reversed runs, so there is no per-tap modulo and the
        // accumulation order is fixed (ascending tap index).
        let (head, tail) = self.hist.split_at(self.pos + 1);
        let mut echo = S::zero();
        for (w, u) in self
            .weights
            .iter()
            .zip(head.iter().rev().chain(tail.iter().rev()))
        {
            echo = echo + *w * *u;
        }
        let err = mic - echo;

        let denom = self.norm_sq.max(0.0) + self.cfg.eps;
        let coef = S::of(self.cfg.mu) * err / S::of(denom);
        let (head, tail) = self.hist.split_at(self.pos + 1);
        for (w, u) in self
            .weights
            .iter_mut()
            .zip(head.iter().rev().chain(tail.iter().rev()))
        {
            *w = *w + coef * *u;
        }
        (err, echo)
    }
}

/// Whole-signal NLMS pass.
#[derive(Debug, Clone)]
pub struct NlmsOutput<S> {
    pub error: Vec<S>,
    pub echo_estimate: Vec<S>,
}

/// Run NLMS over paired signals of equal length.
pub fn nlms_run<S: Scalar>(mic: &[S], reference: &[S], cfg: NlmsConfig) -> Result<NlmsOutput<S>> {
    if mic.len() != reference.len() {
        return Err(Error::dim(
            "nlms",
            format!("signal lengths {} vs {}", mic.len(), reference.len()),
        ));
    }
    let mut filt = NlmsFilter::new(cfg)?;
    let mut error = Vec::with_capacity(mic.len());
    let mut echo = Vec::with_capacity(mic.len());
    for (&r, &m) in reference.iter().zip(mic) {
        let (e, y) = filt.process_sample(r, m);
        error.push(e);
        echo.push(y);
    }
    Ok(NlmsOutput {
        error,
        echo_estimate: echo,
    })
}

/// Hybrid front-end configuration.
#[derive(Debug, Clone, Copy)]
pub struct HybridConfig {
    pub nlms: NlmsConfig,
    pub gcc: GccConfig,
}

/// Result of the two-stage linear front end.
#[derive(Debug, Clone)]
pub struct HybridFront<S> {
    /// NLMS residual, the downstream near-end branch input.
    pub error: Vec<S>,
    /// Reference delayed by the estimated bulk delay (zero-filled head),
    /// the downstream far-end branch input.
    pub aligned_reference: Vec<S>,
    /// Linear echo estimate from NLMS.
    pub echo_estimate: Vec<S>,
    /// Bulk delay in samples that was compensated.
    pub bulk_delay: usize,
    pub delay_confidence: f64,
}

/// Estimate the bulk delay, align the reference, and run NLMS on the aligned
/// pair.
pub fn hybrid_preprocess<S: Scalar>(
    mic: &[S],
    reference: &[S],
    cfg: &HybridConfig,
) -> Result<HybridFront<S>> {
    if mic.len() != reference.len() {
        return Err(Error::dim(
            "hybrid",
            format!("signal lengths {} vs {}", mic.len(), reference.len()),
        ));
    }
    let est = estimate_delay(mic, reference, &cfg.gcc)?;
    let d = est.delay_samples;
    let mut aligned = vec![S::zero(); reference.len()];
    for n in d..reference.len() {
        aligned[n] = reference[n - d];
    }
    let out = nlms_run(mic, &aligned, cfg.nlms)?;
    Ok(HybridFront {
        error: out.error,
        aligned_reference: aligned,
        echo_estimate: out.echo_estimate,
        bulk_delay: d,
        delay_confidence: est.confidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn erle_db(mic: &[f64], err: &[f64]) -> f64 {
        let num: f64 = mic.iter().map(|v| v * v).sum();
        let den: f64 = err.iter().map(|v| v * v).sum();
        10.0 * (num / (den + 1e-12)).log10()
    }

    #[test]
    fn identity_path_error_vanishes_quickly() {
        let r = noise(30, 400);
        let cfg = NlmsConfig {
            taps: 8,
            ..NlmsConfig::default()
        };
        let out = nlms_run(&r, &r, cfg).unwrap();
        for (n, e) in out.error.iter().enumerate().skip(100) {
            assert!(e.abs() < 1e-3, "sample {n}: residual {e}");
        }
    }

    #[test]
    fn error_scales_linearly_with_signal_amplitude() {
        // Normalized step size makes adaptation amplitude-invariant, so
        // doubling both signals exactly doubles the error trajectory (up to
        // the eps regularizer's vanishing influence).
        let r = noise(31, 600);
        let h: Vec<f64> = noise(32, 16).iter().map(|v| v * 0.3).collect();
        let mut mic = vec![0.0; r.len()];
        for n in 0..r.len() {
            for (k, hk) in h.iter().enumerate() {
                if n >= k {
                    mic[n] += hk * r[n - k];
                }
            }
        }
        let cfg = NlmsConfig {
            taps: 32,
            eps: 1e-12,
            ..NlmsConfig::default()
        };
        let out1 = nlms_run(&mic, &r, cfg).unwrap();
        let mic2: Vec<f64> = mic.iter().map(|v| v * 2.0).collect();
        let r2: Vec<f64> = r.iter().map(|v| v * 2.0).collect();
        let out2 = nlms_run(&mic2, &r2, cfg).unwrap();
        for (a, b) in out1.error.iter().zip(&out2.error) {
            assert!((2.0 * a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn cancels_a_64_tap_echo_by_20db() {
        let r = noise(33, 12000);
        let h: Vec<f64> = noise(34, 64)
            .iter()
            .enumerate()
            .map(|(k, v)| v * 0.5 * (-(k as f64) / 20.0).exp())
            .collect();
        let mut mic = vec![0.0; r.len()];
        for n in 0..r.len() {
            for (k, hk) in h.iter().enumerate() {
                if n >= k {
                    mic[n] += hk * r[n - k];
                }
            }
        }
        let cfg = NlmsConfig {
            taps: 128,
            ..NlmsConfig::default()
        };
        let out = nlms_run(&mic, &r, cfg).unwrap();
        let half = mic.len() / 2;
        let erle = erle_db(&mic[half..], &out.error[half..]);
        assert!(erle >= 20.0, "converged ERLE {erle:.1} dB");
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(NlmsFilter::<f64>::new(NlmsConfig {
            taps: 0,
            ..NlmsConfig::default()
        })
        .is_err());
        assert!(NlmsFilter::<f64>::new(NlmsConfig {
            mu: 2.0,
            ..NlmsConfig::default()
        })
        .is_err());
        assert!(NlmsFilter::<f64>::new(NlmsConfig {
            mu: -0.1,
            ..NlmsConfig::default()
        })
        .is_err());
    }

    #[test]
    fn hybrid_front_compensates_bulk_delay() {
        let r = noise(35, 24000);
        let d = 700usize;
        // echo = bulk delay + a path with a dominant direct tap and a tail
        let mut h: Vec<f64> = noise(36, 32)
            .iter()
            .enumerate()
            .map(|(k, v)| v * 0.3 * (-(k as f64) / 8.0).exp())
            .collect();
        h[0] = 1.0;
        let mut mic = vec![0.0; r.len()];
        for n in 0..r.len() {
            for (k, hk) in h.iter().enumerate() {
                if n >= d + k {
                    mic[n] += hk * r[n - d - k];
                }
            }
        }
        let cfg = HybridConfig {
            nlms: NlmsConfig {
                taps: 64,
                ..NlmsConfig::default()
            },
            gcc: GccConfig {
                window: 8000,
                hop: 4000,
                max_delay: 2000,
            },
        };
        let front = hybrid_preprocess(&mic, &r, &cfg).unwrap();
        assert_eq!(front.bulk_delay, d);
        assert_eq!(front.aligned_reference[d..], r[..r.len() - d]);
        let half = mic.len() / 2;
        let erle = erle_db(&mic[half..], &front.error[half..]);
        assert!(erle >= 20.0, "hybrid ERLE {erle:.1} dB");
    }
}
