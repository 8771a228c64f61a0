//! Adam optimizer with global gradient-norm clipping.

use crate::Scalar;

/// Adam hyperparameters. Defaults: lr 1e-3, betas (0.9, 0.999), eps 1e-8.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers plus the step counter, one pair of buffers per
/// parameter tensor, in registry order.
pub struct AdamState<S> {
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    step: u64,
}

impl<S: Scalar> AdamState<S> {
    /// Zero-initialized state for parameter tensors of the given sizes.
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            m: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Scale all gradients in place so their joint L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm<S: Scalar>(grads: &mut [Vec<S>], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.iter() {
        for v in g {
            let v = v.as_f64();
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = S::of(max_norm / norm);
        for g in grads.iter_mut() {
            for v in g {
                *v = *v * scale;
            }
        }
    }
    norm
}

/// One Adam update over every (param, grad) pair. Bias-corrected, classic
/// element-wise form:
///
/// ```text
/// m = b1*m + (1-b1)*g          mhat = m / (1 - b1^t)
/// v = b2*v + (1-b2)*g^2        vhat = v / (1 - b2^t)
/// p -= lr * mhat / (sqrt(vhat) + eps)
/// ```
pub fn adam_step<S: Scalar>(
    params: &mut [&mut [S]],
    grads: &[Vec<S>],
    state: &mut AdamState<S>,
    cfg: &AdamConfig,
) {
    assert_eq!(params.len(), grads.len(), "param/grad tensor count");
    assert_eq!(params.len(), state.m.len(), "param/state tensor count");
    state.step += 1;
    let t = state.step as i32;
    let b1 = S::of(cfg.beta1);
    let b2 = S::of(cfg.beta2);
    let one = S::one();
    let bc1 = one - b1.powi(t);
    let bc2 = one - b2.powi(t);
    let lr = S::of(cfg.lr);
    let eps = S::of(cfg.eps);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        assert_eq!(p.len(), g.len(), "param/grad length for tensor {k}");
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (one - b1) * g[i];
            v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p[i] = p[i] - lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Three steps on a single scalar parameter with constant gradient 1.0,
    /// checked against values computed by hand from the update formulas.
    #[test]
    fn three_step_trace_matches_hand_computation() {
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut p = vec![1.0f64];
        let mut state = AdamState::new(&[1]);
        let g = vec![vec![1.0f64]];

        // Step 1: m=0.1, v=0.001, mhat=1, vhat=1 -> p = 1 - 0.1*1/(1+1e-8)
        adam_step(&mut [&mut p], &g, &mut state, &cfg);
        let want1 = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((p[0] - want1).abs() < 1e-15, "{} vs {}", p[0], want1);

        // Step 2: m=0.19, v=0.001999, bc1=0.19, bc2=0.001999 -> mhat=vhat=1
        adam_step(&mut [&mut p], &g, &mut state, &cfg);
        let want2 = want1 - 0.1 / (1.0 + 1e-8);
        assert!((p[0] - want2).abs() < 1e-12, "{} vs {}", p[0], want2);

        // Step 3: same shape again; with constant gradients mhat/vhat stay 1.
        adam_step(&mut [&mut p], &g, &mut state, &cfg);
        let want3 = want2 - 0.1 / (1.0 + 1e-8);
        assert!((p[0] - want3).abs() < 1e-12, "{} vs {}", p[0], want3);
        assert_eq!(state.step_count(), 3);
    }

    #[test]
    fn clip_scales_only_when_norm_exceeds_limit() {
        let mut g = vec![vec![3.0f64], vec![4.0f64]];
        let norm = clip_global_norm(&mut g, 10.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert_eq!(g[0][0], 3.0);
        assert_eq!(g[1][0], 4.0);

        let norm = clip_global_norm(&mut g, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let clipped = (g[0][0] * g[0][0] + g[1][0] * g[1][0]).sqrt();
        assert!((clipped - 1.0).abs() < 1e-12);
        assert!((g[0][0] - 0.6).abs() < 1e-12);
        assert!((g[1][0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn descends_a_quadratic() {
        // minimize 0.5*(p-3)^2; gradient is (p-3)
        let cfg = AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        };
        let mut p = vec![0.0f64];
        let mut state = AdamState::new(&[1]);
        for _ in 0..4000 {
            let g = vec![vec![p[0] - 3.0]];
            adam_step(&mut [&mut p], &g, &mut state, &cfg);
        }
        assert!((p[0] - 3.0).abs() < 1e-2, "ended at {}", p[0]);
    }
}
