//! Offline (trainable) forward pass: the full network as one autodiff graph.

use rustfft::num_complex::Complex;

use crate::dsp::Spectrogram;
use crate::model::ModelConfig;
use crate::numcore::{Graph, GruIds, ParamSet, Tensor, TensorId};
use crate::{Error, Result, Scalar};

/// Handles into the built graph for everything training and evaluation read.
pub struct ForwardOutputs {
    /// Input microphone spectrum leaf `(t, f, 2)`.
    pub mic_spec: TensorId,
    /// Input reference spectrum leaf `(t, f, 2)`.
    pub ref_spec: TensorId,
    /// Mid-tap masked spectrum `(t, f, 2)`.
    pub spec_mid: TensorId,
    /// Final masked spectrum `(t, f, 2)`.
    pub spec_final: TensorId,
    /// Voice-activity probability per frame `(t)`.
    pub vad: TensorId,
    /// Attention over candidate delays `(t, h)`.
    pub attention: TensorId,
    /// Soft delay estimate per frame `(t)`.
    pub expected_delay: TensorId,
    /// Parameter leaves, aligned with the `ParamSet` entry order.
    pub param_ids: Vec<TensorId>,
}

/// Interleave a complex spectrogram into a `(t, f, 2)` tensor.
pub fn spec_to_tensor<S: Scalar>(spec: &Spectrogram<S>) -> Tensor<S> {
    let mut data = Vec::with_capacity(spec.frames * spec.bins * 2);
    for c in spec.data() {
        data.push(c.re);
        data.push(c.im);
    }
    Tensor::new(vec![spec.frames, spec.bins, 2], data)
}

/// Reassemble a `(t, f, 2)` tensor into a complex spectrogram.
pub fn tensor_to_spec<S: Scalar>(t: &Tensor<S>) -> Result<Spectrogram<S>> {
    let s = t.shape();
    if s.len() != 3 || s[2] != 2 {
        return Err(Error::dim(
            "tensor_to_spec",
            format!("expected (t, f, 2), got {:?}", s),
        ));
    }
    let data: Vec<Complex<S>> = t
        .data()
        .chunks_exact(2)
        .map(|p| Complex::new(p[0], p[1]))
        .collect();
    Ok(Spectrogram::new(s[0], s[1], data))
}

/// Parameter leaves registered on a graph, addressable by canonical name.
struct Leafs {
    names: Vec<String>,
    ids: Vec<TensorId>,
}

impl Leafs {
    fn get(&self, name: &str) -> Result<TensorId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.ids[i])
            .ok_or_else(|| Error::contract("forward", format!("missing parameter {name:?}")))
    }
}

struct BlockIds {
    time_gru: GruIds,
    time_w: TensorId,
    time_b: TensorId,
    freq_gru: GruIds,
    freq_w: TensorId,
    freq_b: TensorId,
}

fn block_ids(leafs: &Leafs, prefix: &str) -> Result<BlockIds> {
    let gru = |sub: &str| -> Result<GruIds> {
        Ok(GruIds {
            w_ih: leafs.get(&format!("{prefix}.{sub}.gru.w_ih"))?,
            w_hh: leafs.get(&format!("{prefix}.{sub}.gru.w_hh"))?,
            b_ih: leafs.get(&format!("{prefix}.{sub}.gru.b_ih"))?,
            b_hh: leafs.get(&format!("{prefix}.{sub}.gru.b_hh"))?,
        })
    };
    Ok(BlockIds {
        time_gru: gru("time")?,
        time_w: leafs.get(&format!("{prefix}.time.out.w"))?,
        time_b: leafs.get(&format!("{prefix}.time.out.b"))?,
        freq_gru: gru("freq")?,
        freq_w: leafs.get(&format!("{prefix}.freq.out.w"))?,
        freq_b: leafs.get(&format!("{prefix}.freq.out.b"))?,
    })
}

/// One recurrent block: a causal time sub-block then a frequency sub-block,
/// each `unfold -> GRU -> linear`, wrapped in a residual connection.
fn rnn_block<S: Scalar>(
    g: &mut Graph<S>,
    x: TensorId,
    ids: &BlockIds,
    cfg: &ModelConfig,
) -> Result<TensorId> {
    let u = g.unfold_time(x, cfg.kernel_time, 1)?;
    let h = g.gru_time(u, &ids.time_gru)?;
    let o = g.linear(h, ids.time_w, ids.time_b)?;
    let x = g.add(x, o)?;
    let u = g.unfold_freq(x, cfg.kernel_freq, 1)?;
    let h = g.gru_freq(u, &ids.freq_gru)?;
    let o = g.linear(h, ids.freq_w, ids.freq_b)?;
    g.add(x, o)
}

/// Build the complete forward computation. `mic_spec` and `ref_spec` are
/// `(t, cfg.bins, 2)` interleaved spectra; parameters become trainable
/// leaves in `ParamSet` order.
pub fn build_forward<S: Scalar>(
    g: &mut Graph<S>,
    params: &ParamSet<S>,
    cfg: &ModelConfig,
    mic_spec: Tensor<S>,
    ref_spec: Tensor<S>,
) -> Result<ForwardOutputs> {
    cfg.validate()?;
    let want_t = mic_spec.shape().first().copied().unwrap_or(0);
    for (name, t) in [("mic", &mic_spec), ("ref", &ref_spec)] {
        let s = t.shape();
        if s.len() != 3 || s[0] != want_t || s[1] != cfg.bins || s[2] != 2 {
            return Err(Error::dim(
                "forward",
                format!(
                    "{name} spectrum {:?} must be ({}, {}, 2)",
                    s, want_t, cfg.bins
                ),
            ));
        }
    }

    let leafs = Leafs {
        names: params.iter().map(|e| e.name.clone()).collect(),
        ids: params
            .iter()
            .map(|e| g.leaf(e.tensor.clone(), true))
            .collect(),
    };
    let mic_spec = g.leaf(mic_spec, false);
    let ref_spec = g.leaf(ref_spec, false);

    // Branch encoders.
    let w = leafs.get("mic_proj.w")?;
    let b = leafs.get("mic_proj.b")?;
    let mut mic = g.linear(mic_spec, w, b)?;
    let w = leafs.get("ref_proj.w")?;
    let b = leafs.get("ref_proj.b")?;
    let mut refr = g.linear(ref_spec, w, b)?;
    for i in 1..=cfg.n_enc {
        mic = rnn_block(g, mic, &block_ids(&leafs, &format!("enc_mic{i}"))?, cfg)?;
        refr = rnn_block(g, refr, &block_ids(&leafs, &format!("enc_ref{i}"))?, cfg)?;
    }

    // Attention over candidate delays.
    let corr = g.delay_correlation(mic, refr, cfg.history)?;
    let w = leafs.get("attn.collapse.w")?;
    let b = leafs.get("attn.collapse.b")?;
    let logits = g.linear(corr, w, b)?;
    let logits = g.reshape(logits, vec![want_t, cfg.history])?;
    let attention = g.softmax_rows(logits)?;
    let aligned = g.attention_apply(attention, refr)?;
    let expected_delay = g.expected_delay(attention)?;

    // Fusion stack with the mid tap.
    let cat = g.concat_last(mic, aligned)?;
    let w = leafs.get("fusion_proj.w")?;
    let b = leafs.get("fusion_proj.b")?;
    let mut z = g.linear(cat, w, b)?;
    let mut tap = None;
    for k in 1..=cfg.n_fusion {
        z = rnn_block(g, z, &block_ids(&leafs, &format!("fusion{k}"))?, cfg)?;
        if 2 * cfg.n_enc + k == cfg.tap_layer {
            tap = Some(z);
        }
    }
    let tap = tap.ok_or_else(|| Error::contract("forward", "tap layer not reached"))?;

    // Mask heads.
    let w = leafs.get("ccm_mid.w")?;
    let b = leafs.get("ccm_mid.b")?;
    let mask_mid = g.linear(tap, w, b)?;
    let spec_mid = g.ccm_apply(mask_mid, mic_spec, cfg.ccm_taps_time, cfg.ccm_taps_freq)?;
    let w = leafs.get("ccm_final.w")?;
    let b = leafs.get("ccm_final.b")?;
    let mask_final = g.linear(z, w, b)?;
    let spec_final = g.ccm_apply(mask_final, mic_spec, cfg.ccm_taps_time, cfg.ccm_taps_freq)?;

    // Voice-activity head reads the mid tap.
    let pooled = g.mean_over_freq(tap)?;
    let w = leafs.get("vad.w")?;
    let b = leafs.get("vad.b")?;
    let v = g.linear(pooled, w, b)?;
    let v = g.reshape(v, vec![want_t])?;
    let vad = g.sigmoid(v);

    Ok(ForwardOutputs {
        mic_spec,
        ref_spec,
        spec_mid,
        spec_final,
        vad,
        attention,
        expected_delay,
        param_ids: leafs.ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, tiny_config};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec_tensor(seed: u64, t: usize, f: usize) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(vec![t, f, 2], |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn output_shapes_are_as_declared() {
        let cfg = tiny_config();
        let t = 4;
        let params = init_params::<f32>(&cfg, 1).unwrap();
        let mut g = Graph::new();
        let out = build_forward(
            &mut g,
            &params,
            &cfg,
            spec_tensor(50, t, cfg.bins),
            spec_tensor(51, t, cfg.bins),
        )
        .unwrap();
        assert_eq!(g.shape(out.spec_mid), &[t, cfg.bins, 2]);
        assert_eq!(g.shape(out.spec_final), &[t, cfg.bins, 2]);
        assert_eq!(g.shape(out.vad), &[t]);
        assert_eq!(g.shape(out.attention), &[t, cfg.history]);
        assert_eq!(g.shape(out.expected_delay), &[t]);
        assert_eq!(out.param_ids.len(), params.len());
    }

    #[test]
    fn zero_parameters_give_neutral_outputs() {
        let cfg = tiny_config();
        let t = 3;
        let mut params = init_params::<f32>(&cfg, 1).unwrap();
        for e in params.iter_mut() {
            e.tensor = Tensor::zeros(e.tensor.shape().to_vec());
        }
        let mut g = Graph::new();
        let out = build_forward(
            &mut g,
            &params,
            &cfg,
            spec_tensor(52, t, cfg.bins),
            spec_tensor(53, t, cfg.bins),
        )
        .unwrap();
        // zero masks null the spectra
        assert!(g.value(out.spec_mid).data().iter().all(|v| *v == 0.0));
        assert!(g.value(out.spec_final).data().iter().all(|v| *v == 0.0));
        // zero logits make attention uniform and VAD sit at 0.5
        let h = cfg.history as f32;
        for v in g.value(out.attention).data() {
            assert!((v - 1.0 / h).abs() < 1e-6);
        }
        for v in g.value(out.vad).data() {
            assert!((v - 0.5).abs() < 1e-6);
        }
        for v in g.value(out.expected_delay).data() {
            assert!((v - (h - 1.0) / 2.0).abs() < 1e-5);
        }
    }

    #[test]
    fn outputs_are_causal_in_the_inputs() {
        let cfg = tiny_config();
        let t = 6;
        let params = init_params::<f32>(&cfg, 2).unwrap();
        let mic_a = spec_tensor(54, t, cfg.bins);
        let ref_a = spec_tensor(55, t, cfg.bins);
        // Perturb only the last frame of both inputs.
        let row = (t - 1) * cfg.bins * 2;
        let mut mic_b = mic_a.clone();
        mic_b.data_mut()[row..].iter_mut().for_each(|v| *v += 0.5);
        let mut ref_b = ref_a.clone();
        ref_b.data_mut()[row..].iter_mut().for_each(|v| *v += 0.5);

        let mut ga = Graph::new();
        let oa = build_forward(&mut ga, &params, &cfg, mic_a, ref_a).unwrap();
        let mut gb = Graph::new();
        let ob = build_forward(&mut gb, &params, &cfg, mic_b, ref_b).unwrap();
        // Every frame before the perturbed one is bit-identical.
        let fa = ga.value(oa.spec_final).data();
        let fb = gb.value(ob.spec_final).data();
        assert_eq!(fa[..row], fb[..row]);
        assert!(fa[row..] != fb[row..], "last frame should change");
        let va = ga.value(oa.vad).data();
        let vb = gb.value(ob.vad).data();
        assert_eq!(va[..t - 1], vb[..t - 1]);
        let aa = ga.value(oa.attention).data();
        let ab = gb.value(ob.attention).data();
        assert_eq!(aa[..(t - 1) * cfg.history], ab[..(t - 1) * cfg.history]);
    }

    #[test]
    fn rejects_mismatched_spectrum_shapes() {
        let cfg = tiny_config();
        let params = init_params::<f32>(&cfg, 1).unwrap();
        let mut g = Graph::new();
        let bad = build_forward(
            &mut g,
            &params,
            &cfg,
            spec_tensor(56, 4, cfg.bins),
            spec_tensor(57, 4, cfg.bins + 1),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn spectrogram_tensor_round_trip() {
        let spec = crate::dsp::stft(
            &(0..400).map(|n| (n as f32 * 0.05).sin()).collect::<Vec<_>>(),
            &crate::dsp::StftConfig {
                frame: 40,
                hop: 20,
                fft: 64,
            },
        )
        .unwrap();
        let t = spec_to_tensor(&spec);
        assert_eq!(t.shape(), &[spec.frames, spec.bins, 2]);
        let back = tensor_to_spec(&t).unwrap();
        assert_eq!(back.frames, spec.frames);
        for (a, b) in back.data().iter().zip(spec.data()) {
            assert_eq!(a, b);
        }
    }
}
