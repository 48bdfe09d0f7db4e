//! Mixer predictor with Bayesian input/output layers.

mod ckpt;
mod config;
mod model;
mod params;

pub use ckpt::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, MAGIC, VERSION};
pub use config::{MabnConfig, ModelArch, Pooling};
pub use model::{
    bayes_linear, bayes_linear_on_tape, mabn_forward, mixer_block, predict, record_forward, BayesMode, ForwardMode,
    Noise,
};
pub use params::{init_params, param_layout, BayesianLinearParams, Init, MabnParams};

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::ad::{finite_diff_check_named, Tape, Tensor};
    use crate::rng::RngStream;

    fn toy(arch: ModelArch) -> MabnConfig {
        MabnConfig {
            input_dim: 6,
            segments: 3,
            segment_len: 4,
            mixer_depth: 2,
            head_repeats: 2,
            ffn_expansion: 1.5,
            dropout: 0.2,
            arch,
            rho_init: -1.0,
            ..MabnConfig::desk(6)
        }
    }

    fn features(n: usize, d: usize, seed: u64) -> Tensor {
        let data = (0..n * d)
            .map(|i| ((i as f64 + 1.0) * 0.7 + seed as f64).sin())
            .collect();
        Tensor::new([n, d], data).unwrap()
    }

    fn layer(mu: Vec<f64>, rho: Vec<f64>, o: usize, i: usize) -> BayesianLinearParams {
        BayesianLinearParams::new(Tensor::new([o, i], mu).unwrap(), Tensor::new([o, i], rho).unwrap()).unwrap()
    }

    #[test]
    fn zero_noise_is_mean_path() {
        let p = layer(vec![1.0, -2.0, 0.5, 3.0], vec![0.3; 4], 2, 2);
        let x = Tensor::new([1, 2], vec![2.0, 1.0]).unwrap();
        let rng = RngStream::new(1, 0);
        let frozen = bayes_linear(&x, &p, Noise::Frozen(Tensor::zeros([2, 2])), rng).unwrap();
        let mean = bayes_linear(&x, &p, Noise::Mean, rng).unwrap();
        assert_eq!(frozen.data(), &[0.0, 4.0]);
        assert_eq!(mean, frozen);
    }

    #[test]
    fn tiny_rho_collapses_to_mean() {
        let p = layer(vec![0.4, -0.1, 0.9], vec![-20.0; 3], 1, 3);
        let x = Tensor::new([2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, 2.0]).unwrap();
        let s = bayes_linear(&x, &p, Noise::Sample, RngStream::new(9, 0)).unwrap();
        let m = bayes_linear(&x, &p, Noise::Mean, RngStream::new(9, 0)).unwrap();
        for (a, b) in s.data().iter().zip(m.data()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn sampled_weight_std_matches_softplus_rho() {
        let rho = 0.25f64;
        let p = layer(vec![0.7], vec![rho], 1, 1);
        let x = Tensor::new([1, 1], vec![1.0]).unwrap();
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|s| bayes_linear(&x, &p, Noise::Sample, RngStream::new(s, 3)).unwrap().data()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let target = rho.exp().ln_1p();
        assert!((var.sqrt() - target).abs() / target < 0.02, "{} vs {target}", var.sqrt());
    }

    #[test]
    fn frozen_noise_shape_is_checked() {
        let p = layer(vec![1.0; 4], vec![0.0; 4], 2, 2);
        let x = Tensor::new([1, 2], vec![1.0, 1.0]).unwrap();
        let err = bayes_linear(&x, &p, Noise::Frozen(Tensor::zeros([4])), RngStream::new(0, 0));
        assert!(err.is_err());
    }

    #[test]
    fn zero_feed_forward_block_is_layernorm_identity() {
        let c = MabnConfig {
            mixer_depth: 1,
            ..toy(ModelArch::Mabn)
        };
        let mut params = init_params(&c, 3).unwrap();
        for (k, t) in params.tensors.iter_mut() {
            if k.contains(".tok") || k.contains(".ch") {
                *t = Tensor::zeros(t.shape().to_vec());
            }
        }
        let h = features(2, 12, 1).reshaped([2, 3, 4]).unwrap();
        let mut tape = Tape::new(RngStream::new(0, 0));
        let hv = tape.input("h");
        let out = mixer_block(&mut tape, hv, 0, &c, true);
        let ln = tape.layernorm(hv);
        tape.mark_output("out", out);
        tape.mark_output("ln", ln);
        let v = tape.forward(&(&params.tensors, [("h", h)])).unwrap();
        for (a, b) in v["out"].data().iter().zip(v["ln"].data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn weighted_sum(tape: &mut Tape, y: crate::ad::Var, n: usize) -> crate::ad::Var {
        let w = tape.constant(Tensor::from_vec((0..n).map(|i| 0.3 + i as f64 * 0.45).collect()));
        let p = tape.mul(y, w);
        tape.sum(p)
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        for arch in [ModelArch::Mabn, ModelArch::MlpBaseline] {
            let c = toy(arch);
            let params = init_params(&c, 11).unwrap();
            let x = features(4, c.input_dim, 2);
            let rest = (&params.tensors, [("x", x)]);
            let build = |t: &mut Tape| {
                let (_, y) = record_forward(t, 4, &c, &ForwardMode::train()).unwrap();
                weighted_sum(t, y, 4)
            };
            for (name, value) in &params.tensors {
                let err = finite_diff_check_named(build, name, value, 1e-6, RngStream::new(5, 0), &rest);
                assert!(err < 1e-4, "{arch:?} {name}: {err}");
            }
        }
    }

    #[test]
    fn scores_are_batch_independent() {
        let c = toy(ModelArch::Mabn);
        let params = init_params(&c, 4).unwrap();
        let x = features(32, c.input_dim, 7);
        let all = mabn_forward(&x, &params, &ForwardMode::eval(), RngStream::new(0, 0)).unwrap();
        let one = Tensor::new([1, c.input_dim], x.row(0).to_vec()).unwrap();
        let single = mabn_forward(&one, &params, &ForwardMode::eval(), RngStream::new(0, 0)).unwrap();
        assert_eq!(single[0], all[0]);
    }

    #[test]
    fn row_permutation_permutes_scores() {
        let c = toy(ModelArch::Mabn);
        let params = init_params(&c, 4).unwrap();
        let x = features(5, c.input_dim, 3);
        let perm = [3usize, 0, 4, 1, 2];
        let px: Vec<f64> = perm.iter().flat_map(|&i| x.row(i).to_vec()).collect();
        let px = Tensor::new([5, c.input_dim], px).unwrap();
        let a = mabn_forward(&x, &params, &ForwardMode::eval(), RngStream::new(0, 0)).unwrap();
        let b = mabn_forward(&px, &params, &ForwardMode::eval(), RngStream::new(0, 0)).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert!((b[k] - a[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_mode_needs_every_layer() {
        let c = toy(ModelArch::Mabn);
        let params = init_params(&c, 4).unwrap();
        let mut eps = BTreeMap::new();
        eps.insert("bin".to_string(), Tensor::zeros([4, 4]));
        let mode = ForwardMode {
            bayes: BayesMode::Frozen(eps.clone()),
            train: false,
        };
        let x = features(2, c.input_dim, 3);
        assert!(mabn_forward(&x, &params, &mode, RngStream::new(0, 0)).is_err());
        eps.insert("bout".to_string(), Tensor::zeros([1, 3]));
        let mode = ForwardMode {
            bayes: BayesMode::Frozen(eps),
            train: false,
        };
        let frozen = mabn_forward(&x, &params, &mode, RngStream::new(0, 0)).unwrap();
        let mean = mabn_forward(&x, &params, &ForwardMode::eval(), RngStream::new(0, 0)).unwrap();
        assert_eq!(frozen, mean);
    }

    #[test]
    fn wrong_feature_width_is_rejected() {
        let c = toy(ModelArch::Mabn);
        let params = init_params(&c, 4).unwrap();
        let x = features(2, 5, 0);
        assert!(mabn_forward(&x, &params, &ForwardMode::eval(), RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let c = toy(ModelArch::Mabn);
        let params = init_params(&c, 21).unwrap();
        let ck = Checkpoint { params, layout: None };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &ck).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        let x = features(3, c.input_dim, 1);
        let a = mabn_forward(&x, &ck.params, &ForwardMode::eval(), RngStream::new(0, 0)).unwrap();
        let b = mabn_forward(&x, &back.params, &ForwardMode::eval(), RngStream::new(0, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = encode_checkpoint(&Checkpoint {
            params: init_params(&toy(ModelArch::Mabn), 0).unwrap(),
            layout: None,
        })
        .unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_checkpoint(&bytes), Err(crate::Error::Contract(_))));
        assert!(decode_checkpoint(&bytes[..3]).is_err());
    }

    #[test]
    fn non_bayes_variant_has_no_rho() {
        let c = MabnConfig {
            bayes: false,
            ..toy(ModelArch::Mabn)
        };
        let p = init_params(&c, 0).unwrap();
        assert!(p.tensors.keys().all(|k| !k.ends_with(".rho")));
        let x = features(2, c.input_dim, 0);
        let a = mabn_forward(&x, &p, &ForwardMode::train(), RngStream::new(0, 0)).unwrap();
        assert_eq!(a.len(), 2);
    }
}
