use std::collections::BTreeMap;

use parzc::ad::{Tape, Tensor};
use parzc::dataset::{encode_features, encode_minmax, split, FeatureMatrix, ZcDataset, ZcRecord};
use parzc::gbdt::{gbdt_fit, gbdt_predict_staged, GbdtConfig};
use parzc::netzoo::{instantiate, score_node, DagBuilder, OpKind, ProbeLoss, ProxyName};
use parzc::rank::{diffkendall_loss, kendall_tau, spearman, spearman_at_topk, RankBatch};
use parzc::rng::RngStream;
use proptest::prelude::*;
use rand::SeedableRng;

fn record(id: usize, proxies: &[(ProxyName, Vec<f64>)]) -> ZcRecord {
    ZcRecord {
        arch_id: format!("a{id}"),
        num_nodes: proxies[0].1.len(),
        accuracy: Some(id as f64),
        proxies: proxies.iter().cloned().collect(),
    }
}

/// `lin0 -> lin1 -> ... ` without nonlinearities, widths from `dims`.
fn linear_chain(dims: &[usize]) -> parzc::netzoo::ArchDag {
    let mut b = DagBuilder::new();
    let input = b.node(OpKind::Identity, dims[0], dims[0]);
    let mut prev = input.clone();
    for w in dims.windows(2) {
        let l = b.node(OpKind::Linear, w[0], w[1]);
        b.edge(&prev, &l);
        prev = l;
    }
    b.finish("chain", &input, &prev)
}

/// A chain with a skip branch joined by a sum, alternating ReLUs.
fn mixed_dag(width: usize, depth: usize) -> parzc::netzoo::ArchDag {
    let mut b = DagBuilder::new();
    let input = b.node(OpKind::Identity, width, width);
    let mut prev = input.clone();
    for d in 0..depth {
        let l = b.node(OpKind::Linear, width, width);
        b.edge(&prev, &l);
        let next = if d % 2 == 0 {
            let r = b.node(OpKind::Relu, width, width);
            b.edge(&l, &r);
            r
        } else {
            l
        };
        let skip = b.node(OpKind::Linear, width, width);
        b.edge(&prev, &skip);
        let s = b.node(OpKind::Sum, width, width);
        b.edge(&next, &s);
        b.edge(&skip, &s);
        prev = s;
    }
    b.finish("mixed", &input, &prev)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn minmax_affine_invariance(
        v in prop::collection::vec(-100.0f64..100.0, 1..40),
        a in 0.1f64..10.0,
        b in -10.0f64..10.0,
    ) {
        let w: Vec<f64> = v.iter().map(|x| a * x + b).collect();
        for (p, q) in encode_minmax(&v).iter().zip(encode_minmax(&w)) {
            prop_assert!((p - q).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(p));
        }
    }

    #[test]
    fn padding_keeps_prefix(
        a in prop::collection::vec(-5.0f64..5.0, 1..6),
        b in prop::collection::vec(-5.0f64..5.0, 6),
        extra in 0usize..5,
    ) {
        let n = a.len();
        let r = record(0, &[(ProxyName::Snip, a.clone()), (ProxyName::L2norm, b[..n].to_vec())]);
        let order = [ProxyName::L2norm, ProxyName::Snip];
        let lmax = n + extra;
        let x = encode_features(std::slice::from_ref(&r), lmax, &order).unwrap();
        prop_assert_eq!(x.cols, 2 * lmax);
        let tight = encode_features(std::slice::from_ref(&r), n, &order).unwrap();
        for (k, p) in order.iter().enumerate() {
            let block = &x.data[k * lmax..(k + 1) * lmax];
            prop_assert_eq!(&block[..n], &encode_minmax(&r.proxies[p])[..]);
            prop_assert_eq!(&block[..n], &tight.data[k * n..(k + 1) * n]);
            prop_assert!(block[n..].iter().all(|&z| z == 0.0));
        }
    }

    #[test]
    fn split_is_a_partition(n in 2usize..300, frac in 0.01f64..0.99, seed in any::<u64>()) {
        let records: Vec<ZcRecord> = (0..n).map(|i| record(i, &[(ProxyName::Plain, vec![i as f64, 1.0])])).collect();
        let ds = split(ZcDataset::from_records(records, None, "p", seed).unwrap(), frac, seed).unwrap();
        let s = ds.split.as_ref().unwrap();
        prop_assert!(!s.train.is_empty() && !s.validation.is_empty());
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn metrics_ignore_increasing_transforms(
        pairs in prop::collection::vec((-50i32..50, -50i32..50), 2..30),
        frac in prop::sample::select(vec![0.1, 0.2, 0.5, 1.0]),
    ) {
        let p: Vec<f64> = pairs.iter().map(|q| q.0 as f64).collect();
        let t: Vec<f64> = pairs.iter().map(|q| q.1 as f64).collect();
        // exact in f64 for these magnitudes
        let fp: Vec<f64> = p.iter().map(|x| x * x * x + 3.0 * x - 7.0).collect();
        let (a, b) = (RankBatch::new(&p, &t).unwrap(), RankBatch::new(&fp, &t).unwrap());
        prop_assert_eq!(kendall_tau(a).unwrap(), kendall_tau(b).unwrap());
        prop_assert_eq!(spearman(a).unwrap(), spearman(b).unwrap());
        prop_assert_eq!(spearman_at_topk(a, frac).unwrap(), spearman_at_topk(b, frac).unwrap());
    }

    #[test]
    fn diffkendall_is_symmetric(
        pairs in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 2..30),
        alpha in 0.0f64..60.0,
    ) {
        let x: Vec<f64> = pairs.iter().map(|q| q.0).collect();
        let y: Vec<f64> = pairs.iter().map(|q| q.1).collect();
        let l1 = diffkendall_loss(RankBatch::new(&x, &y).unwrap(), alpha).unwrap();
        let l2 = diffkendall_loss(RankBatch::new(&y, &x).unwrap(), alpha).unwrap();
        prop_assert!((l1 - l2).abs() <= 1e-15);
    }

    #[test]
    fn backward_is_linear(
        x in prop::collection::vec(-2.0f64..2.0, 6),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let point = Tensor::new([2, 3], x).unwrap();
        let grad = |ca: f64, cb: f64| {
            let mut t = Tape::new(RngStream::new(1, 1));
            let xv = t.input("x");
            let s = t.sigmoid(xv);
            let f = t.sum(s);
            let sq = t.mul(xv, xv);
            let ln = t.layernorm(sq);
            let g = t.sum(ln);
            let sq2 = t.mul(g, g);
            let fa = t.scale(f, ca);
            let gb = t.scale(sq2, cb);
            let out = t.add(fa, gb);
            t.forward(&[("x", point.clone())]).unwrap();
            t.backward(out, &Tensor::scalar(1.0)).unwrap().get("x").unwrap().clone()
        };
        let (gf, gg, both) = (grad(1.0, 0.0), grad(0.0, 1.0), grad(a, b));
        for ((f, g), h) in gf.data().iter().zip(gg.data()).zip(both.data()) {
            prop_assert!((a * f + b * g - h).abs() <= 1e-12);
        }
    }

    #[test]
    fn tape_replay_is_bitwise_deterministic(
        x in prop::collection::vec(-2.0f64..2.0, 8),
        seed in any::<u64>(),
    ) {
        let point = Tensor::new([2, 4], x).unwrap();
        let run = || {
            let mut t = Tape::new(RngStream::new(seed, 5));
            let xv = t.input("x");
            let d = t.dropout(xv, 0.3);
            let n = t.randn(&[2, 4]);
            let y = t.mul(d, n);
            let y = t.softplus(y);
            let s = t.sum(y);
            t.forward(&[("x", point.clone())]).unwrap();
            let v = t.value(s).unwrap().clone();
            (v, t.backward(s, &Tensor::scalar(1.0)).unwrap().get("x").unwrap().clone())
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn gradnorm_scales_with_the_batch(
        dims in prop::collection::vec(1usize..6, 2..5),
        c in 0.1f64..10.0,
        seed in 0u64..1000,
    ) {
        let dag = linear_chain(&dims);
        let net = instantiate(&dag, seed).unwrap();
        let mut g = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let batch = Tensor::new([3, dims[0]], (0..3 * dims[0]).map(|_| rand::Rng::random_range(&mut g, -1.0..1.0)).collect()).unwrap();
        let scaled = batch.map(|v| c * v);
        let s1 = net.probe(&batch, ProbeLoss::SumOfOutputs).unwrap();
        let s2 = net.probe(&scaled, ProbeLoss::SumOfOutputs).unwrap();
        for (id, st) in &s1 {
            let g1 = score_node(ProxyName::Gradnorm, st).unwrap();
            let g2 = score_node(ProxyName::Gradnorm, &s2[id]).unwrap();
            prop_assert!((g2 - c * g1).abs() <= 1e-12 * (c * g1).abs().max(1e-300), "{id}: {g2} vs {}", c * g1);
        }
    }

    #[test]
    fn synflow_ignores_weight_signs(
        width in 1usize..5,
        depth in 1usize..4,
        seed in 0u64..1000,
        flips in any::<u64>(),
    ) {
        let dag = mixed_dag(width, depth);
        let net = instantiate(&dag, seed).unwrap();
        let mut flipped = net.clone();
        let mut bit = 0;
        for node in dag.nodes.iter().filter(|n| n.op == OpKind::Linear) {
            let w = net.weight(&node.id).unwrap();
            let signed = Tensor::new(w.shape().to_vec(), w.data().iter().map(|&v| {
                bit = (bit + 1) % 64;
                if flips >> bit & 1 == 1 { -v } else { v }
            }).collect()).unwrap();
            flipped = flipped.with_weight(&node.id, signed).unwrap();
        }
        let (a, b) = (net.probe_synflow().unwrap(), flipped.probe_synflow().unwrap());
        for (id, st) in &a {
            prop_assert_eq!(score_node(ProxyName::Synflow, st).unwrap(), score_node(ProxyName::Synflow, &b[id]).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn boosting_is_monotone_and_importance_conserved(
        n in 2usize..60,
        d in 1usize..4,
        seed in any::<u64>(),
        depth in 0usize..4,
    ) {
        let mut g = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * d).map(|_| rand::Rng::random_range(&mut g, 0..5) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut g, -1.0..1.0)).collect();
        let x = FeatureMatrix { rows: n, cols: d, data };
        let cfg = GbdtConfig { n_estimators: 30, max_depth: depth, ..GbdtConfig::default() };
        let m = gbdt_fit(&x, &y, &cfg).unwrap();
        let mse: Vec<f64> = (0..=30).map(|k| {
            let p = gbdt_predict_staged(&m, &x, k).unwrap();
            p.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64
        }).collect();
        prop_assert!(mse.windows(2).all(|w| w[1] <= w[0]), "{mse:?}");
        prop_assert!(m.trees.iter().all(|t| t.depth() <= depth));
        let imp = m.feature_importances();
        prop_assert!(imp.iter().all(|&v| v >= 0.0));
        let total: f64 = imp.iter().sum();
        prop_assert!(total == 0.0 || (total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn record_lengths_match_node_count() {
    let dag = mixed_dag(3, 3);
    let batch = Tensor::full([4, 3], 0.5);
    let r = parzc::netzoo::collect_zc_record(&dag, &ProxyName::ALL, &batch, 1).unwrap();
    let lens: BTreeMap<_, _> = r.proxies.iter().map(|(p, v)| (*p, v.len())).collect();
    assert!(lens.values().all(|&l| l == dag.param_node_count()), "{lens:?}");
}
