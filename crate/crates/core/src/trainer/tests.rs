use alloc::vec;
use alloc::vec::Vec;

use super::tape::aggregate_forward;
use super::*;
use crate::gradcheck;
use crate::graph::{Clue, ClueId, Identity, Modality, TrackId};
use crate::neural::ModelShape;
use crate::pipeline;
use crate::synth::{self, SynthConfig};

fn clue(id: u64, track: u64, m: Modality, f: &[f64], ident: u64) -> Clue {
    Clue::new(ClueId(id), TrackId(track), m, f, Some(Identity(ident))).unwrap()
}

fn graph(nodes: Vec<Clue>) -> MultiModalGraph {
    let pivot = nodes[0].track;
    MultiModalGraph::from_nodes(nodes, pivot).unwrap()
}

fn toy() -> MultiModalGraph {
    gradcheck::toy_graph(3).unwrap()
}

fn shape_for(g: &MultiModalGraph, cycles: usize) -> ModelShape {
    ModelShape {
        width: g.slot_span(),
        hidden: 8,
        dims: g.dims().map(|d| d.unwrap_or(0)),
        cycles,
    }
}

fn cfg(cycles: usize) -> TrainerConfig {
    TrainerConfig {
        cycles,
        hidden: 8,
        ..TrainerConfig::default()
    }
}

#[test]
fn gradient_suites_pass() {
    let results = gradcheck::run_all(&gradcheck::GradcheckOptions {
        seed: 11,
        trials: 20,
        corrupt: false,
    })
    .unwrap();
    assert!(results.iter().all(|r| r.passed()), "{results:?}");
}

#[test]
fn corrupted_gradients_are_caught() {
    let results = gradcheck::run_all(&gradcheck::GradcheckOptions {
        seed: 11,
        trials: 2,
        corrupt: true,
    })
    .unwrap();
    assert!(results.iter().all(|r| !r.passed()), "{results:?}");
}

#[test]
fn detached_momentum_differs_only_from_the_third_cycle() {
    let g = toy();
    let unroll = |c: TrainerConfig| TrainerConfig {
        unroll_momentum: true,
        ..c
    };
    // the first carried distribution depends on no parameter
    let model = Model::init(shape_for(&g, 2), 4).unwrap();
    let (_, a) = graph_gradient(&g, &model, &cfg(2)).unwrap();
    let (_, b) = graph_gradient(&g, &model, &unroll(cfg(2))).unwrap();
    assert_eq!(a, b);
    let model = Model::init(shape_for(&g, 3), 4).unwrap();
    let (_, a) = graph_gradient(&g, &model, &cfg(3)).unwrap();
    let (_, b) = graph_gradient(&g, &model, &unroll(cfg(3))).unwrap();
    assert_ne!(a.cycles[0], b.cycles[0]);
    assert_eq!(a.cycles[2], b.cycles[2]);
}

#[test]
fn zero_sigma_gives_half_affinity() {
    let g = toy();
    let model = Model::zeros(shape_for(&g, 2)).unwrap();
    let traces = run_inference(&g, &model, &cfg(2)).unwrap();
    for t in &traces {
        assert!(t.affinity.iter().all(|&a| a == 0.5));
    }
    let dist = traces[0].distribution.clone().unwrap();
    let a = build_affinity(&model.cycle(0).sigma, &dist).unwrap();
    assert!(a.iter().all(|&v| v == 0.5));
}

#[test]
fn affinity_is_symmetric_and_equal_rows_match_diagonal() {
    let g = toy();
    let model = Model::init(shape_for(&g, 1), 9).unwrap();
    let traces = run_inference(&g, &model, &cfg(1)).unwrap();
    let mut d = traces[0].distribution.clone().unwrap().as_slice().to_vec();
    let n = g.len();
    // make rows 4 and 5 identical
    for k in 0..n {
        d[5 * n + k] = d[4 * n + k];
    }
    let dist = DistributionState::from_matrix(n, d, 1).unwrap();
    let a = build_affinity(&model.cycle(0).sigma, &dist).unwrap();
    assert_eq!(a[4 * n + 5], a[4 * n + 4]);
    for i in 0..n {
        for j in 0..n {
            assert!((a[i * n + j] - a[j * n + i]).abs() < 1e-12);
        }
    }
}

#[test]
fn oversized_graph_is_rejected() {
    let g = toy();
    // six nodes, but the last slot is 6
    let model = Model::zeros(ModelShape {
        width: 6,
        ..shape_for(&g, 1)
    })
    .unwrap();
    assert!(matches!(
        run_inference(&g, &model, &cfg(1)),
        Err(Error::InvalidInput(_))
    ));
    // feature-only mode never reads σ
    assert!(run_inference(
        &g,
        &model,
        &TrainerConfig {
            mode: Mode::FeatureOnly,
            ..cfg(1)
        }
    )
    .is_ok());
}

#[test]
fn aggregation_by_hand() {
    let s = 1.0 / 2f64.sqrt();
    let g = graph(vec![
        clue(0, 1, Modality::Face, &[1.0, 0.0], 0),
        clue(1, 2, Modality::Face, &[0.0, 1.0], 0),
        clue(2, 3, Modality::Face, &[s, s], 0),
        clue(3, 4, Modality::Face, &[-1.0, 0.0], 0),
    ]);
    #[rustfmt::skip]
    let a = vec![
        1.0, 0.5, 0.2, 0.3,
        0.5, 1.0, 0.4, 0.1,
        0.2, 0.4, 1.0, 0.6,
        0.3, 0.1, 0.6, 1.0,
    ];
    let f = g.features();
    let phi: [PhiParams; 3] = core::array::from_fn(|_| PhiParams::zeros(2));
    let nodes = aggregate_forward(&g, &a, &f, &phi).unwrap();
    for (node, row) in nodes.iter().zip(a.chunks(4)) {
        let total: f64 = row.iter().sum();
        for (d, &got) in node.aggregated().iter().enumerate() {
            let expect: f64 = row.iter().zip(&f).map(|(w, fj)| w * fj[d]).sum::<f64>() / total;
            assert!((got - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn aggregation_degenerate_neighbourhoods() {
    let g = graph(vec![
        clue(0, 1, Modality::Face, &[1.0, 0.0], 0),
        clue(1, 1, Modality::Body, &[0.6, 0.8], 0),
        clue(2, 2, Modality::Body, &[0.6, 0.8], 0),
    ]);
    let f = g.features();
    let a = vec![0.5; 9];
    let phi: [PhiParams; 3] = core::array::from_fn(|_| PhiParams::zeros(2));
    let nodes = aggregate_forward(&g, &a, &f, &phi).unwrap();
    // the lone face aggregates only itself
    assert_eq!(nodes[0].aggregated(), &f[0][..]);
    // equal neighbours average to themselves
    for node in &nodes[1..3] {
        for (got, want) in node.aggregated().iter().zip(&f[1]) {
            assert!((got - want).abs() < 1e-15);
        }
    }
    let out = aggregate_features(&g, &a, &f, &phi).unwrap();
    let direct = crate::neural::phi_forward(&phi[1], &f[1], &f[1]).unwrap().0;
    assert_eq!(out[1], direct);
}

#[test]
fn feature_loss_by_hand() {
    let c = 0.6f64;
    let g = graph(vec![
        clue(0, 1, Modality::Face, &[1.0, 0.0], 0),
        clue(1, 2, Modality::Face, &[c, 0.8], 0),
        clue(2, 3, Modality::Face, &[0.0, 1.0], 1),
        clue(3, 3, Modality::Voice, &[1.0, 0.0], 1),
    ]);
    let labels = LabelMatrix::from_graph(&g).unwrap();
    let trace = CycleTrace {
        features: g.features(),
        distribution: None,
        affinity: vec![0.5; 16],
    };
    let expect =
        math::bce(1.0, 0.5 * (1.0 + c)) + math::bce(0.0, 0.5) + math::bce(0.0, 0.5 * (1.0 + 0.8));
    let got = feature_loss(&g, core::slice::from_ref(&trace), &labels, &[1.0]).unwrap();
    assert!((got - expect).abs() < 1e-12);
    // orthogonal different-identity pair alone costs ln 2
    assert!((math::bce(0.0, 0.5) - core::f64::consts::LN_2).abs() < 1e-15);
    let d = distribution_loss(&[trace], &labels, &[0.7]).unwrap();
    assert!((d - 0.7 * core::f64::consts::LN_2 * 6.0).abs() < 1e-12);
}

#[test]
fn confident_pairs_cost_about_the_floor() {
    let (l, _) = clamped_bce(1.0, 1.0 - 1e-6);
    assert!((l - 1e-6).abs() < 1e-9);
    let (l, dl) = clamped_bce(1.0, 1.0);
    assert!((l - 1e-6).abs() < 1e-9);
    assert_eq!(dl, 0.0);
}

#[test]
fn total_loss_combines_weights() {
    let g = toy();
    let model = Model::init(shape_for(&g, 2), 1).unwrap();
    let c = cfg(2);
    let loss = graph_loss(&g, &model, &c).unwrap();
    assert_eq!(loss.total, 1.0 * loss.feature + 0.2 * loss.distribution);
    let labels = LabelMatrix::from_graph(&g).unwrap();
    let traces = run_inference(&g, &model, &c).unwrap();
    let lf = feature_loss(&g, &traces, &labels, &c.mu_f()).unwrap();
    let ld = distribution_loss(&traces, &labels, &c.mu_d()).unwrap();
    assert!((lf - loss.feature).abs() < 1e-12 && (ld - loss.distribution).abs() < 1e-12);
}

#[test]
fn zero_early_weights_keep_only_the_last_cycle() {
    let g = toy();
    let model = Model::init(shape_for(&g, 2), 2).unwrap();
    let c = TrainerConfig {
        mu_f: Some(vec![0.0, 1.0]),
        mu_d: Some(vec![0.0, 1.0]),
        ..cfg(2)
    };
    let loss = graph_loss(&g, &model, &c).unwrap();
    let labels = LabelMatrix::from_graph(&g).unwrap();
    let traces = run_inference(&g, &model, &c).unwrap();
    let last = &traces[1..];
    assert_eq!(
        loss.feature,
        feature_loss(&g, last, &labels, &[1.0]).unwrap()
    );
    assert_eq!(
        loss.distribution,
        distribution_loss(last, &labels, &[1.0]).unwrap()
    );
}

#[test]
fn more_cycles_change_the_result() {
    let g = toy();
    let m2 = Model::init(shape_for(&g, 2), 5).unwrap();
    let mut m1 = Model::zeros(shape_for(&g, 1)).unwrap();
    m1.cycles[0] = m2.cycles[0].clone();
    let t1 = run_inference(&g, &m1, &cfg(1)).unwrap();
    let t2 = run_inference(&g, &m2, &cfg(2)).unwrap();
    assert_eq!(t1[0], t2[0]);
    assert_ne!(t1[0].affinity, t2[1].affinity);
}

#[test]
fn permutation_equivariance() {
    let g = toy();
    let perm = [4, 2, 0, 5, 1, 3];
    let pg = g.permuted(&perm).unwrap();
    let n = g.len();
    for mode in [Mode::Full, Mode::FeatureOnly, Mode::DistributionOnly] {
        let c = TrainerConfig { mode, ..cfg(2) };
        let model = Model::init(shape_for(&g, 2), 6).unwrap();
        // σ input slots travel with the nodes
        let a = run_inference(&g, &model, &c).unwrap();
        let b = run_inference(&pg, &model, &c).unwrap();
        for (ta, tb) in a.iter().zip(&b) {
            for x in 0..n {
                for y in 0..n {
                    let d = (tb.affinity[x * n + y] - ta.affinity[perm[x] * n + perm[y]]).abs();
                    assert!(d < 1e-12, "{mode}");
                }
                for (u, v) in tb.features[x].iter().zip(&ta.features[perm[x]]) {
                    assert!((u - v).abs() < 1e-12);
                }
            }
        }
        let la = graph_loss(&g, &model, &c).unwrap().total;
        let lb = graph_loss(&pg, &model, &c).unwrap().total;
        assert!((la - lb).abs() < 1e-9 * la.abs().max(1.0), "{mode}");
    }
}

#[test]
fn ablation_modes_produce_valid_affinities() {
    let g = toy();
    let model = Model::init(shape_for(&g, 2), 8).unwrap();
    for mode in [Mode::Full, Mode::FeatureOnly, Mode::DistributionOnly] {
        let c = TrainerConfig { mode, ..cfg(2) };
        let traces = run_inference(&g, &model, &c).unwrap();
        let a = clustering_affinity(&g, &model, &c).unwrap();
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        for t in &traces {
            for f in &t.features {
                assert!((math::norm(f) - 1.0).abs() < 1e-9);
            }
        }
        if mode == Mode::DistributionOnly {
            assert_eq!(traces[1].features, g.features());
        }
        if mode == Mode::FeatureOnly {
            assert!(traces[0].distribution.is_none());
            assert_eq!(graph_loss(&g, &model, &c).unwrap().distribution, 0.0);
        }
    }
}

#[test]
fn unlabeled_graph_cannot_be_trained() {
    let g = MultiModalGraph::from_nodes(
        vec![Clue::new(ClueId(0), TrackId(1), Modality::Face, &[1.0, 0.0], None).unwrap()],
        TrackId(1),
    )
    .unwrap();
    let model = Model::zeros(shape_for(&g, 1)).unwrap();
    assert!(graph_loss(&g, &model, &cfg(1)).is_err());
}

#[test]
fn training_reduces_the_loss() {
    let data = synth::generate(&SynthConfig {
        identities: 4,
        tracks_per_identity: 4,
        dims: [8, 8, 8],
        clues: [[1, 3], [1, 3], [1, 1]],
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let sampler = crate::SamplerConfig {
        p: 3,
        q: 3,
        k: 4,
        tau: 0.8,
    };
    let c = TrainerConfig {
        iterations: 200,
        hidden: 16,
        adam: crate::AdamConfig {
            lr: 3e-3,
            ..Default::default()
        },
        ..cfg(2)
    };
    let graphs = pipeline::pivot_graphs(&data, &sampler).unwrap();
    let mut model = Model::init(pipeline::model_shape(&data, &sampler, &c), 1).unwrap();
    let mean = |m: &Model| {
        graphs
            .iter()
            .map(|g| graph_loss(g, m, &c).unwrap().total)
            .sum::<f64>()
            / graphs.len() as f64
    };
    let before = mean(&model);
    let mut first = None;
    let mut last = 0.0;
    pipeline::train_on_graphs(&graphs, &mut model, &c, |r| {
        first.get_or_insert(r.loss.total);
        last = r.loss.total;
    })
    .unwrap();
    let after = mean(&model);
    assert!(after < before, "{before} -> {after}");
    assert!(last.is_finite() && first.is_some());
}

#[test]
fn learning_rate_decays_once() {
    let c = TrainerConfig {
        iterations: 10,
        ..TrainerConfig::default()
    };
    assert_eq!(c.lr_at(7), 1e-3);
    assert!((c.lr_at(8) - 1e-4).abs() < 1e-18);
    assert!((c.lr_at(9) - 1e-4).abs() < 1e-18);
}

#[test]
fn config_validation() {
    assert!(TrainerConfig {
        cycles: 0,
        ..TrainerConfig::default()
    }
    .validate()
    .is_err());
    assert!(TrainerConfig {
        mu_f: Some(vec![1.0]),
        ..TrainerConfig::default()
    }
    .validate()
    .is_err());
    assert!(TrainerConfig {
        lambda_d: -1.0,
        ..TrainerConfig::default()
    }
    .validate()
    .is_err());
    assert_eq!(default_mu(3), vec![0.2, 0.2, 1.0]);
    assert_eq!(Mode::from_name("feature-only"), Some(Mode::FeatureOnly));
}
