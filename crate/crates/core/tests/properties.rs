use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relclust_core::clusterer::{merge_linkages, Evidence, LinkageTable};
use relclust_core::graph::{build_graph, knn_tracks, track_representatives};
use relclust_core::pipeline::max_graph_size;
use relclust_core::sampler::sample_neighborhood;
use relclust_core::synth::{generate, inject_noise, NoiseConfig, SynthConfig};
use relclust_core::{Dataset, Identity, Modality, SamplerConfig, TrackId};

fn small_dataset(seed: u64, presence: [f64; 3]) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate(&SynthConfig {
        identities: rng.random_range(1..=6),
        tracks_per_identity: rng.random_range(1..=5),
        presence,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn neighbourhoods_keep_the_size_contract(
        seed in any::<u64>(),
        p in 1usize..6,
        extra in 0usize..3,
        presence in prop::array::uniform3(0.2f64..=1.0),
    ) {
        let data = small_dataset(seed, presence);
        let cfg = SamplerConfig { p, q: 2, k: p + extra, tau: 0.8 };
        let knn = knn_tracks(&track_representatives(&data).unwrap(), cfg.k.min(data.len() - 1)).unwrap();
        for pivot in data.track_ids() {
            let hood = sample_neighborhood(pivot, &data, &knn, &cfg).unwrap();
            prop_assert_eq!(hood.tracks[0], pivot);
            let distinct: BTreeSet<TrackId> = hood.tracks.iter().copied().collect();
            prop_assert_eq!(distinct.len(), hood.tracks.len());
            prop_assert_eq!(hood.degenerate, data.len() < p + 1);
            prop_assert_eq!(hood.tracks.len(), (p + 1).min(data.len()));

            // every modality within two hops is represented when there is room
            if p >= 3 {
                let mut reach: BTreeSet<TrackId> = knn[&pivot].iter().copied().collect();
                for t in &knn[&pivot] {
                    reach.extend(knn[t].iter().copied());
                }
                reach.insert(pivot);
                for m in Modality::ALL {
                    if reach.iter().any(|&t| data.track(t).unwrap().has(m)) {
                        prop_assert!(
                            hood.tracks.iter().any(|&t| data.track(t).unwrap().has(m)),
                            "{} reachable but not sampled for pivot {}", m, pivot
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn graphs_fit_the_model_width(seed in any::<u64>(), p in 1usize..5, q in 1usize..4) {
        let data = small_dataset(seed, [0.8, 0.9, 0.7]);
        let cfg = SamplerConfig { p, q, k: p, tau: 0.8 };
        let knn = knn_tracks(&track_representatives(&data).unwrap(), cfg.k.min(data.len() - 1)).unwrap();
        for pivot in data.track_ids() {
            let hood = sample_neighborhood(pivot, &data, &knn, &cfg).unwrap();
            let tracks: Vec<_> = hood.tracks.iter().map(|&t| data.track(t).unwrap()).collect();
            let g = build_graph(&tracks, &cfg).unwrap();
            prop_assert_eq!(g.pivot(), pivot);
            for t in 0..g.tracks().len() {
                for m in Modality::ALL {
                    prop_assert!(g.group(t, m).len() <= q);
                }
            }
            let slots: BTreeSet<usize> = g.slots().iter().copied().collect();
            prop_assert_eq!(slots.len(), g.len());
            prop_assert!(g.slot_span() <= max_graph_size(&cfg));
        }
    }

    #[test]
    fn knn_ignores_input_order(seed in any::<u64>(), k in 1usize..6) {
        let data = small_dataset(seed, [0.8, 0.9, 0.7]);
        let mut reps = track_representatives(&data).unwrap();
        let k = k.min(data.len().saturating_sub(1));
        let a = knn_tracks(&reps, k).unwrap();
        reps.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        prop_assert_eq!(a, knn_tracks(&reps, k).unwrap());
    }

    #[test]
    fn pooled_linkage_ignores_merge_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tables: Vec<LinkageTable> = (0..6)
            .map(|_| {
                let mut t = LinkageTable::new();
                for _ in 0..20 {
                    let (a, b) = (rng.random_range(0..8), rng.random_range(0..8));
                    t.add(TrackId(a), TrackId(b), Evidence::from_parts(rng.random::<f64>() * 3.0, rng.random_range(1..4)).unwrap());
                }
                t
            })
            .collect();
        let forward = merge_linkages(&tables);
        tables.shuffle(&mut rng);
        prop_assert_eq!(&forward, &merge_linkages(&tables));
        for (_, _, e) in forward.iter() {
            prop_assert!(e.count() > 0);
        }
    }

    #[test]
    fn noise_moves_only_body_clues(seed in any::<u64>(), rho in 0.0f64..=1.0) {
        let data = small_dataset(seed, [0.8, 0.9, 0.7]);
        let noisy = inject_noise(&data, &NoiseConfig { rho }, seed).unwrap();
        prop_assert_eq!(data.track_ids(), noisy.track_ids());
        let total = |d: &Dataset| d.tracks().iter().map(|t| t.clue_count()).sum::<usize>();
        prop_assert_eq!(total(&data), total(&noisy));
        for (a, b) in data.tracks().iter().zip(noisy.tracks()) {
            prop_assert_eq!(a.clues(Modality::Face), b.clues(Modality::Face));
            prop_assert_eq!(a.clues(Modality::Voice), b.clues(Modality::Voice));
            prop_assert_eq!(a.has(Modality::Body), b.has(Modality::Body));
            prop_assert_eq!(a.identity, b.identity);
        }
    }
}

#[test]
fn generated_similarities_hit_their_targets() {
    let cfg = SynthConfig {
        dims: [32; 3],
        within_cosine: [0.9; 3],
        presence: [1.0; 3],
        seed: 9,
        ..SynthConfig::default()
    };
    let data = generate(&cfg).unwrap();
    for m in Modality::ALL {
        let clues: Vec<(Identity, &[f64])> = data
            .tracks()
            .iter()
            .flat_map(|t| {
                t.clues(m)
                    .iter()
                    .map(move |c| (t.identity.unwrap(), c.feature()))
            })
            .collect();
        let (mut within, mut across) = ((0.0, 0), (0.0, 0));
        for (i, a) in clues.iter().enumerate() {
            for b in &clues[i + 1..] {
                let acc = if a.0 == b.0 { &mut within } else { &mut across };
                acc.0 += cosine(a.1, b.1);
                acc.1 += 1;
            }
        }
        let (w, x) = (within.0 / within.1 as f64, across.0 / across.1 as f64);
        assert!((w - 0.9).abs() <= 0.05, "{m}: within-identity cosine {w}");
        assert!(x.abs() <= 0.05, "{m}: cross-identity cosine {x}");
    }
}

#[test]
fn half_noise_swaps_about_half_the_bodies() {
    let cfg = SynthConfig {
        identities: 100,
        tracks_per_identity: 10,
        presence: [0.8, 1.0, 0.7],
        ..SynthConfig::default()
    };
    for seed in 0..5 {
        let data = generate(&SynthConfig {
            seed,
            ..cfg.clone()
        })
        .unwrap();
        let noisy = inject_noise(&data, &NoiseConfig { rho: 0.5 }, seed).unwrap();
        let ids = |t: &relclust_core::Track| {
            t.clues(Modality::Body)
                .iter()
                .map(|c| c.id)
                .collect::<Vec<_>>()
        };
        let moved = data
            .tracks()
            .iter()
            .zip(noisy.tracks())
            .filter(|(a, b)| ids(a) != ids(b))
            .count();
        let fraction = moved as f64 / data.len() as f64;
        assert!((0.44..=0.56).contains(&fraction), "seed {seed}: {fraction}");
    }
}
