#![allow(dead_code)]

pub mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relclust_core::clusterer::{Evidence, LinkageTable};
use relclust_core::{Clue, ClueId, Modality, MultiModalGraph, TrackId};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const DIMS: [usize; 3] = [3, 4, 2];

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

/// A graph of 1 to 12 nodes over 1 to 4 tracks with random modalities, and
/// the same nodes in oracle form.
pub fn random_graph(rng: &mut ChaCha8Rng) -> (MultiModalGraph, Vec<oracle::Node>) {
    let n = rng.random_range(1..=12);
    let tracks = rng.random_range(1..=4u64);
    let mut clues = Vec::with_capacity(n);
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let track = rng.random_range(0..tracks);
        let m = rng.random_range(0..3);
        let feature = unit(rng, DIMS[m]);
        clues.push(
            Clue::new(
                ClueId(i as u64),
                TrackId(track),
                Modality::ALL[m],
                &feature,
                None,
            )
            .unwrap(),
        );
        nodes.push(oracle::Node {
            track,
            modality: m,
            feature,
        });
    }
    let pivot = clues[0].track;
    (MultiModalGraph::from_nodes(clues, pivot).unwrap(), nodes)
}

/// Unit features for every node of `nodes`, drawn afresh.
pub fn random_features(rng: &mut ChaCha8Rng, nodes: &[oracle::Node]) -> Vec<Vec<f64>> {
    nodes.iter().map(|n| unit(rng, DIMS[n.modality])).collect()
}

/// Items `0..n` and a random sparse table of pair scores in [0, 1]. Scores
/// are drawn from a coarse grid so some land exactly on sweep thresholds.
pub fn random_linkage(rng: &mut ChaCha8Rng) -> (Vec<u64>, Vec<(u64, u64, f64)>, LinkageTable) {
    let n = rng.random_range(1..=40u64);
    let density: f64 = rng.random_range(0.0..0.3);
    let mut scores = Vec::new();
    let mut table = LinkageTable::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < density {
                let s = if rng.random_bool(0.3) {
                    rng.random_range(0..=20) as f64 / 20.0
                } else {
                    rng.random::<f64>()
                };
                let e = Evidence::from_parts(s, 1).unwrap();
                scores.push((a, b, e.score()));
                table.add(TrackId(a), TrackId(b), e);
            }
        }
    }
    ((0..n).collect(), scores, table)
}

/// A predicted and a true labeling of up to 200 items.
pub fn random_partitions(rng: &mut ChaCha8Rng) -> (Vec<u64>, Vec<u64>) {
    let n = rng.random_range(1..=200);
    let k = rng.random_range(1..=n.min(30)) as u64;
    let c = rng.random_range(1..=n.min(30)) as u64;
    let truth: Vec<u64> = (0..n).map(|_| rng.random_range(0..c) * 7).collect();
    let pred: Vec<u64> = (0..n)
        .map(|i| {
            if rng.random_bool(0.5) {
                truth[i]
            } else {
                rng.random_range(0..k) * 3
            }
        })
        .collect();
    (pred, truth)
}

/// Row-major n x n matrix from the oracle's nested rows.
pub fn flat(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
