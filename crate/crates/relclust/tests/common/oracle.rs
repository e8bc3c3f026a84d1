//! Reference implementations written directly from the definitions, with no
//! shared code paths: plain loops over nodes, pairs and labels.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// One graph node for the distribution oracle.
#[derive(Debug, Clone)]
pub struct Node {
    pub track: u64,
    pub modality: usize,
    pub feature: Vec<f64>,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for k in 0..a.len() {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    ab / (aa.sqrt() * bb.sqrt())
}

fn same_modality_prob(a: &Node, b: &Node) -> f64 {
    ((1.0 + cosine(&a.feature, &b.feature)) / 2.0).clamp(0.0, 1.0)
}

/// Soft initialization: 1 on the diagonal, `eta` within a track, `1 - eta`
/// across tracks.
pub fn init(nodes: &[Node], eta: f64) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            d[i][j] = if i == j {
                1.0
            } else if nodes[i].track == nodes[j].track {
                eta
            } else {
                1.0 - eta
            };
        }
    }
    d
}

/// Identity probability of `i` with `j` as seen from `i`.
pub fn one_sided(nodes: &[Node], prev: &[Vec<f64>], i: usize, j: usize) -> f64 {
    let (a, b) = (&nodes[i], &nodes[j]);
    if i == j {
        return 1.0;
    }
    if a.modality == b.modality {
        return same_modality_prob(a, b);
    }
    if a.track == b.track {
        return 1.0;
    }
    // bridges: same modality as i, same track as j
    let mut total = 0.0;
    let mut count = 0;
    for (k, c) in nodes.iter().enumerate() {
        if k != i && c.modality == a.modality && c.track == b.track {
            total += same_modality_prob(a, c);
            count += 1;
        }
    }
    if count == 0 {
        prev[i][j]
    } else {
        total / count as f64
    }
}

/// One full distribution step: symmetrized relation blended with `prev`.
pub fn step(nodes: &[Node], prev: &[Vec<f64>], alpha: f64) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let rel = if i == j {
                1.0
            } else {
                (one_sided(nodes, prev, i, j) + one_sided(nodes, prev, j, i)) / 2.0
            };
            out[i][j] = alpha * prev[i][j] + (1.0 - alpha) * rel;
        }
    }
    out
}

/// Connected components of the pairs scoring strictly above `threshold`, by
/// breadth-first search. Returns the components as sorted item sets.
pub fn bfs_components(
    items: &[u64],
    scores: &[(u64, u64, f64)],
    threshold: f64,
) -> BTreeSet<Vec<u64>> {
    let mut adj: BTreeMap<u64, Vec<u64>> = items.iter().map(|&t| (t, Vec::new())).collect();
    for &(a, b, s) in scores {
        if s > threshold {
            adj.get_mut(&a).unwrap().push(b);
            adj.get_mut(&b).unwrap().push(a);
        }
    }
    let mut seen = BTreeSet::new();
    let mut out = BTreeSet::new();
    for &start in items {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            for &y in &adj[&x] {
                if seen.insert(y) {
                    comp.push(y);
                    queue.push_back(y);
                }
            }
        }
        comp.sort_unstable();
        out.insert(comp);
    }
    out
}

/// `pred[i]` and `truth[i]` label item `i`.
pub fn wcp(pred: &[u64], truth: &[u64]) -> f64 {
    let n = pred.len();
    let clusters: BTreeSet<u64> = pred.iter().copied().collect();
    let labels: BTreeSet<u64> = truth.iter().copied().collect();
    let mut total = 0;
    for &k in &clusters {
        let mut best = 0;
        for &j in &labels {
            let c = (0..n).filter(|&i| pred[i] == k && truth[i] == j).count();
            best = best.max(c);
        }
        total += best;
    }
    total as f64 / n as f64
}

pub fn nmi(pred: &[u64], truth: &[u64]) -> f64 {
    let n = pred.len() as f64;
    let clusters: BTreeSet<u64> = pred.iter().copied().collect();
    let labels: BTreeSet<u64> = truth.iter().copied().collect();
    let p = |k: u64| pred.iter().filter(|&&x| x == k).count() as f64 / n;
    let q = |j: u64| truth.iter().filter(|&&x| x == j).count() as f64 / n;
    let h = |probs: Vec<f64>| -> f64 { probs.into_iter().map(|x| -x * x.ln()).sum() };
    let hp = h(clusters.iter().map(|&k| p(k)).collect());
    let ht = h(labels.iter().map(|&j| q(j)).collect());
    if hp == 0.0 && ht == 0.0 {
        return 1.0;
    }
    if hp == 0.0 || ht == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for &k in &clusters {
        for &j in &labels {
            let pkj = (0..pred.len())
                .filter(|&i| pred[i] == k && truth[i] == j)
                .count() as f64
                / n;
            if pkj > 0.0 {
                mi += pkj * (pkj / (p(k) * q(j))).ln();
            }
        }
    }
    (2.0 * mi / (hp + ht)).clamp(0.0, 1.0)
}

/// Character precision and recall with majority assignment, ties to the
/// lower label.
pub fn character_pr(pred: &[u64], truth: &[u64]) -> (f64, f64) {
    let n = pred.len();
    let clusters: BTreeSet<u64> = pred.iter().copied().collect();
    let labels: BTreeSet<u64> = truth.iter().copied().collect();
    let count = |k: u64, j: u64| (0..n).filter(|&i| pred[i] == k && truth[i] == j).count();
    let mut assigned: BTreeMap<u64, u64> = BTreeMap::new();
    for &k in &clusters {
        let mut best = (0, u64::MAX);
        for &j in &labels {
            let c = count(k, j);
            if c > best.0 {
                best = (c, j);
            }
        }
        assigned.insert(k, best.1);
    }
    let mut precisions = Vec::new();
    let mut recall = 0.0;
    for &j in &labels {
        let mine: Vec<u64> = clusters
            .iter()
            .copied()
            .filter(|k| assigned[k] == j)
            .collect();
        let correct: usize = mine.iter().map(|&k| count(k, j)).sum();
        if !mine.is_empty() {
            let size: usize = mine
                .iter()
                .map(|&k| pred.iter().filter(|&&x| x == k).count())
                .sum();
            precisions.push(correct as f64 / size as f64);
        }
        recall += correct as f64 / truth.iter().filter(|&&x| x == j).count() as f64;
    }
    let cp = precisions.iter().sum::<f64>() / precisions.len() as f64;
    (cp, recall / labels.len() as f64)
}

pub fn cf(cp: f64, cr: f64) -> f64 {
    if cp == 0.0 && cr == 0.0 {
        0.0
    } else {
        2.0 * cp * cr / (cp + cr)
    }
}
