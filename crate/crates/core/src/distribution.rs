//! Distribution representations: for every node, the identity probabilities
//! it shares with every node of the graph.
//!
//! Same-modality pairs use feature similarity. Different-modality pairs of the
//! same track are certain matches. Different-modality pairs of different
//! tracks are bridged through the nodes of `j`'s track that share `i`'s
//! modality, averaging `i`'s similarity to each bridge. Without a bridge the
//! previous cycle's value is carried forward.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};
use crate::graph::{Modality, MultiModalGraph};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DistributionConfig {
    /// Initial same-track probability; cross-track pairs start at `1 - eta`.
    pub eta: f64,
    /// Weight of the previous cycle in the momentum update.
    pub alpha: f64,
}

impl Default for DistributionConfig {
    fn default() -> Self {
        Self {
            eta: 0.7,
            alpha: 0.5,
        }
    }
}

impl DistributionConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            (0.0..=1.0).contains(&self.eta),
            "eta must lie in [0, 1], got {}",
            self.eta
        );
        ensure!(
            (0.0..=1.0).contains(&self.alpha),
            "alpha must lie in [0, 1], got {}",
            self.alpha
        );
        Ok(())
    }
}

/// Row `i` of `d` is the distribution representation of node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionState {
    n: usize,
    d: Vec<f64>,
    pub cycle: usize,
}

impl DistributionState {
    pub fn from_matrix(n: usize, d: Vec<f64>, cycle: usize) -> Result<Self> {
        ensure!(d.len() == n * n, "distribution matrix must be {n}x{n}");
        Ok(Self { n, d, cycle })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.d
    }
}

/// Soft initialization from track membership.
pub fn init_distribution(graph: &MultiModalGraph, eta: f64) -> Result<DistributionState> {
    ensure!(
        (0.0..=1.0).contains(&eta),
        "eta must lie in [0, 1], got {eta}"
    );
    ensure!(!graph.is_empty(), "empty graph");
    let n = graph.len();
    let mut d = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = if i == j {
                1.0
            } else if graph.same_track(i, j) {
                eta
            } else {
                1.0 - eta
            };
        }
    }
    Ok(DistributionState { n, d, cycle: 0 })
}

/// Identity probability of two same-modality features: `(1 + cos) / 2`.
pub fn intra_modality_prob(fi: &[f64], fj: &[f64]) -> Result<f64> {
    ensure!(fi.len() == fj.len(), "feature dimensions differ");
    let c = math::cosine(fi, fj).ok_or_else(|| Error::invalid("zero feature vector"))?;
    Ok((0.5 * (1.0 + c)).clamp(0.0, 1.0))
}

/// Pairwise `(1 + <f_i, f_j>) / 2` for same-modality pairs of unit features.
/// Entries of different-modality pairs are zero; the diagonal is one.
pub fn intra_matrix(graph: &MultiModalGraph, features: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = graph.len();
    ensure!(
        features.len() == n,
        "expected {n} feature rows, got {}",
        features.len()
    );
    let mut s = alloc::vec![0.0; n * n];
    for i in 0..n {
        s[i * n + i] = 1.0;
        for j in i + 1..n {
            if graph.modality_edge(i, j) {
                ensure!(
                    features[i].len() == features[j].len(),
                    "feature dimension mismatch between nodes {i} and {j}"
                );
                let v = math::unit_similarity(&features[i], &features[j]);
                s[i * n + j] = v;
                s[j * n + i] = v;
            }
        }
    }
    Ok(s)
}

/// Identity probability of a different-modality pair.
pub fn cross_modality_prob(
    graph: &MultiModalGraph,
    i: usize,
    j: usize,
    intra: &[f64],
    prev: &DistributionState,
) -> Result<f64> {
    let n = graph.len();
    ensure!(i < n && j < n, "node index out of range");
    ensure!(
        graph.modality(i) != graph.modality(j),
        "cross_modality_prob needs nodes of different modalities"
    );
    if graph.track_edge(i, j) {
        return Ok(1.0);
    }
    let bridges = graph.group(graph.local_track(j), graph.modality(i));
    if bridges.is_empty() {
        return Ok(prev.get(i, j));
    }
    Ok(bridges.iter().map(|&k| intra[i * n + k]).sum::<f64>() / bridges.len() as f64)
}

/// The un-symmetrized relation matrix, computed group-wise.
pub(crate) fn raw_relation(graph: &MultiModalGraph, intra: &[f64], prev: &[f64]) -> Vec<f64> {
    let n = graph.len();
    let tracks = graph.tracks().len();
    let mut raw = alloc::vec![0.0; n * n];
    for i in 0..n {
        let mi = graph.modality(i);
        let ti = graph.local_track(i);
        raw[i * n + i] = 1.0;
        for t in 0..tracks {
            let bridges = graph.group(t, mi);
            let bridged = (t != ti && !bridges.is_empty()).then(|| {
                bridges.iter().map(|&k| intra[i * n + k]).sum::<f64>() / bridges.len() as f64
            });
            for m in Modality::ALL {
                for &j in graph.group(t, m) {
                    if j == i {
                        continue;
                    }
                    raw[i * n + j] = if m == mi {
                        intra[i * n + j]
                    } else if t == ti {
                        1.0
                    } else {
                        bridged.unwrap_or(prev[i * n + j])
                    };
                }
            }
        }
    }
    raw
}

/// Symmetrized relation matrix with unit diagonal.
pub(crate) fn symmetric_relation(graph: &MultiModalGraph, intra: &[f64], prev: &[f64]) -> Vec<f64> {
    let n = graph.len();
    let raw = raw_relation(graph, intra, prev);
    let mut out = alloc::vec![1.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (raw[i * n + j] + raw[j * n + i]);
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    out
}

/// One distribution step: relation matrix from `features`, blended with
/// `prev` as `alpha * prev + (1 - alpha) * relation`.
pub fn compute_distribution(
    graph: &MultiModalGraph,
    features: &[Vec<f64>],
    prev: &DistributionState,
    cfg: &DistributionConfig,
) -> Result<DistributionState> {
    cfg.validate()?;
    let n = graph.len();
    ensure!(
        prev.n == n,
        "previous distribution is {}x{} but the graph has {n} nodes",
        prev.n,
        prev.n
    );
    let intra = intra_matrix(graph, features)?;
    let rel = symmetric_relation(graph, &intra, &prev.d);
    let a = cfg.alpha;
    let d = prev
        .d
        .iter()
        .zip(&rel)
        .map(|(&p, &r)| a * p + (1.0 - a) * r)
        .collect::<Vec<_>>();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite distribution at cycle {}",
            prev.cycle + 1
        )));
    }
    Ok(DistributionState {
        n,
        d,
        cycle: prev.cycle + 1,
    })
}
