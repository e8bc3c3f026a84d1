//! Fixed-size subgraph sampling: neighbour tracks around a pivot, and a
//! density-aware choice of representative clues inside each track.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{ensure, Result};
use crate::graph::{Clue, Dataset, Modality, TrackId};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SamplerConfig {
    /// Neighbour tracks per pivot.
    pub p: usize,
    /// Clues kept per track and modality.
    pub q: usize,
    /// Width of the track kNN lists; at least `p`.
    pub k: usize,
    /// Similarity threshold on the `(1 + cos) / 2` scale for local density.
    pub tau: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            p: 8,
            q: 8,
            k: 8,
            tau: 0.8,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.p >= 1, "sampler: p must be >= 1");
        ensure!(self.q >= 1, "sampler: q must be >= 1");
        ensure!(
            self.k >= self.p,
            "sampler: k ({}) must be >= p ({})",
            self.k,
            self.p
        );
        ensure!(
            (0.0..=1.0).contains(&self.tau),
            "sampler: tau must lie in [0, 1], got {}",
            self.tau
        );
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityStats {
    /// Local density: summed similarity of neighbours above `tau`.
    pub density: f64,
    /// One minus the similarity to the nearest denser feature.
    pub peak_distance: f64,
    /// Product of min-max normalized density and peak distance.
    pub score: f64,
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        alloc::vec![1.0; values.len()]
    }
}

/// Density-peak statistics of unit features.
///
/// Feature `j` counts as denser than `i` when its density is larger, or equal
/// with a smaller index. The densest feature has peak distance 1.
pub fn density_stats(features: &[&[f64]], tau: f64) -> Result<Vec<DensityStats>> {
    ensure!(!features.is_empty(), "density_stats: no features");
    let n = features.len();
    let mut sim = alloc::vec![0.0; n * n];
    for i in 0..n {
        sim[i * n + i] = 1.0;
        for j in i + 1..n {
            let s = math::unit_similarity(features[i], features[j]);
            sim[i * n + j] = s;
            sim[j * n + i] = s;
        }
    }
    let density: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && sim[i * n + j] > tau)
                .map(|j| sim[i * n + j])
                .sum()
        })
        .collect();
    let denser =
        |j: usize, i: usize| density[j] > density[i] || (density[j] == density[i] && j < i);
    let peak_distance: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| denser(j, i))
                .map(|j| sim[i * n + j])
                .fold(None, |best: Option<f64>, s| {
                    Some(best.map_or(s, |b| b.max(s)))
                })
                .map_or(1.0, |s| 1.0 - s)
        })
        .collect();
    let rho = min_max(&density);
    let r = min_max(&peak_distance);
    Ok((0..n)
        .map(|i| DensityStats {
            density: density[i],
            peak_distance: peak_distance[i],
            score: rho[i] * r[i],
        })
        .collect())
}

/// The `q` highest-scoring clues of one modality of a track, in clue-id
/// order. Ties in score go to the smaller clue id.
pub fn density_sample_features(
    track: &crate::graph::Track,
    modality: Modality,
    cfg: &SamplerConfig,
) -> Result<Vec<Clue>> {
    let clues = track.clues(modality);
    if clues.len() <= cfg.q {
        return Ok(clues.to_vec());
    }
    let features: Vec<&[f64]> = clues.iter().map(Clue::feature).collect();
    let stats = density_stats(&features, cfg.tau)?;
    let mut order: Vec<usize> = (0..clues.len()).collect();
    order.sort_by(|&a, &b| {
        stats[b]
            .score
            .partial_cmp(&stats[a].score)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut keep: Vec<usize> = order[..cfg.q].to_vec();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| clues[i].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighbourhood {
    /// Pivot first, then the selected neighbours in candidate order.
    pub tracks: Vec<TrackId>,
    /// Set when the dataset had too few tracks and all were returned.
    pub degenerate: bool,
}

/// Selects the pivot plus `p` neighbour tracks.
///
/// Candidates are the pivot's kNN list followed by the kNN lists of those
/// neighbours. A modality missing from the pivot and its direct neighbours is
/// pulled in from the first candidate carrying it; remaining slots follow
/// candidate order.
pub fn sample_neighborhood(
    pivot: TrackId,
    dataset: &Dataset,
    knn: &BTreeMap<TrackId, Vec<TrackId>>,
    cfg: &SamplerConfig,
) -> Result<Neighbourhood> {
    ensure!(
        dataset.track(pivot).is_some(),
        "unknown pivot track {pivot}"
    );
    if dataset.len() < cfg.p + 1 {
        let mut tracks = alloc::vec![pivot];
        let mut rest: Vec<TrackId> = dataset
            .track_ids()
            .into_iter()
            .filter(|&t| t != pivot)
            .collect();
        rest.sort_unstable();
        tracks.extend(rest);
        return Ok(Neighbourhood {
            tracks,
            degenerate: true,
        });
    }
    let first_hop = knn
        .get(&pivot)
        .ok_or_else(|| crate::Error::invalid(alloc::format!("no kNN list for track {pivot}")))?;
    ensure!(
        first_hop.len() >= cfg.p,
        "kNN list of track {pivot} has {} entries, need p = {}",
        first_hop.len(),
        cfg.p
    );

    let mut seen = BTreeSet::from([pivot]);
    let mut candidates = Vec::new();
    for &t in first_hop {
        if seen.insert(t) {
            candidates.push(t);
        }
    }
    for &n in first_hop {
        for &t in knn.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(t) {
                candidates.push(t);
            }
        }
    }

    let has = |t: TrackId, m: Modality| dataset.track(t).is_some_and(|tr| tr.has(m));
    // Reserved candidates are always kept; the rest of the budget goes to the
    // earliest unreserved candidates.
    let mut reserved = alloc::vec![false; candidates.len()];
    let selection = |reserved: &[bool]| -> Vec<bool> {
        let mut budget = cfg.p - reserved.iter().filter(|&&r| r).count();
        reserved
            .iter()
            .map(|&r| {
                if r {
                    true
                } else if budget > 0 {
                    budget -= 1;
                    true
                } else {
                    false
                }
            })
            .collect()
    };
    let mut chosen = selection(&reserved);
    for m in Modality::ALL {
        let covered = has(pivot, m)
            || candidates
                .iter()
                .zip(&chosen)
                .any(|(&t, &c)| c && has(t, m));
        if covered || reserved.iter().filter(|&&r| r).count() == cfg.p {
            continue;
        }
        if let Some(pos) = (0..candidates.len()).find(|&i| !chosen[i] && has(candidates[i], m)) {
            reserved[pos] = true;
            chosen = selection(&reserved);
        }
    }
    let mut tracks = alloc::vec![pivot];
    tracks.extend(
        candidates
            .iter()
            .zip(&chosen)
            .filter_map(|(&t, &c)| c.then_some(t)),
    );
    Ok(Neighbourhood {
        tracks,
        degenerate: false,
    })
}
