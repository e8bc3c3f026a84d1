//! Track linkage, evidence pooling across pivot graphs, and union-find
//! grouping.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{ensure, Result};
use crate::graph::{Modality, MultiModalGraph, TrackId};

const FIXED_ONE: f64 = 18_446_744_073_709_551_616.0; // 2^64

/// Accumulated affinity between two tracks.
///
/// The sum is held in 64.64 fixed point so pooling is exact and does not
/// depend on merge order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Evidence {
    sum: i128,
    count: u64,
}

impl Evidence {
    pub fn from_parts(sum: f64, count: u64) -> Result<Self> {
        ensure!(
            sum.is_finite() && sum.abs() < 1e18,
            "evidence sum {sum} out of range"
        );
        Ok(Self {
            sum: to_fixed(sum),
            count,
        })
    }

    fn single(value: f64) -> Self {
        Self {
            sum: to_fixed(value),
            count: 1,
        }
    }

    pub fn sum(&self) -> f64 {
        self.sum as f64 / FIXED_ONE
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Mean affinity; zero for empty evidence.
    pub fn score(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum() / self.count as f64
        }
    }

    fn add(&mut self, other: Evidence) {
        self.sum += other.sum;
        self.count += other.count;
    }
}

fn to_fixed(v: f64) -> i128 {
    libm::round(v * FIXED_ONE) as i128
}

/// Sparse map from an unordered track pair to pooled evidence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LinkageTable {
    entries: BTreeMap<(TrackId, TrackId), Evidence>,
}

fn key(a: TrackId, b: TrackId) -> (TrackId, TrackId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl LinkageTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds evidence for a pair; self pairs are ignored.
    pub fn add(&mut self, a: TrackId, b: TrackId, evidence: Evidence) {
        if a != b && evidence.count > 0 {
            self.entries.entry(key(a, b)).or_default().add(evidence);
        }
    }

    pub fn get(&self, a: TrackId, b: TrackId) -> Option<Evidence> {
        self.entries.get(&key(a, b)).copied()
    }

    pub fn score(&self, a: TrackId, b: TrackId) -> Option<f64> {
        self.get(a, b).map(|e| e.score())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Pairs in ascending `(a, b)` order with `a < b`.
    pub fn iter(&self) -> impl Iterator<Item = (TrackId, TrackId, Evidence)> + '_ {
        self.entries.iter().map(|(&(a, b), &e)| (a, b, e))
    }

    pub fn merge(&mut self, other: &LinkageTable) {
        for (a, b, e) in other.iter() {
            self.add(a, b, e);
        }
    }
}

/// Mean affinity over all clue pairs spanning each pair of tracks in the
/// graph, across all modalities.
pub fn track_linkage(graph: &MultiModalGraph, affinity: &[f64]) -> Result<LinkageTable> {
    linkage_where(graph, affinity, |_, _| true)
}

/// One table per modality, each using only clue pairs of that modality.
pub fn track_linkage_by_modality(
    graph: &MultiModalGraph,
    affinity: &[f64],
) -> Result<[LinkageTable; 3]> {
    let mut out: [LinkageTable; 3] = Default::default();
    for m in Modality::ALL {
        out[m.index()] = linkage_where(graph, affinity, |a, b| a == m && b == m)?;
    }
    Ok(out)
}

fn linkage_where(
    graph: &MultiModalGraph,
    affinity: &[f64],
    keep: impl Fn(Modality, Modality) -> bool,
) -> Result<LinkageTable> {
    let n = graph.len();
    ensure!(
        affinity.len() == n * n,
        "affinity must be {n}x{n}, got {} entries",
        affinity.len()
    );
    let tracks = graph.tracks();
    let mut pooled: BTreeMap<(usize, usize), Evidence> = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            let (ti, tj) = (graph.local_track(i), graph.local_track(j));
            if ti == tj || !keep(graph.modality(i), graph.modality(j)) {
                continue;
            }
            pooled
                .entry((ti.min(tj), ti.max(tj)))
                .or_default()
                .add(Evidence::single(affinity[i * n + j]));
        }
    }
    let mut table = LinkageTable::new();
    for ((a, b), e) in pooled {
        table.add(tracks[a], tracks[b], e);
    }
    Ok(table)
}

/// Pools evidence of several tables by adding sums and counts.
pub fn merge_linkages(tables: &[LinkageTable]) -> LinkageTable {
    let mut out = LinkageTable::new();
    for t in tables {
        out.merge(t);
    }
    out
}

/// Per pair, the highest score among the tables, stored as unit-count
/// evidence.
pub fn max_scores(tables: &[LinkageTable]) -> LinkageTable {
    let mut best: BTreeMap<(TrackId, TrackId), f64> = BTreeMap::new();
    for t in tables {
        for (a, b, e) in t.iter() {
            let s = e.score();
            best.entry((a, b))
                .and_modify(|v| *v = v.max(s))
                .or_insert(s);
        }
    }
    let mut out = LinkageTable::new();
    for ((a, b), s) in best {
        out.add(a, b, Evidence::single(s));
    }
    out
}

/// Disjoint sets with path compression and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: alloc::vec![1; n],
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Returns `false` when already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            core::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Track-to-cluster mapping with contiguous cluster ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterAssignment {
    map: BTreeMap<TrackId, usize>,
    count: usize,
}

impl ClusterAssignment {
    /// Relabels arbitrary cluster labels to ids ordered by each cluster's
    /// smallest track id.
    pub fn from_labels(labels: &BTreeMap<TrackId, u64>) -> Self {
        let mut ids: BTreeMap<u64, usize> = BTreeMap::new();
        let mut map = BTreeMap::new();
        for (&t, &l) in labels {
            let next = ids.len();
            map.insert(t, *ids.entry(l).or_insert(next));
        }
        Self {
            count: ids.len(),
            map,
        }
    }

    pub fn cluster_of(&self, track: TrackId) -> Option<usize> {
        self.map.get(&track).copied()
    }

    pub fn cluster_count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TrackId, usize)> + '_ {
        self.map.iter().map(|(&t, &c)| (t, c))
    }

    pub fn clusters(&self) -> Vec<Vec<TrackId>> {
        let mut out = alloc::vec![Vec::new(); self.count];
        for (t, c) in self.iter() {
            out[c].push(t);
        }
        out
    }
}

/// Links pairs scoring strictly above `threshold` and returns connected
/// components. Tracks without links become singletons.
pub fn cluster(
    linkage: &LinkageTable,
    threshold: f64,
    tracks: &[TrackId],
) -> Result<ClusterAssignment> {
    ensure!(
        (0.0..=1.0).contains(&threshold),
        "threshold must lie in [0, 1], got {threshold}"
    );
    let mut sorted = tracks.to_vec();
    sorted.sort_unstable();
    let before = sorted.len();
    sorted.dedup();
    ensure!(sorted.len() == before, "duplicate track ids");
    let index = |t: TrackId| sorted.binary_search(&t).ok();
    let mut uf = UnionFind::new(sorted.len());
    for (a, b, e) in linkage.iter() {
        let (Some(ia), Some(ib)) = (index(a), index(b)) else {
            return Err(crate::Error::invalid(alloc::format!(
                "linkage mentions unknown track {a} or {b}"
            )));
        };
        if e.score() > threshold {
            uf.union(ia, ib);
        }
    }
    let mut root_id: BTreeMap<usize, usize> = BTreeMap::new();
    let mut map = BTreeMap::new();
    for (i, &t) in sorted.iter().enumerate() {
        let r = uf.find(i);
        let next = root_id.len();
        map.insert(t, *root_id.entry(r).or_insert(next));
    }
    Ok(ClusterAssignment {
        count: root_id.len(),
        map,
    })
}
