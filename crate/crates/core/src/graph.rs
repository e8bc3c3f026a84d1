//! Clues, tracks, datasets and the multi-modal graph.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{ensure, Error, Result};
use crate::math;
use crate::sampler::{self, SamplerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Modality {
    Face,
    Body,
    Voice,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Face, Modality::Body, Modality::Voice];

    #[inline]
    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn name(self) -> &'static str {
        match self {
            Modality::Face => "face",
            Modality::Body => "body",
            Modality::Voice => "voice",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrackId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClueId(pub u64);

/// Ground-truth person label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Identity(pub u64);

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One modality-specific feature of a track. The feature is always unit-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Clue {
    pub id: ClueId,
    pub track: TrackId,
    pub modality: Modality,
    feature: Vec<f64>,
    pub identity: Option<Identity>,
}

impl Clue {
    /// Builds a clue, L2-normalizing `feature`.
    pub fn new(
        id: ClueId,
        track: TrackId,
        modality: Modality,
        feature: &[f64],
        identity: Option<Identity>,
    ) -> Result<Self> {
        // Vectors already unit to rounding are kept as given so stored datasets reload bit-exact.
        let n = math::norm(feature);
        let feature =
            if (n - 1.0).abs() <= 4.0 * f64::EPSILON && feature.iter().all(|x| x.is_finite()) {
                feature.to_vec()
            } else {
                math::normalized(feature).ok_or_else(|| {
                    Error::invalid(format!("clue {}: zero or non-finite feature", id.0))
                })?
            };
        Ok(Self {
            id,
            track,
            modality,
            feature,
            identity,
        })
    }

    pub fn feature(&self) -> &[f64] {
        &self.feature
    }

    pub fn dim(&self) -> usize {
        self.feature.len()
    }
}

/// A person track: the clues of one video segment, grouped by modality.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: TrackId,
    clues: [Vec<Clue>; 3],
    /// Track-level ground truth. Falls back to the clue labels when unset.
    pub identity: Option<Identity>,
}

impl Track {
    pub fn new(id: TrackId, clues: Vec<Clue>, identity: Option<Identity>) -> Result<Self> {
        ensure!(!clues.is_empty(), "track {id} has no clues");
        let mut by_modality: [Vec<Clue>; 3] = Default::default();
        for clue in clues {
            ensure!(
                clue.track == id,
                "clue {} carries track {} but was given to track {id}",
                clue.id.0,
                clue.track
            );
            by_modality[clue.modality.index()].push(clue);
        }
        for list in &mut by_modality {
            list.sort_by_key(|c| c.id);
        }
        Ok(Self {
            id,
            clues: by_modality,
            identity,
        })
    }

    pub fn clues(&self, modality: Modality) -> &[Clue] {
        &self.clues[modality.index()]
    }

    pub fn has(&self, modality: Modality) -> bool {
        !self.clues[modality.index()].is_empty()
    }

    pub fn all_clues(&self) -> impl Iterator<Item = &Clue> {
        self.clues.iter().flatten()
    }

    pub fn clue_count(&self) -> usize {
        self.clues.iter().map(Vec::len).sum()
    }

    /// Replaces one modality's clue list, re-homing the clues onto this track.
    pub fn replace_clues(&mut self, modality: Modality, mut clues: Vec<Clue>) -> Vec<Clue> {
        for c in &mut clues {
            c.track = self.id;
            c.modality = modality;
        }
        clues.sort_by_key(|c| c.id);
        core::mem::replace(&mut self.clues[modality.index()], clues)
    }

    /// Removes all clues of the given modalities. May leave the track empty.
    pub(crate) fn drop_modality(&mut self, modality: Modality) {
        self.clues[modality.index()].clear();
    }

    /// Ground-truth identity of the track: the explicit label if present,
    /// otherwise the first labelled clue in face, voice, body order.
    pub fn truth(&self) -> Option<Identity> {
        self.identity.or_else(|| {
            [Modality::Face, Modality::Voice, Modality::Body]
                .iter()
                .flat_map(|&m| self.clues(m))
                .find_map(|c| c.identity)
        })
    }
}

/// A collection of tracks with consistent per-modality feature dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    tracks: Vec<Track>,
    dims: [Option<usize>; 3],
    index: BTreeMap<TrackId, usize>,
}

impl Dataset {
    pub fn new(tracks: Vec<Track>) -> Result<Self> {
        let mut dims: [Option<usize>; 3] = [None; 3];
        let mut index = BTreeMap::new();
        for (pos, track) in tracks.iter().enumerate() {
            ensure!(
                index.insert(track.id, pos).is_none(),
                "duplicate track id {}",
                track.id
            );
            for clue in track.all_clues() {
                let slot = &mut dims[clue.modality.index()];
                match *slot {
                    None => *slot = Some(clue.dim()),
                    Some(d) => ensure!(
                        d == clue.dim(),
                        "{} clue {} has dimension {} but {} was seen before",
                        clue.modality,
                        clue.id.0,
                        clue.dim(),
                        d
                    ),
                }
            }
        }
        Ok(Self {
            tracks,
            dims,
            index,
        })
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn into_tracks(self) -> Vec<Track> {
        self.tracks
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn track(&self, id: TrackId) -> Option<&Track> {
        self.index.get(&id).map(|&i| &self.tracks[i])
    }

    pub fn track_ids(&self) -> Vec<TrackId> {
        self.tracks.iter().map(|t| t.id).collect()
    }

    pub fn dim(&self, modality: Modality) -> Option<usize> {
        self.dims[modality.index()]
    }

    pub fn dims(&self) -> [Option<usize>; 3] {
        self.dims
    }

    /// Keeps only the listed modalities. Tracks left without any clue are
    /// removed.
    pub fn restrict_modalities(&self, keep: &[Modality]) -> Result<Self> {
        let tracks = self
            .tracks
            .iter()
            .cloned()
            .filter_map(|mut t| {
                for m in Modality::ALL {
                    if !keep.contains(&m) {
                        t.drop_modality(m);
                    }
                }
                (t.clue_count() > 0).then_some(t)
            })
            .collect();
        Dataset::new(tracks)
    }

    /// Ground-truth partition over tracks, if every track is labelled.
    pub fn truth(&self) -> Option<BTreeMap<TrackId, Identity>> {
        self.tracks
            .iter()
            .map(|t| Some((t.id, t.truth()?)))
            .collect()
    }
}

/// Sampled clues of a handful of tracks with modality and track edges.
///
/// Nodes are ordered by track (in the order given), then modality
/// (face < body < voice), then clue id.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalGraph {
    nodes: Vec<Clue>,
    pivot: TrackId,
    tracks: Vec<TrackId>,
    local_track: Vec<usize>,
    /// `groups[t][m]` lists node indices of local track `t` with modality `m`.
    groups: Vec<[Vec<usize>; 3]>,
    /// σ input position of each node.
    slots: Vec<usize>,
}

impl MultiModalGraph {
    /// Assembles a graph from explicit nodes; node order is preserved.
    pub fn from_nodes(nodes: Vec<Clue>, pivot: TrackId) -> Result<Self> {
        ensure!(!nodes.is_empty(), "graph needs at least one node");
        let mut dims: [Option<usize>; 3] = [None; 3];
        let mut tracks: Vec<TrackId> = Vec::new();
        let mut local_track = Vec::with_capacity(nodes.len());
        let mut groups: Vec<[Vec<usize>; 3]> = Vec::new();
        for (i, node) in nodes.iter().enumerate() {
            match dims[node.modality.index()] {
                None => dims[node.modality.index()] = Some(node.dim()),
                Some(d) => ensure!(d == node.dim(), "inconsistent {} dimension", node.modality),
            }
            let t = match tracks.iter().position(|&t| t == node.track) {
                Some(t) => t,
                None => {
                    tracks.push(node.track);
                    groups.push(Default::default());
                    tracks.len() - 1
                }
            };
            local_track.push(t);
            groups[t][node.modality.index()].push(i);
        }
        let slots = (0..nodes.len()).collect();
        Ok(Self {
            nodes,
            pivot,
            tracks,
            local_track,
            groups,
            slots,
        })
    }

    /// Gives node `r` of group (local track `t`, modality `m`) the σ input
    /// position `(3 t + m) * stride + r`, so a position means the same thing
    /// in every graph built with the same stride.
    pub fn with_group_stride(mut self, stride: usize) -> Result<Self> {
        for (t, groups) in self.groups.iter().enumerate() {
            for (m, group) in groups.iter().enumerate() {
                ensure!(
                    group.len() <= stride,
                    "group of {} clues exceeds stride {stride}",
                    group.len()
                );
                for (r, &i) in group.iter().enumerate() {
                    self.slots[i] = (3 * t + m) * stride + r;
                }
            }
        }
        Ok(self)
    }

    /// σ input position of every node; node order unless a group stride was set.
    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    /// Smallest σ input width that covers every slot.
    pub fn slot_span(&self) -> usize {
        self.slots.iter().max().map_or(0, |&s| s + 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Clue] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Clue {
        &self.nodes[i]
    }

    pub fn pivot(&self) -> TrackId {
        self.pivot
    }

    /// Distinct tracks in first-appearance order.
    pub fn tracks(&self) -> &[TrackId] {
        &self.tracks
    }

    #[inline]
    pub fn modality(&self, i: usize) -> Modality {
        self.nodes[i].modality
    }

    /// Index into [`Self::tracks`] of node `i`'s track.
    #[inline]
    pub fn local_track(&self, i: usize) -> usize {
        self.local_track[i]
    }

    /// Nodes of local track `t` with modality `m`.
    #[inline]
    pub fn group(&self, t: usize, m: Modality) -> &[usize] {
        &self.groups[t][m.index()]
    }

    #[inline]
    pub fn modality_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.nodes[i].modality == self.nodes[j].modality
    }

    #[inline]
    pub fn track_edge(&self, i: usize, j: usize) -> bool {
        self.local_track[i] == self.local_track[j]
            && self.nodes[i].modality != self.nodes[j].modality
    }

    #[inline]
    pub fn same_track(&self, i: usize, j: usize) -> bool {
        self.local_track[i] == self.local_track[j]
    }

    /// Same-modality nodes of `i`, including `i` itself.
    pub fn modality_neighbourhood(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let m = self.nodes[i].modality;
        (0..self.nodes.len()).filter(move |&j| self.nodes[j].modality == m)
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.nodes.iter().map(|c| c.feature.clone()).collect()
    }

    /// Feature dimension per modality present in the graph.
    pub fn dims(&self) -> [Option<usize>; 3] {
        let mut dims = [None; 3];
        for c in &self.nodes {
            dims[c.modality.index()] = Some(c.dim());
        }
        dims
    }

    /// Applies a node permutation: node `k` of the result is node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        ensure!(perm.len() == self.len(), "permutation length mismatch");
        let mut seen = alloc::vec![false; perm.len()];
        for &p in perm {
            ensure!(p < perm.len() && !seen[p], "not a permutation");
            seen[p] = true;
        }
        let mut out = Self::from_nodes(
            perm.iter().map(|&p| self.nodes[p].clone()).collect(),
            self.pivot,
        )?;
        out.slots = perm.iter().map(|&p| self.slots[p]).collect();
        Ok(out)
    }
}

/// Builds the graph for `tracks` (pivot first), keeping at most `cfg.q`
/// density-sampled clues per track and modality.
pub fn build_graph(tracks: &[&Track], cfg: &SamplerConfig) -> Result<MultiModalGraph> {
    ensure!(!tracks.is_empty(), "build_graph: empty track list");
    let mut nodes = Vec::new();
    for track in tracks {
        ensure!(track.clue_count() > 0, "track {} has no clues", track.id);
        for m in Modality::ALL {
            nodes.extend(sampler::density_sample_features(track, m, cfg)?);
        }
    }
    MultiModalGraph::from_nodes(nodes, tracks[0].id)?.with_group_stride(cfg.q)
}

/// A track's vectors for neighbour search: the re-normalized clue mean of
/// every modality the track has. The primary modality is the first present
/// one (face, body, voice).
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRep {
    pub track: TrackId,
    pub modality: Modality,
    means: [Option<Vec<f64>>; 3],
}

impl TrackRep {
    /// A representative with a single modality.
    pub fn new(track: TrackId, modality: Modality, vector: &[f64]) -> Result<Self> {
        let mut means: [Option<Vec<f64>>; 3] = Default::default();
        means[modality.index()] = Some(
            math::normalized(vector)
                .ok_or_else(|| Error::invalid(format!("track {track}: zero representative")))?,
        );
        Ok(Self {
            track,
            modality,
            means,
        })
    }

    /// The primary vector.
    pub fn vector(&self) -> &[f64] {
        self.means[self.modality.index()]
            .as_deref()
            .expect("primary modality is present")
    }

    pub fn mean(&self, modality: Modality) -> Option<&[f64]> {
        self.means[modality.index()].as_deref()
    }
}

pub fn track_representative(track: &Track) -> Result<TrackRep> {
    let mut means: [Option<Vec<f64>>; 3] = Default::default();
    for m in Modality::ALL {
        let clues = track.clues(m);
        if let Some(first) = clues.first() {
            let mut mean = alloc::vec![0.0; first.dim()];
            for c in clues {
                math::axpy(1.0, c.feature(), &mut mean);
            }
            // a mean of unit vectors can cancel out; such a modality is skipped
            means[m.index()] = math::normalized(&mean);
        }
    }
    let modality = Modality::ALL
        .into_iter()
        .find(|m| means[m.index()].is_some())
        .ok_or_else(|| Error::invalid(format!("track {} has no usable clues", track.id)))?;
    Ok(TrackRep {
        track: track.id,
        modality,
        means,
    })
}

pub fn track_representatives(dataset: &Dataset) -> Result<Vec<TrackRep>> {
    dataset.tracks().iter().map(track_representative).collect()
}

/// Exact k-nearest-neighbour lists by cosine similarity, self excluded, ties
/// broken by ascending track id.
///
/// A query is compared on its primary modality against each candidate's mean
/// of that modality. Candidates without it rank after every comparable one
/// (still ordered by id).
pub fn knn_tracks(reps: &[TrackRep], k: usize) -> Result<BTreeMap<TrackId, Vec<TrackId>>> {
    let mut out = BTreeMap::new();
    if k == 0 {
        for r in reps {
            out.insert(r.track, Vec::new());
        }
        return Ok(out);
    }
    ensure!(
        k < reps.len(),
        "knn_tracks: k = {k} must be smaller than the track count {}",
        reps.len()
    );
    // Ordered by id so that the result does not depend on input order.
    let mut sorted: Vec<&TrackRep> = reps.iter().collect();
    sorted.sort_by_key(|r| r.track);
    for w in sorted.windows(2) {
        ensure!(w[0].track != w[1].track, "duplicate track {}", w[0].track);
    }
    let mut scored: Vec<(f64, TrackId)> = Vec::with_capacity(sorted.len());
    for q in &sorted {
        scored.clear();
        for r in &sorted {
            if r.track == q.track {
                continue;
            }
            let s = match r.mean(q.modality) {
                Some(v) if v.len() == q.vector().len() => math::dot(q.vector(), v),
                _ => f64::NEG_INFINITY,
            };
            scored.push((s, r.track));
        }
        let by_rank = |a: &(f64, TrackId), b: &(f64, TrackId)| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_by(by_rank);
        out.insert(q.track, scored.iter().map(|&(_, t)| t).collect());
    }
    Ok(out)
}
