//! Labeled synthetic datasets and the body-exchange noise protocol.
//!
//! Every identity gets one random unit prototype per modality, drawn
//! independently, so the only cross-modal identity evidence is track
//! membership. A clue is its prototype plus isotropic Gaussian noise,
//! renormalized.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{ensure, Result};
use crate::graph::{Clue, ClueId, Dataset, Identity, Modality, Track, TrackId};
use crate::math;
use crate::seed::{self, Rng};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SynthConfig {
    pub identities: usize,
    pub tracks_per_identity: usize,
    /// Inclusive `[min, max]` clue count per modality of a track that has
    /// the modality.
    pub clues: [[usize; 2]; 3],
    /// Feature dimension per modality.
    pub dims: [usize; 3],
    /// Expected cosine between two clues of one identity, per modality.
    /// One means noise-free clues.
    pub within_cosine: [f64; 3],
    /// Probability that a track carries each modality.
    pub presence: [f64; 3],
    #[cfg_attr(feature = "serde", serde(skip))]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            identities: 16,
            tracks_per_identity: 12,
            clues: [[1, 4], [1, 4], [1, 1]],
            dims: [6, 6, 6],
            within_cosine: [0.85; 3],
            presence: [0.9, 1.0, 0.8],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.identities >= 1, "at least one identity is required");
        ensure!(
            self.tracks_per_identity >= 1,
            "at least one track per identity is required"
        );
        for m in Modality::ALL {
            let k = m.index();
            ensure!(
                self.dims[k] >= 2,
                "{m} dimension must be at least 2, got {}",
                self.dims[k]
            );
            let [lo, hi] = self.clues[k];
            ensure!(
                lo >= 1 && lo <= hi,
                "{m} clue range [{lo}, {hi}] is invalid"
            );
            ensure!(
                self.within_cosine[k] > 0.0 && self.within_cosine[k] <= 1.0,
                "{m} within-identity cosine must lie in (0, 1]"
            );
            ensure!(
                (0.0..=1.0).contains(&self.presence[k]),
                "{m} presence must lie in [0, 1]"
            );
        }
        ensure!(
            self.presence.iter().any(|&p| p > 0.0),
            "every modality has zero presence"
        );
        Ok(())
    }

    pub fn track_count(&self) -> usize {
        self.identities * self.tracks_per_identity
    }

    /// Per-coordinate noise scale giving the target expected cosine.
    pub fn noise_scale(&self, m: Modality) -> f64 {
        let c = self.within_cosine[m.index()];
        math::sqrt((1.0 / c - 1.0) / self.dims[m.index()] as f64)
    }
}

fn gaussian(rng: &mut Rng, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn unit_gaussian(rng: &mut Rng, dim: usize) -> Vec<f64> {
    loop {
        if let Some(v) = math::normalized(&gaussian(rng, dim)) {
            return v;
        }
    }
}

/// Track id, identity and raw clue features per modality.
type Draft = (u64, u64, [Vec<Vec<f64>>; 3]);

/// Builds a dataset of `identities * tracks_per_identity` tracks with shuffled
/// track ids. Each track's explicit identity is set.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let fallback = Modality::ALL
        .into_iter()
        .find(|m| cfg.presence[m.index()] > 0.0)
        .expect("validated");
    let total = cfg.track_count();
    let mut ids: Vec<u64> = (0..total as u64).collect();
    ids.shuffle(&mut seed::rng_for(cfg.seed, "synth/track-ids"));

    let mut drafts: Vec<Draft> = Vec::with_capacity(total);
    for ident in 0..cfg.identities {
        let protos: [Vec<f64>; 3] = core::array::from_fn(|m| {
            let mut rng = seed::rng_for(cfg.seed, &format!("synth/prototype/{ident}/{m}"));
            unit_gaussian(&mut rng, cfg.dims[m])
        });
        for t in 0..cfg.tracks_per_identity {
            let mut rng = seed::rng_for(cfg.seed, &format!("synth/track/{ident}/{t}"));
            let present: [bool; 3] =
                core::array::from_fn(|m| rng.random::<f64>() < cfg.presence[m]);
            let mut feats: [Vec<Vec<f64>>; 3] = Default::default();
            for m in Modality::ALL {
                let k = m.index();
                if !(present[k] || (!present.iter().any(|&p| p) && m == fallback)) {
                    continue;
                }
                let [lo, hi] = cfg.clues[k];
                let count = rng.random_range(lo..=hi);
                let scale = cfg.noise_scale(m);
                for _ in 0..count {
                    let mut v = protos[k].clone();
                    math::axpy(scale, &gaussian(&mut rng, cfg.dims[k]), &mut v);
                    feats[k].push(v);
                }
            }
            drafts.push((
                ids[ident * cfg.tracks_per_identity + t],
                ident as u64,
                feats,
            ));
        }
    }
    drafts.sort_by_key(|d| d.0);

    let mut next_clue = 0u64;
    let mut tracks = Vec::with_capacity(total);
    for (id, ident, feats) in drafts {
        let track = TrackId(id);
        let identity = Some(Identity(ident));
        let mut clues = Vec::new();
        for m in Modality::ALL {
            for f in &feats[m.index()] {
                clues.push(Clue::new(ClueId(next_clue), track, m, f, identity)?);
                next_clue += 1;
            }
        }
        tracks.push(Track::new(track, clues, identity)?);
    }
    Dataset::new(tracks)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NoiseConfig {
    /// Probability that a body-bearing track takes part in an exchange.
    pub rho: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            (0.0..=1.0).contains(&self.rho),
            "rho must lie in [0, 1], got {}",
            self.rho
        );
        Ok(())
    }
}

/// Exchanges body clue sets between randomly paired tracks.
///
/// Body-bearing tracks are visited in ascending id order and each is selected
/// when a uniform draw falls below `rho`, so the selections for a larger
/// `rho` contain those for a smaller one. Selected tracks are shuffled and
/// swapped in consecutive pairs; an odd one out keeps its bodies. Moved body
/// clues keep their own identity labels.
pub fn inject_noise(dataset: &Dataset, cfg: &NoiseConfig, root_seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut tracks = dataset.tracks().to_vec();
    let mut order: Vec<usize> = (0..tracks.len())
        .filter(|&i| tracks[i].has(Modality::Body))
        .collect();
    order.sort_by_key(|&i| tracks[i].id);
    let mut rng = seed::rng_for(root_seed, "noise");
    let mut selected: Vec<usize> = order
        .into_iter()
        .filter(|_| rng.random::<f64>() < cfg.rho)
        .collect();
    selected.shuffle(&mut rng);
    for pair in selected.chunks_exact(2) {
        let (a, b) = (pair[0], pair[1]);
        let from_b = tracks[b].clues(Modality::Body).to_vec();
        let from_a = tracks[a].replace_clues(Modality::Body, from_b);
        tracks[b].replace_clues(Modality::Body, from_a);
    }
    Dataset::new(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            identities: 3,
            tracks_per_identity: 4,
            seed: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_and_complete() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        assert_eq!(a.track_ids(), (0..12).map(TrackId).collect::<Vec<_>>());
        assert!(a
            .tracks()
            .iter()
            .all(|t| t.clue_count() >= 1 && t.identity.is_some()));
        let c = generate(&SynthConfig { seed: 6, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noise_free_clues_are_identical() {
        let cfg = SynthConfig {
            within_cosine: [1.0; 3],
            presence: [1.0; 3],
            ..small()
        };
        let d = generate(&cfg).unwrap();
        let faces: Vec<&Clue> = d
            .tracks()
            .iter()
            .filter(|t| t.identity == Some(Identity(1)))
            .flat_map(|t| t.clues(Modality::Face))
            .collect();
        assert!(faces.len() >= 4);
        for c in &faces {
            assert_eq!(c.feature(), faces[0].feature());
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(generate(&SynthConfig {
            identities: 0,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            dims: [1, 16, 16],
            ..small()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            presence: [0.0; 3],
            ..small()
        })
        .is_err());
        assert!(inject_noise(&generate(&small()).unwrap(), &NoiseConfig { rho: 1.5 }, 0).is_err());
    }

    #[test]
    fn zero_rho_is_identity_and_full_rho_swaps_two() {
        let cfg = SynthConfig {
            identities: 2,
            tracks_per_identity: 1,
            presence: [1.0; 3],
            ..small()
        };
        let d = generate(&cfg).unwrap();
        assert_eq!(inject_noise(&d, &NoiseConfig { rho: 0.0 }, 1).unwrap(), d);
        let n = inject_noise(&d, &NoiseConfig { rho: 1.0 }, 1).unwrap();
        let (a, b) = (&d.tracks()[0], &d.tracks()[1]);
        let (na, nb) = (&n.tracks()[0], &n.tracks()[1]);
        let ids = |cs: &[Clue]| cs.iter().map(|c| c.id).collect::<Vec<_>>();
        assert_eq!(ids(na.clues(Modality::Body)), ids(b.clues(Modality::Body)));
        assert_eq!(ids(nb.clues(Modality::Body)), ids(a.clues(Modality::Body)));
        assert!(na.clues(Modality::Body).iter().all(|c| c.track == na.id));
        assert_eq!(na.clues(Modality::Face), a.clues(Modality::Face));
    }
}
