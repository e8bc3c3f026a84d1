//! Multi-modal person clustering over face, body and voice clues.
//!
//! Clues of each track are sampled into small multi-modal graphs. Every node
//! of a graph gets a *distribution representation*: the vector of identity
//! probabilities it shares with every other node, regardless of modality.
//! Distribution rows are compared by a small learned scorer, the resulting
//! affinities are fed back into per-modality feature aggregation, and the
//! cycle repeats. Final affinities are pooled into track linkages and grouped
//! with union-find.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line live in the companion `relclust` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod clusterer;
pub mod distribution;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod math;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod sampler;
pub mod seed;
pub mod synth;
pub mod trainer;

pub use clusterer::{ClusterAssignment, LinkageTable};
pub use distribution::{DistributionConfig, DistributionState};
pub use error::{Error, Result};
pub use graph::{Clue, ClueId, Dataset, Identity, Modality, MultiModalGraph, Track, TrackId};
pub use metrics::{MetricReport, Partition};
pub use neural::{AdamConfig, AdamState, Model, ModelShape, PhiParams, SigmaParams};
pub use sampler::SamplerConfig;
pub use synth::{NoiseConfig, SynthConfig};
pub use trainer::{Mode, TrainerConfig};
