//! Dataset-level orchestration: pivot graphs, training loop, linkage pooling
//! and threshold sweeps.

use alloc::vec::Vec;

use rand::Rng as _;

use crate::clusterer::{self, ClusterAssignment, LinkageTable};
use crate::error::{ensure, Result};
use crate::graph::{self, Dataset, MultiModalGraph, Track};
use crate::metrics::{self, MetricReport, Partition};
use crate::neural::{AdamState, Model, ModelShape};
use crate::sampler::{self, SamplerConfig};
use crate::seed;
use crate::trainer::{self, Loss, Mode, TrainerConfig};

/// Thresholds of the default sweep: 0.1, 0.2, ..., 0.9.
pub const DEFAULT_SWEEP: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Largest graph the sampler can produce: `p + 1` tracks with at most `q`
/// clues in each of three modalities.
pub fn max_graph_size(cfg: &SamplerConfig) -> usize {
    (cfg.p + 1) * 3 * cfg.q
}

pub fn model_shape(
    dataset: &Dataset,
    sampler: &SamplerConfig,
    trainer: &TrainerConfig,
) -> ModelShape {
    ModelShape {
        width: max_graph_size(sampler),
        hidden: trainer.hidden,
        dims: dataset.dims().map(|d| d.unwrap_or(0)),
        cycles: trainer.cycles,
    }
}

/// Calls `f` with the graph of every track taken as pivot, in ascending track
/// id order.
pub fn for_each_pivot_graph(
    dataset: &Dataset,
    cfg: &SamplerConfig,
    mut f: impl FnMut(MultiModalGraph) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    ensure!(!dataset.is_empty(), "empty dataset");
    let reps = graph::track_representatives(dataset)?;
    let k = cfg.k.min(dataset.len() - 1);
    let knn = graph::knn_tracks(&reps, k)?;
    let mut ids = dataset.track_ids();
    ids.sort_unstable();
    for pivot in ids {
        let hood = sampler::sample_neighborhood(pivot, dataset, &knn, cfg)?;
        let tracks: Vec<&Track> = hood
            .tracks
            .iter()
            .map(|&t| dataset.track(t).expect("sampled from dataset"))
            .collect();
        f(graph::build_graph(&tracks, cfg)?)?;
    }
    Ok(())
}

pub fn pivot_graphs(dataset: &Dataset, cfg: &SamplerConfig) -> Result<Vec<MultiModalGraph>> {
    let mut out = Vec::with_capacity(dataset.len());
    for_each_pivot_graph(dataset, cfg, |g| {
        out.push(g);
        Ok(())
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    pub loss: Loss,
    pub lr: f64,
}

/// Trains a freshly initialized model on the pivot graphs of a labeled
/// dataset.
pub fn train(
    dataset: &Dataset,
    sampler: &SamplerConfig,
    cfg: &TrainerConfig,
    on_step: impl FnMut(&TrainRecord),
) -> Result<Model> {
    cfg.validate()?;
    let graphs = pivot_graphs(dataset, sampler)?;
    let mut model = Model::init(model_shape(dataset, sampler, cfg), cfg.seed)?;
    train_on_graphs(&graphs, &mut model, cfg, on_step)?;
    Ok(model)
}

/// Runs `cfg.iterations` optimizer steps, each on `cfg.batch` graphs drawn
/// uniformly with replacement.
pub fn train_on_graphs(
    graphs: &[MultiModalGraph],
    model: &mut Model,
    cfg: &TrainerConfig,
    mut on_step: impl FnMut(&TrainRecord),
) -> Result<()> {
    cfg.validate()?;
    ensure!(!graphs.is_empty(), "no training graphs");
    let mut optimizer = AdamState::new(cfg.adam, model.param_count())?;
    let mut rng = seed::rng_for(cfg.seed, "train/pivots");
    let mut batch: Vec<&MultiModalGraph> = Vec::with_capacity(cfg.batch);
    for iteration in 0..cfg.iterations {
        optimizer.config.lr = cfg.lr_at(iteration);
        batch.clear();
        for _ in 0..cfg.batch {
            batch.push(&graphs[rng.random_range(0..graphs.len())]);
        }
        let loss = trainer::train_iteration(&batch, model, &mut optimizer, cfg)?;
        on_step(&TrainRecord {
            iteration,
            loss,
            lr: optimizer.config.lr,
        });
    }
    Ok(())
}

/// Track linkage pooled over every pivot graph of the dataset.
///
/// In feature-only mode each modality is pooled separately and a pair's
/// score is its best modality score.
pub fn dataset_linkage(
    dataset: &Dataset,
    model: &Model,
    sampler: &SamplerConfig,
    cfg: &TrainerConfig,
) -> Result<LinkageTable> {
    let mut pooled = LinkageTable::new();
    let mut per_modality: [LinkageTable; 3] = Default::default();
    for_each_pivot_graph(dataset, sampler, |g| {
        let affinity = trainer::clustering_affinity(&g, model, cfg)?;
        if cfg.mode == Mode::FeatureOnly {
            for (acc, t) in per_modality
                .iter_mut()
                .zip(clusterer::track_linkage_by_modality(&g, &affinity)?)
            {
                acc.merge(&t);
            }
        } else {
            pooled.merge(&clusterer::track_linkage(&g, &affinity)?);
        }
        Ok(())
    })?;
    Ok(if cfg.mode == Mode::FeatureOnly {
        clusterer::max_scores(&per_modality)
    } else {
        pooled
    })
}

pub fn cluster_dataset(
    dataset: &Dataset,
    model: &Model,
    sampler: &SamplerConfig,
    cfg: &TrainerConfig,
    threshold: f64,
) -> Result<ClusterAssignment> {
    let linkage = dataset_linkage(dataset, model, sampler, cfg)?;
    clusterer::cluster(&linkage, threshold, &dataset.track_ids())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub assignment: ClusterAssignment,
    pub report: MetricReport,
}

/// Clusters at every threshold and scores each result against `truth`.
pub fn sweep(
    linkage: &LinkageTable,
    dataset: &Dataset,
    truth: &Partition,
    thresholds: &[f64],
) -> Result<Vec<SweepRow>> {
    let ids = dataset.track_ids();
    thresholds
        .iter()
        .map(|&threshold| {
            let assignment = clusterer::cluster(linkage, threshold, &ids)?;
            let report = metrics::evaluate(&Partition::from(&assignment), truth)?;
            Ok(SweepRow {
                threshold,
                assignment,
                report,
            })
        })
        .collect()
}

/// Ground-truth partition of a fully labeled dataset.
pub fn truth_partition(dataset: &Dataset) -> Result<Partition> {
    let truth = dataset
        .truth()
        .ok_or_else(|| crate::Error::invalid("dataset has unlabeled tracks"))?;
    Ok(Partition::from(&truth))
}

/// Highest NMI over a sweep.
pub fn best_nmi(rows: &[SweepRow]) -> f64 {
    rows.iter().map(|r| r.report.nmi).fold(0.0, f64::max)
}
