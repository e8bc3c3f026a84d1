//! The work behind each subcommand, callable without the argument parser.

use std::collections::BTreeSet;
use std::path::Path;

use relclust_core::gradcheck::{self, CheckResult, GradcheckOptions};
use relclust_core::pipeline::{self, SweepRow, TrainRecord};
use relclust_core::synth;
use relclust_core::{clusterer, metrics, ClusterAssignment, Dataset, MetricReport, Partition};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset_io::{self, Manifest};
use crate::error::{Error, Result};
use crate::report;

/// Reads a dataset directory, then applies the run's body-exchange noise and
/// modality subset.
pub fn load_dataset(dir: &Path, cfg: &RunConfig) -> Result<Dataset> {
    let mut dataset = dataset_io::read_dataset(dir)?;
    if cfg.noise.rho > 0.0 {
        dataset = synth::inject_noise(&dataset, &cfg.noise, cfg.seed)?;
    }
    if cfg.mode.modalities().len() < 3 {
        dataset = dataset.restrict_modalities(cfg.mode.modalities())?;
    }
    Ok(dataset)
}

pub fn cmd_gen(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let dataset = synth::generate(&cfg.resolved_synth())?;
    dataset_io::write_dataset(out, &dataset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub tracks: usize,
    pub parameters: usize,
    pub records: Vec<TrainRecord>,
}

pub fn cmd_train(
    cfg: &RunConfig,
    data: &Path,
    checkpoint: &Path,
    log_path: Option<&Path>,
) -> Result<TrainSummary> {
    cfg.validate()?;
    let dataset = load_dataset(data, cfg)?;
    let trainer = cfg.resolved_trainer();
    let every = (trainer.iterations / 10).max(1);
    let mut records = Vec::with_capacity(trainer.iterations);
    let model = pipeline::train(&dataset, &cfg.sampler, &trainer, |r| {
        if (r.iteration + 1) % every == 0 {
            log::info!(
                "iteration {} loss {:.6} lr {}",
                r.iteration + 1,
                r.loss.total,
                r.lr
            );
        }
        records.push(*r);
    })?;
    Checkpoint::new(cfg.clone(), model.clone()).save(checkpoint)?;
    if let Some(path) = log_path {
        report::write_training_log(path, &records)?;
    }
    Ok(TrainSummary {
        tracks: dataset.len(),
        parameters: model.param_count(),
        records,
    })
}

/// Fails when `cfg` cannot drive the checkpoint's model.
pub fn check_compatible(checkpoint: &Checkpoint, cfg: &RunConfig) -> Result<()> {
    let shape = checkpoint.header.shape;
    let trained = &checkpoint.header.run;
    let width = pipeline::max_graph_size(&cfg.sampler);
    let problems: Vec<String> = [
        (cfg.mode.trainer_mode() != trained.mode.trainer_mode()).then(|| {
            format!(
                "mode {} differs from the trained mode {}",
                cfg.mode, trained.mode
            )
        }),
        (cfg.trainer.cycles != shape.cycles).then(|| {
            format!(
                "{} cycles requested, checkpoint has {}",
                cfg.trainer.cycles, shape.cycles
            )
        }),
        (width != shape.width).then(|| {
            format!(
                "sampler graph size {width} differs from checkpoint width {}",
                shape.width
            )
        }),
    ]
    .into_iter()
    .flatten()
    .collect();
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "incompatible checkpoint: {}",
            problems.join("; ")
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutput {
    pub assignment: ClusterAssignment,
    pub sweep: Option<Vec<SweepRow>>,
}

/// Clusters at `cfg.threshold` and, when `sweep_out` is given, scores every
/// sweep threshold against the dataset labels.
pub fn cmd_cluster(
    cfg: &RunConfig,
    checkpoint: &Checkpoint,
    data: &Path,
    out: &Path,
    sweep_out: Option<&Path>,
) -> Result<ClusterOutput> {
    cfg.validate()?;
    check_compatible(checkpoint, cfg)?;
    let dataset = load_dataset(data, cfg)?;
    let model = &checkpoint.model;
    let dims = dataset.dims().map(|d| d.unwrap_or(0));
    for (m, (&have, &want)) in relclust_core::Modality::ALL
        .iter()
        .zip(dims.iter().zip(&model.shape().dims))
    {
        if have != 0 && have != want {
            return Err(Error::Config(format!(
                "dataset {m} dimension {have} differs from the checkpoint's {want}"
            )));
        }
    }
    let trainer = cfg.resolved_trainer();
    let linkage = pipeline::dataset_linkage(&dataset, model, &cfg.sampler, &trainer)?;
    let assignment = clusterer::cluster(&linkage, cfg.threshold, &dataset.track_ids())?;
    report::write_assignment(out, &assignment)?;
    let sweep = match sweep_out {
        Some(path) => {
            let truth = pipeline::truth_partition(&dataset)?;
            let rows = pipeline::sweep(&linkage, &dataset, &truth, &cfg.sweep)?;
            report::write_sweep(path, &rows)?;
            Some(rows)
        }
        None => None,
    };
    Ok(ClusterOutput { assignment, sweep })
}

pub fn cmd_eval(
    cfg: &RunConfig,
    assignment: &Path,
    data: &Path,
    out: Option<&Path>,
) -> Result<MetricReport> {
    let dataset = load_dataset(data, cfg)?;
    let labels = report::read_assignment(assignment)?;
    let truth = pipeline::truth_partition(&dataset)?;
    let known: BTreeSet<u64> = truth.iter().map(|(t, _)| t).collect();
    let given: BTreeSet<u64> = labels.keys().map(|t| t.0).collect();
    let list = |s: Vec<&u64>| {
        s.iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    };
    let missing: Vec<&u64> = known.difference(&given).collect();
    if !missing.is_empty() {
        return Err(relclust_core::Error::InvalidInput(format!(
            "assignment is missing tracks {}",
            list(missing)
        ))
        .into());
    }
    let unknown: Vec<&u64> = given.difference(&known).collect();
    if !unknown.is_empty() {
        return Err(relclust_core::Error::InvalidInput(format!(
            "assignment names unknown tracks {}",
            list(unknown)
        ))
        .into());
    }
    let pred: Partition = labels.iter().map(|(t, &c)| (t.0, c)).collect();
    let report = metrics::evaluate(&pred, &truth)?;
    if let Some(path) = out {
        report::write_metrics(path, &report)?;
    }
    Ok(report)
}

pub fn cmd_gradcheck(seed: u64, trials: usize, corrupt: bool) -> Result<Vec<CheckResult>> {
    Ok(gradcheck::run_all(&GradcheckOptions {
        seed,
        trials,
        corrupt,
    })?)
}
