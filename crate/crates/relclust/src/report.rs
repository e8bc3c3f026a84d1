//! CSV outputs: comma separated, '.' decimals, one header row.

use std::collections::BTreeMap;
use std::path::Path;

use relclust_core::pipeline::{SweepRow, TrainRecord};
use relclust_core::{ClusterAssignment, MetricReport, TrackId};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Serialize)]
struct LogRow {
    iteration: usize,
    loss: f64,
    feature_loss: f64,
    distribution_loss: f64,
    lr: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct AssignmentRow {
    track_id: u64,
    cluster: usize,
}

#[derive(Debug, Serialize)]
struct MetricRow<'a> {
    metric: &'a str,
    value: f64,
}

#[derive(Debug, Serialize)]
struct SweepCsvRow {
    threshold: f64,
    clusters: usize,
    wcp: f64,
    nmi: f64,
    cp: f64,
    cr: f64,
    cf: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    for row in rows {
        w.serialize(row).map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn write_training_log(path: &Path, records: &[TrainRecord]) -> Result<()> {
    write_rows(
        path,
        records.iter().map(|r| LogRow {
            iteration: r.iteration,
            loss: r.loss.total,
            feature_loss: r.loss.feature,
            distribution_loss: r.loss.distribution,
            lr: r.lr,
        }),
    )
}

pub fn write_assignment(path: &Path, assignment: &ClusterAssignment) -> Result<()> {
    write_rows(
        path,
        assignment.iter().map(|(t, c)| AssignmentRow {
            track_id: t.0,
            cluster: c,
        }),
    )
}

pub fn read_assignment(path: &Path) -> Result<BTreeMap<TrackId, u64>> {
    let mut reader = csv::Reader::from_path(path).map_err(Error::csv(path))?;
    let mut out = BTreeMap::new();
    for (k, row) in reader.deserialize::<AssignmentRow>().enumerate() {
        let row = row.map_err(Error::csv(path))?;
        if out
            .insert(TrackId(row.track_id), row.cluster as u64)
            .is_some()
        {
            // header is line 1
            return Err(Error::format(
                path,
                k + 2,
                format!("track {} assigned twice", row.track_id),
            ));
        }
    }
    Ok(out)
}

pub fn write_metrics(path: &Path, report: &MetricReport) -> Result<()> {
    write_rows(
        path,
        report
            .rows()
            .map(|(metric, value)| MetricRow { metric, value }),
    )
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_rows(
        path,
        rows.iter().map(|r| SweepCsvRow {
            threshold: r.threshold,
            clusters: r.assignment.cluster_count(),
            wcp: r.report.wcp,
            nmi: r.report.nmi,
            cp: r.report.cp,
            cr: r.report.cr,
            cf: r.report.cf,
        }),
    )
}
