//! Clustering quality: weighted cluster purity, normalized mutual
//! information and character-level precision, recall and F-score.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::clusterer::ClusterAssignment;
use crate::error::{ensure, Result};
use crate::graph::{Identity, TrackId};
use crate::math;

/// Item to label map.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Partition {
    labels: BTreeMap<u64, u64>,
}

impl Partition {
    pub fn new(labels: BTreeMap<u64, u64>) -> Self {
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, item: u64) -> Option<u64> {
        self.labels.get(&item).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.labels.iter().map(|(&i, &l)| (i, l))
    }
}

impl FromIterator<(u64, u64)> for Partition {
    fn from_iter<I: IntoIterator<Item = (u64, u64)>>(iter: I) -> Self {
        Self {
            labels: iter.into_iter().collect(),
        }
    }
}

impl From<&ClusterAssignment> for Partition {
    fn from(a: &ClusterAssignment) -> Self {
        a.iter().map(|(t, c)| (t.0, c as u64)).collect()
    }
}

impl From<&BTreeMap<TrackId, Identity>> for Partition {
    fn from(truth: &BTreeMap<TrackId, Identity>) -> Self {
        truth.iter().map(|(t, i)| (t.0, i.0)).collect()
    }
}

struct Table {
    n: usize,
    joint: BTreeMap<(u64, u64), usize>,
    pred: BTreeMap<u64, usize>,
    truth: BTreeMap<u64, usize>,
}

fn contingency(pred: &Partition, truth: &Partition) -> Result<Table> {
    ensure!(!pred.is_empty(), "empty partition");
    ensure!(
        pred.len() == truth.len() && pred.labels.keys().eq(truth.labels.keys()),
        "partitions cover different items"
    );
    let mut t = Table {
        n: pred.len(),
        joint: BTreeMap::new(),
        pred: BTreeMap::new(),
        truth: BTreeMap::new(),
    };
    for ((_, p), (_, c)) in pred.iter().zip(truth.iter()) {
        *t.joint.entry((p, c)).or_default() += 1;
        *t.pred.entry(p).or_default() += 1;
        *t.truth.entry(c).or_default() += 1;
    }
    Ok(t)
}

/// Share of items that carry their cluster's most common true label.
pub fn wcp(pred: &Partition, truth: &Partition) -> Result<f64> {
    let t = contingency(pred, truth)?;
    let mut best: BTreeMap<u64, usize> = BTreeMap::new();
    for (&(k, _), &c) in &t.joint {
        let b = best.entry(k).or_default();
        *b = (*b).max(c);
    }
    Ok(best.values().sum::<usize>() as f64 / t.n as f64)
}

/// Summed over sorted counts, so equal count multisets give bit-equal
/// entropies.
fn entropy(counts: impl Iterator<Item = usize>, n: usize) -> f64 {
    let n = n as f64;
    let mut counts: Vec<usize> = counts.collect();
    counts.sort_unstable();
    counts
        .into_iter()
        .map(|c| {
            let p = c as f64 / n;
            -p * math::ln(p)
        })
        .sum()
}

/// Mutual information over the arithmetic mean of the two entropies,
/// natural log. Both entropies zero gives 1, exactly one gives 0. The mutual
/// information is `H(P) + H(T) - H(P, T)`, which makes a relabeled copy of
/// the truth score exactly 1.
pub fn nmi(pred: &Partition, truth: &Partition) -> Result<f64> {
    let t = contingency(pred, truth)?;
    let hp = entropy(t.pred.values().copied(), t.n);
    let ht = entropy(t.truth.values().copied(), t.n);
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mi = hp + ht - entropy(t.joint.values().copied(), t.n);
    Ok((mi / (0.5 * (hp + ht))).clamp(0.0, 1.0))
}

/// Character precision and recall. Each cluster is assigned its majority
/// character (ties to the lower label). Precision is pooled over a
/// character's clusters and averaged over characters that received one;
/// recall is averaged over all characters.
pub fn character_pr(pred: &Partition, truth: &Partition) -> Result<(f64, f64)> {
    let t = contingency(pred, truth)?;
    let mut majority: BTreeMap<u64, (u64, usize)> = BTreeMap::new();
    for (&(k, j), &c) in &t.joint {
        let e = majority.entry(k).or_insert((j, c));
        if c > e.1 {
            *e = (j, c);
        }
    }
    // per character: (correct, assigned cluster sizes)
    let mut per: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    for (k, (j, c)) in majority {
        let e = per.entry(j).or_default();
        e.0 += c;
        e.1 += t.pred[&k];
    }
    let precisions: Vec<f64> = per.values().map(|&(c, s)| c as f64 / s as f64).collect();
    let cp = precisions.iter().sum::<f64>() / precisions.len() as f64;
    let cr = t
        .truth
        .iter()
        .map(|(j, &size)| per.get(j).map_or(0.0, |&(c, _)| c as f64 / size as f64))
        .sum::<f64>()
        / t.truth.len() as f64;
    Ok((cp, cr))
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn cf(cp: f64, cr: f64) -> f64 {
    if cp + cr == 0.0 {
        0.0
    } else {
        2.0 * cp * cr / (cp + cr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricReport {
    pub wcp: f64,
    pub nmi: f64,
    pub cp: f64,
    pub cr: f64,
    pub cf: f64,
}

impl MetricReport {
    pub fn rows(&self) -> [(&'static str, f64); 5] {
        [
            ("wcp", self.wcp),
            ("nmi", self.nmi),
            ("cp", self.cp),
            ("cr", self.cr),
            ("cf", self.cf),
        ]
    }
}

pub fn evaluate(pred: &Partition, truth: &Partition) -> Result<MetricReport> {
    let (cp, cr) = character_pr(pred, truth)?;
    Ok(MetricReport {
        wcp: wcp(pred, truth)?,
        nmi: nmi(pred, truth)?,
        cp,
        cr,
        cf: cf(cp, cr),
    })
}
