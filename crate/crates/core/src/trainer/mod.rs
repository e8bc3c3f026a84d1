//! The cyclic refinement: distribution step, σ affinities, per-modality
//! aggregation through φ, repeated `cycles` times, with the feature and
//! distribution losses and their exact gradients.

mod tape;

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::distribution::{DistributionConfig, DistributionState};
use crate::error::{ensure, Error, Result};
use crate::graph::MultiModalGraph;
use crate::math;
use crate::neural::{AdamConfig, AdamState, Model, PhiParams, SigmaParams};

pub(crate) use tape::Tape;

/// Which parts of the cycle are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Mode {
    /// Distribution inference, σ affinities and φ aggregation.
    #[default]
    Full,
    /// Affinities are feature similarities of same-modality clues; σ and the
    /// distribution loss are unused.
    FeatureOnly,
    /// Features stay at their inputs; only σ is learned.
    DistributionOnly,
}

impl Mode {
    pub const fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::FeatureOnly => "feature-only",
            Mode::DistributionOnly => "distribution-only",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Mode::Full, Mode::FeatureOnly, Mode::DistributionOnly]
            .into_iter()
            .find(|m| m.name() == name)
    }

    pub(crate) fn uses_sigma(self) -> bool {
        self != Mode::FeatureOnly
    }

    pub(crate) fn uses_phi(self) -> bool {
        self != Mode::DistributionOnly
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainerConfig {
    pub cycles: usize,
    pub lambda_f: f64,
    pub lambda_d: f64,
    /// Per-cycle feature-loss weights; `None` uses [`default_mu`].
    pub mu_f: Option<Vec<f64>>,
    /// Per-cycle distribution-loss weights; `None` uses [`default_mu`].
    pub mu_d: Option<Vec<f64>>,
    /// Graphs per optimizer step.
    pub batch: usize,
    pub iterations: usize,
    /// Hidden units of σ.
    pub hidden: usize,
    pub adam: AdamConfig,
    /// Learning-rate multiplier applied once, after `decay_at * iterations`
    /// steps.
    pub lr_decay: f64,
    pub decay_at: f64,
    /// Set by the enclosing run rather than read from a config table.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub mode: Mode,
    /// Backpropagate through the momentum term and carried-forward entries
    /// of earlier cycles instead of treating them as constants.
    pub unroll_momentum: bool,
    pub distribution: DistributionConfig,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            cycles: 2,
            lambda_f: 1.0,
            lambda_d: 0.2,
            mu_f: None,
            mu_d: None,
            batch: 1,
            iterations: 2000,
            hidden: 64,
            adam: AdamConfig::default(),
            lr_decay: 0.1,
            decay_at: 0.8,
            mode: Mode::Full,
            unroll_momentum: false,
            distribution: DistributionConfig::default(),
            seed: 0,
        }
    }
}

/// 0.2 for every cycle but the last, which gets 1.
pub fn default_mu(cycles: usize) -> Vec<f64> {
    (0..cycles)
        .map(|l| if l + 1 == cycles { 1.0 } else { 0.2 })
        .collect()
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.cycles >= 1, "at least one cycle is required");
        ensure!(
            self.lambda_f >= 0.0 && self.lambda_d >= 0.0,
            "loss weights must be non-negative"
        );
        for (name, mu) in [("mu_f", &self.mu_f), ("mu_d", &self.mu_d)] {
            if let Some(mu) = mu {
                ensure!(
                    mu.len() == self.cycles,
                    "{name} has {} entries for {} cycles",
                    mu.len(),
                    self.cycles
                );
                ensure!(
                    mu.iter().all(|&v| v >= 0.0),
                    "{name} entries must be non-negative"
                );
            }
        }
        ensure!(self.batch >= 1, "batch must be at least 1");
        ensure!(self.hidden >= 1, "hidden width must be at least 1");
        ensure!(
            self.lr_decay > 0.0 && self.lr_decay <= 1.0,
            "lr_decay must lie in (0, 1]"
        );
        ensure!(
            (0.0..=1.0).contains(&self.decay_at),
            "decay_at must lie in [0, 1]"
        );
        self.adam.validate()?;
        self.distribution.validate()
    }

    pub fn mu_f(&self) -> Vec<f64> {
        self.mu_f.clone().unwrap_or_else(|| default_mu(self.cycles))
    }

    pub fn mu_d(&self) -> Vec<f64> {
        self.mu_d.clone().unwrap_or_else(|| default_mu(self.cycles))
    }

    /// Learning rate in effect for 0-based `iteration`.
    pub fn lr_at(&self, iteration: usize) -> f64 {
        let decay_step = libm::ceil(self.decay_at * self.iterations as f64) as usize;
        if iteration >= decay_step {
            self.adam.lr * self.lr_decay
        } else {
            self.adam.lr
        }
    }
}

/// `y[i][j] = 1` iff clues `i` and `j` carry the same identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    n: usize,
    y: Vec<bool>,
}

impl LabelMatrix {
    pub fn from_graph(graph: &MultiModalGraph) -> Result<Self> {
        let ids = graph
            .nodes()
            .iter()
            .map(|c| {
                c.identity
                    .ok_or_else(|| Error::invalid(format!("clue {} has no identity label", c.id.0)))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = ids.len();
        let y = (0..n * n).map(|k| ids[k / n] == ids[k % n]).collect();
        Ok(Self { n, y })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.y[i * self.n + j] {
            1.0
        } else {
            0.0
        }
    }
}

/// Intermediate results of one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleTrace {
    /// Features after aggregation, one row per node.
    pub features: Vec<Vec<f64>>,
    /// Distribution after the momentum update; `None` in feature-only mode.
    pub distribution: Option<DistributionState>,
    /// Row-major `n x n` affinities used for aggregation.
    pub affinity: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Loss {
    pub total: f64,
    pub feature: f64,
    pub distribution: f64,
}

impl core::ops::AddAssign for Loss {
    fn add_assign(&mut self, rhs: Self) {
        self.total += rhs.total;
        self.feature += rhs.feature;
        self.distribution += rhs.distribution;
    }
}

pub(crate) const PROB_FLOOR: f64 = 1e-6;

/// BCE with the probability clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]`; the
/// derivative is zero where the clamp is active.
#[inline]
pub(crate) fn clamped_bce(y: f64, p: f64) -> (f64, f64) {
    if p < PROB_FLOOR {
        (math::bce(y, PROB_FLOOR), 0.0)
    } else if p > 1.0 - PROB_FLOOR {
        (math::bce(y, 1.0 - PROB_FLOOR), 0.0)
    } else {
        (math::bce(y, p), math::bce_grad(y, p))
    }
}

/// σ applied to every pair of distribution rows, column `k` feeding input `k`.
pub fn build_affinity(sigma: &SigmaParams, dist: &DistributionState) -> Result<Vec<f64>> {
    sigma.validate()?;
    let n = dist.len();
    ensure!(
        n <= sigma.width,
        "graph of {n} nodes exceeds σ input width {}",
        sigma.width
    );
    let slots: Vec<usize> = (0..n).collect();
    Ok(tape::affinity_forward(sigma, dist.as_slice(), n, &slots).0)
}

/// Row-normalized same-modality aggregation followed by φ of each node's
/// modality.
pub fn aggregate_features(
    graph: &MultiModalGraph,
    affinity: &[f64],
    features: &[Vec<f64>],
    phi: &[PhiParams; 3],
) -> Result<Vec<Vec<f64>>> {
    let n = graph.len();
    ensure!(affinity.len() == n * n, "affinity must be {n}x{n}");
    ensure!(features.len() == n, "expected {n} feature rows");
    let nodes = tape::aggregate_forward(graph, affinity, features, phi)?;
    Ok(nodes.into_iter().map(|a| a.output).collect())
}

/// Σ over cycles and same-modality pairs `i < j` of
/// `mu_f[l] * BCE(y_ij, (1 + <f_i, f_j>) / 2)`.
pub fn feature_loss(
    graph: &MultiModalGraph,
    traces: &[CycleTrace],
    labels: &LabelMatrix,
    mu_f: &[f64],
) -> Result<f64> {
    ensure!(
        traces.len() == mu_f.len(),
        "{} traces but {} weights",
        traces.len(),
        mu_f.len()
    );
    let n = graph.len();
    ensure!(labels.len() == n, "label matrix does not match the graph");
    let mut total = 0.0;
    for (trace, &mu) in traces.iter().zip(mu_f) {
        ensure!(
            trace.features.len() == n,
            "trace feature rows do not match the graph"
        );
        total += mu * tape::feature_pair_loss(graph, &trace.features, labels, None);
    }
    Ok(total)
}

/// Σ over cycles and all pairs `i < j` of `mu_d[l] * BCE(y_ij, a_ij)`.
pub fn distribution_loss(traces: &[CycleTrace], labels: &LabelMatrix, mu_d: &[f64]) -> Result<f64> {
    ensure!(
        traces.len() == mu_d.len(),
        "{} traces but {} weights",
        traces.len(),
        mu_d.len()
    );
    let n = labels.len();
    let mut total = 0.0;
    for (trace, &mu) in traces.iter().zip(mu_d) {
        ensure!(
            trace.affinity.len() == n * n,
            "trace affinity does not match the labels"
        );
        let mut sum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                sum += clamped_bce(labels.get(i, j), trace.affinity[i * n + j]).0;
            }
        }
        total += mu * sum;
    }
    Ok(total)
}

/// Forward pass only.
pub fn run_inference(
    graph: &MultiModalGraph,
    model: &Model,
    cfg: &TrainerConfig,
) -> Result<Vec<CycleTrace>> {
    Ok(Tape::forward(graph, model, cfg)?.traces())
}

/// Affinity used for clustering: σ's last affinities, or in feature-only
/// mode the same-modality similarity of the final features.
pub fn clustering_affinity(
    graph: &MultiModalGraph,
    model: &Model,
    cfg: &TrainerConfig,
) -> Result<Vec<f64>> {
    Tape::forward(graph, model, cfg)?.clustering_affinity(graph)
}

/// Loss of one labeled graph.
pub fn graph_loss(graph: &MultiModalGraph, model: &Model, cfg: &TrainerConfig) -> Result<Loss> {
    let labels = LabelMatrix::from_graph(graph)?;
    let tape = Tape::forward(graph, model, cfg)?;
    check_loss(graph, tape.loss(graph, &labels, cfg))
}

/// Loss of one labeled graph and its gradient, laid out like the model.
pub fn graph_gradient(
    graph: &MultiModalGraph,
    model: &Model,
    cfg: &TrainerConfig,
) -> Result<(Loss, Model)> {
    let mut grads = Model::zeros(*model.shape())?;
    let loss = accumulate_gradient(graph, model, cfg, &mut grads)?;
    Ok((loss, grads))
}

fn accumulate_gradient(
    graph: &MultiModalGraph,
    model: &Model,
    cfg: &TrainerConfig,
    grads: &mut Model,
) -> Result<Loss> {
    let labels = LabelMatrix::from_graph(graph)?;
    let tape = Tape::forward(graph, model, cfg)?;
    let loss = check_loss(graph, tape.loss(graph, &labels, cfg))?;
    tape.backward(graph, &labels, cfg, grads);
    Ok(loss)
}

fn check_loss(graph: &MultiModalGraph, loss: Loss) -> Result<Loss> {
    if loss.total.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Numerical(format!(
            "non-finite loss {} on the graph of pivot track {}",
            loss.total,
            graph.pivot()
        )))
    }
}

/// One optimizer step over a batch of labeled graphs; gradients are summed.
pub fn train_iteration(
    graphs: &[&MultiModalGraph],
    model: &mut Model,
    optimizer: &mut AdamState,
    cfg: &TrainerConfig,
) -> Result<Loss> {
    ensure!(!graphs.is_empty(), "empty batch");
    let mut grads = Model::zeros(*model.shape())?;
    let mut loss = Loss::default();
    for graph in graphs {
        loss += accumulate_gradient(graph, model, cfg, &mut grads)?;
    }
    let g = grads.arrays();
    let g: Vec<&[f64]> = g.iter().map(|(_, _, v)| *v).collect();
    optimizer.step(&mut model.arrays_mut(), &g)?;
    Ok(loss)
}

#[cfg(test)]
mod tests;
