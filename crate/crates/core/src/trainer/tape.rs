use alloc::vec::Vec;

use super::{clamped_bce, CycleTrace, LabelMatrix, Loss, Mode, TrainerConfig};
use crate::distribution::{init_distribution, intra_matrix, symmetric_relation, DistributionState};
use crate::error::{ensure, Error, Result};
use crate::graph::{Modality, MultiModalGraph};
use crate::math;
use crate::neural::phi::{phi_backward_into, phi_forward, PhiCache};
use crate::neural::{Model, PhiParams, SigmaParams};

/// Offset of pair `(i, j)`, `i <= j`, in the packed upper triangle.
#[inline]
fn tri(n: usize, i: usize, j: usize) -> usize {
    i * n - i * (i + 1) / 2 + j
}

/// σ over all pairs `i <= j`, with column `k` of the distribution fed to
/// input `slots[k]`. Returns the symmetric `n x n` affinity and the hidden
/// pre-activations of each pair.
pub(super) fn affinity_forward(
    sigma: &SigmaParams,
    dist: &[f64],
    n: usize,
    slots: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let h = sigma.hidden;
    let mut a = alloc::vec![0.0; n * n];
    let mut pre = alloc::vec![0.0; n * (n + 1) / 2 * h];
    let mut x = alloc::vec![0.0; sigma.width];
    for i in 0..n {
        let di = &dist[i * n..(i + 1) * n];
        for j in i..n {
            let dj = &dist[j * n..(j + 1) * n];
            for k in 0..n {
                x[slots[k]] = (di[k] - dj[k]).abs();
            }
            let p = &mut pre[tri(n, i, j) * h..(tri(n, i, j) + 1) * h];
            sigma.pre_activation(&x, p);
            let v = math::sigmoid(sigma.logit(p));
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    (a, pre)
}

pub(super) struct AggNode<'m> {
    /// Same-modality nodes, including the node itself.
    neighbours: Vec<usize>,
    weights: Vec<f64>,
    total: f64,
    cache: PhiCache<'m>,
    pub(super) output: Vec<f64>,
}

impl AggNode<'_> {
    #[cfg(test)]
    pub(super) fn aggregated(&self) -> &[f64] {
        self.cache.inputs().0
    }
}

pub(super) fn aggregate_forward<'m>(
    graph: &MultiModalGraph,
    affinity: &[f64],
    features: &[Vec<f64>],
    phi: &'m [PhiParams; 3],
) -> Result<Vec<AggNode<'m>>> {
    let n = graph.len();
    let by_modality: [Vec<usize>; 3] =
        core::array::from_fn(|m| (0..n).filter(|&j| graph.modality(j).index() == m).collect());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let m = graph.modality(i);
        let neighbours = by_modality[m.index()].clone();
        let total: f64 = neighbours.iter().map(|&j| affinity[i * n + j]).sum();
        ensure!(total > 0.0, "node {i} has zero total affinity");
        let weights: Vec<f64> = neighbours
            .iter()
            .map(|&j| affinity[i * n + j] / total)
            .collect();
        let mut h = alloc::vec![0.0; features[i].len()];
        for (&j, &w) in neighbours.iter().zip(&weights) {
            math::axpy(w, &features[j], &mut h);
        }
        let (output, cache) = phi_forward(&phi[m.index()], &h, &features[i])?;
        out.push(AggNode {
            neighbours,
            weights,
            total,
            cache,
            output,
        });
    }
    Ok(out)
}

/// Σ over same-modality pairs `i < j` of the clamped BCE of
/// `(1 + <f_i, f_j>) / 2`. With `grad = Some((scale, g))`, adds
/// `scale * dloss/df` into `g`.
pub(super) fn feature_pair_loss(
    graph: &MultiModalGraph,
    features: &[Vec<f64>],
    labels: &LabelMatrix,
    mut grad: Option<(f64, &mut [Vec<f64>])>,
) -> f64 {
    let n = graph.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            if !graph.modality_edge(i, j) {
                continue;
            }
            let s = 0.5 * (1.0 + math::dot(&features[i], &features[j]));
            let (l, dl) = clamped_bce(labels.get(i, j), s.clamp(0.0, 1.0));
            sum += l;
            if let Some((scale, g)) = grad.as_mut() {
                let c = 0.5 * *scale * dl;
                if c != 0.0 {
                    add_pair_grad(g, features, i, j, c);
                }
            }
        }
    }
    sum
}

/// `g[i] += c * f[j]`, `g[j] += c * f[i]`.
#[inline]
fn add_pair_grad(g: &mut [Vec<f64>], f: &[Vec<f64>], i: usize, j: usize, c: f64) {
    math::axpy(c, &f[j], &mut g[i]);
    math::axpy(c, &f[i], &mut g[j]);
}

struct CycleTape<'m> {
    /// Distribution after the momentum update.
    dist: Vec<f64>,
    /// Same-modality similarity of the cycle's input features.
    intra: Vec<f64>,
    affinity: Vec<f64>,
    pre: Vec<f64>,
    agg: Option<Vec<AggNode<'m>>>,
}

/// Everything recorded by a forward pass, borrowing the model it ran with.
pub(crate) struct Tape<'m> {
    model: &'m Model,
    mode: Mode,
    n: usize,
    /// `features[l]` enters cycle `l`; the last entry is the final output.
    features: Vec<Vec<Vec<f64>>>,
    cycles: Vec<CycleTape<'m>>,
    cycle_base: usize,
}

impl<'m> Tape<'m> {
    pub(crate) fn forward(
        graph: &MultiModalGraph,
        model: &'m Model,
        cfg: &TrainerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let shape = model.shape();
        ensure!(
            shape.cycles == cfg.cycles,
            "model has {} cycles but the configuration asks for {}",
            shape.cycles,
            cfg.cycles
        );
        let n = graph.len();
        let mode = cfg.mode;
        if mode.uses_sigma() {
            ensure!(
                graph.slot_span() <= shape.width,
                "graph of {n} nodes needs σ input width {} but the model has {}",
                graph.slot_span(),
                shape.width
            );
        }
        if mode.uses_phi() {
            for (m, dim) in graph.dims().iter().enumerate() {
                if let Some(d) = dim {
                    ensure!(
                        *d == shape.dims[m],
                        "{} features have dimension {d} but the model expects {}",
                        Modality::ALL[m],
                        shape.dims[m]
                    );
                }
            }
        }

        let f0 = graph.features();
        let init = init_distribution(graph, cfg.distribution.eta)?;
        let mut prev = init.as_slice().to_vec();
        let mut features = alloc::vec![f0];
        let mut cycles = Vec::with_capacity(cfg.cycles);
        let alpha = cfg.distribution.alpha;
        for l in 0..cfg.cycles {
            let params = model.cycle(l);
            let input = &features[l];
            let intra = intra_matrix(graph, input)?;
            let (dist, affinity, pre) = if mode.uses_sigma() {
                let rel = symmetric_relation(graph, &intra, &prev);
                let dist: Vec<f64> = prev
                    .iter()
                    .zip(&rel)
                    .map(|(&p, &r)| alpha * p + (1.0 - alpha) * r)
                    .collect();
                let (a, pre) = affinity_forward(&params.sigma, &dist, n, graph.slots());
                (dist, a, pre)
            } else {
                (Vec::new(), intra.clone(), Vec::new())
            };
            if affinity.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(alloc::format!(
                    "non-finite affinity in cycle {} of the graph of pivot track {}",
                    l + 1,
                    graph.pivot()
                )));
            }
            let (agg, next) = if mode.uses_phi() {
                let agg = aggregate_forward(graph, &affinity, input, &params.phi)?;
                let next = agg.iter().map(|a| a.output.clone()).collect();
                (Some(agg), next)
            } else {
                (None, input.clone())
            };
            prev.clone_from(&dist);
            cycles.push(CycleTape {
                dist,
                intra,
                affinity,
                pre,
                agg,
            });
            features.push(next);
        }
        Ok(Self {
            model,
            mode,
            n,
            features,
            cycles,
            cycle_base: init.cycle,
        })
    }

    pub(crate) fn traces(&self) -> Vec<CycleTrace> {
        self.cycles
            .iter()
            .enumerate()
            .map(|(l, c)| CycleTrace {
                features: self.features[l + 1].clone(),
                distribution: self
                    .mode
                    .uses_sigma()
                    .then(|| {
                        DistributionState::from_matrix(
                            self.n,
                            c.dist.clone(),
                            self.cycle_base + l + 1,
                        )
                    })
                    .transpose()
                    .expect("square by construction"),
                affinity: c.affinity.clone(),
            })
            .collect()
    }

    pub(crate) fn clustering_affinity(&self, graph: &MultiModalGraph) -> Result<Vec<f64>> {
        match self.mode {
            Mode::FeatureOnly => {
                intra_matrix(graph, self.features.last().expect("at least one entry"))
            }
            _ => Ok(self
                .cycles
                .last()
                .expect("at least one cycle")
                .affinity
                .clone()),
        }
    }

    pub(crate) fn loss(
        &self,
        graph: &MultiModalGraph,
        labels: &LabelMatrix,
        cfg: &TrainerConfig,
    ) -> Loss {
        let n = self.n;
        let (mu_f, mu_d) = (cfg.mu_f(), cfg.mu_d());
        let mut feature = 0.0;
        let mut distribution = 0.0;
        for (l, c) in self.cycles.iter().enumerate() {
            feature += mu_f[l] * feature_pair_loss(graph, &self.features[l + 1], labels, None);
            if self.mode.uses_sigma() {
                let mut sum = 0.0;
                for i in 0..n {
                    for j in i + 1..n {
                        sum += clamped_bce(labels.get(i, j), c.affinity[i * n + j]).0;
                    }
                }
                distribution += mu_d[l] * sum;
            }
        }
        Loss {
            total: cfg.lambda_f * feature + cfg.lambda_d * distribution,
            feature,
            distribution,
        }
    }

    /// Adds the gradient of [`Tape::loss`] into `grads`.
    pub(crate) fn backward(
        &self,
        graph: &MultiModalGraph,
        labels: &LabelMatrix,
        cfg: &TrainerConfig,
        grads: &mut Model,
    ) {
        let n = self.n;
        let (mu_f, mu_d) = (cfg.mu_f(), cfg.mu_d());
        let alpha = cfg.distribution.alpha;
        let zeros_like = |f: &[Vec<f64>]| -> Vec<Vec<f64>> {
            f.iter().map(|r| alloc::vec![0.0; r.len()]).collect()
        };

        let top = self.cycles.len();
        let mut g_next = zeros_like(&self.features[top]);
        let mut g_dist_next = alloc::vec![0.0; n * n];
        for l in (0..top).rev() {
            let c = &self.cycles[l];
            let f_in = &self.features[l];
            let f_out = &self.features[l + 1];
            let cycle_grads = &mut grads.cycles[l];

            if self.mode.uses_phi() {
                feature_pair_loss(
                    graph,
                    f_out,
                    labels,
                    Some((cfg.lambda_f * mu_f[l], &mut g_next)),
                );
            }

            // gradient w.r.t. the affinity matrix, per ordered entry
            let mut g_aff = alloc::vec![0.0; n * n];
            if self.mode.uses_sigma() {
                let w = cfg.lambda_d * mu_d[l];
                for i in 0..n {
                    for j in i + 1..n {
                        g_aff[i * n + j] +=
                            w * clamped_bce(labels.get(i, j), c.affinity[i * n + j]).1;
                    }
                }
            }

            let mut g_in = zeros_like(f_in);
            if let Some(agg) = &c.agg {
                let mut dh = Vec::new();
                for (i, node) in agg.iter().enumerate() {
                    let m = graph.modality(i).index();
                    dh.clear();
                    dh.resize(f_in[i].len(), 0.0);
                    phi_backward_into(
                        &node.cache,
                        &g_next[i],
                        &mut cycle_grads.phi[m],
                        &mut dh,
                        &mut g_in[i],
                    );
                    let dw: Vec<f64> = node
                        .neighbours
                        .iter()
                        .map(|&j| math::dot(&f_in[j], &dh))
                        .collect();
                    let mean: f64 = dw.iter().zip(&node.weights).map(|(d, w)| d * w).sum();
                    for ((&j, &w), &d) in node.neighbours.iter().zip(&node.weights).zip(&dw) {
                        g_aff[i * n + j] += (d - mean) / node.total;
                        math::axpy(w, &dh, &mut g_in[j]);
                    }
                }
            }

            if self.mode.uses_sigma() {
                let mut g_dist = core::mem::take(&mut g_dist_next);
                if g_dist.is_empty() {
                    g_dist = alloc::vec![0.0; n * n];
                }
                self.sigma_backward(
                    l,
                    graph.slots(),
                    &g_aff,
                    &mut g_dist,
                    &mut cycle_grads.sigma,
                );
                let (g_intra, g_prev) =
                    self.distribution_backward(graph, &g_dist, alpha, cfg.unroll_momentum);
                if self.mode.uses_phi() {
                    intra_backward(graph, f_in, &c.intra, &g_intra, &mut g_in);
                }
                g_dist_next = g_prev;
            } else {
                intra_backward(graph, f_in, &c.intra, &g_aff, &mut g_in);
            }
            g_next = g_in;
        }
    }

    fn sigma_backward(
        &self,
        l: usize,
        slots: &[usize],
        g_aff: &[f64],
        g_dist: &mut [f64],
        grads: &mut SigmaParams,
    ) {
        let n = self.n;
        let c = &self.cycles[l];
        let sigma = &self.model.cycle(l).sigma;
        let h = sigma.hidden;
        let mut x = alloc::vec![0.0; sigma.width];
        let mut scratch = alloc::vec![0.0; h];
        for i in 0..n {
            for j in i..n {
                let g = if i == j {
                    g_aff[i * n + i]
                } else {
                    g_aff[i * n + j] + g_aff[j * n + i]
                };
                if g == 0.0 {
                    continue;
                }
                let pre = &c.pre[tri(n, i, j) * h..(tri(n, i, j) + 1) * h];
                let a = c.affinity[i * n + j];
                if i == j {
                    x.fill(0.0);
                    sigma.accumulate_backward(grads, &x, pre, a, g, &mut scratch, None);
                    continue;
                }
                for k in 0..n {
                    x[slots[k]] = (c.dist[i * n + k] - c.dist[j * n + k]).abs();
                }
                sigma.accumulate_backward(grads, &x, pre, a, g, &mut scratch, None);
                for k in 0..n {
                    let diff = c.dist[i * n + k] - c.dist[j * n + k];
                    let v = if diff > 0.0 {
                        sigma.input_gradient(slots[k], &scratch)
                    } else if diff < 0.0 {
                        -sigma.input_gradient(slots[k], &scratch)
                    } else {
                        0.0
                    };
                    g_dist[i * n + k] += v;
                    g_dist[j * n + k] -= v;
                }
            }
        }
    }

    /// Back through `dist = alpha * prev + (1 - alpha) * sym(raw)`. Returns
    /// the gradient w.r.t. the same-modality similarity matrix and, when
    /// unrolling, w.r.t. `prev` (otherwise an empty vector).
    fn distribution_backward(
        &self,
        graph: &MultiModalGraph,
        g_dist: &[f64],
        alpha: f64,
        unroll: bool,
    ) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut g_raw = alloc::vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let g = 0.5 * (1.0 - alpha) * (g_dist[i * n + j] + g_dist[j * n + i]);
                g_raw[i * n + j] = g;
                g_raw[j * n + i] = g;
            }
        }
        let mut g_prev = if unroll {
            g_dist.iter().map(|g| alpha * g).collect()
        } else {
            Vec::new()
        };
        let mut g_intra = alloc::vec![0.0; n * n];
        let tracks = graph.tracks().len();
        for i in 0..n {
            let mi = graph.modality(i);
            let ti = graph.local_track(i);
            for t in 0..tracks {
                let bridges = graph.group(t, mi);
                let mut bridged = 0.0;
                for m in Modality::ALL {
                    for &j in graph.group(t, m) {
                        if j == i {
                            continue;
                        }
                        let g = g_raw[i * n + j];
                        if m == mi {
                            g_intra[i * n + j] += g;
                        } else if t == ti {
                            // same-track pairs are constant
                            continue;
                        } else if !bridges.is_empty() {
                            bridged += g;
                        } else if unroll {
                            g_prev[i * n + j] += g;
                        }
                    }
                }
                if bridged != 0.0 {
                    let share = bridged / bridges.len() as f64;
                    for &k in bridges {
                        g_intra[i * n + k] += share;
                    }
                }
            }
        }
        (g_intra, g_prev)
    }
}

/// Back through `intra[i][j] = clamp((1 + <f_i, f_j>) / 2, 0, 1)` for
/// same-modality `i != j`, with `g` holding per-entry gradients.
fn intra_backward(
    graph: &MultiModalGraph,
    f: &[Vec<f64>],
    intra: &[f64],
    g: &[f64],
    out: &mut [Vec<f64>],
) {
    let n = graph.len();
    for i in 0..n {
        for j in i + 1..n {
            if !graph.modality_edge(i, j) {
                continue;
            }
            let gij = g[i * n + j] + g[j * n + i];
            let s = intra[i * n + j];
            if gij != 0.0 && s > 0.0 && s < 1.0 {
                add_pair_grad(out, f, i, j, 0.5 * gij);
            }
        }
    }
}
