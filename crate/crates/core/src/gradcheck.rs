//! Central finite-difference checks of the hand-written gradients.
//!
//! The error of a coordinate is `|analytic - numeric| / max(|analytic|,
//! |numeric|, FLOOR)`; a suite reports its worst coordinate.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::Result;
use crate::graph::{Clue, ClueId, Identity, Modality, MultiModalGraph, TrackId};
use crate::math;
use crate::neural::phi::{phi_backward, phi_forward, PhiParams};
use crate::neural::sigma::{sigma_backward, sigma_forward, SigmaParams};
use crate::neural::{Model, ModelShape};
use crate::seed::{self, Rng};
use crate::trainer::{self, Mode, TrainerConfig};

pub const STEP: f64 = 1e-5;
pub const FLOOR: f64 = 1e-8;
pub const BLOCK_TOLERANCE: f64 = 1e-5;
pub const END_TO_END_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: String,
    pub trials: usize,
    pub coordinates: usize,
    pub max_error: f64,
    /// Name of the coordinate with the largest error.
    pub worst: String,
    pub tolerance: f64,
}

impl CheckResult {
    fn new(suite: &str, tolerance: f64) -> Self {
        Self {
            suite: suite.into(),
            trials: 0,
            coordinates: 0,
            max_error: 0.0,
            worst: String::new(),
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.max_error < self.tolerance
    }

    fn record(&mut self, name: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let e = relative_error(analytic, numeric);
        self.coordinates += 1;
        if e > self.max_error || self.worst.is_empty() {
            self.max_error = self.max_error.max(e);
            self.worst = name();
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    if !(analytic.is_finite() && numeric.is_finite()) {
        return f64::INFINITY;
    }
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Options for [`run_all`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradcheckOptions {
    pub seed: u64,
    /// Trials for each block suite.
    pub trials: usize,
    /// Test fixture: perturb the first analytic coordinate of every suite
    /// that is not negligibly small by one percent, as a broken backward pass
    /// would.
    pub corrupt: bool,
}

fn uniform(rng: &mut Rng, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| lo + (hi - lo) * rng.random::<f64>())
        .collect()
}

fn central(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + STEP) - f(x - STEP)) / (2.0 * STEP)
}

fn corrupted(analytic: f64, corrupt: bool, first: &mut bool) -> f64 {
    if corrupt && *first && analytic.abs() > 1e-6 {
        *first = false;
        analytic * 1.01
    } else {
        analytic
    }
}

/// σ with hidden width 4 on rows of length 6.
pub fn check_sigma(root_seed: u64, trials: usize, corrupt: bool) -> Result<CheckResult> {
    let (width, hidden) = (6, 4);
    let mut out = CheckResult::new("sigma", BLOCK_TOLERANCE);
    let mut first = true;
    for trial in 0..trials {
        let mut rng = seed::rng_for(root_seed, &format!("gradcheck/sigma/{trial}"));
        let mut p = SigmaParams::zeros(width, hidden);
        p.w1 = uniform(&mut rng, -1.0, 1.0, width * hidden);
        p.b1 = uniform(&mut rng, -0.5, 0.5, hidden);
        p.w2 = uniform(&mut rng, -1.0, 1.0, hidden);
        p.b2 = uniform(&mut rng, -0.5, 0.5, 1)[0];
        let di = uniform(&mut rng, 0.0, 1.0, width);
        let dj = uniform(&mut rng, 0.0, 1.0, width);
        let up = uniform(&mut rng, 0.5, 2.0, 1)[0];

        let (_, cache) = sigma_forward(&p, &di, &dj)?;
        let g = sigma_backward(&cache, up);
        let eval = |p: &SigmaParams, di: &[f64], dj: &[f64]| {
            up * sigma_forward(p, di, dj).expect("valid shapes").0
        };

        let blocks: [(&str, &[f64]); 4] = [
            ("w1", &g.params.w1),
            ("b1", &g.params.b1),
            ("w2", &g.params.w2),
            ("b2", core::slice::from_ref(&g.params.b2)),
        ];
        for (b, (name, grad)) in blocks.into_iter().enumerate() {
            for (k, &a) in grad.iter().enumerate() {
                let numeric = central(
                    |x| {
                        let mut q = p.clone();
                        *sigma_slot(&mut q, b, k) = x;
                        eval(&q, &di, &dj)
                    },
                    *sigma_slot(&mut p.clone(), b, k),
                );
                let a = corrupted(a, corrupt, &mut first);
                out.record(|| format!("trial {trial} sigma.{name}[{k}]"), a, numeric);
            }
        }
        for k in 0..width {
            let ni = central(
                |x| {
                    let mut v = di.clone();
                    v[k] = x;
                    eval(&p, &v, &dj)
                },
                di[k],
            );
            out.record(|| format!("trial {trial} d_i[{k}]"), g.d_i[k], ni);
            let nj = central(
                |x| {
                    let mut v = dj.clone();
                    v[k] = x;
                    eval(&p, &di, &v)
                },
                dj[k],
            );
            out.record(|| format!("trial {trial} d_j[{k}]"), g.d_j[k], nj);
        }
        out.trials += 1;
    }
    Ok(out)
}

/// φ on dimension 8.
pub fn check_phi(root_seed: u64, trials: usize, corrupt: bool) -> Result<CheckResult> {
    let o = 8;
    let mut out = CheckResult::new("phi", BLOCK_TOLERANCE);
    let mut first = true;
    for trial in 0..trials {
        let mut rng = seed::rng_for(root_seed, &format!("gradcheck/phi/{trial}"));
        let scale = 1.0 / math::sqrt(o as f64);
        let p = PhiParams {
            dim: o,
            wt: uniform(&mut rng, -scale, scale, o * o),
            bt: uniform(&mut rng, -scale, scale, o),
            wg: uniform(&mut rng, -scale, scale, 2 * o * o),
            bg: uniform(&mut rng, -scale, scale, o),
        };
        let h = uniform(&mut rng, -0.5, 0.5, o);
        let f = math::normalized(&uniform(&mut rng, -1.0, 1.0, o)).expect("non-zero draw");
        let up = uniform(&mut rng, -1.0, 1.0, o);

        let (_, cache) = phi_forward(&p, &h, &f)?;
        let g = phi_backward(&cache, &up);
        let eval = |p: &PhiParams, h: &[f64], f: &[f64]| {
            math::dot(&up, &phi_forward(p, h, f).expect("valid shapes").0)
        };

        let names = ["wt", "bt", "wg", "bg"];
        let grads = [&g.params.wt, &g.params.bt, &g.params.wg, &g.params.bg];
        for (b, (name, grad)) in names.iter().zip(grads).enumerate() {
            for (k, &a) in grad.iter().enumerate() {
                let numeric = central(
                    |x| {
                        let mut q = p.clone();
                        *phi_slot(&mut q, b, k) = x;
                        eval(&q, &h, &f)
                    },
                    *phi_slot(&mut p.clone(), b, k),
                );
                let a = corrupted(a, corrupt, &mut first);
                out.record(|| format!("trial {trial} phi.{name}[{k}]"), a, numeric);
            }
        }
        for k in 0..o {
            let nh = central(
                |x| {
                    let mut v = h.clone();
                    v[k] = x;
                    eval(&p, &v, &f)
                },
                h[k],
            );
            out.record(|| format!("trial {trial} h[{k}]"), g.h[k], nh);
            let nf = central(
                |x| {
                    let mut v = f.clone();
                    v[k] = x;
                    eval(&p, &h, &v)
                },
                f[k],
            );
            out.record(|| format!("trial {trial} f[{k}]"), g.f[k], nf);
        }
        out.trials += 1;
    }
    Ok(out)
}

fn phi_slot(q: &mut PhiParams, block: usize, k: usize) -> &mut f64 {
    match block {
        0 => &mut q.wt[k],
        1 => &mut q.bt[k],
        2 => &mut q.wg[k],
        _ => &mut q.bg[k],
    }
}

fn sigma_slot(q: &mut SigmaParams, block: usize, k: usize) -> &mut f64 {
    match block {
        0 => &mut q.w1[k],
        1 => &mut q.b1[k],
        2 => &mut q.w2[k],
        _ => &mut q.b2,
    }
}

/// Six clues over three tracks; tracks 1 and 2 share an identity. σ input
/// slots use a group stride of one, leaving slot 5 unused.
pub fn toy_graph(root_seed: u64) -> Result<MultiModalGraph> {
    let mut rng = seed::rng_for(root_seed, "gradcheck/toy-graph");
    let layout = [
        (1, Modality::Face, 0),
        (1, Modality::Body, 0),
        (1, Modality::Voice, 0),
        (2, Modality::Face, 0),
        (2, Modality::Body, 0),
        (3, Modality::Face, 1),
    ];
    let nodes = layout
        .iter()
        .enumerate()
        .map(|(i, &(t, m, ident))| {
            Clue::new(
                ClueId(i as u64),
                TrackId(t),
                m,
                &uniform(&mut rng, -1.0, 1.0, 4),
                Some(Identity(ident)),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    MultiModalGraph::from_nodes(nodes, TrackId(1))?.with_group_stride(1)
}

/// Gradient of the full training loss on [`toy_graph`] for every parameter,
/// in every mode, backpropagating through the momentum chain.
pub fn check_end_to_end(root_seed: u64, corrupt: bool) -> Result<CheckResult> {
    let graph = toy_graph(root_seed)?;
    let shape = ModelShape {
        width: graph.slot_span(),
        hidden: 8,
        dims: [4, 4, 4],
        cycles: 2,
    };
    let mut out = CheckResult::new("end-to-end", END_TO_END_TOLERANCE);
    let mut first = true;
    for mode in [Mode::Full, Mode::FeatureOnly, Mode::DistributionOnly] {
        let cfg = TrainerConfig {
            mode,
            unroll_momentum: true,
            hidden: shape.hidden,
            ..TrainerConfig::default()
        };
        let model = Model::init(shape, seed::derive(root_seed, mode.name()))?;
        let (_, grads) = trainer::graph_gradient(&graph, &model, &cfg)?;
        let analytic = grads.flatten();
        let names: Vec<(String, usize)> = model
            .arrays()
            .iter()
            .map(|(n, _, v)| (n.clone(), v.len()))
            .collect();
        let base = model.flatten();
        let mut probe = model.clone();
        let mut k = 0;
        for (name, len) in names {
            for idx in 0..len {
                let numeric = central(
                    |x| {
                        let mut theta = base.clone();
                        theta[k] = x;
                        probe.set_flat(&theta).expect("same length");
                        trainer::graph_loss(&graph, &probe, &cfg)
                            .expect("finite loss")
                            .total
                    },
                    base[k],
                );
                let a = corrupted(analytic[k], corrupt, &mut first);
                out.record(|| format!("{mode} {name}[{idx}]"), a, numeric);
                k += 1;
            }
        }
        out.trials += 1;
    }
    Ok(out)
}

pub fn run_all(opts: &GradcheckOptions) -> Result<Vec<CheckResult>> {
    let trials = opts.trials.max(1);
    Ok(alloc::vec![
        check_sigma(seed::derive(opts.seed, "sigma"), trials, opts.corrupt)?,
        check_phi(seed::derive(opts.seed, "phi"), trials, opts.corrupt)?,
        check_end_to_end(seed::derive(opts.seed, "end-to-end"), opts.corrupt)?,
    ])
}
