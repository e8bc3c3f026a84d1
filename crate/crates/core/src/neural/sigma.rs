use alloc::vec::Vec;

use crate::error::{ensure, Result};
use crate::math;

/// Two fully-connected layers and a sigmoid over `|d_i - d_j|`.
///
/// `w1` is stored input-major: `w1[k * hidden + h]` is the weight from input
/// coordinate `k` to hidden unit `h`. Inputs shorter than `width` are treated
/// as zero-padded.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaParams {
    pub width: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl SigmaParams {
    pub fn zeros(width: usize, hidden: usize) -> Self {
        Self {
            width,
            hidden,
            w1: alloc::vec![0.0; width * hidden],
            b1: alloc::vec![0.0; hidden],
            w2: alloc::vec![0.0; hidden],
            b2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.w1.len() == self.width * self.hidden
                && self.b1.len() == self.hidden
                && self.w2.len() == self.hidden,
            "sigma parameter shapes do not match width {} / hidden {}",
            self.width,
            self.hidden
        );
        Ok(())
    }

    /// Hidden pre-activations `W1 x + b1` for an input of at most `width`
    /// entries. Zero inputs are skipped.
    pub(crate) fn pre_activation(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b1);
        let h = self.hidden;
        for (k, &xk) in x.iter().enumerate() {
            if xk != 0.0 {
                math::axpy(xk, &self.w1[k * h..(k + 1) * h], out);
            }
        }
    }

    /// Output logit from pre-activations.
    pub(crate) fn logit(&self, pre: &[f64]) -> f64 {
        self.b2
            + pre
                .iter()
                .zip(&self.w2)
                .map(|(&u, &w)| if u > 0.0 { u * w } else { 0.0 })
                .sum::<f64>()
    }

    /// Accumulates parameter gradients for one evaluation with output `a`,
    /// upstream gradient `upstream`, input `x` and pre-activations `pre`.
    /// Leaves the hidden-layer gradient in `scratch` and writes `dL/dx` into
    /// `dx` when given.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn accumulate_backward(
        &self,
        grads: &mut SigmaParams,
        x: &[f64],
        pre: &[f64],
        a: f64,
        upstream: f64,
        scratch: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let dz = upstream * a * (1.0 - a);
        if dz == 0.0 {
            scratch.fill(0.0);
            if let Some(dx) = dx {
                dx.fill(0.0);
            }
            return;
        }
        grads.b2 += dz;
        let du = scratch;
        for h in 0..self.hidden {
            let active = pre[h] > 0.0;
            if active {
                grads.w2[h] += dz * pre[h];
            }
            du[h] = if active { dz * self.w2[h] } else { 0.0 };
        }
        math::axpy(1.0, du, &mut grads.b1);
        let hd = self.hidden;
        for (k, &xk) in x.iter().enumerate() {
            if xk != 0.0 {
                math::axpy(xk, du, &mut grads.w1[k * hd..(k + 1) * hd]);
            }
        }
        if let Some(dx) = dx {
            for (k, out) in dx.iter_mut().enumerate() {
                *out = self.input_gradient(k, du);
            }
        }
    }

    /// `dL/dx_k` from the hidden-layer gradient `du`.
    #[inline]
    pub(crate) fn input_gradient(&self, k: usize, du: &[f64]) -> f64 {
        let hd = self.hidden;
        math::dot(&self.w1[k * hd..(k + 1) * hd], du)
    }
}

/// Forward intermediates of one σ evaluation. Borrowing the parameters keeps
/// them from changing before the matching backward pass.
#[derive(Debug, Clone)]
pub struct SigmaCache<'a> {
    params: &'a SigmaParams,
    diff: Vec<f64>,
    pre: Vec<f64>,
    out: f64,
}

impl SigmaCache<'_> {
    pub fn output(&self) -> f64 {
        self.out
    }
}

/// Affinity of two distribution rows.
pub fn sigma_forward<'a>(
    params: &'a SigmaParams,
    d_i: &[f64],
    d_j: &[f64],
) -> Result<(f64, SigmaCache<'a>)> {
    params.validate()?;
    ensure!(d_i.len() == d_j.len(), "sigma: rows of different length");
    ensure!(
        d_i.len() <= params.width,
        "sigma: row length {} exceeds input width {}",
        d_i.len(),
        params.width
    );
    let diff: Vec<f64> = d_i.iter().zip(d_j).map(|(a, b)| a - b).collect();
    let x: Vec<f64> = diff.iter().map(|v| v.abs()).collect();
    let mut pre = alloc::vec![0.0; params.hidden];
    params.pre_activation(&x, &mut pre);
    let out = math::sigmoid(params.logit(&pre));
    Ok((
        out,
        SigmaCache {
            params,
            diff,
            pre,
            out,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaGrads {
    pub params: SigmaParams,
    pub d_i: Vec<f64>,
    pub d_j: Vec<f64>,
}

/// Gradients of the σ output scaled by `upstream`. The derivative of `|v|`
/// at zero is taken as zero, as is the ReLU derivative at zero.
pub fn sigma_backward(cache: &SigmaCache<'_>, upstream: f64) -> SigmaGrads {
    let p = cache.params;
    let mut grads = SigmaParams::zeros(p.width, p.hidden);
    let x: Vec<f64> = cache.diff.iter().map(|v| v.abs()).collect();
    let mut dx = alloc::vec![0.0; x.len()];
    let mut scratch = alloc::vec![0.0; p.hidden];
    p.accumulate_backward(
        &mut grads,
        &x,
        &cache.pre,
        cache.out,
        upstream,
        &mut scratch,
        Some(&mut dx),
    );
    let d_i: Vec<f64> = dx
        .iter()
        .zip(&cache.diff)
        .map(|(&g, &s)| {
            if s > 0.0 {
                g
            } else if s < 0.0 {
                -g
            } else {
                0.0
            }
        })
        .collect();
    let d_j = d_i.iter().map(|v| -v).collect();
    SigmaGrads {
        params: grads,
        d_i,
        d_j,
    }
}
