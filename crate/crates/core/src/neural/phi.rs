use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};
use crate::math;

/// Gated residual block for one modality:
///
/// ```text
/// g   = sigmoid(Wg [h; f] + bg)
/// z   = tanh(Wt h + bt)
/// out = normalize(g * z + (1 - g) * f)
/// ```
///
/// Matrices are row-major with one row per output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiParams {
    pub dim: usize,
    pub wt: Vec<f64>,
    pub bt: Vec<f64>,
    pub wg: Vec<f64>,
    pub bg: Vec<f64>,
}

impl PhiParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            wt: alloc::vec![0.0; dim * dim],
            bt: alloc::vec![0.0; dim],
            wg: alloc::vec![0.0; 2 * dim * dim],
            bg: alloc::vec![0.0; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let o = self.dim;
        ensure!(
            self.wt.len() == o * o
                && self.bt.len() == o
                && self.wg.len() == 2 * o * o
                && self.bg.len() == o,
            "phi parameter shapes do not match dimension {o}"
        );
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PhiCache<'a> {
    params: &'a PhiParams,
    h: Vec<f64>,
    f: Vec<f64>,
    gate: Vec<f64>,
    z: Vec<f64>,
    out: Vec<f64>,
    norm: f64,
}

impl PhiCache<'_> {
    pub fn output(&self) -> &[f64] {
        &self.out
    }

    /// The aggregated and residual inputs.
    pub fn inputs(&self) -> (&[f64], &[f64]) {
        (&self.h, &self.f)
    }
}

pub fn phi_forward<'a>(
    params: &'a PhiParams,
    h: &[f64],
    f: &[f64],
) -> Result<(Vec<f64>, PhiCache<'a>)> {
    params.validate()?;
    let o = params.dim;
    ensure!(
        h.len() == o && f.len() == o,
        "phi: expected vectors of length {o}, got {} and {}",
        h.len(),
        f.len()
    );
    let mut gate = Vec::with_capacity(o);
    let mut z = Vec::with_capacity(o);
    let mut mixed = Vec::with_capacity(o);
    for r in 0..o {
        let row = &params.wg[r * 2 * o..(r + 1) * 2 * o];
        let g = math::sigmoid(params.bg[r] + math::dot(&row[..o], h) + math::dot(&row[o..], f));
        let t = math::tanh(params.bt[r] + math::dot(&params.wt[r * o..(r + 1) * o], h));
        gate.push(g);
        z.push(t);
        mixed.push(g * t + (1.0 - g) * f[r]);
    }
    let norm = math::norm(&mixed);
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Numerical(alloc::format!("phi: output norm {norm}")));
    }
    let out: Vec<f64> = mixed.iter().map(|v| v / norm).collect();
    let cache = PhiCache {
        params,
        h: h.to_vec(),
        f: f.to_vec(),
        gate,
        z,
        out: out.clone(),
        norm,
    };
    Ok((out, cache))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiGrads {
    pub params: PhiParams,
    pub h: Vec<f64>,
    pub f: Vec<f64>,
}

/// Accumulating backward pass; adds into `grads`, `dh` and `df`.
pub(crate) fn phi_backward_into(
    cache: &PhiCache<'_>,
    upstream: &[f64],
    grads: &mut PhiParams,
    dh: &mut [f64],
    df: &mut [f64],
) {
    let p = cache.params;
    let o = p.dim;
    // through the renormalization: (I - out out^T) / norm
    let proj = math::dot(&cache.out, upstream);
    for r in 0..o {
        let dmix = (upstream[r] - cache.out[r] * proj) / cache.norm;
        if dmix == 0.0 {
            continue;
        }
        let g = cache.gate[r];
        let z = cache.z[r];
        df[r] += dmix * (1.0 - g);
        let dpre_g = dmix * (z - cache.f[r]) * g * (1.0 - g);
        let dpre_t = dmix * g * (1.0 - z * z);
        grads.bg[r] += dpre_g;
        grads.bt[r] += dpre_t;
        let wg_row = &p.wg[r * 2 * o..(r + 1) * 2 * o];
        let gwg_row = &mut grads.wg[r * 2 * o..(r + 1) * 2 * o];
        math::axpy(dpre_g, &cache.h, &mut gwg_row[..o]);
        math::axpy(dpre_g, &cache.f, &mut gwg_row[o..]);
        math::axpy(dpre_g, &wg_row[..o], dh);
        math::axpy(dpre_g, &wg_row[o..], df);
        math::axpy(dpre_t, &cache.h, &mut grads.wt[r * o..(r + 1) * o]);
        math::axpy(dpre_t, &p.wt[r * o..(r + 1) * o], dh);
    }
}

pub fn phi_backward(cache: &PhiCache<'_>, upstream: &[f64]) -> PhiGrads {
    let o = cache.params.dim;
    let mut grads = PhiParams::zeros(o);
    let mut h = alloc::vec![0.0; o];
    let mut f = alloc::vec![0.0; o];
    phi_backward_into(cache, upstream, &mut grads, &mut h, &mut f);
    PhiGrads {
        params: grads,
        h,
        f,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Vec<f64> {
        math::normalized(v).unwrap()
    }

    #[test]
    fn closed_gate_returns_residual() {
        let mut p = PhiParams::zeros(3);
        p.bg = alloc::vec![-50.0; 3];
        p.wt = alloc::vec![0.7; 9];
        let f = unit(&[0.2, -0.5, 0.8]);
        let (out, _) = phi_forward(&p, &[0.3, 0.3, 0.1], &f).unwrap();
        for (a, b) in out.iter().zip(&f) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn open_gate_returns_transform() {
        let mut p = PhiParams::zeros(2);
        p.bg = alloc::vec![50.0; 2];
        p.wt = alloc::vec![0.5, -0.25, 0.1, 0.9];
        p.bt = alloc::vec![0.05, -0.1];
        let h = [0.4, 0.6];
        let (out, _) = phi_forward(&p, &h, &unit(&[1.0, 1.0])).unwrap();
        let z = [
            math::tanh(0.05 + 0.5 * 0.4 - 0.25 * 0.6),
            math::tanh(-0.1 + 0.1 * 0.4 + 0.9 * 0.6),
        ];
        let z = unit(&z);
        for (a, b) in out.iter().zip(&z) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut p = PhiParams::zeros(2);
        p.wt = alloc::vec![0.5, -0.25, 0.1, 0.9];
        let (_, c) = phi_forward(&p, &[0.4, 0.6], &unit(&[1.0, 2.0])).unwrap();
        let g = phi_backward(&c, &[0.0, 0.0]);
        assert!(g
            .h
            .iter()
            .chain(&g.f)
            .chain(&g.params.wt)
            .chain(&g.params.wg)
            .all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = PhiParams::zeros(2);
        assert!(phi_forward(&p, &[1.0], &[1.0, 0.0]).is_err());
    }
}
