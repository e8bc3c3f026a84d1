use alloc::format;
use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.lr > 0.0 && self.lr.is_finite(),
            "adam: learning rate must be positive, got {}",
            self.lr
        );
        ensure!(
            (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2),
            "adam: betas must lie in [0, 1)"
        );
        ensure!(self.eps > 0.0, "adam: eps must be positive");
        Ok(())
    }
}

/// Adam with bias-corrected moments:
/// `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, len: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            m: alloc::vec![0.0; len],
            v: alloc::vec![0.0; len],
        })
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// Restores moments saved from an earlier state.
    pub fn with_moments(config: AdamConfig, step: u64, m: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        config.validate()?;
        ensure!(m.len() == v.len(), "adam: moment lengths differ");
        Ok(Self { config, step, m, v })
    }

    /// One update over parameters given as consecutive slices. The slices
    /// together must cover exactly `len()` values, matched by `grads`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        ensure!(
            params.len() == grads.len(),
            "adam: {} parameter blocks but {} gradient blocks",
            params.len(),
            grads.len()
        );
        let mut total = 0;
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            ensure!(
                p.len() == g.len(),
                "adam: block {k} has {} parameters but {} gradients",
                p.len(),
                g.len()
            );
            if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!(
                    "adam: non-finite gradient in block {k} at index {i}"
                )));
            }
            total += p.len();
        }
        ensure!(
            total == self.m.len(),
            "adam: state holds {} moments, got {total} parameters",
            self.m.len()
        );

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(c.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, t as f64);
        let mut off = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            for (i, (theta, &gi)) in p.iter_mut().zip(g.iter()).enumerate() {
                let m = &mut self.m[off + i];
                let v = &mut self.v[off + i];
                *m = c.beta1 * *m + (1.0 - c.beta1) * gi;
                *v = c.beta2 * *v + (1.0 - c.beta2) * gi * gi;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= c.lr * m_hat / (math::sqrt(v_hat) + c.eps);
            }
            off += p.len();
        }
        Ok(())
    }

    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        self.step(&mut [params], &[grads])
    }
}

/// Convenience wrapper: one Adam update of a flat parameter vector.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    state.step_flat(params, grads)
}
