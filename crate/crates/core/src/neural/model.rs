use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{PhiParams, SigmaParams};
use crate::error::{ensure, Result};
use crate::graph::Modality;
use crate::seed;

/// Sizes that fix the parameter layout of a [`Model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelShape {
    /// Maximum graph size; the input width of every σ block.
    pub width: usize,
    /// Hidden units of σ.
    pub hidden: usize,
    /// Feature dimension per modality, indexed by [`Modality::index`]. Zero
    /// means the modality is absent and its φ block is empty.
    pub dims: [usize; 3],
    pub cycles: usize,
}

impl ModelShape {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.cycles >= 1, "model needs at least one cycle");
        ensure!(
            self.width >= 1 && self.hidden >= 1,
            "model width and hidden size must be positive"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleParams {
    pub sigma: SigmaParams,
    pub phi: [PhiParams; 3],
}

impl CycleParams {
    fn zeros(shape: &ModelShape) -> Self {
        Self {
            sigma: SigmaParams::zeros(shape.width, shape.hidden),
            phi: core::array::from_fn(|m| PhiParams::zeros(shape.dims[m])),
        }
    }
}

/// All learnable parameters: one σ per cycle and one φ per (cycle, modality).
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    shape: ModelShape,
    pub cycles: Vec<CycleParams>,
}

impl Model {
    pub fn zeros(shape: ModelShape) -> Result<Self> {
        shape.validate()?;
        let cycles = (0..shape.cycles)
            .map(|_| CycleParams::zeros(&shape))
            .collect();
        Ok(Self { shape, cycles })
    }

    /// Uniform initialization in `±1/sqrt(fan_in)` for every weight and bias.
    pub fn init(shape: ModelShape, root_seed: u64) -> Result<Self> {
        let mut model = Self::zeros(shape)?;
        let mut rng = seed::rng_for(root_seed, "model-init");
        let mut fill = |v: &mut [f64], fan_in: usize| {
            let a = 1.0 / crate::math::sqrt(fan_in.max(1) as f64);
            for x in v {
                *x = a * (2.0 * rng.random::<f64>() - 1.0);
            }
        };
        for c in &mut model.cycles {
            let s = &mut c.sigma;
            fill(&mut s.w1, shape.width);
            fill(&mut s.b1, shape.width);
            fill(&mut s.w2, shape.hidden);
            fill(core::slice::from_mut(&mut s.b2), shape.hidden);
            for p in &mut c.phi {
                let o = p.dim;
                fill(&mut p.wt, o);
                fill(&mut p.bt, o);
                fill(&mut p.wg, 2 * o);
                fill(&mut p.bg, 2 * o);
            }
        }
        Ok(model)
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn cycle(&self, l: usize) -> &CycleParams {
        &self.cycles[l]
    }

    pub fn phi(&self, l: usize, m: Modality) -> &PhiParams {
        &self.cycles[l].phi[m.index()]
    }

    /// Parameter arrays in a fixed order with stable names and shapes.
    pub fn arrays(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (l, c) in self.cycles.iter().enumerate() {
            let s = &c.sigma;
            out.push((
                format!("cycle{l}.sigma.w1"),
                alloc::vec![s.width, s.hidden],
                &s.w1[..],
            ));
            out.push((
                format!("cycle{l}.sigma.b1"),
                alloc::vec![s.hidden],
                &s.b1[..],
            ));
            out.push((
                format!("cycle{l}.sigma.w2"),
                alloc::vec![s.hidden],
                &s.w2[..],
            ));
            out.push((
                format!("cycle{l}.sigma.b2"),
                alloc::vec![1],
                core::slice::from_ref(&s.b2),
            ));
            for m in Modality::ALL {
                let p = &c.phi[m.index()];
                let o = p.dim;
                out.push((format!("cycle{l}.phi.{m}.wt"), alloc::vec![o, o], &p.wt[..]));
                out.push((format!("cycle{l}.phi.{m}.bt"), alloc::vec![o], &p.bt[..]));
                out.push((
                    format!("cycle{l}.phi.{m}.wg"),
                    alloc::vec![o, 2 * o],
                    &p.wg[..],
                ));
                out.push((format!("cycle{l}.phi.{m}.bg"), alloc::vec![o], &p.bg[..]));
            }
        }
        out
    }

    /// Mutable views in the same order as [`Model::arrays`].
    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for c in &mut self.cycles {
            let s = &mut c.sigma;
            out.push(&mut s.w1);
            out.push(&mut s.b1);
            out.push(&mut s.w2);
            out.push(core::slice::from_mut(&mut s.b2));
            for p in &mut c.phi {
                out.push(&mut p.wt);
                out.push(&mut p.bt);
                out.push(&mut p.wg);
                out.push(&mut p.bg);
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.arrays().iter().map(|(_, _, v)| v.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.arrays()
            .iter()
            .flat_map(|(_, _, v)| v.iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        ensure!(
            values.len() == self.param_count(),
            "expected {} parameters, got {}",
            self.param_count(),
            values.len()
        );
        let mut off = 0;
        for a in self.arrays_mut() {
            a.copy_from_slice(&values[off..off + a.len()]);
            off += a.len();
        }
        Ok(())
    }

    /// Rebuilds a model from named arrays as produced by [`Model::arrays`].
    pub fn from_arrays(shape: ModelShape, arrays: &[(String, Vec<f64>)]) -> Result<Self> {
        let mut model = Self::zeros(shape)?;
        let names: Vec<String> = model.arrays().into_iter().map(|(n, _, _)| n).collect();
        ensure!(
            arrays.len() == names.len(),
            "expected {} parameter arrays, got {}",
            names.len(),
            arrays.len()
        );
        for ((name, dst), (got, values)) in names.iter().zip(model.arrays_mut()).zip(arrays) {
            ensure!(name == got, "expected array {name}, found {got}");
            ensure!(
                dst.len() == values.len(),
                "array {name}: expected {} values, got {}",
                dst.len(),
                values.len()
            );
            dst.copy_from_slice(values);
        }
        Ok(model)
    }

    pub fn is_finite(&self) -> bool {
        self.arrays()
            .iter()
            .all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
    }
}
