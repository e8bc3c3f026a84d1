//! Run configuration: every hyperparameter of one invocation, read from and
//! written as TOML.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use relclust_core::synth::{NoiseConfig, SynthConfig};
use relclust_core::{Modality, Mode, SamplerConfig, TrainerConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trainer mode plus an optional restriction to a subset of modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RunMode {
    #[default]
    Full,
    FeatureOnly,
    DistributionOnly,
    /// Face and body only.
    FaceBody,
    /// Face and voice only.
    FaceVoice,
    /// Face only.
    Face,
}

impl RunMode {
    pub const ALL: [RunMode; 6] = [
        RunMode::Full,
        RunMode::FeatureOnly,
        RunMode::DistributionOnly,
        RunMode::FaceBody,
        RunMode::FaceVoice,
        RunMode::Face,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RunMode::Full => "full",
            RunMode::FeatureOnly => "feature-only",
            RunMode::DistributionOnly => "distribution-only",
            RunMode::FaceBody => "fb",
            RunMode::FaceVoice => "fv",
            RunMode::Face => "f",
        }
    }

    pub fn trainer_mode(self) -> Mode {
        match self {
            RunMode::FeatureOnly => Mode::FeatureOnly,
            RunMode::DistributionOnly => Mode::DistributionOnly,
            _ => Mode::Full,
        }
    }

    /// Modalities kept when a dataset is loaded.
    pub fn modalities(self) -> &'static [Modality] {
        match self {
            RunMode::FaceBody => &[Modality::Face, Modality::Body],
            RunMode::FaceVoice => &[Modality::Face, Modality::Voice],
            RunMode::Face => &[Modality::Face],
            _ => &Modality::ALL,
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        RunMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = RunMode::ALL.iter().map(|m| m.name()).collect();
                format!("unknown mode {s:?}, expected one of {}", names.join(", "))
            })
    }
}

impl TryFrom<String> for RunMode {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<RunMode> for String {
    fn from(m: RunMode) -> String {
        m.name().to_owned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random stream: data generation, noise, initialization
    /// and pivot draws.
    pub seed: u64,
    pub mode: RunMode,
    /// Linkage threshold for a single clustering.
    pub threshold: f64,
    /// Thresholds of a sweep.
    pub sweep: Vec<f64>,
    pub sampler: SamplerConfig,
    pub trainer: TrainerConfig,
    pub synth: SynthConfig,
    /// Noise injected into a dataset when it is loaded.
    pub noise: NoiseConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: RunMode::Full,
            threshold: 0.5,
            sweep: relclust_core::pipeline::DEFAULT_SWEEP.to_vec(),
            sampler: SamplerConfig::default(),
            trainer: TrainerConfig::default(),
            synth: SynthConfig::default(),
            noise: NoiseConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if let Some(t) = self.sweep.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Config(format!("sweep threshold {t} outside [0, 1]")));
        }
        self.sampler.validate()?;
        self.resolved_trainer().validate()?;
        self.resolved_synth().validate()?;
        self.noise.validate()?;
        Ok(())
    }

    /// The trainer config with the run's seed and mode applied.
    pub fn resolved_trainer(&self) -> TrainerConfig {
        TrainerConfig {
            seed: self.seed,
            mode: self.mode.trainer_mode(),
            ..self.trainer.clone()
        }
    }

    pub fn resolved_synth(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }
}
