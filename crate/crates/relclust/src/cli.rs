use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::commands;
use crate::config::{RunConfig, RunMode};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "relclust", version, about = "Multi-modal person clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic dataset directory.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration loss CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Cluster the tracks of a dataset with a trained checkpoint.
    Cluster {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Assignment CSV at the configured threshold.
        #[arg(long)]
        out: PathBuf,
        /// Metrics per sweep threshold; defaults to sweep.csv next to --out.
        #[arg(long)]
        sweep_out: Option<PathBuf>,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Score an assignment against the dataset labels.
    Eval {
        #[arg(long)]
        assignment: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Metric CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Perturb one analytic coordinate per suite; the run must fail.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

/// Values applied on top of the config file (or the checkpoint's config).
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// full, feature-only, distribution-only, fb, fv or f.
    #[arg(long)]
    pub mode: Option<RunMode>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Score a threshold sweep; without values the config's sweep is used.
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    pub sweep: Option<Vec<f64>>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda_f: Option<f64>,
    #[arg(long)]
    pub lambda_d: Option<f64>,
    /// Number of refinement cycles.
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Body-exchange noise applied when the dataset is loaded.
    #[arg(long)]
    pub rho: Option<f64>,
}

impl Overrides {
    /// `base` unless a config file was given, with every set flag applied.
    pub fn resolve(&self, base: RunConfig) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => base,
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = self.threshold {
            cfg.threshold = v;
        }
        if let Some(v) = self.sweep.as_ref().filter(|v| !v.is_empty()) {
            cfg.sweep = v.clone();
        }
        if let Some(v) = self.eta {
            cfg.trainer.distribution.eta = v;
        }
        if let Some(v) = self.alpha {
            cfg.trainer.distribution.alpha = v;
        }
        if let Some(v) = self.lambda_f {
            cfg.trainer.lambda_f = v;
        }
        if let Some(v) = self.lambda_d {
            cfg.trainer.lambda_d = v;
        }
        if let Some(v) = self.generations {
            cfg.trainer.cycles = v;
            // explicit per-cycle weights no longer fit
            cfg.trainer.mu_f = None;
            cfg.trainer.mu_d = None;
        }
        if let Some(v) = self.iterations {
            cfg.trainer.iterations = v;
        }
        if let Some(v) = self.rho {
            cfg.noise.rho = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent()
        .map_or_else(|| PathBuf::from(name), |p| p.join(name))
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen { out, opts } => {
            let cfg = opts.resolve(RunConfig::default())?;
            let manifest = commands::cmd_gen(&cfg, &out)?;
            println!("wrote {} tracks to {}", manifest.tracks, out.display());
            for (m, e) in &manifest.modalities {
                println!("  {m}: {} clues of dimension {}", e.clues, e.dim);
            }
        }
        Command::Train {
            data,
            out,
            log,
            opts,
        } => {
            let cfg = opts.resolve(RunConfig::default())?;
            let s = commands::cmd_train(&cfg, &data, &out, log.as_deref())?;
            let last = s.records.last().map_or(f64::NAN, |r| r.loss.total);
            println!(
                "trained {} parameters on {} tracks for {} iterations, final loss {last:.6}",
                s.parameters,
                s.tracks,
                s.records.len()
            );
            println!("checkpoint: {}", out.display());
        }
        Command::Cluster {
            data,
            checkpoint,
            out,
            sweep_out,
            opts,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let cfg = opts.resolve(ckpt.header.run.clone())?;
            let sweep_out = opts
                .sweep
                .is_some()
                .then(|| sweep_out.unwrap_or_else(|| sibling(&out, "sweep.csv")));
            let res = commands::cmd_cluster(&cfg, &ckpt, &data, &out, sweep_out.as_deref())?;
            println!(
                "{} tracks in {} clusters at threshold {}",
                res.assignment.len(),
                res.assignment.cluster_count(),
                cfg.threshold
            );
            if let (Some(rows), Some(path)) = (res.sweep, sweep_out) {
                println!("threshold,clusters,nmi");
                for r in &rows {
                    println!(
                        "{},{},{:.4}",
                        r.threshold,
                        r.assignment.cluster_count(),
                        r.report.nmi
                    );
                }
                println!("sweep: {}", path.display());
            }
        }
        Command::Eval {
            assignment,
            data,
            out,
            opts,
        } => {
            let cfg = opts.resolve(RunConfig::default())?;
            let report = commands::cmd_eval(&cfg, &assignment, &data, out.as_deref())?;
            for (name, value) in report.rows() {
                println!("{name:>4} {value:.4}");
            }
        }
        Command::Gradcheck {
            seed,
            trials,
            corrupt,
        } => {
            let results = commands::cmd_gradcheck(seed, trials, corrupt)?;
            let mut ok = true;
            for r in &results {
                println!(
                    "{:<10} {:>6} coordinates  max relative error {:.3e}  (tolerance {:.0e})  {}",
                    r.suite,
                    r.coordinates,
                    r.max_error,
                    r.tolerance,
                    if r.passed() { "pass" } else { "FAIL" }
                );
                if !r.passed() {
                    println!("  worst coordinate: {}", r.worst);
                    ok = false;
                }
            }
            return Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            });
        }
    }
    Ok(ExitCode::SUCCESS)
}
