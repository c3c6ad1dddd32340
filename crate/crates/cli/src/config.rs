//! Command-line flags, the optional TOML config file, and their merge.
//!
//! Precedence is flag, then config file, then built-in default.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use graph_recon::evaluation::{FoldScheme, HyperGrid, DEFAULT_GREEDY_DENSITY};
use graph_recon::reconstruction::MethodKind;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "graph-recon", version, about = "Learn sensor graphs and reconstruct unobserved nodes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a graph (or one per cluster) and write the model.
    Learn(CommonArgs),
    /// Cross-validate a method over a hyperparameter grid.
    Cv(CommonArgs),
    /// Fill the missing cells of a CSV with a learned model.
    Reconstruct {
        #[command(flatten)]
        common: CommonArgs,
        /// Model written by `learn`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Ward clustering of the nodes.
    Cluster(CommonArgs),
    /// Reconstruction error against the share of available nodes.
    SemiEval {
        #[command(flatten)]
        common: CommonArgs,
        /// Availability percentages in (0, 100].
        #[arg(long, value_delimiter = ',')]
        percentages: Vec<f64>,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Simulate a drifting sensor and its reconstruction.
    DriftSim {
        #[command(flatten)]
        common: CommonArgs,
        /// Node id or column index of the drifting sensor.
        #[arg(long)]
        target: Option<String>,
        /// Nondecreasing noise standard deviations, one per test segment.
        #[arg(long, value_delimiter = ',')]
        sigmas: Vec<f64>,
        /// Nodes hidden together with the target.
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<String>,
        #[arg(long)]
        train_fraction: Option<f64>,
    },
    /// Print a summary of a dataset.
    Info(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML file with defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV: a `timestamp` column followed by one column per node.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<MethodKind>,
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub beta: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub mu: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub sigma2: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lambda: Vec<f64>,
    /// Cluster count, or `auto` for the best Calinski-Harabasz score.
    #[arg(long)]
    pub clusters: Option<Clusters>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Contiguous folds in time order instead of shuffled rows.
    #[arg(long)]
    pub temporal: bool,
    /// Fix the graph by edge density first, then search the method grid.
    #[arg(long)]
    pub greedy: bool,
    /// Target edge density of `--greedy`.
    #[arg(long)]
    pub density: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clusters {
    Count(usize),
    Auto,
}

impl FromStr for Clusters {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        match s.parse::<usize>() {
            Ok(c) if c >= 1 => Ok(Self::Count(c)),
            _ => Err(format!("expected a positive integer or `auto`, got {s:?}")),
        }
    }
}

impl fmt::Display for Clusters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Count(c) => write!(f, "{c}"),
            Self::Auto => f.write_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for Clusters {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(c) => Clusters::from_str(&c.to_string()),
            Raw::Text(s) => Clusters::from_str(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// Contents of `--config`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub method: Option<String>,
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub k: Option<Vec<usize>>,
    pub mu: Option<Vec<f64>>,
    pub sigma2: Option<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
    pub clusters: Option<Clusters>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub temporal: Option<bool>,
    pub greedy: Option<bool>,
    pub density: Option<f64>,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub percentages: Option<Vec<f64>>,
    pub reps: Option<usize>,
    pub target: Option<String>,
    pub sigmas: Option<Vec<f64>>,
    pub exclude: Option<Vec<String>>,
    pub train_fraction: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Flags merged over the config file.
#[derive(Debug, Clone)]
pub struct Settings {
    pub data: Option<PathBuf>,
    pub method: MethodKind,
    pub alphas: Option<Vec<f64>>,
    pub betas: Option<Vec<f64>>,
    pub ks: Option<Vec<usize>>,
    pub mus: Option<Vec<f64>>,
    pub sigma2s: Option<Vec<f64>>,
    pub lambdas: Option<Vec<f64>>,
    pub clusters: Option<Clusters>,
    pub seed: u64,
    pub folds: usize,
    pub scheme: FoldScheme,
    pub greedy_density: Option<f64>,
    pub out: PathBuf,
    pub model: Option<PathBuf>,
    pub percentages: Vec<f64>,
    pub reps: usize,
    pub target: Option<String>,
    pub sigmas: Option<Vec<f64>>,
    pub exclude: Vec<String>,
    pub train_fraction: f64,
}

pub const DEFAULT_PERCENTAGES: [f64; 9] = [20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 95.0];

fn list<T>(flag: Vec<T>, file: Option<Vec<T>>) -> Option<Vec<T>> {
    if flag.is_empty() {
        file
    } else {
        Some(flag)
    }
}

/// Per-subcommand flags that are not in [`CommonArgs`].
#[derive(Debug, Default)]
pub struct Extra {
    pub model: Option<PathBuf>,
    pub percentages: Vec<f64>,
    pub reps: Option<usize>,
    pub target: Option<String>,
    pub sigmas: Vec<f64>,
    pub exclude: Vec<String>,
    pub train_fraction: Option<f64>,
}

impl Settings {
    pub fn resolve(args: CommonArgs, extra: Extra) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let method = match (args.method, &file.method) {
            (Some(m), _) => m,
            (None, Some(s)) => s.parse().map_err(|e: graph_recon::Error| CliError::Usage(e.to_string()))?,
            (None, None) => MethodKind::LapInt,
        };
        let greedy = args.greedy || file.greedy.unwrap_or(false);
        let density = args.density.or(file.density).unwrap_or(DEFAULT_GREEDY_DENSITY);
        if greedy && !(density > 0.0 && density <= 1.0) {
            return Err(CliError::Usage(format!("density {density} is outside (0, 1]")));
        }
        let temporal = args.temporal || file.temporal.unwrap_or(false);
        let percentages = list(extra.percentages, file.percentages).unwrap_or_else(|| DEFAULT_PERCENTAGES.to_vec());
        Ok(Self {
            data: args.data.or(file.data),
            method,
            alphas: list(args.alpha, file.alpha),
            betas: list(args.beta, file.beta),
            ks: list(args.k, file.k),
            mus: list(args.mu, file.mu),
            sigma2s: list(args.sigma2, file.sigma2),
            lambdas: list(args.lambda, file.lambda),
            clusters: args.clusters.or(file.clusters),
            seed: args.seed.or(file.seed).unwrap_or(0),
            folds: args.folds.or(file.folds).unwrap_or(5),
            scheme: if temporal { FoldScheme::Temporal } else { FoldScheme::Shuffled },
            greedy_density: greedy.then_some(density),
            out: args.out.or(file.out).unwrap_or_else(|| PathBuf::from(".")),
            model: extra.model.or(file.model),
            percentages,
            reps: extra.reps.or(file.reps).unwrap_or(10),
            target: extra.target.or(file.target),
            sigmas: list(extra.sigmas, file.sigmas),
            exclude: list(extra.exclude, file.exclude).unwrap_or_default(),
            train_fraction: extra.train_fraction.or(file.train_fraction).unwrap_or(0.66),
        })
    }

    pub fn data(&self) -> Result<&Path, CliError> {
        self.data.as_deref().ok_or_else(|| CliError::Usage("--data is required".into()))
    }

    /// The default grid for `n` nodes with every given list substituted.
    pub fn grid(&self, n: usize) -> HyperGrid {
        let mut grid = HyperGrid::default_for(n);
        if let Some(v) = &self.alphas {
            grid.alphas = v.clone();
        }
        if let Some(v) = &self.betas {
            grid.betas = v.clone();
        }
        if let Some(v) = &self.ks {
            grid.ks = v.clone();
        }
        if let Some(v) = &self.mus {
            grid.mus = v.clone();
        }
        if let Some(v) = &self.sigma2s {
            grid.sigma2s = v.clone();
        }
        if let Some(v) = &self.lambdas {
            grid.lambdas = v.clone();
        }
        grid
    }
}
