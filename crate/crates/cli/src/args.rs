//! Command-line grammar and the resolved run configuration.

use std::path::PathBuf;

use bayesmet::measurement::Completion;
use bayesmet::moments::DEFAULT_NODES;
use bayesmet::operators::DEFAULT_NULL_TOL;
use bayesmet::simulate::{DEFAULT_ENUMERATION_CAP, DEFAULT_MC_SAMPLES};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "bayesmet",
    version,
    about = "Bayesian multi-parameter quantum metrology: single-shot bounds, optimal measurements and repeated-shot simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Quantum estimators, 𝒦, Σ_q, the scalar bound and the Cramér-Rao comparison.
    Bound(BoundArgs),
    /// μ-shot mean square error curve of the posterior-mean estimator.
    Simulate(SimulateArgs),
    /// Sweep one model parameter and tabulate the bound.
    Scan(ScanArgs),
    /// Validate a POVM and score it by Tr(𝒲Σ_c).
    PovmCheck(PovmCheckArgs),
    /// List the built-in models.
    Presets(OutputArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Qubit,
    GlobalImaging,
    LocalImaging,
    TwoPhase,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Qubit => "qubit",
            Preset::GlobalImaging => "global-imaging",
            Preset::LocalImaging => "local-imaging",
            Preset::TwoPhase => "two-phase",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
#[group(id = "source", required = true, multiple = false)]
pub struct SourceArgs {
    /// Built-in model.
    #[arg(long, value_enum, group = "source")]
    pub preset: Option<Preset>,
    /// Model file (bayesmet-model-v1 JSON).
    #[arg(long, group = "source")]
    pub model: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Probe parameter γ of the qubit network.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Number of imaged phases.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Mean photon number n̄.
    #[arg(long, default_value_t = 4)]
    pub nbar: u32,
    /// Reference-mode amplitude α of the global imaging probe.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Photon number N of the local imaging modes (defaults to n̄).
    #[arg(long = "big-n")]
    pub big_n: Option<u32>,
    /// Accept n̄ < 4 for the imaging presets.
    #[arg(long)]
    pub allow_wide_prior: bool,
    /// Gauss-Legendre nodes per parameter for the prior averages.
    #[arg(long, default_value_t = DEFAULT_NODES)]
    pub nodes: usize,
    /// Relative eigenvalue cutoff defining the support of ρ.
    #[arg(long, default_value_t = DEFAULT_NULL_TOL)]
    pub null_tol: f64,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Write the artifact here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Args, Debug, Clone)]
pub struct PovmArgs {
    /// `auto` (common eigenbasis of the estimators), `two-phase`, or a POVM file.
    #[arg(long, default_value = "auto")]
    pub povm: String,
    /// How an incomplete POVM is completed.
    #[arg(long, value_enum, default_value_t = CompletionArg::Residual)]
    pub completion: CompletionArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CompletionArg {
    Residual,
    Renormalize,
}

impl From<CompletionArg> for Completion {
    fn from(c: CompletionArg) -> Self {
        match c {
            CompletionArg::Residual => Completion::Residual,
            CompletionArg::Renormalize => Completion::Renormalize,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct BoundArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub povm: PovmArgs,
    /// Posterior grid nodes per parameter (default 101 for d ≤ 2, 31 for d = 3).
    #[arg(long)]
    pub grid_nodes: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    pub mc_samples: usize,
    /// Enumerate exactly when outcomes^μ is at most this.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    pub enumeration_cap: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated repetition counts (default 1,2,5,…,1000).
    #[arg(long, value_delimiter = ',')]
    pub mu: Option<Vec<usize>>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ScanParam {
    #[value(name = "gamma")]
    #[serde(rename = "gamma")]
    Gamma,
    #[value(name = "alpha")]
    #[serde(rename = "alpha")]
    Alpha,
    #[value(name = "N", alias = "n", alias = "big-n")]
    #[serde(rename = "N")]
    BigN,
    #[value(name = "d")]
    #[serde(rename = "d")]
    D,
}

#[derive(Args, Debug, Clone)]
pub struct ScanArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Parameter to sweep.
    #[arg(long, value_enum)]
    pub param: ScanParam,
    /// Start of the sweep (default depends on the parameter).
    #[arg(long)]
    pub from: Option<f64>,
    /// End of the sweep, inclusive.
    #[arg(long)]
    pub to: Option<f64>,
    /// Step of the sweep.
    #[arg(long)]
    pub step: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct PovmCheckArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub povm: PovmArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Everything that determines an artifact, echoed into it.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub model: ModelSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub povm: Option<PovmSource>,
    pub nodes: usize,
    pub null_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSettings>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub allow_wide_prior: bool,
    pub threads: Option<usize>,
    pub version: &'static str,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSource {
    Preset {
        name: Preset,
        #[serde(skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        d: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        nbar: Option<u32>,
        #[serde(skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        big_n: Option<u32>,
    },
    File {
        path: PathBuf,
    },
    None,
}

#[derive(Clone, Debug, Serialize)]
pub struct PovmSource {
    pub source: String,
    pub completion: Completion,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationSettings {
    pub grid_nodes: Option<usize>,
    pub mc_samples: usize,
    pub enumeration_cap: u64,
    pub seed: u64,
    pub mu: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanSettings {
    pub param: ScanParam,
    pub values: Vec<f64>,
}

impl ModelArgs {
    pub fn source(&self) -> ModelSource {
        if let Some(path) = &self.source.model {
            return ModelSource::File { path: path.clone() };
        }
        let name = self.source.preset.expect("clap enforces one model source");
        let (gamma, d, nbar, alpha, big_n) = match name {
            Preset::Qubit => (Some(self.gamma), None, None, None, None),
            Preset::GlobalImaging => (None, Some(self.d), Some(self.nbar), Some(self.alpha), None),
            Preset::LocalImaging => (
                None,
                Some(self.d),
                Some(self.nbar),
                None,
                Some(self.big_n.unwrap_or(self.nbar)),
            ),
            Preset::TwoPhase => (None, None, None, None, None),
        };
        ModelSource::Preset {
            name,
            gamma,
            d,
            nbar,
            alpha,
            big_n,
        }
    }
}
