use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "crysplas", about = "Single-plane crystal plasticity energies, laminates and oracles", disable_version_flag = true)]
pub struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Print toolkit and format versions.
    #[arg(short = 'V', long)]
    pub version: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

/// Parameter overrides; a flag always wins over the config file.
#[derive(Args, Debug, Default, Serialize)]
pub struct Overrides {
    /// Systems preset (`fcc4`, `ortho2`).
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub systems: Option<String>,
    /// Hardening exponent.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Elastic growth exponent.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[arg(long = "eps-reg", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_reg: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Slip-system checks.
    Systems {
        #[command(subcommand)]
        action: SystemsCmd,
    },
    /// Energy functionals.
    Energy {
        #[command(subcommand)]
        action: EnergyCmd,
    },
    /// Single-slip laminates.
    Laminate {
        #[command(subcommand)]
        action: LaminateCmd,
    },
    /// Alternating minimisation of the single-plane linearised energy.
    Minimize(MinimizeArgs),
    /// Property oracles.
    Oracle {
        #[command(subcommand)]
        action: OracleCmd,
    },
    /// The two worked examples.
    Example {
        #[command(subcommand)]
        action: ExampleCmd,
    },
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case", tag = "action")]
pub enum SystemsCmd {
    /// Unit normals, in-plane Burgers vectors, independent normals.
    Validate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Nonlinear,
    Linear,
    Relaxed,
    Regularized,
    Lb,
    Ub1,
    Undulating,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElasticArg {
    Linear,
    Nonlinear,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case", tag = "action")]
pub enum EnergyCmd {
    /// Evaluate one functional on the configured fields.
    Eval {
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Elastic term of the relaxed and bound functionals.
        #[arg(long, value_enum, default_value = "linear")]
        elastic: ElasticArg,
        /// Constant lamination weight for `undulating` (default: config).
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
    },
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case", tag = "action")]
pub enum LaminateCmd {
    /// Build the level-n laminate of the configured slip field.
    Build {
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        level: Option<u32>,
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
    },
    /// Plastic energy of the laminates against the predicted limit.
    Study {
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        from: Option<u32>,
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        to: Option<u32>,
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
    },
}

#[derive(Args, Debug, Serialize)]
pub struct MinimizeArgs {
    /// Shear boundary amplitude (replaces the configured boundary).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct SuiteArgs {
    /// Random fields in the suite (ignored when the config names fields).
    #[arg(long, default_value_t = 100)]
    pub count: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct PairArgs {
    /// The two planes playing the roles of 1 and 2.
    #[arg(long, num_args = 2, default_values_t = [0, 1])]
    pub planes: Vec<usize>,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case", tag = "oracle")]
pub enum OracleCmd {
    /// cof(∇y F_pl⁻¹) = cof(∇y) F_plᵀ.
    Cof(SuiteArgs),
    /// |div s| ≤ 2|∇_{m⊥} s| at every node.
    Div(SuiteArgs),
    /// Adapted-frame curl lower bound.
    Curl {
        #[command(flatten)]
        suite: SuiteArgs,
        #[command(flatten)]
        pair: PairArgs,
    },
    /// Slice-wise exclusion inequality on a box cover.
    Exclusion {
        #[command(flatten)]
        suite: SuiteArgs,
        #[command(flatten)]
        pair: PairArgs,
        /// Crafted infeasible fields that must be rejected.
        #[arg(long, default_value_t = 10)]
        infeasible: usize,
        /// In-plane box extent.
        #[arg(long, default_value_t = 0.35)]
        l: f64,
        /// Mixing-set threshold.
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
    },
    /// E_lb ≤ E_ub⁽¹⁾ on single-plane fields.
    Chain(SuiteArgs),
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case", tag = "example")]
pub enum ExampleCmd {
    /// Swap of dominant Burgers direction across x2 = 0.
    Ex41 {
        #[arg(long = "X", default_value_t = 10.0)]
        x: f64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Nodes along x2 (odd).
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        nodes: Option<usize>,
    },
    /// Two crossing shear bands, one cut off (hardening exponent from
    /// `--p`, default 1).
    Ex52 {
        /// Band widths (default 1/8, 1/16, 1/32, 1/64).
        #[arg(long, num_args = 1..)]
        #[serde(skip_serializing_if = "Option::is_none")]
        widths: Option<Vec<f64>>,
        /// Cross-section grid spacing.
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        h: Option<f64>,
    },
}
