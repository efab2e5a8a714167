//! Flag parsing and the merged run configuration.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ceo_rd::SourceModel;

use crate::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "ceo-rd",
    version,
    about = "Rate-distortion analysis for the symmetric Gaussian CEO problem"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Frontier point and matching conditions at one distortion level.
    Point(PointArgs),
    /// Frontier rows over a grid of distortion levels.
    Sweep(SweepArgs),
    /// Distortion profile d_j against j at a fixed d_k.
    Region(PointArgs),
    /// Matching conditions and the regime of the condition over the interval.
    Conditions(PointArgs),
    /// KKT certificate of the converse program, cross-checked numerically.
    Verify(VerifyArgs),
    /// Subset constraints of the achievable region at the symmetric rate.
    BtCheck(PointArgs),
    /// Monte Carlo distortions against the closed forms.
    Simulate(SimulateArgs),
    /// Monte Carlo check of the fictitious signal-noise decomposition.
    DecompCheck(DecompArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho_x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_z: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho_z: Option<f64>,
    #[arg(long)]
    pub ell: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct OutputArgs {
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report rates in bits instead of nats.
    #[arg(long)]
    pub bits: bool,
    /// A JSON object with any of the configuration fields; flags win.
    #[arg(long)]
    pub params_json: Option<String>,
}

#[derive(Args, Debug)]
pub struct PointArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub dk: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub dk_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub dk_max: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub dk: Option<f64>,
    /// Sub-dimension of the program; defaults to ell.
    #[arg(long)]
    pub j: Option<usize>,
    /// Absolute tolerance on KKT residuals.
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub dk: Option<f64>,
    /// Use this test-channel noise directly instead of solving from --dk.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_q: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, env = "CEO_RD_SEED")]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct DecompArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub j: Option<usize>,
    /// Defaults to half the upper end of the admissible interval.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_w: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_q: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub dk: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, env = "CEO_RD_SEED")]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(ValueEnum, Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Every parameter any command reads. Fields left unset fall back to the
/// command's default or produce a missing-parameter error.
#[derive(Serialize, Deserialize, Debug, Clone, Default, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gamma_x: Option<f64>,
    pub rho_x: Option<f64>,
    pub gamma_z: Option<f64>,
    pub rho_z: Option<f64>,
    pub ell: Option<usize>,
    pub k: Option<usize>,
    pub d_k: Option<f64>,
    pub dk_min: Option<f64>,
    pub dk_max: Option<f64>,
    pub steps: Option<usize>,
    pub j: Option<usize>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub lambda_q: Option<f64>,
    pub lambda_w: Option<f64>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub bits: Option<bool>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),*) => {
        RunConfig { $($field: $top.$field.or($base.$field)),* }
    };
}

impl RunConfig {
    /// Field-wise merge where `top` wins.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        overlay!(
            self, top, gamma_x, rho_x, gamma_z, rho_z, ell, k, d_k, dk_min, dk_max, steps, j, n,
            seed, tol, lambda_q, lambda_w, format, out, bits
        )
    }

    pub fn model(&self) -> Result<SourceModel, CliError> {
        Ok(SourceModel::new(
            need(self.gamma_x, "gamma-x")?,
            need(self.rho_x, "rho-x")?,
            need(self.gamma_z, "gamma-z")?,
            need(self.rho_z, "rho-z")?,
            need(self.ell, "ell")?,
        )?)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }

    pub fn bits(&self) -> bool {
        self.bits.unwrap_or(false)
    }
}

pub fn need<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Domain(format!("missing required parameter --{flag}")))
}

fn from_flags(model: &ModelArgs, output: &OutputArgs) -> RunConfig {
    RunConfig {
        gamma_x: model.gamma_x,
        rho_x: model.rho_x,
        gamma_z: model.gamma_z,
        rho_z: model.rho_z,
        ell: model.ell,
        format: output.format,
        out: output.out.clone(),
        bits: output.bits.then_some(true),
        ..RunConfig::default()
    }
}

fn merge(output: &OutputArgs, flags: RunConfig) -> Result<RunConfig, CliError> {
    let base = match &output.params_json {
        Some(text) => serde_json::from_str::<RunConfig>(text)
            .map_err(|e| CliError::Domain(format!("invalid --params-json: {e}")))?,
        None => RunConfig::default(),
    };
    Ok(base.overlay(flags))
}

impl PointArgs {
    pub fn config(&self) -> Result<RunConfig, CliError> {
        let flags = RunConfig {
            k: self.k,
            d_k: self.dk,
            ..from_flags(&self.model, &self.output)
        };
        merge(&self.output, flags)
    }
}

impl SweepArgs {
    pub fn config(&self) -> Result<RunConfig, CliError> {
        let flags = RunConfig {
            k: self.k,
            dk_min: self.dk_min,
            dk_max: self.dk_max,
            steps: self.steps,
            ..from_flags(&self.model, &self.output)
        };
        merge(&self.output, flags)
    }
}

impl VerifyArgs {
    pub fn config(&self) -> Result<RunConfig, CliError> {
        let flags = RunConfig {
            k: self.k,
            d_k: self.dk,
            j: self.j,
            tol: self.tol,
            ..from_flags(&self.model, &self.output)
        };
        merge(&self.output, flags)
    }
}

impl SimulateArgs {
    pub fn config(&self) -> Result<RunConfig, CliError> {
        let flags = RunConfig {
            k: self.k,
            d_k: self.dk,
            lambda_q: self.lambda_q,
            n: self.n,
            seed: self.seed,
            ..from_flags(&self.model, &self.output)
        };
        merge(&self.output, flags)
    }
}

impl DecompArgs {
    pub fn config(&self) -> Result<RunConfig, CliError> {
        let flags = RunConfig {
            j: self.j,
            lambda_w: self.lambda_w,
            lambda_q: self.lambda_q,
            k: self.k,
            d_k: self.dk,
            n: self.n,
            seed: self.seed,
            ..from_flags(&self.model, &self.output)
        };
        merge(&self.output, flags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_json() {
        let json: RunConfig = serde_json::from_str(r#"{"k": 2, "d_k": 0.7, "ell": 3}"#).unwrap();
        let flags = RunConfig {
            d_k: Some(0.75),
            ..RunConfig::default()
        };
        let merged = json.overlay(flags);
        assert_eq!(merged.k, Some(2));
        assert_eq!(merged.d_k, Some(0.75));
        assert_eq!(merged.ell, Some(3));
    }

    #[test]
    fn unknown_json_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"kk": 2}"#).is_err());
    }
}
