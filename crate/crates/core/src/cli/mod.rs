//! Command-line front end: argument parsing, TOML configuration with
//! `--set section.key=value` overrides, and the subcommand runners.

mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::scenarios;

pub use run::run;

/// Exit codes of the binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const SOLVER: i32 = 2;
    pub const PROPERTIES: i32 = 3;
}

#[derive(Debug, Parser)]
#[command(name = "levy-rbdsde", version, about = "Reflected BDSDEs driven by Teugels martingales")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Start from a built-in scenario's defaults (ignored with --config).
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    /// Override a value, e.g. `--set grid.n_steps=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Replaces `monte_carlo.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Caps worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Replaces `outputs.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Orthonormal polynomial basis of the configured Lévy measure.
    Basis,
    /// Simulate paths of B, L, the Teugels martingales and A.
    Simulate,
    /// Simulate the reflected forward process and check invariance.
    Reflect,
    /// Solve the configured problem.
    Solve,
    /// Penalized solves over `solver.n_list`, with the direct scheme as reference.
    Sweep,
    /// Property suite on a fresh solve or on a saved solution.
    Verify {
        /// Solution CSV as written by `solve`.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Estimate u(t, x) on the configured surface grid.
    Surface,
    /// Single-atom Poisson example: martingale checks and the scalar-solver comparison.
    ExamplePoisson,
    /// List the built-in scenarios, or print one as a configuration.
    Scenarios {
        #[arg(long)]
        show: Option<String>,
    },
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies one `section.key=value` override to a parsed document.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::validation("--set", format!("expected KEY=VALUE, got '{spec}'")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::validation("--set", format!("bad key '{path}'")));
    }
    let mut table = doc;
    for key in &keys[..keys.len() - 1] {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::validation("--set", format!("'{key}' is not a section")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Parses a configuration document after applying the overrides.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::validation("config", e.message().to_string()))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let cfg: ExperimentConfig = doc
        .try_into()
        .map_err(|e: toml::de::Error| Error::validation("config", e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn to_toml(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("configuration serializes")
}

/// Resolves the configuration from the common arguments.
pub fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let text = match (&args.config, &args.scenario) {
        (Some(path), _) => std::fs::read_to_string(path)
            .map_err(|e| Error::validation("--config", format!("{}: {e}", path.display())))?,
        (None, Some(name)) => to_toml(&scenarios::default_config(name)?),
        (None, None) => return Err(Error::validation("config", "pass --config FILE or --scenario NAME")),
    };
    let mut cfg = parse_config(&text, &args.overrides)?;
    if let Some(seed) = args.seed {
        cfg.monte_carlo.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.outputs.dir = out.display().to_string();
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_scenario_round_trips_through_toml() {
        for name in scenarios::names() {
            let cfg = scenarios::default_config(name).unwrap();
            let back = parse_config(&to_toml(&cfg), &[]).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
    }

    #[test]
    fn overrides_replace_values() {
        let text = to_toml(&scenarios::default_config("linear-ode").unwrap());
        let cfg = parse_config(&text, &["grid.n_steps=50".into(), "solver.scheme=\"penalized\"".into()]).unwrap();
        assert_eq!(cfg.grid.n_steps, 50);
        assert_eq!(cfg.solver.scheme, crate::config::SchemeKind::Penalized);
        let bare = parse_config(&text, &["solver.scheme=direct".into()]).unwrap();
        assert_eq!(bare.solver.scheme, crate::config::SchemeKind::Direct);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = to_toml(&scenarios::default_config("linear-ode").unwrap());
        let err = parse_config(&text, &["grid.bogus=1".into()]).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn out_of_range_values_name_the_key() {
        let text = to_toml(&scenarios::default_config("linear-ode").unwrap());
        let err = parse_config(&text, &["grid.n_steps=0".into()]).unwrap_err();
        assert!(err.to_string().contains("grid.n_steps"));
    }
}
