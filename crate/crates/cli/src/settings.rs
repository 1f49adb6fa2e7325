//! Solver settings from flags, an optional TOML file and per-problem defaults.
//!
//! Precedence, highest first: command-line flags, the config file, the
//! problem's own merit tolerance, built-in defaults.

use std::path::PathBuf;

use arcsearch::{BenchmarkEntry, RhsMode, SolverConfig, Variant};
use clap::Args;

use crate::UsageError;

pub const CONFIG_ENV: &str = "ARCSEARCH_CONFIG";

fn parse_variant(s: &str) -> Result<Variant, String> {
    let n: u8 = s.parse().map_err(|_| format!("variant must be 1, 2 or 3 (got '{s}')"))?;
    Variant::try_from(n)
}

#[derive(Args, Debug, Clone, Default)]
pub struct SolverFlags {
    /// Algorithm variant
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Merit tolerance
    #[arg(long, allow_negative_numbers = true)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Lower bound for the centering parameter
    #[arg(long, allow_negative_numbers = true)]
    pub sigma_bar: Option<f64>,
    /// Fraction of the current positive variables kept by a step
    #[arg(long, allow_negative_numbers = true)]
    pub delta1: Option<f64>,
    /// Sufficient-decrease constant of the merit test
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    /// Second-order right-hand side: full, third-free or naive
    #[arg(long)]
    pub rhs: Option<RhsMode>,
    /// TOML file with solver settings
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
}

/// Settings shared by every problem of one invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    base: SolverConfig,
    epsilon_pinned: bool,
    flags: SolverFlags,
}

impl Settings {
    pub fn load(flags: &SolverFlags) -> Result<Self, UsageError> {
        let (base, epsilon_pinned) = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
                let table: toml::Table =
                    toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
                let pinned = table.contains_key("epsilon");
                let cfg: SolverConfig = table
                    .try_into()
                    .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
                (cfg, pinned)
            }
            None => (SolverConfig::default(), false),
        };
        let settings = Self { base, epsilon_pinned: epsilon_pinned || flags.eps.is_some(), flags: flags.clone() };
        // reject bad flags before any problem is touched
        settings.resolve(None, None)?;
        Ok(settings)
    }

    pub fn variant(&self) -> Variant {
        self.flags.variant.unwrap_or(self.base.variant)
    }

    /// Configuration for one run; `variant` overrides the flag when given.
    pub fn config_for(&self, entry: &BenchmarkEntry, variant: Option<Variant>) -> Result<SolverConfig, UsageError> {
        self.resolve(Some(entry), variant)
    }

    fn resolve(&self, entry: Option<&BenchmarkEntry>, variant: Option<Variant>) -> Result<SolverConfig, UsageError> {
        let f = &self.flags;
        let mut cfg = self.base.clone();
        cfg.variant = variant.unwrap_or(self.variant());
        if !self.epsilon_pinned {
            if let Some(eps) = entry.and_then(|e| e.epsilon) {
                cfg.epsilon = eps;
            }
        }
        if let Some(v) = f.eps {
            cfg.epsilon = v;
        }
        if let Some(v) = f.max_iter {
            cfg.max_iter = v;
        }
        if let Some(v) = f.sigma_bar {
            cfg.sigma_bar = v;
        }
        if let Some(v) = f.delta1 {
            cfg.delta1 = v;
        }
        if let Some(v) = f.rho {
            cfg.rho = v;
        }
        if let Some(v) = f.rhs {
            cfg.rhs_mode = Some(v);
        }
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }
}
