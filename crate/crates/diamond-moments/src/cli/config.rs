//! Run configuration: a TOML file, overridden by command-line flags, resolved
//! against defaults and validated before dispatch.

use crate::disorder::DisorderModel;
use crate::maps::{FloatKind, PrecisionPolicy};
use crate::{Error, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Binary64,
    Extended,
}

/// Keys accepted in the config file. Every key is optional; unknown keys
/// are an error.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub b: Option<u32>,
    pub s: Option<u32>,
    pub m_max: Option<u32>,
    pub model: Option<String>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub r_step: Option<f64>,
    pub n_max_exp: Option<u32>,
    pub precision: Option<Precision>,
    pub tol_abs: Option<f64>,
    pub tol_rel: Option<f64>,
    pub series_tail_tol: Option<f64>,
    pub cross_tol: Option<f64>,
    pub pool_size: Option<usize>,
    pub generations: Option<u32>,
    pub mc_r: Option<f64>,
    pub beta: Option<f64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

/// Flags that override the file.
#[derive(Clone, Debug, Default, Args)]
pub struct Overrides {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub b: Option<u32>,
    #[arg(long, global = true)]
    pub s: Option<u32>,
    #[arg(long = "m-max", global = true)]
    pub m_max: Option<u32>,
    /// gaussian, rademacher, bernoulli:<p> or uniform.
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long = "r-min", global = true, allow_hyphen_values = true)]
    pub r_min: Option<f64>,
    #[arg(long = "r-max", global = true, allow_hyphen_values = true)]
    pub r_max: Option<f64>,
    #[arg(long = "r-step", global = true)]
    pub r_step: Option<f64>,
    /// Largest ladder exponent k, n = 2^k.
    #[arg(long = "n-max-exp", global = true)]
    pub n_max_exp: Option<u32>,
    #[arg(long = "pool-size", global = true)]
    pub pool_size: Option<usize>,
    #[arg(long, global = true)]
    pub generations: Option<u32>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Rayon worker count; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
}

/// Fully resolved settings. Serialized (in field order) for the config hash.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub b: u32,
    pub s: u32,
    pub m_max: u32,
    pub model: DisorderModel,
    pub r_min: f64,
    pub r_max: f64,
    pub r_step: f64,
    pub policy: PrecisionPolicy,
    pub pool_size: usize,
    pub generations: u32,
    /// Schedule offset `r` for the Monte-Carlo run.
    pub mc_r: f64,
    /// Explicit inverse temperature for the Monte-Carlo run.
    pub beta: Option<f64>,
    pub seed: u64,
    #[serde(skip)]
    pub workers: Option<usize>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

/// Commands that need `s = b`.
const CRITICAL: [&str; 5] = ["constants", "pm", "limits", "maps", "mc"];

impl RunConfig {
    pub fn load(command: &str, overrides: &Overrides) -> Result<Self> {
        let file = match &overrides.config {
            Some(path) => read_file(path)?,
            None => FileConfig::default(),
        };
        Self::resolve(command, file, overrides)
    }

    pub fn resolve(command: &str, file: FileConfig, o: &Overrides) -> Result<Self> {
        let b = o.b.or(file.b).unwrap_or(2);
        let model_text = o.model.clone().or(file.model).unwrap_or_else(|| "gaussian".into());
        let model: DisorderModel = model_text.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        let mut policy = PrecisionPolicy::default();
        if file.precision == Some(Precision::Binary64) {
            policy.float_kind = FloatKind::Binary64;
        }
        policy.ladder_max_exponent = o.n_max_exp.or(file.n_max_exp).unwrap_or(policy.ladder_max_exponent);
        policy.tol_abs = file.tol_abs.unwrap_or(policy.tol_abs);
        policy.tol_rel = file.tol_rel.unwrap_or(policy.tol_rel);
        policy.series_tail_tol = file.series_tail_tol.unwrap_or(policy.series_tail_tol);
        policy.cross_tol = file.cross_tol.unwrap_or(policy.cross_tol);
        let cfg = Self {
            command: command.to_string(),
            b,
            s: o.s.or(file.s).unwrap_or(b),
            m_max: o.m_max.or(file.m_max).unwrap_or(4),
            model,
            r_min: o.r_min.or(file.r_min).unwrap_or(-10.0),
            r_max: o.r_max.or(file.r_max).unwrap_or(0.0),
            r_step: o.r_step.or(file.r_step).unwrap_or(1.0),
            policy,
            pool_size: o.pool_size.or(file.pool_size).unwrap_or(100_000),
            generations: o.generations.or(file.generations).unwrap_or(64),
            mc_r: file.mc_r.unwrap_or(0.0),
            beta: file.beta,
            seed: o.seed.or(file.seed).unwrap_or(0),
            workers: o.workers.or(file.workers),
            out: o.out.clone().or(file.out),
            format: o.format.or(file.format).unwrap_or(OutputFormat::Csv),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.b < 2 || self.s < 2 {
            return bad(format!("need b >= 2 and s >= 2, got b={}, s={}", self.b, self.s));
        }
        if CRITICAL.contains(&self.command.as_str()) && self.s != self.b {
            return bad(format!("command {} requires s = b, got b={}, s={}", self.command, self.b, self.s));
        }
        if self.m_max < 2 {
            return bad(format!("m_max must be >= 2, got {}", self.m_max));
        }
        if !(self.r_step > 0.0) || !(self.r_min <= self.r_max) || !self.r_min.is_finite() || !self.r_max.is_finite() {
            return bad(format!("bad r grid [{}, {}] step {}", self.r_min, self.r_max, self.r_step));
        }
        if self.r_grid().len() > 100_000 {
            return bad("r grid has more than 100000 points".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be >= 1".into());
        }
        if let Some(beta) = self.beta {
            if !(beta >= 0.0 && beta.is_finite()) {
                return bad(format!("beta must be finite and >= 0, got {beta}"));
            }
        }
        self.policy.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// `r_min, r_min + r_step, ...` up to `r_max` (inclusive within rounding).
    pub fn r_grid(&self) -> Vec<f64> {
        let count = ((self.r_max - self.r_min) / self.r_step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.r_min + i as f64 * self.r_step).collect()
    }

    /// Hex SHA-256 of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn read_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let file: FileConfig = toml::from_str("b = 3\nm_max = 6\nmodel = \"rademacher\"\nseed = 4").unwrap();
        let o = Overrides { m_max: Some(5), ..Default::default() };
        let cfg = RunConfig::resolve("limits", file, &o).unwrap();
        assert_eq!((cfg.b, cfg.s, cfg.m_max, cfg.seed), (3, 3, 5, 4));
        assert_eq!(cfg.model, DisorderModel::Rademacher);
        assert_eq!(cfg.r_grid().len(), 11);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<FileConfig>("bb = 3").is_err());
    }

    #[test]
    fn critical_commands_need_s_equal_b() {
        let o = Overrides { s: Some(3), ..Default::default() };
        assert!(RunConfig::resolve("limits", FileConfig::default(), &o).is_err());
        assert!(RunConfig::resolve("verify", FileConfig::default(), &o).is_ok());
    }

    #[test]
    fn hash_tracks_settings() {
        let a = RunConfig::resolve("mc", FileConfig::default(), &Overrides::default()).unwrap();
        let mut o = Overrides { seed: Some(1), ..Default::default() };
        let b = RunConfig::resolve("mc", FileConfig::default(), &o).unwrap();
        assert_ne!(a.hash(), b.hash());
        o.seed = None;
        o.workers = Some(3);
        assert_eq!(a.hash(), RunConfig::resolve("mc", FileConfig::default(), &o).unwrap().hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn grid_is_inclusive() {
        let o = Overrides { r_min: Some(-1.0), r_max: Some(1.0), r_step: Some(0.1), ..Default::default() };
        let cfg = RunConfig::resolve("limits", FileConfig::default(), &o).unwrap();
        assert_eq!(cfg.r_grid().len(), 21);
    }
}
