//! Run configuration: flat key-value files with flag overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fsv::model::{PriorConfig, RestrictionPattern};
use fsv::gibbs::SamplerConfig;

use crate::error::CliError;

/// Restriction pattern choices exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestrictionKind {
    LowerTriangular,
    Unrestricted,
}

impl RestrictionKind {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "lower-triangular" => Ok(Self::LowerTriangular),
            "unrestricted" => Ok(Self::Unrestricted),
            other => Err(CliError::Config(format!(
                "unknown restriction {other:?}; use lower-triangular or unrestricted"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::LowerTriangular => "lower-triangular",
            Self::Unrestricted => "unrestricted",
        }
    }

    pub fn pattern(&self, m: usize, r: usize) -> RestrictionPattern {
        match self {
            Self::LowerTriangular => RestrictionPattern::lower_triangular(m, r),
            Self::Unrestricted => RestrictionPattern::unrestricted(m, r),
        }
    }
}

/// Everything a fit run needs; defaults follow the reference prior choices.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: PathBuf,
    pub out_dir: PathBuf,
    pub demean: bool,
    pub factors: usize,
    pub restriction: RestrictionKind,
    pub draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub interweaving: String,
    pub seed: u64,
    pub store_latents: bool,
    pub track_invariants: bool,
    pub priors: PriorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            out_dir: PathBuf::from("fsv-draws"),
            demean: false,
            factors: 1,
            restriction: RestrictionKind::LowerTriangular,
            draws: 10_000,
            burn_in: 1_000,
            thin: 1,
            interweaving: "deep".to_string(),
            seed: 1,
            store_latents: false,
            track_invariants: false,
            priors: PriorConfig::default(),
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!("{key} expects a boolean, got {v:?}"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Config(format!("{key} cannot parse {v:?}")))
}

impl RunConfig {
    /// Parses a flat `key = value` file (comments start with `#`). Unknown
    /// keys are rejected except the manifest-only provenance keys, which
    /// are ignored so a manifest can be fed back in directly.
    pub fn from_key_values(map: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        for (key, v) in map {
            match key.as_str() {
                "input" => cfg.input = PathBuf::from(v),
                "out_dir" => cfg.out_dir = PathBuf::from(v),
                "demean" => cfg.demean = parse_bool(key, v)?,
                "factors" => cfg.factors = parse_num(key, v)?,
                "restriction" => cfg.restriction = RestrictionKind::parse(v)?,
                "draws" => cfg.draws = parse_num(key, v)?,
                "burn_in" => cfg.burn_in = parse_num(key, v)?,
                "thin" => cfg.thin = parse_num(key, v)?,
                "interweaving" => cfg.interweaving = v.clone(),
                "seed" => cfg.seed = parse_num(key, v)?,
                "store_latents" => cfg.store_latents = parse_bool(key, v)?,
                "track_invariants" => cfg.track_invariants = parse_bool(key, v)?,
                "prior_mu_mean" => cfg.priors.mu_mean = parse_num(key, v)?,
                "prior_mu_var" => cfg.priors.mu_var = parse_num(key, v)?,
                "prior_phi_a" => cfg.priors.phi_a = parse_num(key, v)?,
                "prior_phi_b" => cfg.priors.phi_b = parse_num(key, v)?,
                "prior_sigma_scale" => cfg.priors.sigma_scale = parse_num(key, v)?,
                "prior_loading_var" => cfg.priors.loading_var = parse_num(key, v)?,
                "prior_aux_level_var" => cfg.priors.aux_level_var = parse_num(key, v)?,
                // Provenance keys written by `write_draws`.
                "version" | "stored_draws" | "series" | "time_points" | "deep_proposals"
                | "deep_accepts" | "max_mean_drift" | "max_ratio_drift" => {}
                other => {
                    return Err(CliError::Config(format!("unknown config key {other:?}")))
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let map = read_key_values(path)?;
        Self::from_key_values(&map)
    }

    /// Serializes the run-defining keys (the reproducibility core of a
    /// manifest).
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "input = {}", self.input.display());
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(s, "demean = {}", self.demean);
        let _ = writeln!(s, "factors = {}", self.factors);
        let _ = writeln!(s, "restriction = {}", self.restriction.name());
        let _ = writeln!(s, "draws = {}", self.draws);
        let _ = writeln!(s, "burn_in = {}", self.burn_in);
        let _ = writeln!(s, "thin = {}", self.thin);
        let _ = writeln!(s, "interweaving = {}", self.interweaving);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "store_latents = {}", self.store_latents);
        let _ = writeln!(s, "track_invariants = {}", self.track_invariants);
        let _ = writeln!(s, "prior_mu_mean = {}", fmt_f64(self.priors.mu_mean));
        let _ = writeln!(s, "prior_mu_var = {}", fmt_f64(self.priors.mu_var));
        let _ = writeln!(s, "prior_phi_a = {}", fmt_f64(self.priors.phi_a));
        let _ = writeln!(s, "prior_phi_b = {}", fmt_f64(self.priors.phi_b));
        let _ = writeln!(s, "prior_sigma_scale = {}", fmt_f64(self.priors.sigma_scale));
        let _ = writeln!(s, "prior_loading_var = {}", fmt_f64(self.priors.loading_var));
        let _ = writeln!(
            s,
            "prior_aux_level_var = {}",
            fmt_f64(self.priors.aux_level_var)
        );
        s
    }

    /// The sampler-level configuration once the data dimensions are known.
    pub fn sampler_config(&self, m: usize) -> Result<SamplerConfig, CliError> {
        if self.factors > m {
            return Err(CliError::Config(format!(
                "factors = {} exceeds the {m} series in the data",
                self.factors
            )));
        }
        Ok(SamplerConfig {
            draws: self.draws,
            burn_in: self.burn_in,
            thin: self.thin,
            interweaving: self.interweaving.clone(),
            restriction: self.restriction.pattern(m, self.factors),
            rng_seed: self.seed,
            store_latents: self.store_latents,
            track_invariants: self.track_invariants,
        })
    }
}

/// 17-significant-digit serialization; round-trips every finite f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads a flat `key = value` file.
pub fn read_key_values(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "{}:{}: expected `key = value`, got {line:?}",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}
