use std::path::{Path, PathBuf};

use clap::Args;
use hmx_core::C64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Pass/fail thresholds used by the check commands and `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub commuting: f64,
    pub biorthogonality: f64,
    /// Largest allowed ratio between the scaled dual norms of two meshes.
    pub dual_norm_spread: f64,
    pub pythagoras: f64,
    pub orthogonality: f64,
    pub gradient_part: f64,
    pub exact_sequence: f64,
    pub curl_of_gradient: f64,
    pub bound_slack: f64,
    pub transfer: f64,
    /// Upper limit for the normalized Caccioppoli ratio.
    pub caccioppoli: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            commuting: 1e-12,
            biorthogonality: 1e-12,
            dual_norm_spread: 2.0,
            pythagoras: 1e-10,
            orthogonality: 1e-10,
            gradient_part: 1e-9,
            exact_sequence: 1e-10,
            curl_of_gradient: 1e-12,
            bound_slack: hmx_core::inverse::BOUND_SLACK,
            transfer: hmx_core::inverse::TRANSFER_TOLERANCE,
            caccioppoli: 0.72,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<(), CliError> {
        let all = [
            ("commuting", self.commuting),
            ("biorthogonality", self.biorthogonality),
            ("dual_norm_spread", self.dual_norm_spread),
            ("pythagoras", self.pythagoras),
            ("orthogonality", self.orthogonality),
            ("gradient_part", self.gradient_part),
            ("exact_sequence", self.exact_sequence),
            ("curl_of_gradient", self.curl_of_gradient),
            ("bound_slack", self.bound_slack),
            ("transfer", self.transfer),
            ("caccioppoli", self.caccioppoli),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::Config(format!("tolerance {name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Subdivisions per axis.
    pub n: usize,
    /// Edge length of the cube.
    pub side: f64,
    pub kappa_re: f64,
    pub kappa_im: f64,
    pub eta: f64,
    pub n_leaf: usize,
    pub ranks: Vec<usize>,
    pub seed: u64,
    pub out: PathBuf,
    /// Output subdirectory; defaults to the command name.
    pub name: Option<String>,
    /// Largest N for which a dense inverse is formed.
    pub dense_limit: usize,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 5,
            side: 1.0,
            kappa_re: 1.0,
            kappa_im: 0.0,
            eta: 2.0,
            n_leaf: 32,
            ranks: vec![1, 2, 4, 8, 12, 16, 20],
            seed: 0,
            out: PathBuf::from("runs"),
            name: None,
            dense_limit: 8000,
            tolerances: Tolerances::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn kappa(&self) -> C64 {
        C64::new(self.kappa_re, self.kappa_im)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if !(self.side.is_finite() && self.side > 0.0) {
            return bad(format!("side must be positive, got {}", self.side));
        }
        if !(self.kappa_re.is_finite() && self.kappa_im.is_finite()) {
            return bad("kappa must be finite".into());
        }
        if self.kappa_re == 0.0 && self.kappa_im == 0.0 {
            return bad("kappa must be nonzero".into());
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if self.n_leaf == 0 {
            return bad("n_leaf must be at least 1".into());
        }
        if self.ranks.is_empty() || self.ranks.contains(&0) {
            return bad("ranks must be a nonempty list of positive integers".into());
        }
        if self.dense_limit == 0 {
            return bad("dense_limit must be at least 1".into());
        }
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
                return bad(format!("invalid experiment name {name:?}"));
            }
        }
        self.tolerances.validate()
    }

    pub fn dir(&self, command: &str) -> PathBuf {
        self.out.join(self.name.as_deref().unwrap_or(command))
    }
}

/// Flags shared by every command. Values given here override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON config file; flags win over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Subdivisions per axis [default: 5]
    #[arg(long)]
    pub n: Option<usize>,
    /// Cube edge length [default: 1]
    #[arg(long)]
    pub side: Option<f64>,
    /// Real part of kappa [default: 1]
    #[arg(long, allow_negative_numbers = true)]
    pub kappa_re: Option<f64>,
    /// Imaginary part of kappa [default: 0]
    #[arg(long, allow_negative_numbers = true)]
    pub kappa_im: Option<f64>,
    /// Admissibility parameter [default: 2]
    #[arg(long)]
    pub eta: Option<f64>,
    /// Leaf size of the cluster tree [default: 32]
    #[arg(long)]
    pub n_leaf: Option<usize>,
    /// Comma-separated ranks [default: 1,2,4,8,12,16,20]
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    /// Seed for random inputs [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output root [default: runs]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output subdirectory [default: command name]
    #[arg(long)]
    pub name: Option<String>,
    /// Largest N for dense inverses [default: 8000]
    #[arg(long)]
    pub dense_limit: Option<usize>,
}

impl ConfigArgs {
    /// Reads the config file (if any), applies flag overrides and validates.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => read_config(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = &self.$f { cfg.$f = v.clone(); })* };
        }
        set!(n, side, kappa_re, kappa_im, eta, n_leaf, ranks, seed, out, dense_limit);
        if let Some(name) = &self.name {
            cfg.name = Some(name.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))
}
