//! JSON run configuration: optional per-command blocks with defaults, so
//! every subcommand runs without a config file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sievelab::audit::LKind;
use sievelab::risk::TruthKind;
use sievelab::SievePriorConfig;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub prior: Option<SievePriorConfig>,
    #[serde(default)]
    pub posterior: Option<PosteriorBlock>,
    #[serde(default)]
    pub grid: Option<GridBlock>,
    #[serde(default)]
    pub audit: Option<AuditBlock>,
    #[serde(default)]
    pub penalty: Option<PenaltyBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorBlock {
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "polylog")]
    pub truth: TruthKind,
    #[serde(default = "n_default")]
    pub n: u64,
    /// Observed coordinates; defaults to the prior's k_max.
    #[serde(default)]
    pub j_obs: Option<usize>,
    /// Import regression data instead of simulating a sequence.
    #[serde(default)]
    pub import: Option<ImportBlock>,
}

impl Default for PosteriorBlock {
    fn default() -> Self {
        PosteriorBlock { beta: 1.0, truth: polylog(), n: n_default(), j_obs: None, import: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportBlock {
    pub path: String,
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default = "betas_default")]
    pub betas: Vec<f64>,
    #[serde(default = "ns_default")]
    pub ns: Vec<u64>,
    #[serde(default = "reps_default")]
    pub replicates: usize,
    #[serde(default = "polylog")]
    pub truth: TruthKind,
    #[serde(default = "ten")]
    pub m_mult: f64,
    #[serde(default = "one")]
    pub eps0: f64,
    #[serde(default = "tail_samples_default")]
    pub tail_samples: usize,
    /// Also estimate the all-ones pointwise risk per cell.
    #[serde(default = "yes")]
    pub pointwise: bool,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock {
            betas: betas_default(),
            ns: ns_default(),
            replicates: reps_default(),
            truth: polylog(),
            m_mult: 10.0,
            eps0: 1.0,
            tail_samples: tail_samples_default(),
            pointwise: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditBlock {
    #[serde(default = "betas_default")]
    pub betas: Vec<f64>,
    #[serde(default = "audit_n_default")]
    pub n: u64,
    #[serde(default = "one")]
    pub eps0: f64,
    #[serde(default = "one")]
    pub j0: f64,
    #[serde(default = "two")]
    pub m0: f64,
    #[serde(default = "m_default")]
    pub m: usize,
    #[serde(default = "ten")]
    pub c_report: f64,
    #[serde(default = "log_kind")]
    pub l_kind: LKind,
    #[serde(default = "half")]
    pub q_exp: f64,
    #[serde(default = "draws_default")]
    pub draws: usize,
    #[serde(default = "k_check_default")]
    pub k_check: usize,
    #[serde(default = "lambdas_default")]
    pub lambdas: Vec<f64>,
    /// Force eps_n = 0 (diagnostic; A1 must then fail).
    #[serde(default)]
    pub eps_zero: bool,
}

impl Default for AuditBlock {
    fn default() -> Self {
        AuditBlock {
            betas: betas_default(),
            n: audit_n_default(),
            eps0: 1.0,
            j0: 1.0,
            m0: 2.0,
            m: m_default(),
            c_report: 10.0,
            l_kind: LKind::Log,
            q_exp: 0.5,
            draws: draws_default(),
            k_check: k_check_default(),
            lambdas: lambdas_default(),
            eps_zero: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyBlock {
    #[serde(default = "penalty_lo")]
    pub lo: f64,
    #[serde(default = "penalty_hi")]
    pub hi: f64,
    #[serde(default = "penalty_points")]
    pub points: usize,
}

impl Default for PenaltyBlock {
    fn default() -> Self {
        PenaltyBlock { lo: 0.6, hi: 100.0, points: 400 }
    }
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn ten() -> f64 {
    10.0
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn polylog() -> TruthKind {
    TruthKind::Polylog
}
fn n_default() -> u64 {
    4096
}
fn audit_n_default() -> u64 {
    4096
}
fn betas_default() -> Vec<f64> {
    vec![1.0, 2.0]
}
fn ns_default() -> Vec<u64> {
    (9..=17).map(|p| 1u64 << p).collect()
}
fn reps_default() -> usize {
    200
}
fn tail_samples_default() -> usize {
    200
}
fn m_default() -> usize {
    6
}
fn draws_default() -> usize {
    100_000
}
fn k_check_default() -> usize {
    5000
}
fn lambdas_default() -> Vec<f64> {
    vec![0.5, 1.0, 5.0, 20.0]
}
fn log_kind() -> LKind {
    LKind::Log
}
fn penalty_lo() -> f64 {
    0.6
}
fn penalty_hi() -> f64 {
    100.0
}
fn penalty_points() -> usize {
    400
}

pub fn default_prior() -> SievePriorConfig {
    SievePriorConfig::new(1.0, 1.0, 1.0, 64, None).expect("default prior is valid")
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let raw = std::fs::read_to_string(p)
                    .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
                serde_json::from_str(&raw).map_err(|e| {
                    format!("config {}: line {}, column {}: {e}", p.display(), e.line(), e.column())
                })
            }
        }
    }

    pub fn resolved_seed(&self, cli_seed: Option<u64>) -> u64 {
        cli_seed.or(self.seed).unwrap_or(0)
    }

    pub fn prior_or_default(&self) -> SievePriorConfig {
        self.prior.clone().unwrap_or_else(default_prior)
    }

    /// Canonical single-line JSON of the resolved config plus seed; hashed
    /// into every output header.
    pub fn canonical(&self, seed: u64) -> (String, String) {
        let mut resolved = self.clone();
        resolved.seed = Some(seed);
        let json = serde_json::to_string(&resolved).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let hash = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>();
        (json, hash)
    }
}
