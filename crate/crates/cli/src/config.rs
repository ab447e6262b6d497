use std::fs;
use std::path::{Path, PathBuf};

use reducing_atlas::hecke::DEFAULT_SEED;
use reducing_atlas::symbol::SymbolSpec;
use reducing_atlas::Tolerances;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Analyze,
    Verify,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Analyze => "analyze",
            Stage::Verify => "verify",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub m_r: usize,
    pub m_theta: usize,
    pub r_max: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { m_r: 96, m_theta: 256, r_max: 0.995 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub symbol: SymbolSpec,
    /// Reported truncation size N per coordinate.
    pub truncation: usize,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Seeds the idempotent probe and the random homomorphism pairs.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Replaces the computed idempotents during verification, as `[re, im]` coefficients per orbit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject_idempotents: Option<Vec<Vec<[f64; 2]>>>,
}

fn default_stages() -> Vec<Stage> {
    vec![Stage::Analyze, Stage::Verify]
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.truncation < 8 {
            return bad(format!("truncation must be at least 8, got {}", self.truncation));
        }
        let q = &self.quadrature;
        if q.m_r < 16 || q.m_theta < 16 {
            return bad(format!("quadrature needs m_r, m_theta >= 16, got {} x {}", q.m_r, q.m_theta));
        }
        if !(q.r_max > 0.0 && q.r_max < 1.0) {
            return bad(format!("quadrature r_max must lie in (0, 1), got {}", q.r_max));
        }
        if self.symbol.factors.is_empty() {
            return bad("symbol has no factors".into());
        }
        self.tolerances.validate().map_err(CliError::Config)?;
        if self.stages.is_empty() {
            return bad("no stages requested".into());
        }
        Ok(())
    }

    /// Stages in execution order; `verify` requires `analyze`.
    pub fn plan(stages: &[Stage]) -> Result<Vec<Stage>, CliError> {
        let mut plan = stages.to_vec();
        plan.sort();
        plan.dedup();
        if plan.contains(&Stage::Verify) && !plan.contains(&Stage::Analyze) {
            return Err(CliError::MissingStage { stage: "verify", missing: "analyze" });
        }
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const Z2: &str = r#"{"symbol": {"factors": [{"zeros": [[0, 0], [0, 0]]}]}, "truncation": 16}"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_json(Z2).unwrap();
        assert_eq!(cfg.stages, vec![Stage::Analyze, Stage::Verify]);
        assert_eq!(cfg.quadrature, QuadratureConfig::default());
        assert_eq!(cfg.seed, DEFAULT_SEED);
    }

    #[test]
    fn rejects_small_truncation_and_grids() {
        let small = Z2.replace("16}", "4}");
        assert!(matches!(RunConfig::from_json(&small), Err(CliError::Config(_))));
        let grid = Z2.replace("16}", r#"16, "quadrature": {"m_r": 8, "m_theta": 64, "r_max": 0.9}}"#);
        assert!(RunConfig::from_json(&grid).is_err());
        let tol = Z2.replace("16}", r#"16, "tolerances": {"verification": 0}}"#);
        assert!(RunConfig::from_json(&tol).is_err());
        let unknown = Z2.replace("16}", r#"16, "colour": 1}"#);
        assert!(RunConfig::from_json(&unknown).is_err());
    }

    #[test]
    fn verify_alone_is_missing_a_stage() {
        assert!(matches!(RunConfig::plan(&[Stage::Verify]), Err(CliError::MissingStage { .. })));
        assert_eq!(
            RunConfig::plan(&[Stage::Verify, Stage::Analyze, Stage::Verify]).unwrap(),
            vec![Stage::Analyze, Stage::Verify]
        );
    }
}
