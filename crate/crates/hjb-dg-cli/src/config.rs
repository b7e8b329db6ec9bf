//! Run configuration: a TOML manifest with one section per concern. Unknown
//! keys are rejected and a parsed config serialises back to a normalized
//! manifest that parses to the same value.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Problem registry key: `exp1-anisotropic-sup`, `exp2-heat`,
    /// `heat-singleton` or `poly-exact`.
    pub problem: String,
    /// Control samples for problems with a nontrivial control set.
    #[serde(default = "default_controls")]
    pub controls: usize,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub degrees: DegreeConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    #[serde(default)]
    pub solver: SolverTolerances,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_controls() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase", tag = "kind")]
pub enum MeshConfig {
    /// `4^k` uniform squares of width `2^-k`.
    Uniform { k: u32 },
    /// Boundary-graded mesh with the given number of refinement passes.
    Graded { levels: u32 },
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self::Uniform { k: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase", tag = "kind")]
pub enum DegreeConfig {
    Constant { p: usize },
    /// `p = base` on the finest (boundary) cells, increasing by one per
    /// coarser refinement ring.
    Graded { base: usize },
}

impl Default for DegreeConfig {
    fn default() -> Self {
        Self::Constant { p: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default = "default_time_kind")]
    pub kind: TimeKind,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Grading factor for geometric partitions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Horizon; defaults to the problem's natural horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "default_q_rule")]
    pub q: QRuleConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeKind {
    Uniform,
    Geometric,
}

fn default_time_kind() -> TimeKind {
    TimeKind::Uniform
}

fn default_n() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QRuleConfig {
    Constant(usize),
    Rule(QRuleName),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QRuleName {
    Linear,
}

fn default_q_rule() -> QRuleConfig {
    QRuleConfig::Constant(1)
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            kind: default_time_kind(),
            n: default_n(),
            sigma: None,
            horizon: None,
            q: default_q_rule(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    #[serde(default = "default_c_s")]
    pub c_s: f64,
    #[serde(default = "default_sigma_penalty")]
    pub sigma: f64,
}

fn default_c_s() -> f64 {
    2.5
}

fn default_sigma_penalty() -> f64 {
    1.0
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            c_s: default_c_s(),
            sigma: default_sigma_penalty(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverTolerances {
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_newton_tol() -> f64 {
    1e-10
}

fn default_max_iters() -> usize {
    30
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self {
            newton_tol: default_newton_tol(),
            max_iters: default_max_iters(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Mesh levels `k` of the convergence sweep.
    #[serde(default = "default_ks")]
    pub ks: Vec<u32>,
    /// `tau = h` or `tau = 2h` for the convergence sweep.
    #[serde(default = "default_tau_rule")]
    pub tau_rule: TauRule,
    /// Temporal interval counts of the tau-q sweep.
    #[serde(default = "default_ns")]
    pub ns: Vec<usize>,
    /// Cap on the per-computation mesh grading level of the tau-q sweep.
    #[serde(default = "default_mesh_cap")]
    pub mesh_cap: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TauRule {
    #[serde(rename = "h")]
    EqualsH,
    #[serde(rename = "2h")]
    TwiceH,
}

fn default_ks() -> Vec<u32> {
    vec![1, 2, 3, 4]
}

fn default_tau_rule() -> TauRule {
    TauRule::EqualsH
}

fn default_ns() -> Vec<usize> {
    vec![2, 3, 4, 5, 6]
}

fn default_mesh_cap() -> u32 {
    4
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            ks: default_ks(),
            tau_rule: default_tau_rule(),
            ns: default_ns(),
            mesh_cap: default_mesh_cap(),
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).context("parsing config")?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if !hjb_dg::problem::REGISTRY_KEYS.contains(&self.problem.as_str()) {
            bail!(
                "unknown problem '{}'; known problems: {}",
                self.problem,
                hjb_dg::problem::REGISTRY_KEYS.join(", ")
            );
        }
        if self.controls == 0 {
            bail!("controls must be positive");
        }
        if self.time.kind == TimeKind::Geometric && self.time.sigma.is_none() {
            bail!("geometric time grading needs sigma");
        }
        match self.mesh {
            MeshConfig::Uniform { k } if k == 0 || k > 7 => {
                bail!("uniform mesh level k must be in 1..=7 (memory guard)")
            }
            MeshConfig::Graded { levels } if levels == 0 || levels > 8 => {
                bail!("graded mesh levels must be in 1..=8 (memory guard)")
            }
            _ => {}
        }
        Ok(())
    }

    /// Normalized manifest: serialising and re-parsing yields an equal value.
    pub fn to_normalized_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_identity() {
        let cfg = RunConfig::from_str(
            r#"
problem = "exp1-anisotropic-sup"
controls = 16

[mesh]
kind = "uniform"
k = 3

[degrees]
kind = "constant"
p = 3

[time]
kind = "geometric"
n = 4
sigma = 0.2
horizon = 0.05
q = "linear"
"#,
        )
        .unwrap();
        let normalized = cfg.to_normalized_toml();
        let reparsed = RunConfig::from_str(&normalized).unwrap();
        assert_eq!(cfg, reparsed);
        assert_eq!(normalized, reparsed.to_normalized_toml());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_str("problem = \"exp2-heat\"\nnot_a_key = 1\n");
        assert!(err.is_err());
        let err = RunConfig::from_str("problem = \"exp2-heat\"\n[mesh]\nkind = \"uniform\"\nk = 2\nwat = 3\n");
        assert!(err.is_err());
    }

    #[test]
    fn geometric_requires_sigma() {
        let err = RunConfig::from_str(
            "problem = \"exp2-heat\"\n[time]\nkind = \"geometric\"\nn = 3\n",
        );
        assert!(err.is_err());
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_str("problem = \"heat-singleton\"\n").unwrap();
        assert_eq!(cfg.controls, 32);
        assert_eq!(cfg.penalty.c_s, 2.5);
        assert_eq!(cfg.mesh, MeshConfig::Uniform { k: 2 });
        assert_eq!(cfg.solver.newton_tol, 1e-10);
    }
}
