//! Run configuration: a TOML file, defaults, and command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::environment::{InterferenceKernel, ModelDescriptor};
use crate::error::{Error, Result};
use crate::estimator::QMode;
use crate::geometry::exact_sqrt;
use crate::partition::ClusteringMode;
use crate::policy::{learning_rates, PolicyConfig, PolicyKind};

/// Policies the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    #[serde(alias = "sb")]
    SwitchbackExp3ix,
    #[serde(alias = "cr")]
    Exp3HtIx,
    #[serde(alias = "fixed")]
    FixedArm,
}

impl PolicyName {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyName::SwitchbackExp3ix => "switchback-exp3ix",
            PolicyName::Exp3HtIx => "exp3-ht-ix",
            PolicyName::FixedArm => "fixed-arm",
        }
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "switchback-exp3ix" | "switchback" | "sb" => Ok(PolicyName::SwitchbackExp3ix),
            "exp3-ht-ix" | "cr" => Ok(PolicyName::Exp3HtIx),
            "fixed-arm" | "fixed" => Ok(PolicyName::FixedArm),
            other => Err(Error::Config(format!("unknown policy `{other}`"))),
        }
    }
}

/// Parses a comma-separated policy list.
pub fn parse_policies(s: &str) -> Result<Vec<PolicyName>> {
    let list = s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<Result<Vec<_>>>()?;
    if list.is_empty() {
        return Err(Error::Config("empty policy list".into()));
    }
    Ok(list)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NRuleName {
    #[serde(rename = "t2")]
    Square,
    #[serde(rename = "t3")]
    Cube,
}

/// How the number of units follows the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NRule {
    Fixed(usize),
    Rule(NRuleName),
}

impl NRule {
    pub const SQUARE: NRule = NRule::Rule(NRuleName::Square);
    pub const CUBE: NRule = NRule::Rule(NRuleName::Cube);

    /// Lattice side for horizon `t`: `T` for `N = T²`, `round(T^1.5)` for
    /// `N = T³` (the nearest perfect square), `√N` for a fixed square `N`.
    pub fn side(&self, t: usize) -> Result<usize> {
        match self {
            NRule::Rule(NRuleName::Square) => Ok(t),
            NRule::Rule(NRuleName::Cube) => Ok((t as f64).powf(1.5).round() as usize),
            NRule::Fixed(n) => {
                exact_sqrt(*n).ok_or_else(|| Error::Config(format!("N = {n} is not a positive perfect square")))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            NRule::Rule(NRuleName::Square) => "t2".into(),
            NRule::Rule(NRuleName::Cube) => "t3".into(),
            NRule::Fixed(n) => n.to_string(),
        }
    }
}

impl FromStr for NRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "t2" | "t^2" | "square" => Ok(NRule::SQUARE),
            "t3" | "t^3" | "cube" => Ok(NRule::CUBE),
            other => other
                .parse()
                .map(NRule::Fixed)
                .map_err(|_| Error::Config(format!("unknown N rule `{other}`; use t2, t3 or a perfect square"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellSideRuleName {
    /// `ℓ = N^{1/4}`, giving `√N` clusters.
    QuarterRoot,
    /// `ℓ = N^{-1/4}` taken literally; below the unit spacing.
    InverseQuarterRoot,
}

/// Cluster side length for EXP3-HT-IX.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellSide {
    Fixed(f64),
    Rule(CellSideRuleName),
}

impl CellSide {
    pub fn resolve(&self, n: usize) -> f64 {
        match self {
            CellSide::Fixed(l) => *l,
            CellSide::Rule(CellSideRuleName::QuarterRoot) => (n as f64).powf(0.25),
            CellSide::Rule(CellSideRuleName::InverseQuarterRoot) => (n as f64).powf(-0.25),
        }
    }
}

impl FromStr for CellSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "quarter-root" => Ok(CellSide::Rule(CellSideRuleName::QuarterRoot)),
            "inverse-quarter-root" => Ok(CellSide::Rule(CellSideRuleName::InverseQuarterRoot)),
            other => other
                .parse()
                .map(CellSide::Fixed)
                .map_err(|_| Error::Config(format!("unknown cell side `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvironmentVariant {
    LatticeNeighbor,
    LowerBound,
    UniformConstant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentConfig {
    pub variant: EnvironmentVariant,
    /// Interference range of the lattice-neighbor model.
    pub kappa: f64,
    /// Kernel of the lower-bound instance.
    pub kernel: InterferenceKernel,
    /// Reward of the uniform-constant model.
    pub value: f64,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            variant: EnvironmentVariant::LatticeNeighbor,
            kappa: 2.0,
            kernel: InterferenceKernel::KappaNeighborhood { kappa: 1.0 },
            value: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySettings {
    /// Learning rate; `√(ln k/(kT))` when absent.
    pub eta: Option<f64>,
    /// IX offset; `√(ℓ²/(kNT) ln(1/δ))` when absent.
    pub beta: Option<f64>,
    pub cell_side: CellSide,
    /// Exposure radius and partition margin; 1 when `ℓ > 2`, else `ℓ/4`.
    pub radius: Option<f64>,
    pub clustering: ClusteringMode,
    pub q_mode: QMode,
    pub fixed_partition: bool,
    pub fixed_arm: usize,
}

impl Default for PolicySettings {
    fn default() -> Self {
        Self {
            eta: None,
            beta: None,
            cell_side: CellSide::Rule(CellSideRuleName::QuarterRoot),
            radius: None,
            clustering: ClusteringMode::Robust,
            q_mode: QMode::Marginal,
            fixed_partition: false,
            fixed_arm: 0,
        }
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub horizons: Vec<usize>,
    pub n_rule: NRule,
    pub arms: usize,
    pub instances: usize,
    pub reps: usize,
    /// `δ` of the reported `δ`-VaR.
    pub var_level: f64,
    /// Confidence parameter in the default `β`.
    pub delta: f64,
    /// Worker threads; 0 lets the pool decide. Does not affect results.
    pub threads: usize,
    pub out: PathBuf,
    pub policies: Vec<PolicyName>,
    pub environment: EnvironmentConfig,
    pub policy: PolicySettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            horizons: vec![10, 20, 30],
            n_rule: NRule::SQUARE,
            arms: 2,
            instances: 50,
            reps: 100,
            var_level: 0.05,
            delta: 0.05,
            threads: 0,
            out: PathBuf::from("out"),
            policies: vec![PolicyName::SwitchbackExp3ix, PolicyName::Exp3HtIx],
            environment: EnvironmentConfig::default(),
            policy: PolicySettings::default(),
        }
    }
}

/// Command-line overrides; `None` keeps the file or default value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub policies: Option<Vec<PolicyName>>,
    pub horizons: Option<Vec<usize>>,
    pub n_rule: Option<NRule>,
    pub instances: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub simplified_clustering: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn apply(mut self, o: &Overrides) -> Result<Self> {
        if let Some(p) = &o.policies {
            self.policies = p.clone();
        }
        if let Some(h) = &o.horizons {
            self.horizons = h.clone();
        }
        if let Some(n) = o.n_rule {
            self.n_rule = n;
        }
        if let Some(i) = o.instances {
            self.instances = i;
        }
        if let Some(r) = o.reps {
            self.reps = r;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(t) = o.threads {
            self.threads = t;
        }
        if o.simplified_clustering {
            self.policy.clustering = ClusteringMode::Simplified;
        }
        self.validate()?;
        Ok(self)
    }

    /// Checks everything that can fail before work starts, including the
    /// geometry of every horizon.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.instances == 0 || self.reps == 0 {
            return bad("instances and reps must be at least 1".into());
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return bad("horizons must be a non-empty list of positive integers".into());
        }
        if self.arms == 0 {
            return bad("need at least one arm".into());
        }
        if self.policies.is_empty() {
            return bad("no policies selected".into());
        }
        if !(self.var_level > 0.0 && self.var_level < 1.0) {
            return bad(format!("var_level must lie in (0, 1), got {}", self.var_level));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.environment.variant == EnvironmentVariant::LowerBound && self.arms != 2 {
            return bad("the lower-bound environment needs arms = 2".into());
        }
        for &t in &self.horizons {
            let resolved = self.resolve(t).map_err(|e| match e {
                Error::Config(m) => Error::Config(m),
                other => Error::Config(format!("T = {t}: {other}")),
            })?;
            for name in &self.policies {
                resolved.policy(*name)?.validate(self.arms).map_err(|e| Error::Config(format!("T = {t}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Resolves the per-horizon quantities.
    pub fn resolve(&self, horizon: usize) -> Result<Resolved> {
        let side = self.n_rule.side(horizon)?;
        if side == 0 {
            return Err(Error::Config(format!("N rule gives no units at T = {horizon}")));
        }
        let descriptor = match self.environment.variant {
            EnvironmentVariant::LatticeNeighbor => ModelDescriptor::LatticeNeighbor { side, kappa: self.environment.kappa },
            EnvironmentVariant::LowerBound => {
                ModelDescriptor::LowerBound { n: side * side, kernel: self.environment.kernel.clone() }
            }
            EnvironmentVariant::UniformConstant => {
                ModelDescriptor::UniformConstant { side, value: self.environment.value }
            }
        };
        let units = match self.environment.variant {
            EnvironmentVariant::LowerBound => (4 * side + 1) * (4 * side + 1),
            _ => side * side,
        };
        Ok(Resolved { horizon, units, descriptor, config: self.clone() })
    }
}

/// Quantities for one horizon.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub horizon: usize,
    /// Number of units in the environment's universe.
    pub units: usize,
    pub descriptor: ModelDescriptor,
    config: RunConfig,
}

impl Resolved {
    pub fn policy(&self, name: PolicyName) -> Result<PolicyConfig> {
        let c = &self.config;
        let s = &c.policy;
        let (kind, n, ell) = match name {
            PolicyName::FixedArm => (PolicyKind::FixedArm { arm: s.fixed_arm }, 1, 1.0),
            PolicyName::SwitchbackExp3ix => (PolicyKind::SwitchbackExp3ix, 1, 1.0),
            PolicyName::Exp3HtIx => {
                let ell = s.cell_side.resolve(self.units);
                let radius = s.radius.unwrap_or(if ell > 2.0 { 1.0 } else { ell / 4.0 });
                (PolicyKind::Exp3HtIx { cell_side: ell, radius, clustering: s.clustering }, self.units, ell)
            }
        };
        let (eta, beta) = learning_rates(c.arms, self.horizon, n, ell, c.delta).map_err(|e| Error::Config(e.to_string()))?;
        Ok(PolicyConfig {
            kind,
            eta: s.eta.unwrap_or(eta),
            beta: s.beta.unwrap_or(beta),
            q_mode: s.q_mode,
            fixed_partition: s.fixed_partition,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_desk_scale() {
        let c = RunConfig::default();
        assert_eq!((c.horizons.clone(), c.instances, c.reps), (vec![10, 20, 30], 50, 100));
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            seed = 9
            horizons = [10, 20]
            n_rule = "t3"
            instances = 3
            reps = 4
            policies = ["switchback-exp3ix", "exp3-ht-ix"]

            [environment]
            variant = "lattice-neighbor"
            kappa = 1.0

            [policy]
            cell_side = 4.0
            radius = 1.5
            clustering = "simplified"
        "#;
        let c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.n_rule, NRule::CUBE);
        assert_eq!(c.policy.cell_side, CellSide::Fixed(4.0));
        assert_eq!(c.policy.clustering, ClusteringMode::Simplified);
        let again = RunConfig::from_toml(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(RunConfig::from_toml("instances = 0"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("n_rule = 10"), Err(Error::Config(_))));
        let text = "[policy]\ncell_side = 2.0\nradius = 1.0";
        assert!(matches!(RunConfig::from_toml(text), Err(Error::Config(_))));
    }

    #[test]
    fn n_rules() {
        assert_eq!(NRule::SQUARE.side(10).unwrap(), 10);
        assert_eq!(NRule::CUBE.side(10).unwrap(), 32);
        assert_eq!(NRule::Fixed(49).side(10).unwrap(), 7);
        assert_eq!("t3".parse::<NRule>().unwrap(), NRule::CUBE);
        assert_eq!("400".parse::<NRule>().unwrap(), NRule::Fixed(400));
        assert!("t4".parse::<NRule>().is_err());
    }

    #[test]
    fn policy_resolution() {
        let c = RunConfig::default();
        let r = c.resolve(16).unwrap();
        assert_eq!(r.units, 256);
        let cr = r.policy(PolicyName::Exp3HtIx).unwrap();
        match cr.kind {
            PolicyKind::Exp3HtIx { cell_side, radius, .. } => assert_eq!((cell_side, radius), (4.0, 1.0)),
            other => panic!("{other:?}"),
        }
        let sb = r.policy(PolicyName::SwitchbackExp3ix).unwrap();
        assert!((sb.eta - (2f64.ln() / 32.0).sqrt()).abs() < 1e-15);
        assert!((sb.beta - (20f64.ln() / 32.0).sqrt()).abs() < 1e-15);
        assert_eq!(parse_policies("sb,cr").unwrap(), vec![PolicyName::SwitchbackExp3ix, PolicyName::Exp3HtIx]);
    }
}
