use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::asset_manager::{Request, Scope};
use crate::config::Config;
use crate::identification::{AnswerLevel, DEFAULT_MATCH_THRESHOLD};
use crate::ledger::{ConsensusConfig, DEFAULT_ALPHA, DEFAULT_CONFIRMATION_THRESHOLD};
use crate::metadata::EventKind;
use crate::proxy::Direction;
use crate::Tick;

pub const TENANT_KEYS: &str = include_str!("../../data/scenarios/tenant-keys.toml");
pub const ATTACK_SWEEP: &str = include_str!("../../data/scenarios/attack-sweep.toml");

/// Scenarios shipped with the crate, addressable by name.
pub fn bundled_scenario(name: &str) -> Option<&'static str> {
    match name {
        "tenant-keys" => Some(TENANT_KEYS),
        "attack-sweep" => Some(ATTACK_SWEEP),
        _ => None,
    }
}

fn default_scan_noise() -> f64 {
    0.5
}

fn default_match_threshold() -> f64 {
    DEFAULT_MATCH_THRESHOLD
}

fn default_min_confidence() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    #[default]
    Full,
    Ring,
    Line,
    Star,
}

impl Topology {
    pub fn edges(self, n: usize) -> Vec<(usize, usize)> {
        match self {
            Topology::Full => (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect(),
            Topology::Line => (1..n).map(|b| (b - 1, b)).collect(),
            Topology::Ring if n > 2 => (0..n).map(|a| (a, (a + 1) % n)).collect(),
            Topology::Ring => Topology::Line.edges(n),
            Topology::Star => (1..n).map(|b| (0, b)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub nodes: usize,
    #[serde(default)]
    pub topology: Topology,
    #[serde(default)]
    pub serving: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            nodes: 1,
            topology: Topology::Full,
            serving: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusSpec {
    #[serde(default = "default_threshold")]
    pub confirmation_threshold: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_threshold() -> u64 {
    DEFAULT_CONFIRMATION_THRESHOLD
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

impl Default for ConsensusSpec {
    fn default() -> Self {
        ConsensusSpec {
            confirmation_threshold: DEFAULT_CONFIRMATION_THRESHOLD,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl ConsensusSpec {
    pub fn to_config(&self) -> ConsensusConfig {
        ConsensusConfig {
            confirmation_threshold: self.confirmation_threshold,
            alpha: self.alpha,
            ..ConsensusConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifecycleEvent {
    pub tick: Tick,
    pub kind: EventKind,
    pub actor: String,
    #[serde(default)]
    pub fields: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerSpec {
    pub variable: String,
    pub threshold: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetSpec {
    pub name: String,
    pub class: String,
    pub owner: String,
    /// Ledger node the mint is submitted at.
    #[serde(default)]
    pub node: usize,
    /// Ticks at which the asset is scanned. The first scan mints.
    pub scans: Vec<Tick>,
    pub features: BTreeMap<String, f64>,
    /// Attribute answers by question id. Questions left out are answered
    /// from the class's own likelihoods.
    #[serde(default)]
    pub answers: BTreeMap<String, AnswerLevel>,
    #[serde(default)]
    pub events: Vec<LifecycleEvent>,
    #[serde(default)]
    pub triggers: Vec<TriggerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "UPPERCASE", deny_unknown_fields)]
pub enum ScriptAction {
    Grant {
        owner: String,
        user: String,
        asset: String,
        scope: Vec<Scope>,
    },
    Revoke {
        owner: String,
        user: String,
        asset: String,
    },
    Query {
        user: String,
        asset: String,
        request: Request,
    },
    Transfer {
        owner: String,
        new_owner: String,
        asset: String,
        #[serde(default)]
        node: Option<usize>,
    },
}

impl ScriptAction {
    pub fn asset(&self) -> &str {
        match self {
            ScriptAction::Grant { asset, .. }
            | ScriptAction::Revoke { asset, .. }
            | ScriptAction::Query { asset, .. }
            | ScriptAction::Transfer { asset, .. } => asset,
        }
    }

    fn actors(&self) -> Vec<&str> {
        match self {
            ScriptAction::Grant { owner, user, .. } | ScriptAction::Revoke { owner, user, .. } => vec![owner, user],
            ScriptAction::Query { user, .. } => vec![user],
            ScriptAction::Transfer { owner, new_owner, .. } => vec![owner, new_owner],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub tick: Tick,
    #[serde(flatten)]
    pub action: ScriptAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub fractions: Vec<f64>,
    pub rounds: u64,
    pub seeds: u64,
    #[serde(default = "default_honest")]
    pub honest_nodes: usize,
}

fn default_honest() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub ticks: Tick,
    /// Path to a catalog file, relative to the scenario. The bundled
    /// catalog is used when absent.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    #[serde(default = "default_match_threshold")]
    pub match_threshold: f64,
    /// Scan noise in units of each feature's sigma.
    #[serde(default = "default_scan_noise")]
    pub scan_noise: f64,
    #[serde(default = "default_min_confidence")]
    pub min_confidence: f64,
    #[serde(default)]
    pub adapt_policies: bool,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub consensus: ConsensusSpec,
    /// Per class: state name to maximum estimate stddev.
    #[serde(default)]
    pub qod: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub actors: Vec<String>,
    #[serde(default)]
    pub assets: Vec<AssetSpec>,
    #[serde(default)]
    pub script: Vec<ScriptStep>,
    #[serde(default)]
    pub attack: Option<AttackSpec>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    /// Reads a scenario file, or one of the bundled scenarios when `path`
    /// names one and no such file exists.
    pub fn load(path: &Path) -> Result<(Self, Option<PathBuf>), HarnessError> {
        if !path.exists() {
            if let Some(text) = path.to_str().and_then(bundled_scenario) {
                return Ok((Self::from_toml_str(text)?, None));
            }
        }
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let s = Self::from_toml_str(&text)?;
        Ok((s, path.parent().map(Path::to_path_buf)))
    }

    pub fn load_config(&self, base: Option<&Path>) -> Result<Config, HarnessError> {
        match &self.catalog {
            None => Ok(Config::bundled()),
            Some(p) => {
                let p = base.map_or_else(|| p.clone(), |b| b.join(p));
                Config::load(&p).map_err(|e| HarnessError::Validation(e.to_string()))
            }
        }
    }

    /// Checks cross references against `config`.
    pub fn validate(&self, config: &Config) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Validation(m));
        if self.network.nodes == 0 {
            return bad("network.nodes must be at least 1".into());
        }
        if self.network.serving >= self.network.nodes {
            return bad(format!("network.serving {} is not a node", self.network.serving));
        }
        let consensus = ConsensusConfig {
            confirmation_threshold: self.consensus.confirmation_threshold,
            alpha: self.consensus.alpha,
            ..ConsensusConfig::default()
        };
        if let Err(e) = consensus.validate() {
            return bad(format!("consensus: {e}"));
        }
        if !(self.match_threshold > 0.0 && self.match_threshold.is_finite()) {
            return bad(format!("match_threshold must be positive, got {}", self.match_threshold));
        }
        if !(self.scan_noise >= 0.0 && self.scan_noise.is_finite()) {
            return bad(format!("scan_noise must be non-negative, got {}", self.scan_noise));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return bad(format!("min_confidence must lie in [0, 1], got {}", self.min_confidence));
        }
        let actors: BTreeSet<&str> = self.actors.iter().map(String::as_str).collect();
        let known_class = |c: &str| config.catalog.classes().iter().any(|e| e.label == c);
        for (class, bounds) in &self.qod {
            let Some(g) = config.models.get(class) else {
                return bad(format!("qod.{class}: no model for class"));
            };
            if let Err(e) = crate::proxy::QualityOfData::from_named(&g.model, bounds) {
                return bad(format!("qod.{class}: {e}"));
            }
        }
        let mut names = BTreeSet::new();
        for (i, a) in self.assets.iter().enumerate() {
            let at = format!("assets[{i}] `{}`", a.name);
            if !names.insert(a.name.as_str()) {
                return bad(format!("{at}: duplicate asset name"));
            }
            if !known_class(&a.class) {
                return bad(format!("{at}: class `{}` is not in the catalog", a.class));
            }
            let Some(schema) = config.schemas.get(&a.class) else {
                return bad(format!("{at}: class `{}` has no feature schema", a.class));
            };
            if config.models.get(&a.class).is_none() {
                return bad(format!("{at}: class `{}` has no proxy model", a.class));
            }
            for def in &schema.features {
                if !a.features.contains_key(&def.name) {
                    return bad(format!("{at}: missing feature `{}`", def.name));
                }
            }
            if let Some(extra) = a.features.keys().find(|k| !schema.features.iter().any(|d| &d.name == *k)) {
                return bad(format!("{at}: feature `{extra}` is not in the `{}` schema", a.class));
            }
            if !actors.contains(a.owner.as_str()) {
                return bad(format!("{at}: owner `{}` is not a declared actor", a.owner));
            }
            if a.node >= self.network.nodes {
                return bad(format!("{at}: node {} is not in the network", a.node));
            }
            if a.scans.is_empty() {
                return bad(format!("{at}: at least one scan is required"));
            }
            if !a.scans.windows(2).all(|w| w[0] < w[1]) {
                return bad(format!("{at}: scans must be strictly increasing"));
            }
            if !a.events.windows(2).all(|w| w[0].tick <= w[1].tick) {
                return bad(format!("{at}: events must be sorted by tick"));
            }
            if let Some(e) = a.events.iter().find(|e| e.tick <= a.scans[0]) {
                return bad(format!("{at}: event at tick {} precedes the first scan", e.tick));
            }
            for q in a.answers.keys() {
                if config.catalog.question_index(q).is_none() {
                    return bad(format!("{at}: unknown question `{q}`"));
                }
            }
        }
        if !self.script.windows(2).all(|w| w[0].tick <= w[1].tick) {
            return bad("script steps must be sorted by tick".into());
        }
        for (i, s) in self.script.iter().enumerate() {
            let at = format!("script[{i}]");
            if !names.contains(s.action.asset()) {
                return bad(format!("{at}: unknown asset `{}`", s.action.asset()));
            }
            if let Some(a) = s.action.actors().into_iter().find(|a| !actors.contains(a)) {
                return bad(format!("{at}: `{a}` is not a declared actor"));
            }
            if let ScriptAction::Transfer { node: Some(n), .. } = s.action {
                if n >= self.network.nodes {
                    return bad(format!("{at}: node {n} is not in the network"));
                }
            }
        }
        if let Some(a) = &self.attack {
            if a.fractions.iter().any(|f| !(0.0..1.0).contains(f)) {
                return bad("attack.fractions must lie in [0, 1)".into());
            }
            if a.seeds == 0 || a.honest_nodes == 0 {
                return bad("attack.seeds and attack.honest_nodes must be positive".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_validate() {
        let config = Config::bundled();
        for name in ["tenant-keys", "attack-sweep"] {
            let s = Scenario::from_toml_str(bundled_scenario(name).unwrap()).unwrap();
            s.validate(&config).unwrap();
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Scenario::from_toml_str("name = \"x\"\nseed = 1\nticks = \"many\"\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn unknown_references_are_rejected() {
        let mut s = Scenario::from_toml_str(TENANT_KEYS).unwrap();
        s.assets[0].owner = "nobody".into();
        assert!(matches!(s.validate(&Config::bundled()), Err(HarnessError::Validation(_))));
        let mut s = Scenario::from_toml_str(TENANT_KEYS).unwrap();
        s.assets[0].class = "spoon".into();
        assert!(s.validate(&Config::bundled()).is_err());
        let mut s = Scenario::from_toml_str(TENANT_KEYS).unwrap();
        s.script.reverse();
        assert!(s.validate(&Config::bundled()).is_err());
    }

    #[test]
    fn topologies_are_connected() {
        for t in [Topology::Full, Topology::Ring, Topology::Line, Topology::Star] {
            let n = 5;
            let edges = t.edges(n);
            let mut seen = vec![false; n];
            seen[0] = true;
            for _ in 0..n {
                for &(a, b) in &edges {
                    if seen[a] || seen[b] {
                        seen[a] = true;
                        seen[b] = true;
                    }
                }
            }
            assert!(seen.iter().all(|s| *s), "{t:?}");
        }
    }
}
