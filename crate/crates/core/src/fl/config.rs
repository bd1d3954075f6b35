//! Experiment configuration, read from TOML.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::model::Architecture;
use crate::adversary::AttackSpec;
use crate::robust::DEFAULT_Z;
use crate::secagg::{DropPoint, GraphMode};

/// Schema version written into summaries and transcript indexes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub epochs: usize,
    #[serde(default)]
    pub clients: ClientsConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub defense: DefenseConfig,
    #[serde(default)]
    pub attack: AttackSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClientsConfig {
    pub n: usize,
    pub byzantine_fraction: f64,
}

impl Default for ClientsConfig {
    fn default() -> Self {
        ClientsConfig {
            n: 50,
            byzantine_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub hidden: usize,
    pub learning_rate: f64,
    /// 0 uses the whole shard.
    pub batch_size: usize,
    /// Per-coordinate bound applied to every local update.
    pub update_clip: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            architecture: Architecture::LogisticRegression,
            hidden: 45,
            learning_rate: 0.1,
            batch_size: 16,
            update_clip: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    pub classes: usize,
    pub dim: usize,
    pub per_client: usize,
    pub test_count: usize,
    pub separation: f64,
    pub heterogeneity: f64,
    pub path: Option<PathBuf>,
    pub has_header: bool,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synthetic,
            classes: 2,
            dim: 20,
            per_client: 40,
            test_count: 1000,
            separation: 1.0,
            heterogeneity: 0.0,
            path: None,
            has_header: false,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Full,
    Neighbor,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Masked three-round aggregation.
    #[default]
    Secure,
    /// Plain mean of the updates, for reference trajectories.
    Plaintext,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Per-cluster aggregation that yields the cluster means.
    Cluster,
    /// Final aggregation over benign-marked clients.
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedDropout {
    pub epoch: usize,
    pub stage: Stage,
    pub client: u32,
    pub point: DropPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub aggregation: AggregationMode,
    pub graph: GraphKind,
    /// Degree in neighbor mode; defaults to `2 * ceil(log2 n)`.
    pub degree: Option<usize>,
    pub threshold: Option<usize>,
    pub scale_bits: u32,
    pub dropouts: Vec<ScriptedDropout>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            aggregation: AggregationMode::Secure,
            graph: GraphKind::Auto,
            degree: None,
            threshold: None,
            scale_bits: crate::fixed::DEFAULT_SCALE_BITS,
            dropouts: Vec::new(),
        }
    }
}

impl ProtocolConfig {
    pub fn graph_mode(&self) -> GraphMode {
        match (self.graph, self.degree) {
            (GraphKind::Full, _) => GraphMode::Full,
            (_, Some(k)) => GraphMode::Neighbor(k),
            (_, None) => GraphMode::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefenseConfig {
    pub enabled: bool,
    pub clusters: usize,
    /// Explicit `eta`; when absent, `eta = z * sqrt(mean cluster size)`.
    pub eta: Option<f64>,
    pub z: f64,
    pub phi_max: f64,
    pub delta: f64,
    pub s_m_assumed: f64,
    /// Sampled correctness proofs on the masked updates.
    pub correctness_checks: bool,
    /// Magnitude monitor bound on decoded mean aggregates; absent disables it.
    pub magnitude_bound: Option<f64>,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig {
            enabled: true,
            clusters: 7,
            eta: None,
            z: DEFAULT_Z,
            phi_max: 0.25,
            delta: 0.005,
            s_m_assumed: 0.1,
            correctness_checks: true,
            magnitude_bound: Some(10.0),
        }
    }
}

/// A field-level configuration problem.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

fn bad(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| bad("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn byzantine_count(&self) -> usize {
        (self.clients.byzantine_fraction * self.clients.n as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.clients.n;
        if n < 2 {
            return Err(bad("clients.n", format!("need at least 2 clients, got {n}")));
        }
        if n > u32::MAX as usize - 1 {
            return Err(bad("clients.n", "too many clients"));
        }
        if !(0.0..1.0).contains(&self.clients.byzantine_fraction) {
            return Err(bad("clients.byzantine_fraction", "must lie in [0, 1)"));
        }
        if self.epochs == 0 {
            return Err(bad("epochs", "must be positive"));
        }
        let m = &self.model;
        if !(m.learning_rate > 0.0 && m.learning_rate.is_finite()) {
            return Err(bad("model.learning_rate", "must be positive"));
        }
        if !(m.update_clip > 0.0 && m.update_clip.is_finite()) {
            return Err(bad("model.update_clip", "must be positive"));
        }
        if m.architecture == Architecture::Mlp1Hidden && m.hidden == 0 {
            return Err(bad("model.hidden", "must be positive for the MLP"));
        }
        let d = &self.data;
        match d.source {
            DataSource::Synthetic => {
                if d.dim < 2 {
                    return Err(bad("data.dim", "must be at least 2"));
                }
                if d.per_client == 0 {
                    return Err(bad("data.per_client", "must be positive"));
                }
                if d.test_count == 0 {
                    return Err(bad("data.test_count", "must be positive"));
                }
            }
            DataSource::Csv => {
                if d.path.is_none() {
                    return Err(bad("data.path", "required when data.source = \"csv\""));
                }
            }
        }
        if d.classes < 2 {
            return Err(bad("data.classes", "must be at least 2"));
        }
        let p = &self.protocol;
        if !(1..=40).contains(&p.scale_bits) {
            return Err(bad("protocol.scale_bits", "must lie in [1, 40]"));
        }
        if p.graph == GraphKind::Neighbor && p.degree.is_none() && n < 3 {
            return Err(bad("protocol.degree", "neighbor mode needs at least 3 clients"));
        }
        for drop in &p.dropouts {
            if drop.client == 0 || drop.client as usize > n {
                return Err(bad("protocol.dropouts", format!("client {} outside 1..={n}", drop.client)));
            }
        }
        let f = &self.defense;
        if p.aggregation == AggregationMode::Plaintext && f.enabled {
            return Err(bad(
                "protocol.aggregation",
                "plaintext aggregation runs without the defense; set defense.enabled = false",
            ));
        }
        if f.enabled {
            if f.clusters < 2 || f.clusters > n {
                return Err(bad(
                    "defense.clusters",
                    format!("need 2 <= c <= n = {n}, got {}", f.clusters),
                ));
            }
            if n / f.clusters < 2 {
                return Err(bad("defense.clusters", "every cluster needs at least 2 clients"));
            }
            if let Some(eta) = f.eta {
                if !(eta > 0.0) {
                    return Err(bad("defense.eta", "must be positive"));
                }
            } else if !(f.z > 0.0) {
                return Err(bad("defense.z", "must be positive"));
            }
            if !(0.0..1.0).contains(&f.phi_max) {
                return Err(bad("defense.phi_max", "must lie in [0, 1)"));
            }
            if !(f.delta > 0.0 && f.delta < 1.0) {
                return Err(bad("defense.delta", "must lie in (0, 1)"));
            }
            if !(f.s_m_assumed > 0.0 && f.s_m_assumed <= 1.0) {
                return Err(bad("defense.s_m_assumed", "must lie in (0, 1]"));
            }
        }
        if let Some(g) = f.magnitude_bound {
            if !(g > 0.0) {
                return Err(bad("defense.magnitude_bound", "must be positive"));
            }
        }
        self.attack
            .validate()
            .map_err(|e| bad("attack", e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::AttackKind;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 3\nepochs = 5\n").unwrap();
        assert_eq!(cfg.clients.n, 50);
        assert_eq!(cfg.byzantine_count(), 12);
        assert_eq!(cfg.defense.clusters, 7);
        assert_eq!(cfg.attack.kind, AttackKind::None);
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
seed = 9
epochs = 2

[clients]
n = 20
byzantine_fraction = 0.1

[model]
architecture = "mlp_1hidden"
hidden = 8

[protocol]
graph = "neighbor"
degree = 4
dropouts = [{ epoch = 1, stage = "final", client = 3, point = "after_round1" }]

[defense]
clusters = 4
z = 2.5

[attack]
kind = "sign_flip"
kappa = 5.0
fraction = 1.0
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.model.architecture, Architecture::Mlp1Hidden);
        assert_eq!(cfg.protocol.graph_mode(), GraphMode::Neighbor(4));
        assert_eq!(cfg.protocol.dropouts[0].point, DropPoint::AfterRound1);
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn field_level_errors() {
        let err = ExperimentConfig::from_toml("seed = 1\nepochs = 1\n[clients]\nn = 5\n[defense]\nclusters = 6\n").unwrap_err();
        assert_eq!(err.field, "defense.clusters");
        let err = ExperimentConfig::from_toml("seed = 1\nepochs = 1\nbogus = 2\n").unwrap_err();
        assert!(err.message.contains("bogus"), "{err}");
        let err = ExperimentConfig::from_toml("seed = 1\nepochs = 0\n").unwrap_err();
        assert_eq!(err.field, "epochs");
        let err = ExperimentConfig::from_toml("seed = 1\nepochs = 1\n[protocol]\naggregation = \"plaintext\"\n").unwrap_err();
        assert_eq!(err.field, "protocol.aggregation");
    }
}
