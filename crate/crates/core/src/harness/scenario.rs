//! Scenario files: a versioned JSON document describing one simulation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentParams, AgentRole};
use crate::identity::{Peid, PeidCapability, ProductId, SensorKind, Tick};
use crate::lifecycle::{ComponentCondition, EolPolicy, LifecyclePhase};
use crate::runtime::{NodeId, NodeKind, RoutingTable, Selector, WorldConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    /// Records per product generation that trigger next-generation design.
    pub trigger_threshold: NonZeroUsize,
    pub closed_loop: bool,
    pub eol_policy: EolPolicy,
    pub design_ticks: Tick,
    pub manufacture_ticks: Tick,
    pub default_latency: Tick,
    pub jitter: Tick,
}

impl Default for Parameters {
    fn default() -> Self {
        let world = WorldConfig::default();
        Self {
            trigger_threshold: world.agent.trigger_threshold,
            closed_loop: world.agent.closed_loop,
            eol_policy: world.agent.eol_policy,
            design_ticks: world.design_ticks,
            manufacture_ticks: world.manufacture_ticks,
            default_latency: world.default_latency,
            jitter: world.jitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDecl {
    pub id: NodeId,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyDecl {
    pub a: NodeId,
    pub b: NodeId,
    pub ticks: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductDecl {
    pub id: ProductId,
    pub generation: u32,
    pub phase: LifecyclePhase,
    pub capabilities: BTreeSet<PeidCapability>,
}

/// Agents receive ids `a1, a2, ...` in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDecl {
    pub role: AgentRole,
    pub home: NodeId,
    pub product: Option<ProductId>,
    pub itinerary: Vec<NodeId>,
}

/// The pair is severed for every tick in `from..=to`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionDecl {
    pub a: NodeId,
    pub b: NodeId,
    pub from: Tick,
    pub to: Tick,
}

impl PartitionDecl {
    pub fn covers(&self, tick: Tick) -> bool {
        (self.from..=self.to).contains(&tick)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reading {
    pub sensor: String,
    pub kind: SensorKind,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum StimulusPayload {
    SensorBatch {
        product: ProductId,
        environmental: bool,
        readings: Vec<Reading>,
    },
    CustomerFeedback {
        product: ProductId,
        text: String,
    },
    FaultReported {
        product: ProductId,
        description: String,
    },
    Retirement {
        product: ProductId,
        conditions: Vec<ComponentCondition>,
    },
}

impl StimulusPayload {
    pub fn product(&self) -> &ProductId {
        match self {
            StimulusPayload::SensorBatch { product, .. }
            | StimulusPayload::CustomerFeedback { product, .. }
            | StimulusPayload::FaultReported { product, .. }
            | StimulusPayload::Retirement { product, .. } => product,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stimulus {
    pub tick: Tick,
    pub node: NodeId,
    pub key: String,
    pub payload: StimulusPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format: u32,
    pub name: String,
    pub seed: u64,
    /// Ticks `0..horizon` are simulated.
    pub horizon: Tick,
    pub parameters: Parameters,
    pub nodes: Vec<NodeDecl>,
    pub latency: Vec<LatencyDecl>,
    pub products: Vec<ProductDecl>,
    pub agents: Vec<AgentDecl>,
    pub routing: RoutingTable,
    pub partitions: Vec<PartitionDecl>,
    pub stimuli: Vec<Stimulus>,
}

fn invalid(message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation(message.into())
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Canonical form: pretty-printed, every field present, trailing newline.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("scenarios always serialize");
        text.push('\n');
        text
    }

    pub fn world_config(&self, seed: u64) -> WorldConfig {
        let p = &self.parameters;
        WorldConfig {
            seed,
            default_latency: p.default_latency,
            jitter: p.jitter,
            design_ticks: p.design_ticks,
            manufacture_ticks: p.manufacture_ticks,
            agent: AgentParams {
                trigger_threshold: p.trigger_threshold,
                closed_loop: p.closed_loop,
                eol_policy: p.eol_policy,
            },
        }
    }

    pub fn product(&self, id: &ProductId) -> Option<&ProductDecl> {
        self.products.iter().find(|p| p.id == *id)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.format != FORMAT_VERSION {
            return Err(invalid(format!("unsupported format {}", self.format)));
        }
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        {
            return Err(invalid(format!("name {:?} must be [A-Za-z0-9_.-]+", self.name)));
        }
        if self.horizon < 1 {
            return Err(invalid("horizon must be at least 1"));
        }
        let p = &self.parameters;
        if p.design_ticks < 1 || p.manufacture_ticks < 1 || p.default_latency < 1 {
            return Err(invalid(
                "design_ticks, manufacture_ticks and default_latency must be at least 1",
            ));
        }

        let mut nodes = BTreeMap::new();
        for n in &self.nodes {
            if nodes.insert(&n.id, n.kind).is_some() {
                return Err(invalid(format!("node {} declared twice", n.id)));
            }
        }
        let node = |id: &NodeId, what: &str| {
            if nodes.contains_key(id) {
                Ok(())
            } else {
                Err(invalid(format!("{what} references unknown node {id}")))
            }
        };

        for l in &self.latency {
            node(&l.a, "latency")?;
            node(&l.b, "latency")?;
            if l.ticks < 1 {
                return Err(invalid(format!("latency {}-{} must be at least 1", l.a, l.b)));
            }
        }

        let mut products = BTreeSet::new();
        for pr in &self.products {
            if !products.insert(&pr.id) {
                return Err(invalid(format!("product {} declared twice", pr.id)));
            }
            if pr.generation < 1 {
                return Err(invalid(format!("product {} generation must be at least 1", pr.id)));
            }
            if !pr.capabilities.contains(&PeidCapability::UniqueId) {
                return Err(invalid(format!("product {} lacks the UniqueId capability", pr.id)));
            }
        }
        let product = |id: &ProductId, what: &str| {
            if products.contains(id) {
                Ok(())
            } else {
                Err(invalid(format!("{what} references unknown product {id}")))
            }
        };

        for (i, a) in self.agents.iter().enumerate() {
            let what = format!("agent a{}", i + 1);
            node(&a.home, &what)?;
            for stop in &a.itinerary {
                node(stop, &what)?;
            }
            match (&a.product, a.role) {
                (Some(pid), _) => product(pid, &what)?,
                (None, AgentRole::AgentProduct) => {
                    return Err(invalid(format!("{what} is a product agent without a product")));
                }
                (None, _) => {}
            }
        }

        for rule in self.routing.rules() {
            for selector in &rule.recipients {
                if let Selector::Agent(id) = selector {
                    if id.0 < 1 || id.0 > self.agents.len() as u64 {
                        return Err(invalid(format!(
                            "routing rule {} references unknown agent {id}",
                            rule.pattern
                        )));
                    }
                }
            }
        }

        for part in &self.partitions {
            node(&part.a, "partition")?;
            node(&part.b, "partition")?;
            if part.a == part.b {
                return Err(invalid(format!("partition of {} with itself", part.a)));
            }
            if part.from > part.to {
                return Err(invalid(format!(
                    "partition {}-{} ends before it starts",
                    part.a, part.b
                )));
            }
        }

        for s in &self.stimuli {
            node(&s.node, "stimulus")?;
            product(s.payload.product(), "stimulus")?;
            if s.tick >= self.horizon {
                return Err(invalid(format!("stimulus at tick {} is past the horizon", s.tick)));
            }
            if s.key.is_empty() || s.key.chars().any(char::is_whitespace) {
                return Err(invalid(format!(
                    "stimulus key {:?} must be non-empty without whitespace",
                    s.key
                )));
            }
            if let StimulusPayload::SensorBatch { readings, .. } = &s.payload {
                if readings.iter().any(|r| !r.value.is_finite()) {
                    return Err(invalid("sensor readings must be finite"));
                }
            }
        }
        Ok(())
    }

    /// PEIDs for the declared products.
    pub fn peids(&self) -> Vec<(Peid, u32, LifecyclePhase)> {
        self.products
            .iter()
            .map(|p| {
                let peid = Peid::new(p.id.clone(), p.capabilities.clone()).expect("validated");
                (peid, p.generation, p.phase)
            })
            .collect()
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_owned(),
        source,
    })?;
    Scenario::from_json(&text)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    fs::write(path, scenario.to_json()).map_err(|source| ScenarioError::Io {
        path: path.to_owned(),
        source,
    })
}
