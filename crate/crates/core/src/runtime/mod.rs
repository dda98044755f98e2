//! Nodes, message routing, agent migration and the discrete-event engine.

mod log;
mod message;
mod routing;
mod world;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::log::{parse_detail, Detail, EventKind, LogRecord};
pub use message::{Message, MsgId, Payload, Sender};
pub use routing::{KeyPattern, RoutingError, RoutingRule, RoutingTable, Selector};
pub use world::{InvariantViolation, Node, RuntimeError, Transit, World, WorldConfig};

/// Routing keys the runtime and agents use for their own traffic.
pub mod keys {
    pub const SERVICE_ORDER: &str = "service.order";
    pub const DESIGN_TRIGGER: &str = "design.trigger";
    pub const KNOWLEDGE_TACIT: &str = "knowledge.tacit";
    pub const KNOWLEDGE_EXPLICIT: &str = "knowledge.explicit";
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid node id {0:?}: must be non-empty without whitespace")]
pub struct InvalidNodeId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Result<Self, InvalidNodeId> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(InvalidNodeId(id));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for NodeId {
    type Error = InvalidNodeId;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<NodeId> for String {
    fn from(id: NodeId) -> Self {
        id.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Manufacturer,
    RepairGarage,
    RecyclingEnterprise,
    CustomerSite,
    ProductEmbedded,
}

impl NodeKind {
    pub const ALL: [NodeKind; 5] = [
        NodeKind::Manufacturer,
        NodeKind::RepairGarage,
        NodeKind::RecyclingEnterprise,
        NodeKind::CustomerSite,
        NodeKind::ProductEmbedded,
    ];
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub type NodeDirectory = BTreeMap<NodeId, NodeKind>;
