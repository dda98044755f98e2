use std::fmt;

use serde::{Deserialize, Serialize};

use super::NodeId;
use crate::agents::AgentId;
use crate::identity::{ProductId, SensorEvent, Tick};
use crate::knowledge::{DesignTrigger, KnowledgeRecord};
use crate::lifecycle::ComponentCondition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MsgId(pub u64);

impl fmt::Display for MsgId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Who stamped the message: an agent, or a node acting for the outside
/// world (scripted stimuli, runtime forwarding).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sender {
    Agent(AgentId),
    Node(NodeId),
}

impl fmt::Display for Sender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sender::Agent(a) => write!(f, "{a}"),
            Sender::Node(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Payload {
    SensorBatch {
        product: ProductId,
        generation: u32,
        environmental: bool,
        events: Vec<SensorEvent>,
    },
    CustomerFeedback {
        product: ProductId,
        generation: u32,
        text: String,
    },
    FaultReported {
        product: ProductId,
        generation: u32,
        description: String,
    },
    ServiceOrder {
        product: ProductId,
        generation: u32,
        description: String,
    },
    RetirementRequested {
        product: ProductId,
        generation: u32,
        conditions: Vec<ComponentCondition>,
    },
    KnowledgeRecord {
        record: KnowledgeRecord,
    },
    DesignTrigger {
        trigger: DesignTrigger,
    },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::SensorBatch { .. } => "SensorBatch",
            Payload::CustomerFeedback { .. } => "CustomerFeedback",
            Payload::FaultReported { .. } => "FaultReported",
            Payload::ServiceOrder { .. } => "ServiceOrder",
            Payload::RetirementRequested { .. } => "RetirementRequested",
            Payload::KnowledgeRecord { .. } => "KnowledgeRecord",
            Payload::DesignTrigger { .. } => "DesignTrigger",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub msg_id: MsgId,
    pub sender: Sender,
    pub from: NodeId,
    pub to: NodeId,
    pub routing_key: String,
    pub payload: Payload,
    pub sent_at: Tick,
    pub deliver_at: Tick,
}
