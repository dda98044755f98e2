//! Closed-loop product lifecycle management on a deterministic mobile-agent
//! platform.
//!
//! Products carry an `serial@uri` identity and an embedded device (PEID).
//! Five agent roles exchange messages across nodes (manufacturer, repair
//! garage, recycler, customer sites, product-embedded devices) inside a
//! seeded discrete-event [`World`]. Field knowledge flows back to the
//! manufacturer and, once enough has accumulated, triggers design of the
//! next product generation.

pub mod agents;
pub mod harness;
pub mod identity;
pub mod knowledge;
pub mod lifecycle;
pub mod runtime;

pub use agents::{AgentId, AgentParams, AgentRole, AgentState, Effect, NodeContext};
pub use harness::{compare, load_scenario, run, save_scenario, ComparisonSummary, RunReport, Scenario};
pub use identity::{Peid, PeidCapability, ProductId, SensorEvent, SensorKind, Tick};
pub use knowledge::{
    Activity, DesignInsight, DesignTrigger, KnowledgeMode, KnowledgeRecord, KnowledgeRepository, KnowledgeSource,
};
pub use lifecycle::{ComponentCondition, EolDecision, EolPolicy, LifecycleEvent, LifecyclePhase};
pub use runtime::{EventKind, LogRecord, Message, MsgId, NodeId, NodeKind, Payload, RoutingTable, World, WorldConfig};
