//! The five agent roles as pure message handlers.
//!
//! A handler never touches the world. It receives its own state, a message
//! and a read-only view of the node it runs on, and returns its next state
//! plus a list of [`Effect`]s for the runtime to apply in order.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::num::NonZeroUsize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::{ProductId, Tick};
use crate::knowledge::{
    Activity, DesignTrigger, KnowledgeError, KnowledgeMode, KnowledgeRecord, KnowledgeSource, TacitSummary,
};
use crate::lifecycle::{
    advance, decide_eol, initial_state, ComponentCondition, EolPolicy, LifecycleError, LifecycleEvent, LifecyclePhase,
};
use crate::runtime::{keys, Message, NodeDirectory, NodeId, NodeKind, Payload};

/// Memory keys whose updates the runtime logs as dedicated events.
pub mod memory_keys {
    pub const PHASE: &str = "phase";
    pub const EOL_DECISION: &str = "eol_decision";
    pub const PENDING_DISPOSITION: &str = "pending_disposition";
    pub const SENSOR_EVENTS: &str = "sensor_events";
    pub const SERVICE_ORDERS: &str = "service_orders";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentRole {
    AgentProduct,
    AgentService,
    AgentCustomer,
    AgentImpact,
    AgentKnowledge,
}

impl AgentRole {
    pub const ALL: [AgentRole; 5] = [
        AgentRole::AgentProduct,
        AgentRole::AgentService,
        AgentRole::AgentCustomer,
        AgentRole::AgentImpact,
        AgentRole::AgentKnowledge,
    ];
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub agent_id: AgentId,
    pub role: AgentRole,
    /// Set for product agents, which shadow exactly one physical product.
    pub product_id: Option<ProductId>,
    pub generation: u32,
    pub location: NodeId,
    pub memory: BTreeMap<String, String>,
    pub itinerary: VecDeque<NodeId>,
}

impl AgentState {
    pub fn new(agent_id: AgentId, role: AgentRole, location: NodeId) -> Self {
        Self {
            agent_id,
            role,
            product_id: None,
            generation: 1,
            location,
            memory: BTreeMap::new(),
            itinerary: VecDeque::new(),
        }
    }

    pub fn with_product(mut self, product_id: ProductId, generation: u32) -> Self {
        self.product_id = Some(product_id);
        self.generation = generation;
        self
    }

    pub fn with_itinerary(mut self, itinerary: impl IntoIterator<Item = NodeId>) -> Self {
        self.itinerary = itinerary.into_iter().collect();
        self
    }

    pub fn with_memory(mut self, key: &str, value: impl Into<String>) -> Self {
        self.memory.insert(key.to_owned(), value.into());
        self
    }

    pub fn phase(&self) -> Result<LifecyclePhase, LifecycleError> {
        match self.memory.get(memory_keys::PHASE) {
            Some(p) => p.parse(),
            None => Ok(initial_state()),
        }
    }

    fn owns(&self, product: &ProductId) -> bool {
        self.product_id.as_ref() == Some(product)
    }

    fn counter(&self, key: &str) -> u64 {
        self.memory.get(key).and_then(|v| v.parse().ok()).unwrap_or(0)
    }

    fn bump(&mut self, key: &str, by: u64) -> u64 {
        let n = self.counter(key) + by;
        self.memory.insert(key.to_owned(), n.to_string());
        n
    }
}

/// A message an agent wants sent. The runtime stamps id, sender and times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outbound {
    pub to: NodeId,
    pub routing_key: String,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    SendMessage(Outbound),
    EmitKnowledge(KnowledgeRecord),
    RequestMigration(NodeId),
    UpdateMemory(String, String),
    None,
}

/// Scenario-level knobs the agents read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub trigger_threshold: NonZeroUsize,
    /// When false the knowledge agent never issues design triggers.
    pub closed_loop: bool,
    pub eol_policy: EolPolicy,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            trigger_threshold: NonZeroUsize::new(10).unwrap(),
            closed_loop: true,
            eol_policy: EolPolicy::default(),
        }
    }
}

/// What an agent can see of the node it is running on.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeContext {
    pub node: NodeId,
    pub kind: NodeKind,
    pub tick: Tick,
    /// First record id this handler may assign; ids count up from here.
    pub record_id_base: u64,
    pub manufacturer: Option<NodeId>,
    pub garage: Option<NodeId>,
    pub recycler: Option<NodeId>,
    pub params: AgentParams,
}

#[derive(Debug, Error)]
pub enum HandleError {
    #[error("{role} has no rule for {payload} messages")]
    UnhandledMessage { role: AgentRole, payload: &'static str },
    #[error(transparent)]
    Lifecycle(#[from] LifecycleError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error("corrupt agent memory at {0}")]
    CorruptMemory(&'static str),
}

impl HandleError {
    /// Whitespace-free code for event logs.
    pub fn code(&self) -> String {
        match self {
            HandleError::UnhandledMessage { payload, .. } => format!("UnhandledMessage:{payload}"),
            HandleError::Lifecycle(LifecycleError::IllegalTransition { phase, event }) => {
                format!("IllegalTransition:{phase}:{event}")
            }
            HandleError::Lifecycle(_) => "Lifecycle".into(),
            HandleError::Knowledge(KnowledgeError::EmptyFeedback) => "EmptyFeedback".into(),
            HandleError::Knowledge(_) => "Knowledge".into(),
            HandleError::CorruptMemory(key) => format!("CorruptMemory:{key}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("itinerary names unknown node {0}")]
pub struct UnknownNode(pub NodeId);

pub type Handled = (AgentState, Vec<Effect>);

/// Dispatches a delivered message to the role's rule table.
pub fn handle(agent: &AgentState, message: &Message, ctx: &NodeContext) -> Result<Handled, HandleError> {
    match agent.role {
        AgentRole::AgentProduct => product::handle(agent, &message.payload, ctx),
        AgentRole::AgentService => service::handle(agent, &message.payload, ctx),
        AgentRole::AgentCustomer => customer::handle(agent, &message.payload, ctx),
        AgentRole::AgentImpact => impact::handle(agent, &message.payload, ctx),
        AgentRole::AgentKnowledge => knowledge::handle(agent, &message.payload, ctx),
    }
}

/// Runs when a migration completes at `ctx.node`.
pub fn on_arrival(agent: &AgentState, ctx: &NodeContext) -> Result<Handled, HandleError> {
    match agent.role {
        AgentRole::AgentProduct => product::on_arrival(agent, ctx),
        _ => Ok((agent.clone(), Vec::new())),
    }
}

/// Next hop of the agent's itinerary, if it is somewhere else.
pub fn plan_migration(agent: &AgentState, directory: &NodeDirectory) -> Result<Effect, UnknownNode> {
    let Some(next) = agent.itinerary.front() else {
        return Ok(Effect::None);
    };
    if !directory.contains_key(next) {
        return Err(UnknownNode(next.clone()));
    }
    if *next == agent.location {
        Ok(Effect::None)
    } else {
        Ok(Effect::RequestMigration(next.clone()))
    }
}

fn unhandled(agent: &AgentState, payload: &Payload) -> HandleError {
    HandleError::UnhandledMessage {
        role: agent.role,
        payload: payload.kind(),
    }
}

fn set_phase(next: LifecyclePhase) -> Effect {
    Effect::UpdateMemory(memory_keys::PHASE.into(), next.name().into())
}

mod product {
    use super::*;

    pub(super) fn handle(agent: &AgentState, payload: &Payload, ctx: &NodeContext) -> Result<Handled, HandleError> {
        let mut next = agent.clone();
        let effects = match payload {
            Payload::SensorBatch { product, events, .. } => {
                if !agent.owns(product) || events.is_empty() {
                    return Ok((next, Vec::new()));
                }
                next.bump(memory_keys::SENSOR_EVENTS, events.len() as u64);
                let summary = TacitSummary::from_events(events);
                KnowledgeRecord::from_tacit_summary(ctx.record_id_base, &summary, product, agent.generation, ctx.tick)?
                    .into_iter()
                    .map(Effect::EmitKnowledge)
                    .collect()
            }
            Payload::FaultReported { product, .. } if agent.owns(product) => {
                vec![set_phase(advance(agent.phase()?, LifecycleEvent::FaultReported)?)]
            }
            Payload::ServiceOrder { product, .. } if agent.owns(product) => {
                vec![set_phase(advance(agent.phase()?, LifecycleEvent::Repaired)?)]
            }
            Payload::RetirementRequested {
                product, conditions, ..
            } if agent.owns(product) => {
                let recovery = advance(agent.phase()?, LifecycleEvent::RetirementRequested)?;
                match &ctx.recycler {
                    Some(recycler) if *recycler != agent.location => {
                        let pending = serde_json::to_string(conditions)
                            .map_err(|_| HandleError::CorruptMemory(memory_keys::PENDING_DISPOSITION))?;
                        next.memory.insert(memory_keys::PENDING_DISPOSITION.into(), pending);
                        vec![set_phase(recovery), Effect::RequestMigration(recycler.clone())]
                    }
                    _ => {
                        let mut effects = vec![set_phase(recovery)];
                        effects.extend(dispose(agent, recovery, conditions, ctx)?);
                        effects
                    }
                }
            }
            Payload::FaultReported { .. } | Payload::ServiceOrder { .. } | Payload::RetirementRequested { .. } => {
                Vec::new()
            }
            other => return Err(unhandled(agent, other)),
        };
        Ok((next, effects))
    }

    pub(super) fn on_arrival(agent: &AgentState, ctx: &NodeContext) -> Result<Handled, HandleError> {
        let mut next = agent.clone();
        if ctx.kind != NodeKind::RecyclingEnterprise {
            return Ok((next, Vec::new()));
        }
        let Some(pending) = next.memory.remove(memory_keys::PENDING_DISPOSITION) else {
            return Ok((next, Vec::new()));
        };
        let conditions: Vec<ComponentCondition> =
            serde_json::from_str(&pending).map_err(|_| HandleError::CorruptMemory(memory_keys::PENDING_DISPOSITION))?;
        let effects = dispose(agent, agent.phase()?, &conditions, ctx)?;
        Ok((next, effects))
    }

    fn dispose(
        agent: &AgentState,
        phase: LifecyclePhase,
        conditions: &[ComponentCondition],
        ctx: &NodeContext,
    ) -> Result<Vec<Effect>, HandleError> {
        let disposed = advance(phase, LifecycleEvent::DispositionExecuted)?;
        let decision = decide_eol(conditions, &ctx.params.eol_policy)?;
        let product = agent
            .product_id
            .clone()
            .ok_or(HandleError::CorruptMemory("product_id"))?;
        let record = KnowledgeRecord::new(
            ctx.record_id_base,
            product,
            agent.generation,
            Activity::IntelligentProduct,
            KnowledgeMode::Tacit,
            KnowledgeSource::SelfSource,
            format!("disposition {decision}"),
            ctx.tick,
        )?;
        Ok(vec![
            Effect::UpdateMemory(memory_keys::EOL_DECISION.into(), decision.to_string()),
            set_phase(disposed),
            Effect::EmitKnowledge(record),
        ])
    }
}

mod service {
    use super::*;

    pub(super) fn handle(agent: &AgentState, payload: &Payload, ctx: &NodeContext) -> Result<Handled, HandleError> {
        let mut next = agent.clone();
        match payload {
            Payload::FaultReported {
                product,
                generation,
                description,
            } => {
                let order = Outbound {
                    to: ctx.garage.clone().unwrap_or_else(|| ctx.node.clone()),
                    routing_key: keys::SERVICE_ORDER.into(),
                    payload: Payload::ServiceOrder {
                        product: product.clone(),
                        generation: *generation,
                        description: description.clone(),
                    },
                };
                let record = KnowledgeRecord::new(
                    ctx.record_id_base,
                    product.clone(),
                    *generation,
                    Activity::UserInsight,
                    KnowledgeMode::Tacit,
                    KnowledgeSource::Collective,
                    description.clone(),
                    ctx.tick,
                )?;
                Ok((next, vec![Effect::SendMessage(order), Effect::EmitKnowledge(record)]))
            }
            Payload::ServiceOrder { .. } => {
                next.bump(memory_keys::SERVICE_ORDERS, 1);
                Ok((next, Vec::new()))
            }
            other => Err(unhandled(agent, other)),
        }
    }
}

mod customer {
    use super::*;

    pub(super) fn handle(agent: &AgentState, payload: &Payload, ctx: &NodeContext) -> Result<Handled, HandleError> {
        match payload {
            Payload::CustomerFeedback {
                product,
                generation,
                text,
            } => {
                let record = KnowledgeRecord::customer_feedback(
                    ctx.record_id_base,
                    product.clone(),
                    *generation,
                    text,
                    ctx.tick,
                )?;
                Ok((agent.clone(), vec![Effect::EmitKnowledge(record)]))
            }
            other => Err(unhandled(agent, other)),
        }
    }
}

mod impact {
    use super::*;

    /// Only batches tagged environmental concern the impact agent; it
    /// condenses each into a single tacit record.
    pub(super) fn handle(agent: &AgentState, payload: &Payload, ctx: &NodeContext) -> Result<Handled, HandleError> {
        match payload {
            Payload::SensorBatch {
                product,
                generation,
                environmental,
                events,
            } => {
                if !environmental || events.is_empty() {
                    return Ok((agent.clone(), Vec::new()));
                }
                let text = TacitSummary::from_events(events)
                    .categories()
                    .map(|(_, t)| t)
                    .collect::<Vec<_>>()
                    .join("; ");
                let record = KnowledgeRecord::new(
                    ctx.record_id_base,
                    product.clone(),
                    *generation,
                    Activity::IntelligentProduct,
                    KnowledgeMode::Tacit,
                    KnowledgeSource::SelfSource,
                    text,
                    ctx.tick,
                )?;
                Ok((agent.clone(), vec![Effect::EmitKnowledge(record)]))
            }
            other => Err(unhandled(agent, other)),
        }
    }
}

mod knowledge {
    use super::*;

    fn count_key(family: &str, generation: u32) -> String {
        format!("records:{family}:{generation}")
    }

    fn trigger_key(family: &str, generation: u32) -> String {
        format!("triggered:{family}:{generation}")
    }

    pub(super) fn handle(agent: &AgentState, payload: &Payload, ctx: &NodeContext) -> Result<Handled, HandleError> {
        let mut next = agent.clone();
        match payload {
            Payload::KnowledgeRecord { record } => {
                let family = record.family().to_owned();
                let generation = record.generation();
                let count = next.bump(&count_key(&family, generation), 1);
                let mut effects = vec![Effect::EmitKnowledge(record.clone())];

                let threshold = ctx.params.trigger_threshold.get() as u64;
                let trigger = trigger_key(&family, generation);
                if ctx.params.closed_loop && count >= threshold && !next.memory.contains_key(&trigger) {
                    next.memory.insert(trigger, ctx.tick.to_string());
                    effects.push(Effect::SendMessage(Outbound {
                        to: ctx.manufacturer.clone().unwrap_or_else(|| ctx.node.clone()),
                        routing_key: keys::DESIGN_TRIGGER.into(),
                        payload: Payload::DesignTrigger {
                            trigger: DesignTrigger {
                                family,
                                generation: generation + 1,
                            },
                        },
                    }));
                }
                Ok((next, effects))
            }
            Payload::DesignTrigger { .. } => Ok((next, Vec::new())),
            other => Err(unhandled(agent, other)),
        }
    }
}
