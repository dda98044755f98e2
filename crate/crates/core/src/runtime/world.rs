//! The simulation container and its serial event loop.
//!
//! Within one call to [`World::tick`] the work for the current clock value
//! happens in a fixed order:
//!
//! 1. messages due now are delivered, ascending by message id;
//! 2. agent migrations due now complete, ascending by agent id;
//! 3. next-generation design steps due now advance;
//! 4. resident agents follow their itineraries, ascending by agent id.
//!
//! Then the clock advances by one. Every message sent while handling tick
//! `t` is due at `t + 1` or later, so nothing sent during a tick is
//! delivered in that same tick.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::log::{Detail, EventKind, LogRecord};
use super::message::{Message, MsgId, Payload, Sender};
use super::routing::RoutingTable;
use super::{keys, NodeDirectory, NodeId, NodeKind};
use crate::agents::{
    self, memory_keys, AgentId, AgentParams, AgentRole, AgentState, Effect, HandleError, Handled, NodeContext, Outbound,
};
use crate::identity::{Peid, ProductId, Tick};
use crate::knowledge::{DesignTrigger, KnowledgeMode, KnowledgeRecord, KnowledgeRepository};
use crate::lifecycle::{self, LifecycleEvent, LifecyclePhase};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("agent {0} is in flight")]
    InFlight(AgentId),
    #[error("nodes {0} and {1} are partitioned")]
    Partitioned(NodeId, NodeId),
    #[error("node {0} already registered")]
    DuplicateNode(NodeId),
    #[error("unknown product {0}")]
    UnknownProduct(ProductId),
    #[error("product {0} already registered")]
    DuplicateProduct(ProductId),
    #[error("product agents must be bound to a registered product")]
    UnboundProductAgent,
    #[error("latency must be at least one tick")]
    ZeroLatency,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invariant violated: {0}")]
pub struct InvariantViolation(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub seed: u64,
    /// Latency for node pairs without an explicit entry.
    pub default_latency: Tick,
    /// Extra delivery delay drawn uniformly from `0..=jitter` per message.
    pub jitter: Tick,
    pub design_ticks: Tick,
    pub manufacture_ticks: Tick,
    pub agent: AgentParams,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            default_latency: 1,
            jitter: 0,
            design_ticks: 20,
            manufacture_ticks: 10,
            agent: AgentParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    id: NodeId,
    kind: NodeKind,
    residents: BTreeSet<AgentId>,
    repository: KnowledgeRepository,
}

impl Node {
    pub fn id(&self) -> &NodeId {
        &self.id
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn residents(&self) -> &BTreeSet<AgentId> {
        &self.residents
    }

    /// The node-local knowledge repository.
    pub fn repository(&self) -> &KnowledgeRepository {
        &self.repository
    }
}

/// An agent between nodes. It belongs to neither while in transit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transit {
    pub from: NodeId,
    pub to: NodeId,
    pub departed: Tick,
    pub arrive_at: Tick,
}

#[derive(Debug, Clone)]
struct ProductEntry {
    peid: Peid,
    generation: u32,
    phase: LifecyclePhase,
}

#[derive(Debug, Clone)]
struct GenerationStep {
    node: NodeId,
    trigger: DesignTrigger,
    phase: LifecyclePhase,
}

pub struct World {
    config: WorldConfig,
    clock: Tick,
    rng: ChaCha8Rng,
    routing: RoutingTable,
    nodes: BTreeMap<NodeId, Node>,
    agents: BTreeMap<AgentId, AgentState>,
    in_flight: BTreeMap<AgentId, Transit>,
    pending: BTreeMap<(Tick, MsgId), Message>,
    steps: BTreeMap<(Tick, u64), GenerationStep>,
    partitions: BTreeSet<(NodeId, NodeId)>,
    latency: BTreeMap<(NodeId, NodeId), Tick>,
    products: BTreeMap<ProductId, ProductEntry>,
    channel_tail: BTreeMap<(Sender, NodeId), Tick>,
    issued_triggers: BTreeSet<(String, u32)>,
    next_msg: u64,
    next_agent: u64,
    next_node: u64,
    next_record: u64,
    next_step: u64,
    spawned: u64,
    terminated: u64,
    log: Vec<LogRecord>,
}

fn pair(a: &NodeId, b: &NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl World {
    pub fn new(config: WorldConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            clock: 0,
            routing: RoutingTable::drop_all(),
            nodes: BTreeMap::new(),
            agents: BTreeMap::new(),
            in_flight: BTreeMap::new(),
            pending: BTreeMap::new(),
            steps: BTreeMap::new(),
            partitions: BTreeSet::new(),
            latency: BTreeMap::new(),
            products: BTreeMap::new(),
            channel_tail: BTreeMap::new(),
            issued_triggers: BTreeSet::new(),
            next_msg: 1,
            next_agent: 1,
            next_node: 1,
            next_record: 1,
            next_step: 0,
            spawned: 0,
            terminated: 0,
            log: Vec::new(),
        }
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn clock(&self) -> Tick {
        self.clock
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn routing(&self) -> &RoutingTable {
        &self.routing
    }

    pub fn set_routing(&mut self, table: RoutingTable) {
        self.routing = table;
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn directory(&self) -> NodeDirectory {
        self.nodes.values().map(|n| (n.id.clone(), n.kind)).collect()
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentState> {
        self.agents.values()
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents.get(&id)
    }

    pub fn in_flight(&self) -> &BTreeMap<AgentId, Transit> {
        &self.in_flight
    }

    pub fn pending(&self) -> impl Iterator<Item = &Message> {
        self.pending.values()
    }

    /// Messages queued for `node`, in delivery order.
    pub fn inbox<'a>(&'a self, node: &'a NodeId) -> impl Iterator<Item = &'a Message> + 'a {
        self.pending.values().filter(move |m| m.to == *node)
    }

    pub fn peid(&self, product: &ProductId) -> Option<&Peid> {
        self.products.get(product).map(|p| &p.peid)
    }

    pub fn spawned(&self) -> u64 {
        self.spawned
    }

    pub fn terminated(&self) -> u64 {
        self.terminated
    }

    /// Lowest-id node of the given kind.
    pub fn first_of_kind(&self, kind: NodeKind) -> Option<NodeId> {
        self.nodes.values().find(|n| n.kind == kind).map(|n| n.id.clone())
    }

    /// The node whose repository collects every emitted record.
    pub fn manufacturer(&self) -> Option<NodeId> {
        self.first_of_kind(NodeKind::Manufacturer)
    }

    pub fn latency(&self, a: &NodeId, b: &NodeId) -> Tick {
        self.latency
            .get(&pair(a, b))
            .copied()
            .unwrap_or(self.config.default_latency)
    }

    pub fn set_latency(&mut self, a: &NodeId, b: &NodeId, ticks: Tick) -> Result<(), RuntimeError> {
        self.require_node(a)?;
        self.require_node(b)?;
        if ticks == 0 {
            return Err(RuntimeError::ZeroLatency);
        }
        self.latency.insert(pair(a, b), ticks);
        Ok(())
    }

    pub fn note(&mut self, kind: EventKind, detail: String) {
        self.record(kind, None, None, None, detail);
    }

    fn record(
        &mut self,
        kind: EventKind,
        node: Option<&NodeId>,
        agent: Option<AgentId>,
        msg_id: Option<MsgId>,
        detail: String,
    ) {
        log::debug!("t={} {kind} {detail}", self.clock);
        self.log.push(LogRecord {
            tick: self.clock,
            event_kind: kind,
            node: node.map(|n| n.to_string()),
            agent: agent.map(|a| a.to_string()),
            msg_id: msg_id.map(|m| m.0),
            detail,
        });
    }

    fn require_node(&self, id: &NodeId) -> Result<&Node, RuntimeError> {
        self.nodes.get(id).ok_or_else(|| RuntimeError::UnknownNode(id.clone()))
    }

    pub fn register_node(&mut self, kind: NodeKind) -> NodeId {
        loop {
            let id = NodeId::new(format!("n{}", self.next_node)).expect("generated ids are valid");
            self.next_node += 1;
            if !self.nodes.contains_key(&id) {
                return self.register_node_with_id(id, kind).expect("id is fresh");
            }
        }
    }

    pub fn register_node_with_id(&mut self, id: NodeId, kind: NodeKind) -> Result<NodeId, RuntimeError> {
        if self.nodes.contains_key(&id) {
            return Err(RuntimeError::DuplicateNode(id));
        }
        self.nodes.insert(
            id.clone(),
            Node {
                id: id.clone(),
                kind,
                residents: BTreeSet::new(),
                repository: KnowledgeRepository::new(),
            },
        );
        self.record(
            EventKind::NodeRegistered,
            Some(&id),
            None,
            None,
            Detail::new().kv("kind", kind).build(),
        );
        Ok(id)
    }

    pub fn register_product(&mut self, peid: Peid, generation: u32, phase: LifecyclePhase) -> Result<(), RuntimeError> {
        let id = peid.product_id().clone();
        if self.products.contains_key(&id) {
            return Err(RuntimeError::DuplicateProduct(id));
        }
        let detail = Detail::new()
            .kv("product", &id)
            .kv("generation", generation)
            .kv("phase", phase)
            .kv("intelligence", peid.intelligence())
            .build();
        self.products.insert(
            id,
            ProductEntry {
                peid,
                generation,
                phase,
            },
        );
        self.record(EventKind::ProductRegistered, None, None, None, detail);
        Ok(())
    }

    /// Places a new agent at `template.location`, assigning it a fresh id.
    /// Product agents take their phase from the product they shadow unless
    /// the template sets one.
    pub fn spawn_agent(&mut self, mut template: AgentState) -> Result<AgentId, RuntimeError> {
        self.require_node(&template.location)?;
        if template.role == AgentRole::AgentProduct {
            let product = template.product_id.as_ref().ok_or(RuntimeError::UnboundProductAgent)?;
            let entry = self
                .products
                .get(product)
                .ok_or_else(|| RuntimeError::UnknownProduct(product.clone()))?;
            template.generation = entry.generation;
            template
                .memory
                .entry(memory_keys::PHASE.into())
                .or_insert_with(|| entry.phase.name().into());
        }
        let id = AgentId(self.next_agent);
        self.next_agent += 1;
        template.agent_id = id;
        let location = template.location.clone();
        let mut detail = Detail::new().kv("role", template.role);
        if let Some(p) = &template.product_id {
            detail = detail.kv("product", p);
        }
        self.nodes.get_mut(&location).expect("checked").residents.insert(id);
        self.agents.insert(id, template);
        self.spawned += 1;
        self.record(EventKind::AgentSpawned, Some(&location), Some(id), None, detail.build());
        Ok(id)
    }

    /// Removes a resident agent from the world.
    pub fn terminate_agent(&mut self, id: AgentId) -> Result<AgentState, RuntimeError> {
        if self.in_flight.contains_key(&id) {
            return Err(RuntimeError::InFlight(id));
        }
        let state = self.agents.remove(&id).ok_or(RuntimeError::UnknownAgent(id))?;
        self.nodes
            .get_mut(&state.location)
            .expect("resident node exists")
            .residents
            .remove(&id);
        self.terminated += 1;
        self.record(
            EventKind::AgentTerminated,
            Some(&state.location),
            Some(id),
            None,
            String::new(),
        );
        Ok(state)
    }

    pub fn is_partitioned(&self, a: &NodeId, b: &NodeId) -> bool {
        a != b && self.partitions.contains(&pair(a, b))
    }

    pub fn partitions(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.partitions
    }

    pub fn partition(&mut self, a: &NodeId, b: &NodeId) -> Result<(), RuntimeError> {
        self.require_node(a)?;
        self.require_node(b)?;
        let key = pair(a, b);
        if key.0 != key.1 && self.partitions.insert(key.clone()) {
            let detail = Detail::new().kv("a", &key.0).kv("b", &key.1).build();
            self.record(EventKind::PartitionStarted, None, None, None, detail);
        }
        Ok(())
    }

    pub fn heal(&mut self, a: &NodeId, b: &NodeId) {
        let key = pair(a, b);
        if self.partitions.remove(&key) {
            let detail = Detail::new().kv("a", &key.0).kv("b", &key.1).build();
            self.record(EventKind::PartitionHealed, None, None, None, detail);
        }
    }

    /// Starts moving an agent: it leaves its node now and becomes resident
    /// at `target` after the pair latency. Refused, with the agent left in
    /// place, when the pair is partitioned.
    pub fn migrate(&mut self, id: AgentId, target: &NodeId) -> Result<(), RuntimeError> {
        let agent = self.agents.get(&id).ok_or(RuntimeError::UnknownAgent(id))?;
        if self.in_flight.contains_key(&id) {
            return Err(RuntimeError::InFlight(id));
        }
        self.require_node(target)?;
        let source = agent.location.clone();
        if source == *target {
            return Ok(());
        }
        if self.is_partitioned(&source, target) {
            let detail = Detail::new()
                .kv("from", &source)
                .kv("to", target)
                .kv("reason", "partitioned")
                .build();
            self.record(EventKind::MigrationRefused, Some(&source), Some(id), None, detail);
            return Err(RuntimeError::Partitioned(source, target.clone()));
        }
        let arrive_at = self.clock + self.latency(&source, target);
        self.nodes
            .get_mut(&source)
            .expect("resident node exists")
            .residents
            .remove(&id);
        self.in_flight.insert(
            id,
            Transit {
                from: source.clone(),
                to: target.clone(),
                departed: self.clock,
                arrive_at,
            },
        );
        let detail = Detail::new().kv("to", target).kv("arrive_at", arrive_at).build();
        self.record(EventKind::MigrationStarted, Some(&source), Some(id), None, detail);
        Ok(())
    }

    /// Queues a message from `from`. Returns `None` when the message was
    /// blocked by a partition or was a duplicate design trigger.
    pub fn send(&mut self, from: &NodeId, sender: Sender, out: Outbound) -> Result<Option<MsgId>, RuntimeError> {
        self.require_node(from)?;
        self.require_node(&out.to)?;
        let agent = match &sender {
            Sender::Agent(a) => Some(*a),
            Sender::Node(_) => None,
        };
        if let Payload::DesignTrigger { trigger } = &out.payload {
            let detail = Detail::new()
                .kv("family", &trigger.family)
                .kv("generation", trigger.generation)
                .kv("source", if agent.is_some() { "feedback" } else { "retirement" })
                .build();
            if !self
                .issued_triggers
                .insert((trigger.family.clone(), trigger.generation))
            {
                self.record(EventKind::DesignTriggerSuppressed, Some(from), agent, None, detail);
                return Ok(None);
            }
            self.record(EventKind::DesignTriggerIssued, Some(from), agent, None, detail);
        }
        if self.is_partitioned(from, &out.to) {
            let detail = Detail::new()
                .kv("from", from)
                .kv("to", &out.to)
                .kv("key", &out.routing_key)
                .kv("stage", "send")
                .build();
            self.record(EventKind::MessageBlocked, Some(from), agent, None, detail);
            return Ok(None);
        }
        let jitter = if self.config.jitter > 0 {
            self.rng.random_range(0..=self.config.jitter)
        } else {
            0
        };
        let earliest = self.clock + self.latency(from, &out.to) + jitter;
        let tail = self
            .channel_tail
            .entry((sender.clone(), out.to.clone()))
            .or_insert(earliest);
        let deliver_at = earliest.max(*tail);
        *tail = deliver_at;
        Ok(Some(self.enqueue(from.clone(), sender, out, deliver_at)))
    }

    /// Injects an outside stimulus at `node`, delivered during the current
    /// tick. Sensor batches are first written to the product's PEID. In
    /// open-loop runs a retirement also starts next-generation design.
    pub fn inject(&mut self, node: &NodeId, routing_key: &str, payload: Payload) -> Result<MsgId, RuntimeError> {
        self.require_node(node)?;
        match &payload {
            Payload::SensorBatch { product, events, .. } => self.record_sensor_batch(product, events)?,
            Payload::RetirementRequested {
                product, generation, ..
            } if !self.config.agent.closed_loop => {
                if let Some(hub) = self.manufacturer() {
                    let trigger = DesignTrigger {
                        family: product.family().to_owned(),
                        generation: generation + 1,
                    };
                    self.send(
                        node,
                        Sender::Node(node.clone()),
                        Outbound {
                            to: hub,
                            routing_key: keys::DESIGN_TRIGGER.into(),
                            payload: Payload::DesignTrigger { trigger },
                        },
                    )?;
                }
            }
            _ => {}
        }
        let out = Outbound {
            to: node.clone(),
            routing_key: routing_key.to_owned(),
            payload,
        };
        Ok(self.enqueue(node.clone(), Sender::Node(node.clone()), out, self.clock))
    }

    fn record_sensor_batch(
        &mut self,
        product: &ProductId,
        events: &[crate::identity::SensorEvent],
    ) -> Result<(), RuntimeError> {
        let entry = self
            .products
            .get_mut(product)
            .ok_or_else(|| RuntimeError::UnknownProduct(product.clone()))?;
        let mut accepted = 0usize;
        let mut rejected = Vec::new();
        for e in events {
            match entry.peid.clone().record_event(e.clone()) {
                Ok(next) => {
                    entry.peid = next;
                    accepted += 1;
                }
                Err(_) => rejected.push(e.sim_time),
            }
        }
        let log_len = entry.peid.event_log().len();
        let detail = Detail::new()
            .kv("product", product)
            .kv("events", accepted)
            .kv("log_len", log_len)
            .build();
        self.record(EventKind::PeidUpdated, None, None, None, detail);
        for t in rejected {
            let detail = Detail::new().kv("product", product).kv("sim_time", t).build();
            self.record(EventKind::PeidRejected, None, None, None, detail);
        }
        Ok(())
    }

    fn enqueue(&mut self, from: NodeId, sender: Sender, out: Outbound, deliver_at: Tick) -> MsgId {
        let msg_id = MsgId(self.next_msg);
        self.next_msg += 1;
        let agent = match &sender {
            Sender::Agent(a) => Some(*a),
            Sender::Node(_) => None,
        };
        let detail = Detail::new()
            .kv("to", &out.to)
            .kv("key", &out.routing_key)
            .kv("payload", out.payload.kind())
            .kv("deliver_at", deliver_at)
            .build();
        self.record(EventKind::MessageSent, Some(&from), agent, Some(msg_id), detail);
        self.pending.insert(
            (deliver_at, msg_id),
            Message {
                msg_id,
                sender,
                from,
                to: out.to,
                routing_key: out.routing_key,
                payload: out.payload,
                sent_at: self.clock,
                deliver_at,
            },
        );
        msg_id
    }

    /// Processes everything due at the current clock, then advances it.
    /// Returns the log records produced.
    pub fn tick(&mut self) -> &[LogRecord] {
        let start = self.log.len();
        let now = self.clock;

        while let Some(entry) = self.pending.first_entry() {
            if entry.key().0 > now {
                break;
            }
            let message = entry.remove();
            self.deliver(message);
        }

        let arriving: Vec<AgentId> = self
            .in_flight
            .iter()
            .filter(|(_, t)| t.arrive_at <= now)
            .map(|(id, _)| *id)
            .collect();
        for id in arriving {
            self.arrive(id);
        }

        while let Some(entry) = self.steps.first_entry() {
            if entry.key().0 > now {
                break;
            }
            let step = entry.remove();
            self.advance_generation(step);
        }

        let travelling: Vec<AgentId> = self
            .agents
            .values()
            .filter(|a| !a.itinerary.is_empty() && !self.in_flight.contains_key(&a.agent_id))
            .map(|a| a.agent_id)
            .collect();
        if !travelling.is_empty() {
            let directory = self.directory();
            for id in travelling {
                self.follow_itinerary(id, &directory);
            }
        }

        self.clock += 1;
        &self.log[start..]
    }

    fn deliver(&mut self, message: Message) {
        let from_to = || Detail::new().kv("from", &message.from).kv("key", &message.routing_key);
        if self.is_partitioned(&message.from, &message.to) {
            let detail = from_to().kv("to", &message.to).kv("stage", "deliver").build();
            self.record(
                EventKind::MessageBlocked,
                Some(&message.to),
                None,
                Some(message.msg_id),
                detail,
            );
            return;
        }
        let Some(node) = self.nodes.get(&message.to) else {
            return;
        };
        if let Payload::DesignTrigger { trigger } = &message.payload {
            if node.kind == NodeKind::Manufacturer {
                let detail = from_to().build();
                self.record(
                    EventKind::MessageDelivered,
                    Some(&message.to),
                    None,
                    Some(message.msg_id),
                    detail,
                );
                self.start_design(message.to.clone(), trigger.clone());
                return;
            }
        }
        let directory: BTreeMap<AgentId, AgentRole> =
            node.residents.iter().map(|id| (*id, self.agents[id].role)).collect();
        let recipients = self.routing.route(&message.routing_key, &directory);
        if recipients.is_empty() {
            let detail = from_to().kv("payload", message.payload.kind()).build();
            self.record(
                EventKind::MessageDropped,
                Some(&message.to),
                None,
                Some(message.msg_id),
                detail,
            );
            log::info!("dropped message {} with key {}", message.msg_id, message.routing_key);
            return;
        }
        for recipient in recipients {
            let detail = from_to().kv("payload", message.payload.kind()).build();
            self.record(
                EventKind::MessageDelivered,
                Some(&message.to),
                Some(recipient),
                Some(message.msg_id),
                detail,
            );
            self.dispatch(recipient, Some(message.msg_id), |agent, ctx| {
                agents::handle(agent, &message, ctx)
            });
        }
    }

    fn context(&self, node: &NodeId) -> NodeContext {
        NodeContext {
            node: node.clone(),
            kind: self.nodes[node].kind,
            tick: self.clock,
            record_id_base: self.next_record,
            manufacturer: self.manufacturer(),
            garage: self.first_of_kind(NodeKind::RepairGarage),
            recycler: self.first_of_kind(NodeKind::RecyclingEnterprise),
            params: self.config.agent.clone(),
        }
    }

    fn dispatch(
        &mut self,
        id: AgentId,
        msg_id: Option<MsgId>,
        run: impl FnOnce(&AgentState, &NodeContext) -> Result<Handled, HandleError>,
    ) {
        let Some(agent) = self.agents.get(&id) else {
            return;
        };
        let ctx = self.context(&agent.location);
        match run(agent, &ctx) {
            Ok((mut next, effects)) => {
                // identity, role, binding and placement belong to the runtime
                next.agent_id = agent.agent_id;
                next.role = agent.role;
                next.product_id.clone_from(&agent.product_id);
                next.location.clone_from(&agent.location);
                self.agents.insert(id, next);
                self.apply_effects(id, msg_id, effects);
            }
            Err(e) => {
                let location = agent.location.clone();
                let detail = Detail::new().kv("reason", e.code()).build();
                log::info!("agent {id} at {location}: {e}");
                self.record(EventKind::Unhandled, Some(&location), Some(id), msg_id, detail);
            }
        }
    }

    fn apply_effects(&mut self, id: AgentId, msg_id: Option<MsgId>, effects: Vec<Effect>) {
        for effect in effects {
            let Some(agent) = self.agents.get(&id) else {
                return;
            };
            let node = agent.location.clone();
            let role = agent.role;
            match effect {
                Effect::SendMessage(out) => {
                    if let Err(e) = self.send(&node, Sender::Agent(id), out) {
                        let detail = Detail::new().kv("reason", e).build();
                        self.record(EventKind::Unhandled, Some(&node), Some(id), msg_id, detail);
                    }
                }
                Effect::EmitKnowledge(record) => self.emit_knowledge(id, role, &node, record),
                Effect::RequestMigration(target) => match self.migrate(id, &target) {
                    Ok(()) | Err(RuntimeError::Partitioned(..)) => {}
                    Err(e) => {
                        let detail = Detail::new().kv("reason", e).build();
                        self.record(EventKind::MigrationRefused, Some(&node), Some(id), msg_id, detail);
                    }
                },
                Effect::UpdateMemory(key, value) => self.update_memory(id, key, value),
                Effect::None => {}
            }
        }
    }

    fn update_memory(&mut self, id: AgentId, key: String, value: String) {
        let agent = self.agents.get_mut(&id).expect("caller checked");
        let previous = agent.memory.insert(key.clone(), value.clone());
        let node = agent.location.clone();
        let product = agent.product_id.as_ref().map(ToString::to_string).unwrap_or_default();
        let (kind, detail) = match key.as_str() {
            memory_keys::PHASE => (
                EventKind::PhaseChanged,
                Detail::new()
                    .kv("product", product)
                    .kv("from", previous.unwrap_or_default())
                    .kv("to", value),
            ),
            memory_keys::EOL_DECISION => (
                EventKind::EolDecided,
                Detail::new().kv("product", product).kv("decision", value),
            ),
            _ => (EventKind::MemoryUpdated, Detail::new().kv("key", key)),
        };
        self.record(kind, Some(&node), Some(id), None, detail.build());
    }

    /// Knowledge emitted anywhere is stored locally and forwarded to the
    /// manufacturer; the knowledge agent's own emissions are the
    /// manufacturer-side stores.
    fn emit_knowledge(&mut self, id: AgentId, role: AgentRole, node: &NodeId, record: KnowledgeRecord) {
        self.next_record = self.next_record.max(record.record_id() + 1);
        if role == AgentRole::AgentKnowledge {
            self.store(id, node, record);
            return;
        }
        let detail = Detail::new()
            .kv("record", record.record_id())
            .kv("product", record.product_id())
            .kv("generation", record.generation())
            .kv("mode", record.mode())
            .kv("source", record.source())
            .kv("activity", record.activity())
            .build();
        self.record(EventKind::KnowledgeEmitted, Some(node), Some(id), None, detail);
        let Some(hub) = self.manufacturer() else {
            self.store(id, node, record);
            return;
        };
        if hub != *node {
            self.store(id, node, record.clone());
        }
        let routing_key = match record.mode() {
            KnowledgeMode::Tacit => keys::KNOWLEDGE_TACIT,
            KnowledgeMode::Explicit => keys::KNOWLEDGE_EXPLICIT,
        };
        let out = Outbound {
            to: hub,
            routing_key: routing_key.into(),
            payload: Payload::KnowledgeRecord { record },
        };
        // both nodes exist, so send cannot fail
        let _ = self.send(node, Sender::Agent(id), out);
    }

    fn store(&mut self, id: AgentId, node: &NodeId, record: KnowledgeRecord) {
        let detail = Detail::new()
            .kv("record", record.record_id())
            .kv("family", record.family())
            .kv("generation", record.generation())
            .build();
        let repo = &mut self.nodes.get_mut(node).expect("agent node exists").repository;
        match repo.insert(record) {
            Ok(()) => self.record(EventKind::KnowledgeStored, Some(node), Some(id), None, detail),
            Err(_) => self.record(EventKind::KnowledgeRejected, Some(node), Some(id), None, detail),
        }
    }

    fn start_design(&mut self, node: NodeId, trigger: DesignTrigger) {
        let detail = Detail::new()
            .kv("family", &trigger.family)
            .kv("generation", trigger.generation)
            .build();
        self.record(EventKind::DesignStarted, Some(&node), None, None, detail);
        let due = self.clock + self.config.design_ticks;
        self.schedule(
            due,
            GenerationStep {
                node,
                trigger,
                phase: lifecycle::initial_state(),
            },
        );
    }

    fn schedule(&mut self, due: Tick, step: GenerationStep) {
        self.steps.insert((due, self.next_step), step);
        self.next_step += 1;
    }

    fn advance_generation(&mut self, step: GenerationStep) {
        let event = match step.phase {
            LifecyclePhase::BolDesign => LifecycleEvent::DesignComplete,
            _ => LifecycleEvent::Manufactured,
        };
        let next = lifecycle::advance(step.phase, event).expect("design pipeline follows the table");
        let detail = Detail::new()
            .kv("family", &step.trigger.family)
            .kv("generation", step.trigger.generation)
            .kv("phase", next)
            .kv("event", event)
            .build();
        if next == LifecyclePhase::BolManufacture {
            self.record(EventKind::GenerationPhase, Some(&step.node), None, None, detail);
            let due = self.clock + self.config.manufacture_ticks;
            self.schedule(due, GenerationStep { phase: next, ..step });
        } else {
            self.record(EventKind::GenerationLaunched, Some(&step.node), None, None, detail);
        }
    }

    fn arrive(&mut self, id: AgentId) {
        let transit = self.in_flight[&id].clone();
        if self.is_partitioned(&transit.from, &transit.to) {
            self.in_flight.get_mut(&id).expect("present").arrive_at = self.clock + 1;
            let detail = Detail::new().kv("from", &transit.from).kv("to", &transit.to).build();
            self.record(EventKind::MigrationHeld, None, Some(id), None, detail);
            return;
        }
        self.in_flight.remove(&id);
        let agent = self.agents.get_mut(&id).expect("in-flight agents are live");
        agent.location = transit.to.clone();
        if agent.itinerary.front() == Some(&transit.to) {
            agent.itinerary.pop_front();
        }
        self.nodes
            .get_mut(&transit.to)
            .expect("target checked at departure")
            .residents
            .insert(id);
        let detail = Detail::new().kv("from", &transit.from).build();
        self.record(EventKind::MigrationArrived, Some(&transit.to), Some(id), None, detail);
        self.dispatch(id, None, agents::on_arrival);
    }

    fn follow_itinerary(&mut self, id: AgentId, directory: &NodeDirectory) {
        let Some(agent) = self.agents.get_mut(&id) else {
            return;
        };
        while agent.itinerary.front() == Some(&agent.location) {
            agent.itinerary.pop_front();
        }
        match agents::plan_migration(agent, directory) {
            Ok(Effect::RequestMigration(target)) => {
                // refusals are logged by migrate; the hop is retried next tick
                let _ = self.migrate(id, &target);
            }
            Ok(_) => {}
            Err(unknown) => {
                agent.itinerary.pop_front();
                let node = agent.location.clone();
                let detail = Detail::new().kv("reason", format!("UnknownNode:{}", unknown.0)).build();
                self.record(EventKind::Unhandled, Some(&node), Some(id), None, detail);
            }
        }
    }

    /// Every live agent resident at exactly one node or in flight, each
    /// resident's location matching its node, and causality of the queue.
    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        let mut seen: BTreeMap<AgentId, usize> = BTreeMap::new();
        for node in self.nodes.values() {
            for id in &node.residents {
                *seen.entry(*id).or_default() += 1;
                let agent = self
                    .agents
                    .get(id)
                    .ok_or_else(|| InvariantViolation(format!("{id} resident at {} but not live", node.id)))?;
                if agent.location != node.id {
                    return Err(InvariantViolation(format!(
                        "{id} resident at {} but located at {}",
                        node.id, agent.location
                    )));
                }
            }
        }
        for id in self.in_flight.keys() {
            *seen.entry(*id).or_default() += 1;
        }
        for id in self.agents.keys() {
            match seen.get(id) {
                Some(1) => {}
                n => {
                    return Err(InvariantViolation(format!(
                        "{id} counted {} times",
                        n.copied().unwrap_or(0)
                    )))
                }
            }
        }
        if seen.len() != self.agents.len() {
            return Err(InvariantViolation("residency lists name dead agents".into()));
        }
        if self.agents.len() as u64 != self.spawned - self.terminated {
            return Err(InvariantViolation(
                "live agents differ from spawned minus terminated".into(),
            ));
        }
        for m in self.pending.values() {
            if m.deliver_at < m.sent_at || m.deliver_at < self.clock {
                return Err(InvariantViolation(format!("message {} violates causality", m.msg_id)));
            }
        }
        for a in self.agents.values() {
            if let (AgentRole::AgentProduct, Some(p)) = (a.role, &a.product_id) {
                if !self.products.contains_key(p) {
                    return Err(InvariantViolation(format!(
                        "{} shadows unknown product {p}",
                        a.agent_id
                    )));
                }
            }
        }
        Ok(())
    }
}
