//! Scenario-driven runs and their reports.

mod report;
mod scenario;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::agents::{AgentId, AgentState};
use crate::identity::{SensorEvent, Tick};
use crate::knowledge::{DesignInsight, KnowledgeRepository};
use crate::runtime::{Detail, EventKind, InvariantViolation, LogRecord, NodeId, Payload, RuntimeError, World};

pub use report::{compare, ComparisonSummary, IncomparableRuns, KnowledgeCounts, Launch, RunReport};
pub use scenario::{
    load_scenario, save_scenario, AgentDecl, LatencyDecl, NodeDecl, Parameters, PartitionDecl, ProductDecl, Reading,
    Scenario, ScenarioError, Stimulus, StimulusPayload, FORMAT_VERSION,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("scenario could not be instantiated: {0}")]
    Setup(#[from] RuntimeError),
    #[error(transparent)]
    Invariant(#[from] InvariantViolation),
}

/// A finished simulation: the world in its final state and the report.
pub struct Run {
    pub world: World,
    pub report: RunReport,
}

impl Run {
    pub fn log(&self) -> &[LogRecord] {
        self.world.log()
    }

    pub fn manufacturer_repository(&self) -> Option<&KnowledgeRepository> {
        let hub = self.world.manufacturer()?;
        self.world.node(&hub).map(|n| n.repository())
    }

    /// Aggregated insight for every (family, generation) the manufacturer
    /// holds records for.
    pub fn insights(&self) -> Vec<DesignInsight> {
        let Some(repo) = self.manufacturer_repository() else {
            return Vec::new();
        };
        let keys: BTreeSet<(String, u32)> = repo
            .records()
            .iter()
            .map(|r| (r.family().to_owned(), r.generation()))
            .collect();
        keys.into_iter().map(|(f, g)| repo.aggregate(&f, g)).collect()
    }
}

/// Builds the world described by the scenario, before tick 0.
pub fn instantiate(scenario: &Scenario, seed: u64) -> Result<World, HarnessError> {
    scenario.validate()?;
    let mut world = World::new(scenario.world_config(seed));
    world.note(
        EventKind::RunStarted,
        Detail::new()
            .kv("scenario", &scenario.name)
            .kv("seed", seed)
            .kv("horizon", scenario.horizon)
            .build(),
    );
    for n in &scenario.nodes {
        world.register_node_with_id(n.id.clone(), n.kind)?;
    }
    for l in &scenario.latency {
        world.set_latency(&l.a, &l.b, l.ticks)?;
    }
    for (peid, generation, phase) in scenario.peids() {
        world.register_product(peid, generation, phase)?;
    }
    world.set_routing(scenario.routing.clone());
    for a in &scenario.agents {
        let mut state = AgentState::new(AgentId(0), a.role, a.home.clone()).with_itinerary(a.itinerary.clone());
        if let Some(p) = &a.product {
            let generation = scenario.product(p).map_or(1, |d| d.generation);
            state = state.with_product(p.clone(), generation);
        }
        world.spawn_agent(state)?;
    }
    Ok(world)
}

fn sync_partitions(world: &mut World, scenario: &Scenario, tick: Tick) -> Result<(), RuntimeError> {
    let active: BTreeSet<(NodeId, NodeId)> = scenario
        .partitions
        .iter()
        .filter(|p| p.covers(tick))
        .map(|p| {
            if p.a <= p.b {
                (p.a.clone(), p.b.clone())
            } else {
                (p.b.clone(), p.a.clone())
            }
        })
        .collect();
    let healed: Vec<(NodeId, NodeId)> = world.partitions().difference(&active).cloned().collect();
    for (a, b) in healed {
        world.heal(&a, &b);
    }
    for (a, b) in &active {
        world.partition(a, b)?;
    }
    Ok(())
}

fn to_payload(scenario: &Scenario, stimulus: &Stimulus) -> Payload {
    let generation = scenario.product(stimulus.payload.product()).map_or(1, |p| p.generation);
    match &stimulus.payload {
        StimulusPayload::SensorBatch {
            product,
            environmental,
            readings,
        } => Payload::SensorBatch {
            product: product.clone(),
            generation,
            environmental: *environmental,
            events: readings
                .iter()
                .map(|r| SensorEvent {
                    sensor: r.sensor.clone(),
                    kind: r.kind,
                    value: r.value,
                    unit: r.unit.clone(),
                    sim_time: stimulus.tick,
                })
                .collect(),
        },
        StimulusPayload::CustomerFeedback { product, text } => Payload::CustomerFeedback {
            product: product.clone(),
            generation,
            text: text.clone(),
        },
        StimulusPayload::FaultReported { product, description } => Payload::FaultReported {
            product: product.clone(),
            generation,
            description: description.clone(),
        },
        StimulusPayload::Retirement { product, conditions } => Payload::RetirementRequested {
            product: product.clone(),
            generation,
            conditions: conditions.clone(),
        },
    }
}

/// Runs ticks `0..horizon`, checking world invariants after every tick.
/// `seed` overrides the scenario's seed.
pub fn simulate(scenario: &Scenario, seed: Option<u64>) -> Result<Run, HarnessError> {
    let seed = seed.unwrap_or(scenario.seed);
    let mut world = instantiate(scenario, seed)?;
    let mut stimuli: Vec<&Stimulus> = scenario.stimuli.iter().collect();
    stimuli.sort_by_key(|s| s.tick);
    let mut next = stimuli.into_iter().peekable();

    for tick in 0..scenario.horizon {
        sync_partitions(&mut world, scenario, tick)?;
        while let Some(s) = next.next_if(|s| s.tick == tick) {
            world.inject(&s.node, &s.key, to_payload(scenario, s))?;
        }
        world.tick();
        world.check_invariants()?;
    }
    world.note(
        EventKind::RunFinished,
        Detail::new().kv("ticks", scenario.horizon).build(),
    );
    let report = RunReport::from_log(world.log());
    Ok(Run { world, report })
}

pub fn run(scenario: &Scenario, seed: Option<u64>) -> Result<RunReport, HarnessError> {
    simulate(scenario, seed).map(|r| r.report)
}
