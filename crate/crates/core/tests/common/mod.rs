//! Oracles and fixture helpers shared by the integration and acceptance
//! tests. Each oracle is written independently of the library code it
//! checks.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use ploop_core::agents::{AgentId, AgentRole, AgentState};
use ploop_core::harness::{load_scenario, Scenario};
use ploop_core::identity::{PeidCapability, Tick};
use ploop_core::knowledge::{Activity, KnowledgeMode};
use ploop_core::lifecycle::{ComponentCondition, EolDecision};
use ploop_core::runtime::{
    EventKind, LogRecord, NodeId, NodeKind, RoutingRule, RoutingTable, Selector, World, WorldConfig,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FIXTURES: [&str; 5] = [
    "closed_loop",
    "closed_loop_baseline",
    "minimal",
    "partition",
    "eol_disposition",
];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(format!("{name}.scn"))
}

pub fn fixture(name: &str) -> Scenario {
    load_scenario(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Tick at which the closed-loop fixture's knowledge agent issues the
/// design trigger, stepped by hand:
///
/// * feedback injected at home on ticks 10..=14, handled the same tick;
/// * each record is forwarded to the factory, home-factory latency 3, so
///   they arrive on ticks 13..=17;
/// * the fifth arrival (tick 17) reaches K = 5 and the trigger is sent.
pub const CLOSED_LOOP_TRIGGER_TICK: Tick = 17;
/// Trigger sent at 17, delivered to the factory at 18 (same-node latency
/// 1), 20 design ticks, 10 manufacture ticks.
pub const CLOSED_LOOP_LAUNCH_TICK: Tick = 48;
/// Retirement at tick 30 on the tag, tag-factory latency 2, then 30 ticks.
pub const BASELINE_LAUNCH_TICK: Tick = 62;

/// Admissible modes per innovation activity: (activity, tacit, explicit).
pub const ACTIVITY_MODES: [(Activity, bool, bool); 9] = [
    (Activity::UserInsight, true, true),
    (Activity::MarketInvestigation, false, true),
    (Activity::IdeaConceptGeneration, true, true),
    (Activity::ProductRequirements, false, true),
    (Activity::EngineeringDesign, false, true),
    (Activity::MarketingLaunch, true, true),
    (Activity::Sales, true, true),
    (Activity::Customer, true, true),
    (Activity::IntelligentProduct, true, false),
];

pub fn expected_modes(tacit: bool, explicit: bool) -> BTreeSet<KnowledgeMode> {
    let mut out = BTreeSet::new();
    if tacit {
        out.insert(KnowledgeMode::Tacit);
    }
    if explicit {
        out.insert(KnowledgeMode::Explicit);
    }
    out
}

/// Level 2 needs all five capabilities; Level 1 needs the first three.
pub fn intelligence_oracle(caps: &BTreeSet<PeidCapability>) -> u8 {
    let first_three = [
        PeidCapability::UniqueId,
        PeidCapability::Communication,
        PeidCapability::SelfStorage,
    ];
    if caps.len() == 5 {
        2
    } else if first_three.iter().all(|c| caps.contains(c)) {
        1
    } else {
        0
    }
}

pub fn subset(mask: u8) -> BTreeSet<PeidCapability> {
    PeidCapability::ALL
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, c)| *c)
        .collect()
}

/// Naive first-match router: scan every rule, remember the first hit,
/// expand by brute force over all agents.
pub fn naive_route(rules: &[(String, Vec<Selector>)], key: &str, agents: &[(u64, AgentRole)]) -> Vec<AgentId> {
    let mut hit = None;
    for (pattern, recipients) in rules {
        let matched = if let Some(prefix) = pattern.strip_suffix('*') {
            key.len() >= prefix.len() && key[..prefix.len()] == *prefix
        } else {
            key == pattern
        };
        if matched && hit.is_none() {
            hit = Some(recipients);
        }
    }
    let mut out: Vec<AgentId> = Vec::new();
    for (id, role) in agents {
        let wanted = hit.into_iter().flatten().any(|s| match s {
            Selector::Role(r) => r == role,
            Selector::Agent(a) => a.0 == *id,
        });
        if wanted {
            out.push(AgentId(*id));
        }
    }
    out.sort();
    out
}

const KEY_WORDS: [&str; 6] = ["sensor", "fault", "feedback", "service", "knowledge", "x"];

pub fn random_key(rng: &mut ChaCha8Rng) -> String {
    let parts = rng.random_range(1..=3);
    (0..parts)
        .map(|_| *KEY_WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(".")
}

pub fn random_pattern(rng: &mut ChaCha8Rng) -> String {
    let key = random_key(rng);
    match rng.random_range(0..3) {
        0 => key,
        1 => format!("{key}*"),
        _ => format!("{}*", &key[..rng.random_range(0..=key.len())]),
    }
}

pub fn random_table(rng: &mut ChaCha8Rng, rules: usize, agents: u64) -> Vec<(String, Vec<Selector>)> {
    let mut out: Vec<(String, Vec<Selector>)> = (0..rules - 1)
        .map(|_| {
            let n = rng.random_range(0..4);
            let recipients = (0..n)
                .map(|_| {
                    if rng.random_bool(0.5) {
                        Selector::Role(*AgentRole::ALL.choose(rng).unwrap())
                    } else {
                        Selector::Agent(AgentId(rng.random_range(0..agents + 3)))
                    }
                })
                .collect();
            (random_pattern(rng), recipients)
        })
        .collect();
    out.push(("*".into(), vec![Selector::Role(AgentRole::AgentKnowledge)]));
    out
}

pub fn build_table(rules: &[(String, Vec<Selector>)]) -> RoutingTable {
    RoutingTable::new(
        rules
            .iter()
            .map(|(p, r)| RoutingRule::new(p, r.clone()).unwrap())
            .collect(),
    )
    .unwrap()
}

/// Runs `cases` random tables, each with `keys_per_table` keys, and
/// returns the number of mismatches against [`naive_route`].
pub fn routing_mismatches(seed: u64, cases: usize, keys_per_table: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..cases {
        let n_agents = rng.random_range(0..12u64);
        let agents: Vec<(u64, AgentRole)> = (1..=n_agents)
            .map(|id| (id, *AgentRole::ALL.choose(&mut rng).unwrap()))
            .collect();
        let directory: BTreeMap<AgentId, AgentRole> = agents.iter().map(|(id, r)| (AgentId(*id), *r)).collect();
        let n_rules = rng.random_range(1..=20);
        let rules = random_table(&mut rng, n_rules, n_agents);
        let table = build_table(&rules);
        for _ in 0..keys_per_table {
            let key = random_key(&mut rng);
            if table.route(&key, &directory) != naive_route(&rules, &key, &agents) {
                mismatches += 1;
            }
        }
    }
    mismatches
}

/// Disposal ladder written out as straight-line comparisons against the
/// default thresholds (0.8, 0.6, 0.3) and a spread of 0.2.
pub fn ladder_oracle(conds: &[(f64, bool)]) -> EolDecision {
    let n = conds.len() as f64;
    let mut total = 0.0;
    let mut best = 0.0f64;
    let mut hazard = false;
    for &(c, h) in conds {
        total += c;
        if c > best {
            best = c;
        }
        hazard |= h;
    }
    let mean = total / n;
    if mean >= 0.8 {
        return EolDecision::ReuseRefurbish;
    }
    if best >= 0.6 {
        return EolDecision::ReuseComponentsDisassembly;
    }
    if mean >= 0.3 {
        for &(c, _) in conds {
            let distance = if c > mean { c - mean } else { mean - c };
            if c >= 0.3 && distance > 0.2 {
                return EolDecision::ReclaimWithDisassembly;
            }
        }
        return EolDecision::ReclaimNoDisassembly;
    }
    if hazard {
        EolDecision::DisposeIncineration
    } else {
        EolDecision::DisposeNoIncineration
    }
}

pub fn random_conditions(rng: &mut ChaCha8Rng) -> Vec<(f64, bool)> {
    let n = rng.random_range(1..=6);
    (0..n)
        .map(|_| {
            // coarse grid values exercise the threshold boundaries exactly
            let c = if rng.random_bool(0.3) {
                rng.random_range(0..=20) as f64 / 20.0
            } else {
                rng.random_range(0.0..=1.0)
            };
            (c, rng.random_bool(0.2))
        })
        .collect()
}

pub fn to_conditions(raw: &[(f64, bool)]) -> Vec<ComponentCondition> {
    raw.iter()
        .enumerate()
        .map(|(i, &(c, h))| ComponentCondition::new(format!("c{i}"), c, h).unwrap())
        .collect()
}

/// Counts, for every live agent, how many places (node resident sets plus
/// the in-flight table) hold it. Returns the first discrepancy.
pub fn census(world: &World) -> Result<usize, String> {
    let mut count: BTreeMap<AgentId, usize> = BTreeMap::new();
    for node in world.nodes() {
        for id in node.residents() {
            *count.entry(*id).or_default() += 1;
        }
    }
    for id in world.in_flight().keys() {
        *count.entry(*id).or_default() += 1;
    }
    let live: Vec<AgentId> = world.agents().map(|a| a.agent_id).collect();
    for id in &live {
        if count.get(id) != Some(&1) {
            return Err(format!("{id} counted {:?} times", count.get(id)));
        }
    }
    if count.len() != live.len() {
        return Err(format!("{} placed agents but {} live", count.len(), live.len()));
    }
    let expected = world.spawned() - world.terminated();
    if live.len() as u64 != expected {
        return Err(format!("{} live but spawned-terminated is {expected}", live.len()));
    }
    Ok(live.len())
}

pub struct FuzzOutcome {
    pub violations: usize,
    pub migrations: usize,
    pub refused: usize,
    pub held: usize,
}

/// Random spawn/migrate/partition/heal/terminate/tick operations with a
/// census after every one.
pub fn migration_fuzz(seed: u64, operations: usize) -> FuzzOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = World::new(WorldConfig {
        seed,
        ..WorldConfig::default()
    });
    let nodes: Vec<NodeId> = (0..6).map(|_| world.register_node(NodeKind::CustomerSite)).collect();
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            world
                .set_latency(&nodes[i], &nodes[j], rng.random_range(1..=4))
                .unwrap();
        }
    }
    for i in 0..30 {
        let home = nodes[i % nodes.len()].clone();
        world
            .spawn_agent(AgentState::new(AgentId(0), AgentRole::AgentService, home))
            .unwrap();
    }
    let mut violations = 0;
    for _ in 0..operations {
        let live: Vec<AgentId> = world.agents().map(|a| a.agent_id).collect();
        let a = nodes.choose(&mut rng).unwrap().clone();
        let b = nodes.choose(&mut rng).unwrap().clone();
        match rng.random_range(0..100) {
            0..=7 => {
                let role = *AgentRole::ALL[1..].choose(&mut rng).unwrap();
                world.spawn_agent(AgentState::new(AgentId(0), role, a)).unwrap();
            }
            8..=49 if !live.is_empty() => {
                let id = *live.choose(&mut rng).unwrap();
                let _ = world.migrate(id, &b);
            }
            50..=59 => {
                let _ = world.partition(&a, &b);
            }
            60..=69 => world.heal(&a, &b),
            70..=77 if !live.is_empty() => {
                let id = *live.choose(&mut rng).unwrap();
                let _ = world.terminate_agent(id);
            }
            _ => {
                world.tick();
            }
        }
        if census(&world).is_err() || world.check_invariants().is_err() {
            violations += 1;
        }
    }
    let count = |kind: EventKind| world.log().iter().filter(|r| r.event_kind == kind).count();
    FuzzOutcome {
        violations,
        migrations: count(EventKind::MigrationArrived),
        refused: count(EventKind::MigrationRefused),
        held: count(EventKind::MigrationHeld),
    }
}

/// Log audit for a severed pair over `from..=to`: nothing sent, delivered,
/// started or arrived across it. Returns offending records.
pub fn partition_crossings<'a>(log: &'a [LogRecord], a: &str, b: &str, from: Tick, to: Tick) -> Vec<&'a LogRecord> {
    let across = |x: Option<&str>, y: Option<&str>| matches!((x, y), (Some(x), Some(y)) if (x == a && y == b) || (x == b && y == a));
    log.iter()
        .filter(|r| (from..=to).contains(&r.tick))
        .filter(|r| {
            let here = r.node.as_deref();
            let d = r.detail_map();
            match r.event_kind {
                EventKind::MessageSent | EventKind::MigrationStarted => across(here, d.get("to").copied()),
                EventKind::MessageDelivered | EventKind::MigrationArrived => across(d.get("from").copied(), here),
                _ => false,
            }
        })
        .collect()
}

pub fn render(log: &[LogRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    LogRecord::write_jsonl(log, &mut out).unwrap();
    out
}
