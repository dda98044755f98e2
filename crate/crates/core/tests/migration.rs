mod common;

use ploop_core::agents::{AgentId, AgentRole, AgentState};
use ploop_core::runtime::{EventKind, NodeId, NodeKind, RuntimeError, World, WorldConfig};

#[test]
fn census_holds_over_ten_thousand_operations() {
    for seed in [1, 2, 3] {
        let outcome = common::migration_fuzz(seed, 10_000);
        assert_eq!(outcome.violations, 0, "seed {seed}");
        assert!(outcome.migrations > 0 && outcome.refused > 0 && outcome.held > 0);
    }
}

#[test]
fn unknown_agent_and_node_are_errors() {
    let mut w = World::new(WorldConfig::default());
    let a = w.register_node(NodeKind::RepairGarage);
    let id = w
        .spawn_agent(AgentState::new(AgentId(0), AgentRole::AgentService, a.clone()))
        .unwrap();
    let ghost = NodeId::new("ghost").unwrap();
    assert_eq!(
        w.migrate(AgentId(99), &a).unwrap_err(),
        RuntimeError::UnknownAgent(AgentId(99))
    );
    assert_eq!(w.migrate(id, &ghost).unwrap_err(), RuntimeError::UnknownNode(ghost));
    common::census(&w).unwrap();
}

#[test]
fn itinerary_is_visited_in_order() {
    let mut w = World::new(WorldConfig::default());
    let start = w.register_node(NodeKind::Manufacturer);
    let stops: Vec<NodeId> = (0..3).map(|_| w.register_node(NodeKind::CustomerSite)).collect();
    w.set_latency(&stops[0], &stops[1], 3).unwrap();
    let id = w
        .spawn_agent(AgentState::new(AgentId(0), AgentRole::AgentService, start).with_itinerary(stops.clone()))
        .unwrap();
    for _ in 0..20 {
        w.tick();
    }
    let visits: Vec<String> = w
        .log()
        .iter()
        .filter(|r| r.event_kind == EventKind::MigrationArrived && r.agent.as_deref() == Some(&id.to_string()))
        .map(|r| r.node.clone().unwrap())
        .collect();
    let expected: Vec<String> = stops.iter().map(ToString::to_string).collect();
    assert_eq!(visits, expected);
    assert!(w.agent(id).unwrap().itinerary.is_empty());
}

#[test]
fn itinerary_with_unknown_stop_skips_it() {
    let mut w = World::new(WorldConfig::default());
    let a = w.register_node(NodeKind::Manufacturer);
    let b = w.register_node(NodeKind::CustomerSite);
    let ghost = NodeId::new("ghost").unwrap();
    let id = w
        .spawn_agent(AgentState::new(AgentId(0), AgentRole::AgentService, a).with_itinerary([ghost, b.clone()]))
        .unwrap();
    for _ in 0..5 {
        w.tick();
    }
    assert_eq!(w.agent(id).unwrap().location, b);
    assert!(w.log().iter().any(|r| r.event_kind == EventKind::Unhandled));
}
