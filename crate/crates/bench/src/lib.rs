//! Inputs shared by the benchmarks.

use std::path::PathBuf;

use ploop_core::agents::{AgentId, AgentRole, AgentState};
use ploop_core::harness::{load_scenario, Scenario};
use ploop_core::runtime::{NodeId, NodeKind, World, WorldConfig};

pub fn fixture(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(format!("{name}.scn"));
    load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// A ring of `nodes` customer sites with `agents` service agents spread
/// round-robin, each itinerary walking once around the ring.
pub fn ring_world(nodes: usize, agents: usize) -> World {
    let mut world = World::new(WorldConfig::default());
    let ids: Vec<NodeId> = (0..nodes)
        .map(|_| world.register_node(NodeKind::CustomerSite))
        .collect();
    for i in 0..agents {
        let home = ids[i % nodes].clone();
        let tour = (1..=nodes).map(|k| ids[(i + k) % nodes].clone());
        world
            .spawn_agent(AgentState::new(AgentId(0), AgentRole::AgentService, home).with_itinerary(tour))
            .expect("home is registered");
    }
    world
}
