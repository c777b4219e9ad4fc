//! Network layer: topologies, route discovery, role classification, the
//! repeated-game cooperation predicate, the coalition protocol, and the
//! Monte-Carlo connectivity metrics.

pub mod montecarlo;
pub mod protocol;
pub mod routes;
pub mod topology;

pub use montecarlo::{boundary_probabilities, connectivity_stats, CellStats, Estimate};
pub use protocol::{
    classify_roles, cooperation_sustainable, discounted_payoff, run_protocol, CoalitionPolicy,
    Horizon, NodeRole, ProtocolTrace, RepeatedGameParams,
};
pub use routes::{discover_routes, DependencyGraph, Route, RouteTable, TrafficMatrix};
pub use topology::{build_topology, Placement, Topology};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetsimError {
    #[error("nodes {0} and {1} share a position")]
    DegenerateGeometry(usize, usize),
    #[error("invalid placement: {0}")]
    BadPlacement(String),
}
