//! Role classification, the repeated-game cooperation predicate, and the
//! six-step coalition protocol.

use log::{info, warn};

use super::routes::{discover_routes, DependencyGraph, Route, RouteTable, TrafficMatrix};
use super::topology::Topology;
use crate::fairness::{self, CooperationInstance};
use crate::geom::Point;
use crate::market::{self, MarketInstance};

/// Offer granularity the protocol uses when the market policy runs an
/// auction inside a trial (coarser than the standalone market default to
/// keep Monte-Carlo loops fast).
const PROTOCOL_MARKET_DELTA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Backbone,
    Boundary,
    Isolated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

/// Discipline parameters of the repeated forwarding game: future-payoff
/// discount beta, per-packet forwarding cost c and delivery benefit b.
///
/// The defaults make cooperation among mutually dependent nodes
/// sustainable, which is the regime the coalition analysis assumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepeatedGameParams {
    pub beta: f64,
    pub forward_cost: f64,
    pub forward_benefit: f64,
    pub horizon: Horizon,
}

impl Default for RepeatedGameParams {
    fn default() -> Self {
        RepeatedGameParams {
            beta: 0.9,
            forward_cost: 0.5,
            forward_benefit: 1.0,
            horizon: Horizon::Infinite,
        }
    }
}

impl RepeatedGameParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(format!("beta must be in [0, 1), got {}", self.beta));
        }
        if !(self.forward_cost > 0.0) || !(self.forward_benefit > 0.0) {
            return Err("forward cost and benefit must be positive".into());
        }
        Ok(())
    }
}

/// Discounted payoff of a per-period stream. The infinite horizon treats
/// the stream as eventually constant at its last element and returns the
/// normalized average (1-beta) * sum beta^(t-1) u(t); the finite horizon
/// returns the plain discounted sum over T periods, extending the stream
/// with its last value if shorter.
pub fn discounted_payoff(stream: &[f64], beta: f64, horizon: Horizon) -> f64 {
    assert!((0.0..1.0).contains(&beta), "beta must be in [0, 1)");
    let Some(&tail) = stream.last() else { return 0.0 };
    match horizon {
        Horizon::Infinite => {
            let mut head = 0.0;
            let mut w = 1.0;
            for &u in &stream[..stream.len() - 1] {
                head += w * u;
                w *= beta;
            }
            (1.0 - beta) * head + w * tail
        }
        Horizon::Finite(t_max) => {
            let mut total = 0.0;
            let mut w = 1.0;
            for t in 0..t_max {
                total += w * stream.get(t).copied().unwrap_or(tail);
                w *= beta;
            }
            total
        }
    }
}

/// Grim-trigger sustainability: cooperation holds only under mutual
/// dependency, and only for nodes patient enough that the one-shot gain of
/// refusing (cost c) loses against the discounted benefit stream (b per
/// period). Without mutual dependency defection cannot be punished.
pub fn cooperation_sustainable(params: &RepeatedGameParams, mutual: bool) -> bool {
    mutual && params.beta >= params.forward_cost / params.forward_benefit
}

/// Per-node roles: isolated nodes have no reach-neighbors; backbone nodes
/// forward on some selected route; boundary nodes forward for no one while
/// some potential destination of theirs lies two or more hops away. Nodes
/// whose whole reach component is adjacent count as backbone — they never
/// need a forwarder.
pub fn classify_roles(topology: &Topology, routes: &RouteTable) -> Vec<NodeRole> {
    let n = topology.len();
    let dep = DependencyGraph::from_routes(n, routes);
    (0..n)
        .map(|i| {
            if topology.is_isolated(i) {
                NodeRole::Isolated
            } else if dep.forwards_any(i) {
                NodeRole::Backbone
            } else if topology.reachable_set(i).len() > topology.neighbors(i).len() {
                NodeRole::Boundary
            } else {
                NodeRole::Backbone
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoalitionPolicy {
    /// Repeated-game discipline only; boundary nodes stay cursed.
    Disabled,
    MinMax,
    Average,
    Market,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coalition {
    pub boundary: usize,
    pub backbone: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutcome {
    pub src: usize,
    pub dst: usize,
    pub delivered: bool,
    pub via_coalition: bool,
}

/// One protocol run: roles, formed coalitions (sorted by boundary node),
/// flow outcomes (sorted by source then destination), and per-node power
/// spent, in watts summed per transmitted packet: own source hops,
/// forwarding hops on delivered flows, and 1/alpha relayed packets per
/// coalition-delivered own packet.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolTrace {
    pub roles: Vec<NodeRole>,
    pub coalitions: Vec<Coalition>,
    pub flows: Vec<FlowOutcome>,
    pub node_power: Vec<f64>,
}

impl ProtocolTrace {
    pub fn delivered_fraction(&self) -> f64 {
        if self.flows.is_empty() {
            return 1.0;
        }
        let ok = self.flows.iter().filter(|f| f.delivered).count();
        ok as f64 / self.flows.len() as f64
    }
}

/// Runs the six protocol steps: route discovery, repeated-game marking,
/// backbone listing, coalition formation under the chosen policy, and
/// delivery accounting. Failures are recorded in the trace, never raised.
pub fn run_protocol(
    topology: &Topology,
    traffic: &TrafficMatrix,
    policy: CoalitionPolicy,
    game: &RepeatedGameParams,
) -> ProtocolTrace {
    let n = topology.len();
    // Step 1: route discovery.
    let routes = discover_routes(topology, traffic);
    let dep = DependencyGraph::from_routes(n, &routes);
    let roles = classify_roles(topology, &routes);

    // Step 2: a forwarder complies for sources that themselves carry
    // traffic for the community; binding is source-level, so a flow
    // survives iff its source forwards for someone and nodes are patient.
    let bound: Vec<bool> = (0..n)
        .map(|i| cooperation_sustainable(game, dep.forwards_any(i)))
        .collect();
    let base_delivered: std::collections::BTreeMap<(usize, usize), bool> = routes
        .flows
        .iter()
        .map(|(&(i, j), route)| {
            let ok = match route {
                Route::Unroutable => false,
                Route::Path(_) if route.forwarders().is_empty() => true,
                Route::Path(_) => bound[i],
            };
            ((i, j), ok)
        })
        .collect();

    // Step 3: backbones with an active transmission. The first hops of
    // their delivered flows are the links a coalition partner can assist.
    let active_hops: Vec<Vec<usize>> = (0..n)
        .map(|b| {
            if roles[b] != NodeRole::Backbone {
                return Vec::new();
            }
            routes
                .flows
                .iter()
                .filter_map(|(&(i, j), route)| {
                    if i != b || !base_delivered[&(i, j)] {
                        return None;
                    }
                    match route {
                        Route::Path(p) => Some(p[1]),
                        Route::Unroutable => None,
                    }
                })
                .collect()
        })
        .collect();

    // Steps 4-5: each boundary node enlists reach-neighbor backbones and a
    // reward ratio is fixed under the configured fairness policy.
    let mut coalitions = Vec::new();
    if policy != CoalitionPolicy::Disabled {
        for i in 0..n {
            if roles[i] != NodeRole::Boundary {
                continue;
            }
            // Candidate backbones, each with a transmission the boundary
            // node can assist. A relay cannot sit on the receiver, so a
            // backbone whose delivered flows all point at the boundary node
            // instead offers the first hop it would use to carry the
            // boundary node's own packets onward.
            let candidates: Vec<(usize, Point, Point)> = topology
                .neighbors(i)
                .iter()
                .filter_map(|&b| {
                    if active_hops[b].is_empty() {
                        return None;
                    }
                    let hop = match active_hops[b].iter().find(|&&h| h != i) {
                        Some(&h) => h,
                        None => {
                            forwarding_hop(topology, b, traffic.dests[i].first().copied(), i)?
                        }
                    };
                    Some((b, topology.position(b), topology.position(hop)))
                })
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let formed = match policy {
                CoalitionPolicy::Market if candidates.len() >= 2 => {
                    market_coalition(topology, i, &candidates)
                }
                CoalitionPolicy::Market => {
                    info!(
                        "boundary {i} has a single candidate backbone; market \
                         policy falls back to the monopoly min-max ratio"
                    );
                    best_alpha_coalition(topology, i, &candidates)
                }
                _ => best_alpha_coalition(topology, i, &candidates),
            };
            if let Some(c) = formed {
                coalitions.push(c);
            }
        }
    }
    let coalition_of: std::collections::BTreeMap<usize, &Coalition> =
        coalitions.iter().map(|c| (c.boundary, c)).collect();

    // Step 6: final delivery and power accounting.
    let mut flows = Vec::new();
    let mut node_power = vec![0.0; n];
    for (&(i, j), route) in &routes.flows {
        let base = base_delivered[&(i, j)];
        let cured = !base && route.is_routable() && coalition_of.contains_key(&i);
        let delivered = base || cured;
        if delivered {
            if let Route::Path(p) = route {
                for w in p.windows(2) {
                    node_power[w[0]] += topology.direct_power(w[0], w[1]);
                }
            }
            if cured {
                let c = coalition_of[&i];
                node_power[i] += topology.params().p_max / c.alpha;
            }
        }
        flows.push(FlowOutcome {
            src: i,
            dst: j,
            delivered,
            via_coalition: cured,
        });
    }

    ProtocolTrace {
        roles,
        coalitions,
        flows,
        node_power,
    }
}

/// First hop of the route the backbone would use to carry packets toward
/// `dest`, skipped when it would transmit straight at the node the hop is
/// meant to be relayed by.
fn forwarding_hop(
    topology: &Topology,
    backbone: usize,
    dest: Option<usize>,
    avoid: usize,
) -> Option<usize> {
    let j = dest?;
    if j == backbone {
        return None;
    }
    let mut dests = vec![Vec::new(); topology.len()];
    dests[backbone] = vec![j];
    let routes = discover_routes(topology, &TrafficMatrix { dests });
    match routes.get(backbone, j)? {
        Route::Path(p) => (p[1] != avoid).then(|| p[1]),
        Route::Unroutable => None,
    }
}

/// Largest-reward backbone choice among the candidates; ties fall to the
/// lowest backbone index. Min-max and average fairness coincide for a
/// single relay, so one ratio serves both policies.
fn best_alpha_coalition(
    topology: &Topology,
    boundary: usize,
    candidates: &[(usize, Point, Point)],
) -> Option<Coalition> {
    let mut best: Option<Coalition> = None;
    for &(b, src, hop) in candidates {
        let Ok(inst) = CooperationInstance::new(
            src,
            hop,
            vec![topology.position(boundary)],
            None,
            *topology.params(),
        ) else {
            continue;
        };
        let alpha = fairness::minmax_alpha(&inst).alpha.0[0];
        if alpha > 0.0 && best.as_ref().map_or(true, |c| alpha > c.alpha) {
            best = Some(Coalition {
                boundary,
                backbone: b,
                alpha,
            });
        }
    }
    best
}

/// Lets the candidate backbones compete for the boundary node in an
/// ascending auction; the winning offer becomes the coalition ratio.
fn market_coalition(
    topology: &Topology,
    boundary: usize,
    candidates: &[(usize, Point, Point)],
) -> Option<Coalition> {
    let backbones: Vec<(Point, Point)> =
        candidates.iter().map(|&(_, s, h)| (s, h)).collect();
    let inst = MarketInstance::new(
        backbones,
        vec![topology.position(boundary)],
        None,
        *topology.params(),
    )
    .ok()?;
    match market::market_equilibrium(&inst, PROTOCOL_MARKET_DELTA) {
        Ok(out) => {
            let m = out.assignment.0[0]?;
            let alpha = out.offers[m][0];
            (alpha > 0.0).then(|| Coalition {
                boundary,
                backbone: candidates[m].0,
                alpha,
            })
        }
        Err(e) => {
            warn!("auction for boundary {boundary} failed: {e}");
            None
        }
    }
}
