//! Traffic, min-hop route discovery, and the forwarding dependency graph.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;

use super::topology::Topology;

/// Per-node destination sets D_i.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficMatrix {
    pub dests: Vec<Vec<usize>>,
}

impl TrafficMatrix {
    /// k destinations per node, uniform without replacement over the others.
    pub fn uniform(n: usize, k: usize, rng: &mut impl Rng) -> TrafficMatrix {
        Self::nested_uniform(n, &[k], rng).pop().unwrap()
    }

    /// Coupled draws: one matrix per requested size, where smaller sets are
    /// prefixes of larger ones (D_k ⊆ D_k' for k ≤ k'). Useful for
    /// comparing traffic loads without Monte-Carlo noise between draws.
    pub fn nested_uniform(n: usize, ks: &[usize], rng: &mut impl Rng) -> Vec<TrafficMatrix> {
        let k_max = ks.iter().copied().max().unwrap_or(0).min(n.saturating_sub(1));
        let draws: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                sample(rng, n - 1, k_max)
                    .iter()
                    .map(|x| if x >= i { x + 1 } else { x })
                    .collect()
            })
            .collect();
        ks.iter()
            .map(|&k| TrafficMatrix {
                dests: draws.iter().map(|d| d[..k.min(d.len())].to_vec()).collect(),
            })
            .collect()
    }

    /// One destination per node, uniform over the nodes it can reach at all;
    /// nodes with empty reach components get no flow.
    pub fn uniform_reachable(topology: &Topology, rng: &mut impl Rng) -> TrafficMatrix {
        let dests = (0..topology.len())
            .map(|i| {
                let reachable = topology.reachable_set(i);
                if reachable.is_empty() {
                    Vec::new()
                } else {
                    vec![reachable[rng.gen_range(0..reachable.len())]]
                }
            })
            .collect();
        TrafficMatrix { dests }
    }

    pub fn flows(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.dests
            .iter()
            .enumerate()
            .flat_map(|(i, ds)| ds.iter().map(move |&j| (i, j)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Route {
    /// Node sequence from source to destination inclusive.
    Path(Vec<usize>),
    Unroutable,
}

impl Route {
    /// Intermediate nodes, excluding both endpoints.
    pub fn forwarders(&self) -> &[usize] {
        match self {
            Route::Path(p) if p.len() > 2 => &p[1..p.len() - 1],
            _ => &[],
        }
    }

    pub fn is_routable(&self) -> bool {
        matches!(self, Route::Path(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteTable {
    pub flows: BTreeMap<(usize, usize), Route>,
}

impl RouteTable {
    pub fn get(&self, i: usize, j: usize) -> Option<&Route> {
        self.flows.get(&(i, j))
    }
}

/// Minimum-hop route per flow; equal-hop ties fall to minimum summed direct
/// power, then to the lexicographically smallest node sequence.
pub fn discover_routes(topology: &Topology, traffic: &TrafficMatrix) -> RouteTable {
    let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, j) in traffic.flows() {
        debug_assert_ne!(i, j, "self-flows are not allowed");
        by_source.entry(i).or_default().push(j);
    }
    let mut flows = BTreeMap::new();
    for (src, dests) in by_source {
        for (dst, route) in source_routes(topology, src, &dests) {
            flows.insert((src, dst), route);
        }
    }
    RouteTable { flows }
}

/// Level-order search from one source, settling (hops, power, lex) -best
/// paths one hop ring at a time until every destination is resolved.
fn source_routes(topology: &Topology, src: usize, dests: &[usize]) -> Vec<(usize, Route)> {
    let n = topology.len();
    // Fast path: every destination is one hop away.
    if dests.iter().all(|&d| topology.reachable(src, d)) {
        return dests
            .iter()
            .map(|&d| (d, Route::Path(vec![src, d])))
            .collect();
    }

    let mut hop = vec![u32::MAX; n];
    let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; n];
    hop[src] = 0;
    best[src] = Some((0.0, vec![src]));
    let mut pending = dests.iter().filter(|&&d| d != src).count();
    let mut frontier = vec![src];
    let mut level = 0u32;
    while !frontier.is_empty() && pending > 0 {
        level += 1;
        let mut next = Vec::new();
        for &u in &frontier {
            for &v in topology.neighbors(u) {
                if hop[v] == u32::MAX {
                    hop[v] = level;
                    next.push(v);
                }
            }
        }
        next.sort_unstable();
        next.dedup();
        for &v in &next {
            let mut chosen: Option<(f64, &Vec<usize>)> = None;
            for &u in topology.neighbors(v) {
                if hop[u] != level - 1 {
                    continue;
                }
                let (p_u, path_u) = best[u].as_ref().expect("settled predecessor");
                let p = p_u + topology.direct_power(u, v);
                let better = match &chosen {
                    None => true,
                    Some((p_c, path_c)) => p < *p_c || (p == *p_c && path_u < path_c),
                };
                if better {
                    chosen = Some((p, path_u));
                }
            }
            let (p, path) = chosen.expect("frontier node has a settled predecessor");
            let mut path = path.clone();
            path.push(v);
            best[v] = Some((p, path));
            if dests.contains(&v) {
                pending -= 1;
            }
        }
        frontier = next;
    }
    dests
        .iter()
        .map(|&d| {
            let route = match &best[d] {
                Some((_, path)) => Route::Path(path.clone()),
                None => Route::Unroutable,
            };
            (d, route)
        })
        .collect()
}

/// Who forwards for whom, aggregated over the selected routes.
#[derive(Debug, Clone)]
pub struct DependencyGraph {
    /// depends[i][k]: k forwards on some selected route sourced at i.
    depends: Vec<Vec<bool>>,
    forwards_any: Vec<bool>,
}

impl DependencyGraph {
    pub fn from_routes(n: usize, routes: &RouteTable) -> DependencyGraph {
        let mut depends = vec![vec![false; n]; n];
        let mut forwards_any = vec![false; n];
        for ((i, _), route) in &routes.flows {
            for &k in route.forwarders() {
                depends[*i][k] = true;
                forwards_any[k] = true;
            }
        }
        DependencyGraph {
            depends,
            forwards_any,
        }
    }

    /// k forwards traffic sourced at i.
    pub fn depends(&self, i: usize, k: usize) -> bool {
        self.depends[i][k]
    }

    pub fn forwards_any(&self, k: usize) -> bool {
        self.forwards_any[k]
    }

    /// Pairwise mutual dependency: each forwards for the other.
    pub fn mutual(&self, i: usize, k: usize) -> bool {
        self.depends[i][k] && self.depends[k][i]
    }
}
