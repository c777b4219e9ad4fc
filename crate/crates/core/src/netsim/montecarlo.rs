//! Seeded Monte-Carlo estimators: per-node boundary probability and the
//! connectivity comparison between the repeated-game-only and coalition
//! regimes.

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

use super::protocol::{classify_roles, run_protocol, CoalitionPolicy, NodeRole, RepeatedGameParams};
use super::routes::{discover_routes, TrafficMatrix};
use super::topology::{build_topology, Placement};
use super::NetsimError;
use crate::channel::RadioParams;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn from_samples(samples: &[f64]) -> Estimate {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() < 2 {
            0.0
        } else {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        };
        Estimate {
            mean,
            se: (var / n).sqrt(),
        }
    }
}

fn trial_rng(seed: u64, cell: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((cell << 32) | trial);
    rng
}

/// Per-node frequency of the boundary role over random traffic draws, one
/// curve per requested destination-set size. The draws are coupled so a
/// larger size always extends the smaller set, making the traffic-monotone
/// comparison exact per trial rather than statistical.
pub fn boundary_probabilities(
    placement: &Placement,
    dest_counts: &[usize],
    trials: usize,
    seed: u64,
    params: RadioParams,
) -> Result<Vec<Vec<f64>>, NetsimError> {
    assert!(trials >= 1);
    let mut hits: Vec<Vec<u64>> = Vec::new();
    for trial in 0..trials as u64 {
        let mut rng = trial_rng(seed, 0, trial);
        let topo_seed = rng.gen();
        let topology = build_topology(placement, topo_seed, params)?;
        let n_nodes = topology.len();
        if hits.is_empty() {
            hits = vec![vec![0; n_nodes]; dest_counts.len()];
        }
        let draws = TrafficMatrix::nested_uniform(n_nodes, dest_counts, &mut rng);
        for (k, traffic) in draws.iter().enumerate() {
            let routes = discover_routes(&topology, traffic);
            let roles = classify_roles(&topology, &routes);
            for (i, role) in roles.iter().enumerate() {
                if *role == NodeRole::Boundary {
                    hits[k][i] += 1;
                }
            }
        }
    }
    Ok(hits
        .into_iter()
        .map(|row| row.into_iter().map(|h| h as f64 / trials as f64).collect())
        .collect())
}

/// One sweep cell of the connectivity experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub n_nodes: usize,
    pub side: f64,
    pub trials: usize,
    /// Fraction of nodes whose flow fails under repeated-game discipline only.
    pub unconn_repeated: Estimate,
    /// Same fraction once boundary nodes may buy backbone forwarding.
    pub unconn_coalition: Estimate,
    /// Fraction of nodes with no reach-neighbor at all.
    pub isolated: Estimate,
}

/// Un-connectivity over random square topologies, one uniform reachable
/// destination per node, compared between the two incentive regimes.
/// Topology and traffic are shared within a trial so the comparison is
/// paired.
pub fn connectivity_stats(
    node_counts: &[usize],
    sides: &[f64],
    trials: usize,
    seed: u64,
    params: RadioParams,
    game: &RepeatedGameParams,
) -> Result<Vec<CellStats>, NetsimError> {
    assert!(trials >= 1);
    let mut cells = Vec::new();
    let mut cell_id = 0u64;
    for &n in node_counts {
        for &side in sides {
            cell_id += 1;
            let mut repeated = Vec::with_capacity(trials);
            let mut coalition = Vec::with_capacity(trials);
            let mut isolated = Vec::with_capacity(trials);
            for trial in 0..trials as u64 {
                let mut rng = trial_rng(seed, cell_id, trial);
                let topo_seed = rng.gen();
                let topology =
                    build_topology(&Placement::Square { n, side }, topo_seed, params)?;
                let traffic = TrafficMatrix::uniform_reachable(&topology, &mut rng);
                repeated.push(unconnectivity(
                    &run_protocol(&topology, &traffic, CoalitionPolicy::Disabled, game).flows,
                    &traffic,
                    n,
                ));
                coalition.push(unconnectivity(
                    &run_protocol(&topology, &traffic, CoalitionPolicy::MinMax, game).flows,
                    &traffic,
                    n,
                ));
                let iso = (0..n).filter(|&i| topology.is_isolated(i)).count();
                isolated.push(iso as f64 / n as f64);
            }
            cells.push(CellStats {
                n_nodes: n,
                side,
                trials,
                unconn_repeated: Estimate::from_samples(&repeated),
                unconn_coalition: Estimate::from_samples(&coalition),
                isolated: Estimate::from_samples(&isolated),
            });
        }
    }
    Ok(cells)
}

/// Fraction of nodes whose traffic goes nowhere: a node fails if it has no
/// destination at all (empty reach component) or its flow is undelivered.
fn unconnectivity(
    flows: &[super::protocol::FlowOutcome],
    traffic: &TrafficMatrix,
    n: usize,
) -> f64 {
    let delivered = flows.iter().filter(|f| f.delivered).count();
    let with_flow = traffic.dests.iter().filter(|d| !d.is_empty()).count();
    debug_assert_eq!(flows.len(), with_flow);
    (n - delivered) as f64 / n as f64
}
