//! Node placements and the reach relation.

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

use super::NetsimError;
use crate::channel::{self, RadioParams};
use crate::geom::Point;

/// Slack on the power cap so a link that needs exactly the cap still counts
/// as reachable despite float noise.
const REACH_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    /// n nodes on the x-axis, `spacing` meters apart.
    Linear { n: usize, spacing: f64 },
    /// n nodes uniform in a `side` x `side` square.
    Square { n: usize, side: f64 },
    Explicit(Vec<Point>),
}

/// An undirected reach graph over node positions: (i, l) is an edge iff a
/// direct transmission from i to l fits under the power cap.
#[derive(Debug, Clone)]
pub struct Topology {
    positions: Vec<Point>,
    params: RadioParams,
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> Point {
        self.positions[i]
    }

    pub fn params(&self) -> &RadioParams {
        &self.params
    }

    /// Reach-neighbors of i, ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn reachable(&self, i: usize, l: usize) -> bool {
        self.neighbors[i].binary_search(&l).is_ok()
    }

    pub fn is_isolated(&self, i: usize) -> bool {
        self.neighbors[i].is_empty()
    }

    /// Power a direct i -> l transmission needs.
    pub fn direct_power(&self, i: usize, l: usize) -> f64 {
        let d = self.positions[i].distance(&self.positions[l]);
        let g = channel::path_gain(d, &self.params).expect("distinct positions");
        channel::direct_power(g, &self.params)
    }

    /// Every node reachable from i over reach edges, ascending, excluding i.
    pub fn reachable_set(&self, i: usize) -> Vec<usize> {
        let mut seen = vec![false; self.len()];
        seen[i] = true;
        let mut queue = vec![i];
        while let Some(u) = queue.pop() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push(v);
                }
            }
        }
        (0..self.len()).filter(|&v| v != i && seen[v]).collect()
    }
}

/// Places nodes and computes reach edges. Random placements are
/// deterministic in the seed.
pub fn build_topology(
    placement: &Placement,
    seed: u64,
    params: RadioParams,
) -> Result<Topology, NetsimError> {
    let positions = match placement {
        Placement::Linear { n, spacing } => {
            if *spacing <= 0.0 {
                return Err(NetsimError::BadPlacement(format!(
                    "non-positive spacing {spacing}"
                )));
            }
            (0..*n)
                .map(|i| Point::new(i as f64 * spacing, 0.0))
                .collect()
        }
        Placement::Square { n, side } => {
            if *side <= 0.0 {
                return Err(NetsimError::BadPlacement(format!(
                    "non-positive side {side}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..*n)
                .map(|_| Point::new(rng.gen_range(0.0..*side), rng.gen_range(0.0..*side)))
                .collect()
        }
        Placement::Explicit(positions) => positions.clone(),
    };
    from_positions(positions, params)
}

fn from_positions(positions: Vec<Point>, params: RadioParams) -> Result<Topology, NetsimError> {
    let n = positions.len();
    let cap = params.p_max * (1.0 + REACH_SLACK);
    let mut neighbors = vec![Vec::new(); n];
    for i in 0..n {
        for l in (i + 1)..n {
            let d = positions[i].distance(&positions[l]);
            if d == 0.0 {
                return Err(NetsimError::DegenerateGeometry(i, l));
            }
            let g = channel::path_gain(d, &params).expect("positive distance");
            if channel::direct_power(g, &params) <= cap {
                neighbors[i].push(l);
                neighbors[l].push(i);
            }
        }
    }
    Ok(Topology {
        positions,
        params,
        neighbors,
    })
}
