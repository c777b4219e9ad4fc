//! Named experiment pipelines over the default study geometries, plus CSV
//! emission. Every experiment is deterministic in (config, seed).

use std::f64::consts::PI;
use std::io::{self, Write};

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::coopgame::Worth;
use crate::fairness::{self, CooperationInstance, FairnessError};
use crate::geom::Point;
use crate::market::{self, MarketError, MarketInstance};
use crate::netsim::{self, NetsimError, Placement, RepeatedGameParams};

pub const EXPERIMENTS: &[&str] = &[
    "alpha_minmax",
    "p0_minmax",
    "alpha_average",
    "p0_average",
    "alpha_market",
    "p0_market",
    "boundary_prob",
    "connectivity",
];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment {0:?}; expected one of {}", EXPERIMENTS.join(", "))]
    UnknownExperiment(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Netsim(#[from] NetsimError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Rectangular, ordered result set.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> ResultTable {
        ResultTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "ragged result row");
        self.rows.push(row);
    }
}

/// Floats at 12 significant digits, scientific notation, stable bytes.
pub fn format_float(x: f64) -> String {
    format!("{x:.11e}")
}

/// Header then data rows, comma-separated, newline-terminated.
pub fn emit_csv(table: &ResultTable, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "{}", table.columns.join(","))?;
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(Cell::render).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn run_experiment(
    name: &str,
    cfg: &ExperimentConfig,
) -> Result<ResultTable, ExperimentError> {
    match name {
        "alpha_minmax" | "p0_minmax" => minmax_sweep(cfg),
        "alpha_average" | "p0_average" => average_sweep(cfg),
        "alpha_market" | "p0_market" => market_sweep(cfg),
        "boundary_prob" => boundary_prob(cfg),
        "connectivity" => connectivity(cfg),
        other => Err(ExperimentError::UnknownExperiment(other.to_string())),
    }
}

fn sweep(start: f64, stop: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0, "sweep step must be positive");
    let mut xs = Vec::new();
    let mut x = start;
    while x <= stop + 1e-9 {
        xs.push(x);
        x += step;
    }
    xs
}

/// Min-max reward ratio and backbone power versus relay distance: relays
/// sit on a random arc behind the source (angles in [pi/2, 3pi/2]), the
/// ratio and solved power are averaged over the configured trials.
fn minmax_sweep(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    let dest_m = cfg.geom_f64("dest_m", 100.0)?;
    let n_relays = cfg.geom_usize("n_relays", 1)?;
    let distances = sweep(
        cfg.geom_f64("dist_start", 5.0)?,
        cfg.geom_f64("dist_stop", 100.0)?,
        cfg.geom_f64("dist_step", 5.0)?,
    );
    let backbone = Point::new(0.0, 0.0);
    let destination = Point::new(dest_m, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = ResultTable::new(&["distance_m", "n_relays", "dest_m", "alpha", "p0_w"]);
    for &d in &distances {
        let mut alpha_sum = 0.0;
        let mut p0_sum = 0.0;
        for _ in 0..cfg.trials {
            let relays: Vec<Point> = (0..n_relays)
                .map(|_| {
                    let theta = rng.gen_range(0.5 * PI..1.5 * PI);
                    Point::new(d * theta.cos(), d * theta.sin())
                })
                .collect();
            let inst =
                CooperationInstance::new(backbone, destination, relays, None, cfg.radio)?;
            let res = fairness::minmax_alpha(&inst);
            alpha_sum += res.alpha.sum() / n_relays as f64;
            p0_sum += inst.p0_full();
        }
        table.push(vec![
            Cell::Float(d),
            Cell::Int(n_relays as i64),
            Cell::Float(dest_m),
            Cell::Float(alpha_sum / cfg.trials as f64),
            Cell::Float(p0_sum / cfg.trials as f64),
        ]);
    }
    Ok(table)
}

/// Average (expected-marginal-saving) fairness for two boundary nodes on
/// the source-destination axis, the second one sweeping outward.
fn average_sweep(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    let backbone = Point::new(0.0, 0.0);
    let destination = Point::new(cfg.geom_f64("dest_x", -50.0)?, 0.0);
    let boundary1 = Point::new(cfg.geom_f64("boundary1_x", 20.0)?, 0.0);
    let positions = sweep(
        cfg.geom_f64("sweep_start", 5.0)?,
        cfg.geom_f64("sweep_stop", 100.0)?,
        cfg.geom_f64("sweep_step", 5.0)?,
    );
    let mut table =
        ResultTable::new(&["boundary2_x", "boundary1_x", "alpha_1", "alpha_2", "p0_w"]);
    for &x in &positions {
        let inst = CooperationInstance::new(
            backbone,
            destination,
            vec![boundary1, Point::new(x, 0.0)],
            None,
            cfg.radio,
        )?;
        let alpha = fairness::average_alpha(&inst);
        table.push(vec![
            Cell::Float(x),
            Cell::Float(boundary1.x),
            Cell::Float(alpha.0[0]),
            Cell::Float(alpha.0[1]),
            Cell::Float(inst.p0_full()),
        ]);
    }
    Ok(table)
}

/// Market competition between two backbones for two boundary nodes, the
/// second boundary node sweeping along a vertical line.
fn market_sweep(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    let backbones = vec![
        (
            Point::new(cfg.geom_f64("backbone1_x", 0.0)?, cfg.geom_f64("backbone1_y", -30.0)?),
            Point::new(cfg.geom_f64("dest_x", -50.0)?, cfg.geom_f64("dest_y", 0.0)?),
        ),
        (
            Point::new(cfg.geom_f64("backbone2_x", 0.0)?, cfg.geom_f64("backbone2_y", 30.0)?),
            Point::new(cfg.geom_f64("dest_x", -50.0)?, cfg.geom_f64("dest_y", 0.0)?),
        ),
    ];
    let boundary1 = Point::new(
        cfg.geom_f64("boundary1_x", 44.0)?,
        cfg.geom_f64("boundary1_y", 10.0)?,
    );
    let b2x = cfg.geom_f64("boundary2_x", 44.0)?;
    let ys = sweep(
        cfg.geom_f64("sweep_start", -50.0)?,
        cfg.geom_f64("sweep_stop", 50.0)?,
        cfg.geom_f64("sweep_step", 5.0)?,
    );
    let mut table = ResultTable::new(&[
        "boundary2_y",
        "boundary",
        "winner",
        "alpha",
        "u_i_w",
        "p0_1_w",
        "p0_2_w",
        "u0_1_w",
        "u0_2_w",
    ]);
    for &y in &ys {
        let inst = MarketInstance::new(
            backbones.clone(),
            vec![boundary1, Point::new(b2x, y)],
            None,
            cfg.radio,
        )?;
        let out = market::market_equilibrium(&inst, cfg.game.delta)?;
        let p0: Vec<f64> = (0..2).map(|m| inst.p0_of(m, out.assignment.mask_of(m))).collect();
        for i in 0..2 {
            let winner = out.assignment.0[i].map_or(0, |m| m as i64 + 1);
            let alpha = out.assignment.0[i].map_or(0.0, |m| out.offers[m][i]);
            let u_i = match out.boundary_utilities[i] {
                Worth::Finite(u) => u,
                Worth::NegInf => f64::NEG_INFINITY,
            };
            table.push(vec![
                Cell::Float(y),
                Cell::Int(i as i64 + 1),
                Cell::Int(winner),
                Cell::Float(alpha),
                Cell::Float(u_i),
                Cell::Float(p0[0]),
                Cell::Float(p0[1]),
                Cell::Float(out.backbone_utilities[0]),
                Cell::Float(out.backbone_utilities[1]),
            ]);
        }
    }
    Ok(table)
}

/// Per-node boundary probability on the evenly spaced line, for one and
/// five destinations per node.
fn boundary_prob(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    let n = cfg.geom_usize("n", 50)?;
    let spacing = cfg.geom_f64("spacing_m", 100.0)?;
    let probs = netsim::boundary_probabilities(
        &Placement::Linear { n, spacing },
        &[1, 5],
        cfg.trials,
        cfg.seed,
        cfg.radio,
    )?;
    let mut table = ResultTable::new(&["node_index", "prob_1dest", "prob_5dest"]);
    for i in 0..n {
        table.push(vec![
            Cell::Int(i as i64 + 1),
            Cell::Float(probs[0][i]),
            Cell::Float(probs[1][i]),
        ]);
    }
    Ok(table)
}

/// Un-connectivity with and without coalitions over random square
/// topologies of varying side length.
fn connectivity(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    let nodes: Vec<usize> = cfg
        .geom_list("nodes", &[100.0, 500.0])?
        .into_iter()
        .map(|x| x as usize)
        .collect();
    let sides = cfg.geom_list("sides_m", &[400.0, 700.0, 1000.0])?;
    let game = RepeatedGameParams {
        horizon: netsim::Horizon::Infinite,
        ..cfg.game.repeated
    };
    let cells =
        netsim::connectivity_stats(&nodes, &sides, cfg.trials, cfg.seed, cfg.radio, &game)?;
    let mut table = ResultTable::new(&[
        "n_nodes",
        "side_m",
        "trials",
        "unconn_repeated",
        "se_repeated",
        "unconn_coalition",
        "se_coalition",
        "isolated",
        "se_isolated",
    ]);
    for c in cells {
        table.push(vec![
            Cell::Int(c.n_nodes as i64),
            Cell::Float(c.side),
            Cell::Int(c.trials as i64),
            Cell::Float(c.unconn_repeated.mean),
            Cell::Float(c.unconn_repeated.se),
            Cell::Float(c.unconn_coalition.mean),
            Cell::Float(c.unconn_coalition.se),
            Cell::Float(c.isolated.mean),
            Cell::Float(c.isolated.se),
        ]);
    }
    Ok(table)
}
