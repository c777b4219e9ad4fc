//! Single-backbone coalition formation: the power-saving game built from
//! geometry, reward ratios under min-max and average (Shapley) fairness,
//! the core condition, and the monopoly variant with a backbone reserve.

use thiserror::Error;

use crate::channel::{self, ChannelError, PowerSolution, RadioParams, RelayLink};
use crate::coopgame::{CharacteristicFunction, CoopError, Worth};
use crate::geom::Point;

/// Savings below this are treated as zero (bisection noise floor).
pub const ZERO_SAVING: f64 = 1e-12;

/// Slack allowed on the core condition (Eq. 12 style sum bound).
pub const CORE_TOL: f64 = 1e-9;

pub const MAX_RELAYS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum FairnessError {
    #[error("relay count {0} exceeds the cap {1}")]
    SizeLimit(usize, usize),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("backbone reserve {reserve} exceeds the coalition saving {saving}")]
    NoCoalition { reserve: f64, saving: f64 },
    #[error(transparent)]
    Coop(#[from] CoopError),
}

/// One backbone source-destination pair plus its candidate relay set.
///
/// The solved source power is tabulated over every relay subset at
/// construction; instances are immutable afterwards and cheap to share.
#[derive(Debug, Clone)]
pub struct CooperationInstance {
    backbone: Point,
    destination: Point,
    relays: Vec<Point>,
    relay_powers: Vec<f64>,
    params: RadioParams,
    p_d: f64,
    direct_feasible: bool,
    /// Solved P_0 per relay-subset mask; entry 0 is exactly `p_d`.
    p0: Vec<PowerSolution>,
}

/// Reward ratios, one per boundary node.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector(pub Vec<f64>);

impl AlphaVector {
    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Expected marginal power savings per relay (random joining orders).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSaving(pub Vec<f64>);

/// Min-max fairness outcome: the alpha vector and the equalized boundary
/// utility mu (negative watts; -inf when the saving is zero).
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxResult {
    pub alpha: AlphaVector,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FairnessMode {
    MinMax,
    Average,
}

/// Backbone reserve configuration for the monopoly variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonopolyConfig {
    pub v0: f64,
    pub mode: FairnessMode,
}

/// The power-saving coalition game plus the standalone (no-cooperation)
/// utilities the tabulated worths deliberately leave out: the backbone
/// alone spends the direct power, a boundary node alone delivers nothing.
#[derive(Debug, Clone)]
pub struct PowerSavingGame {
    /// N+1 players; player 0 is the backbone, players 1..=N the relays.
    pub cf: CharacteristicFunction,
    /// Standalone utility per player: -P_d for the backbone, -inf for
    /// boundary nodes (or their over-cap direct requirement flagged).
    pub standalone: Vec<Worth>,
}

impl CooperationInstance {
    pub fn new(
        backbone: Point,
        destination: Point,
        relay_positions: Vec<Point>,
        relay_powers: Option<Vec<f64>>,
        params: RadioParams,
    ) -> Result<Self, FairnessError> {
        let n = relay_positions.len();
        if n > MAX_RELAYS {
            return Err(FairnessError::SizeLimit(n, MAX_RELAYS));
        }
        let relay_powers = relay_powers.unwrap_or_else(|| vec![params.p_max; n]);
        assert_eq!(relay_powers.len(), n, "one power per relay");

        let g_sd = channel::path_gain(backbone.distance(&destination), &params)?;
        let links: Vec<RelayLink> = relay_positions
            .iter()
            .zip(&relay_powers)
            .map(|(pos, &power)| {
                Ok(RelayLink {
                    relay_power: power,
                    g_sr: channel::path_gain(backbone.distance(pos), &params)?,
                    g_rd: channel::path_gain(pos.distance(&destination), &params)?,
                })
            })
            .collect::<Result<_, ChannelError>>()?;

        let p_d = channel::direct_power(g_sd, &params);
        let mut p0 = Vec::with_capacity(1 << n);
        for mask in 0u32..(1 << n) {
            let subset: Vec<RelayLink> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| links[i])
                .collect();
            p0.push(channel::solve_source_power(g_sd, &subset, &params));
        }
        Ok(CooperationInstance {
            backbone,
            destination,
            relays: relay_positions,
            relay_powers,
            params,
            p_d,
            direct_feasible: p_d <= params.p_max,
            p0,
        })
    }

    pub fn n_relays(&self) -> usize {
        self.relays.len()
    }

    pub fn params(&self) -> &RadioParams {
        self.params_ref()
    }

    fn params_ref(&self) -> &RadioParams {
        &self.params
    }

    pub fn backbone(&self) -> Point {
        self.backbone
    }

    pub fn destination(&self) -> Point {
        self.destination
    }

    pub fn relay_powers(&self) -> &[f64] {
        &self.relay_powers
    }

    /// Direct-transmission power P_d.
    pub fn direct_power(&self) -> f64 {
        self.p_d
    }

    pub fn direct_feasible(&self) -> bool {
        self.direct_feasible
    }

    /// Solved source power for a relay-subset mask.
    pub fn p0_of(&self, mask: u32) -> f64 {
        self.p0[mask as usize].p0
    }

    pub fn p0_full(&self) -> f64 {
        self.p0_of(self.full_mask())
    }

    /// Power saving of a relay subset: P_d - P_0(S).
    pub fn saving_of(&self, mask: u32) -> f64 {
        self.p_d - self.p0_of(mask)
    }

    pub fn total_saving(&self) -> f64 {
        self.saving_of(self.full_mask())
    }

    pub fn full_mask(&self) -> u32 {
        (1u32 << self.n_relays()) - 1
    }
}

/// Builds the transferable-utility power-saving game: coalitions with the
/// backbone are worth the saving their relays produce, coalitions without
/// it save nothing.
pub fn build_characteristic(
    instance: &CooperationInstance,
) -> Result<PowerSavingGame, FairnessError> {
    let n = instance.n_relays();
    let cf = CharacteristicFunction::from_fn(n + 1, |s| {
        if s.contains(0) {
            let relay_mask = (s.0 >> 1) & instance.full_mask();
            Worth::Finite(instance.saving_of(relay_mask))
        } else {
            Worth::Finite(0.0)
        }
    })?;
    let mut standalone = vec![Worth::NegInf; n + 1];
    standalone[0] = Worth::Finite(-instance.direct_power());
    Ok(PowerSavingGame { cf, standalone })
}

/// The stability view of the same game: only the grand coalition is viable,
/// every proper nonempty coalition is infeasible. This is the game on which
/// the min-max allocation is the nucleolus (its excesses outside the grand
/// coalition are -inf), so core and kernel checks hold for it.
pub fn stability_game(
    instance: &CooperationInstance,
) -> Result<CharacteristicFunction, FairnessError> {
    let n = instance.n_relays();
    let grand = (1u32 << (n + 1)) - 1;
    Ok(CharacteristicFunction::from_fn(n + 1, |s| {
        if s.is_empty() {
            Worth::Finite(0.0)
        } else if s.0 == grand {
            Worth::Finite(instance.total_saving())
        } else {
            Worth::NegInf
        }
    })?)
}

/// The game restricted to relays with the backbone always present:
/// worth(T) = P_d - P_0(T). Its Shapley value is the per-relay expected
/// power saving of [`power_savings`].
pub fn relay_game(
    instance: &CooperationInstance,
) -> Result<CharacteristicFunction, FairnessError> {
    Ok(CharacteristicFunction::from_fn(instance.n_relays(), |s| {
        Worth::Finite(instance.saving_of(s.0))
    })?)
}

/// Min-max fairness: each relay's alpha is its power share of the total
/// saving ratio, which equalizes every boundary utility at mu.
pub fn minmax_alpha(instance: &CooperationInstance) -> MinMaxResult {
    let n = instance.n_relays();
    let saving = instance.total_saving();
    if saving <= ZERO_SAVING || n == 0 {
        return MinMaxResult {
            alpha: AlphaVector(vec![0.0; n]),
            mu: f64::NEG_INFINITY,
        };
    }
    let total_power: f64 = instance.relay_powers().iter().sum();
    let ratio = saving / instance.direct_power();
    let alphas = instance
        .relay_powers()
        .iter()
        .map(|p| (p / total_power) * ratio)
        .collect();
    MinMaxResult {
        alpha: AlphaVector(alphas),
        mu: -total_power * instance.direct_power() / saving,
    }
}

/// Expected marginal power saving of relay `i` over uniformly random
/// joining orders of the relays (backbone always present).
pub fn shapley_power_saving(instance: &CooperationInstance, i: usize) -> f64 {
    let n = instance.n_relays();
    assert!(i < n);
    let mut fact = vec![1.0; n + 1];
    for k in 1..=n {
        fact[k] = fact[k - 1] * k as f64;
    }
    let mut total = 0.0;
    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    for sub in 0u32..(1 << others.len()) {
        let mut mask = 0u32;
        for (bit, &j) in others.iter().enumerate() {
            if sub & (1 << bit) != 0 {
                mask |= 1 << j;
            }
        }
        let size = mask.count_ones() as usize;
        let weight = fact[size] * fact[n - 1 - size] / fact[n];
        total += weight * (instance.p0_of(mask) - instance.p0_of(mask | (1 << i)));
    }
    total
}

/// All per-relay expected savings; they sum to the total saving.
pub fn power_savings(instance: &CooperationInstance) -> PowerSaving {
    PowerSaving(
        (0..instance.n_relays())
            .map(|i| shapley_power_saving(instance, i))
            .collect(),
    )
}

/// Average fairness: alpha_i is relay i's expected saving per packet of
/// direct power.
pub fn average_alpha(instance: &CooperationInstance) -> AlphaVector {
    let p_d = instance.direct_power();
    AlphaVector(
        power_savings(instance)
            .0
            .into_iter()
            .map(|s| (s / p_d).max(0.0))
            .collect(),
    )
}

/// Grand-coalition stability condition on a reward vector.
pub fn core_condition(alpha: &AlphaVector, instance: &CooperationInstance) -> bool {
    let bound = instance.total_saving() / instance.direct_power();
    alpha.0.iter().all(|&a| a >= 0.0) && alpha.sum() <= bound + CORE_TOL
}

/// Rewards when the backbone demands a reserve v0 before cooperating.
pub fn monopoly_alpha(
    instance: &CooperationInstance,
    cfg: &MonopolyConfig,
) -> Result<AlphaVector, FairnessError> {
    assert!(cfg.v0 >= 0.0, "reserve must be nonnegative");
    let n = instance.n_relays();
    let saving = instance.total_saving();
    if cfg.v0 > saving {
        return Err(FairnessError::NoCoalition {
            reserve: cfg.v0,
            saving,
        });
    }
    let residual = saving - cfg.v0;
    let p_d = instance.direct_power();
    let alphas = match cfg.mode {
        FairnessMode::MinMax => vec![residual / (n as f64 * p_d); n],
        FairnessMode::Average => {
            if saving <= ZERO_SAVING {
                vec![0.0; n]
            } else {
                power_savings(instance)
                    .0
                    .into_iter()
                    .map(|s| residual * s / (p_d * saving))
                    .collect()
            }
        }
    };
    Ok(AlphaVector(alphas))
}

/// Coalition utilities for a reward vector: the backbone pays the full-set
/// source power plus the promised forwarding, each boundary node averages
/// its relay power over the packets it earns. A zero alpha leaves the
/// boundary node accursed (-inf).
pub fn utilities(instance: &CooperationInstance, alpha: &AlphaVector) -> (f64, Vec<Worth>) {
    let p_d = instance.direct_power();
    let u0 = -instance.p0_full() - alpha.sum() * p_d;
    let boundary = instance
        .relay_powers()
        .iter()
        .zip(&alpha.0)
        .map(|(&p, &a)| {
            if a > 0.0 {
                Worth::Finite(-p / a)
            } else {
                Worth::NegInf
            }
        })
        .collect();
    (u0, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coopgame::{self, Allocation, CoalitionId};

    fn instance(relays: &[(f64, f64)]) -> CooperationInstance {
        CooperationInstance::new(
            Point::new(0.0, 0.0),
            Point::new(100.0, 0.0),
            relays.iter().map(|&p| Point::from(p)).collect(),
            None,
            RadioParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn characteristic_values() {
        let inst = instance(&[(50.0, 0.0)]);
        let game = build_characteristic(&inst).unwrap();
        // Backbone alone saves nothing; the grand coalition saves
        // P_d - P_0 of the midpoint-relay geometry.
        assert!(game.cf.worth(CoalitionId(0b01)).approx_eq(Worth::Finite(0.0), 1e-12));
        let grand = game.cf.worth(CoalitionId(0b11)).finite().unwrap();
        assert!((grand - 8.76e-3).abs() < 2e-5, "grand = {grand}");
        // Relay-only coalitions save nothing.
        assert!(game.cf.worth(CoalitionId(0b10)).approx_eq(Worth::Finite(0.0), 1e-12));
        assert!(game.standalone[1].is_neg_inf());
        assert_eq!(game.standalone[0], Worth::Finite(-inst.direct_power()));
    }

    #[test]
    fn minmax_single_midpoint_relay() {
        let inst = instance(&[(50.0, 0.0)]);
        let res = minmax_alpha(&inst);
        assert!((res.alpha.0[0] - 0.876).abs() < 2e-3, "alpha = {}", res.alpha.0[0]);
        assert!(core_condition(&res.alpha, &inst));
        // Boundary utility equals mu.
        let (_, us) = utilities(&inst, &res.alpha);
        let u = us[0].finite().unwrap();
        assert!((u - res.mu).abs() < 1e-9);
    }

    #[test]
    fn relay_near_source_towards_destination_earns_almost_everything() {
        let inst = instance(&[(5.0, 0.0)]);
        let res = minmax_alpha(&inst);
        assert!(res.alpha.0[0] > 0.95, "alpha = {}", res.alpha.0[0]);
    }

    #[test]
    fn remote_relay_earns_nothing() {
        let inst = instance(&[(2.0e5, 0.0)]);
        let res = minmax_alpha(&inst);
        assert_eq!(res.alpha.0[0], 0.0);
        assert_eq!(res.mu, f64::NEG_INFINITY);
    }

    #[test]
    fn alpha_decreases_with_relay_distance() {
        let a5 = minmax_alpha(&instance(&[(0.0, 5.0)])).alpha.0[0];
        let a50 = minmax_alpha(&instance(&[(0.0, 50.0)])).alpha.0[0];
        let a95 = minmax_alpha(&instance(&[(0.0, 95.0)])).alpha.0[0];
        assert!(a5 > a50 && a50 > a95, "{a5} {a50} {a95}");
    }

    #[test]
    fn average_matches_minmax_for_single_relay() {
        let inst = instance(&[(50.0, 0.0)]);
        let avg = average_alpha(&inst);
        let mm = minmax_alpha(&inst);
        assert!((avg.0[0] - mm.alpha.0[0]).abs() < 1e-12);
    }

    #[test]
    fn coincident_relays_share_equally_under_average_fairness() {
        let inst = instance(&[(30.0, 10.0), (30.0, 10.0)]);
        let avg = average_alpha(&inst);
        assert!((avg.0[0] - avg.0[1]).abs() < 1e-12);
    }

    #[test]
    fn savings_conserve_total() {
        let inst = instance(&[(40.0, 5.0), (60.0, -10.0), (20.0, 30.0)]);
        let savings = power_savings(&inst);
        let sum: f64 = savings.0.iter().sum();
        assert!((sum - inst.total_saving()).abs() <= 1e-9);
    }

    #[test]
    fn average_shares_match_relay_game_shapley() {
        let inst = instance(&[(40.0, 5.0), (60.0, -10.0)]);
        let phi = coopgame::shapley(&relay_game(&inst).unwrap()).unwrap();
        let avg = average_alpha(&inst);
        for (a, p) in avg.0.iter().zip(&phi.0) {
            assert!((a * inst.direct_power() - p).abs() <= 1e-9);
        }
    }

    #[test]
    fn core_condition_rejects_scaled_alpha() {
        let inst = instance(&[(50.0, 0.0), (30.0, 20.0)]);
        let res = minmax_alpha(&inst);
        assert!(core_condition(&res.alpha, &inst));
        let scaled = AlphaVector(res.alpha.0.iter().map(|a| a * 1.01).collect());
        assert!(!core_condition(&scaled, &inst));
    }

    #[test]
    fn minmax_allocation_is_nucleolus_of_stability_game() {
        let inst = instance(&[(50.0, 0.0), (30.0, 20.0), (70.0, -10.0)]);
        let res = minmax_alpha(&inst);
        let p_d = inst.direct_power();
        let mut payoffs = vec![inst.total_saving() - res.alpha.sum() * p_d];
        payoffs.extend(res.alpha.0.iter().map(|a| a * p_d));
        let u = Allocation(payoffs);
        let game = stability_game(&inst).unwrap();
        assert!(coopgame::core_contains(&game, &u).unwrap());
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert!(coopgame::kernel_check(&game, &u, i, j).unwrap());
            }
        }
    }

    #[test]
    fn monopoly_reserve_behaviour() {
        let inst = instance(&[(50.0, 0.0)]);
        let saving = inst.total_saving();
        let zero = MonopolyConfig { v0: 0.0, mode: FairnessMode::MinMax };
        let mm = minmax_alpha(&inst);
        let a = monopoly_alpha(&inst, &zero).unwrap();
        assert!((a.0[0] - mm.alpha.0[0]).abs() < 1e-12);

        let full = MonopolyConfig { v0: saving, mode: FairnessMode::Average };
        let a = monopoly_alpha(&inst, &full).unwrap();
        assert!(a.0[0].abs() < 1e-12);

        let greedy = MonopolyConfig { v0: saving * 1.5, mode: FairnessMode::MinMax };
        assert!(matches!(
            monopoly_alpha(&inst, &greedy),
            Err(FairnessError::NoCoalition { .. })
        ));
    }

    #[test]
    fn utilities_guard_backbone_rationality() {
        let inst = instance(&[(50.0, 0.0), (60.0, 20.0)]);
        let res = minmax_alpha(&inst);
        let (u0, us) = utilities(&inst, &res.alpha);
        assert!(u0 >= -inst.direct_power() - 1e-12);
        for u in &us {
            assert!(!u.is_neg_inf());
        }
        let (_, us) = utilities(&inst, &AlphaVector(vec![0.0, 0.3]));
        assert!(us[0].is_neg_inf());
    }

    #[test]
    fn moving_a_relay_farther_never_increases_alpha() {
        for (mode, f) in [
            ("minmax", true),
            ("average", false),
        ] {
            let near = instance(&[(30.0, 10.0), (50.0, 0.0)]);
            let far = instance(&[(30.0, 10.0), (150.0, 160.0)]);
            let (a_near, a_far) = if f {
                (minmax_alpha(&near).alpha, minmax_alpha(&far).alpha)
            } else {
                (average_alpha(&near), average_alpha(&far))
            };
            assert!(a_far.0[1] <= a_near.0[1] + 1e-12, "{mode}");
        }
    }
}
