//! Transferable-utility coalition-game primitives with exhaustive
//! enumeration: characteristic functions, excess, core membership,
//! least-core value, kernel balance, and Shapley values.
//!
//! Coalitions are bitmasks over player indices; player counts stay small
//! enough (<= 20, tighter for some operations) that every operation can be
//! checked against brute force.

use std::fmt;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use thiserror::Error;

/// Absolute tolerance for all equality and core tests on worths.
pub const WORTH_TOL: f64 = 1e-9;

/// Enumeration caps, per operation.
pub const MAX_PLAYERS_ENUM: usize = 20;
pub const MAX_PLAYERS_LEAST_CORE: usize = 10;
pub const MAX_PLAYERS_SHAPLEY: usize = 12;
pub const MAX_PLAYERS_ORDER_ORACLE: usize = 7;

#[derive(Debug, Error, PartialEq)]
pub enum CoopError {
    #[error("player count {0} exceeds the cap {1} for this operation")]
    SizeLimit(usize, usize),
    #[error("coalition {0:#b} has -inf worth where a finite worth is required")]
    InfeasibleWorth(u32),
    #[error("invalid characteristic function: {0}")]
    Invalid(String),
}

/// A coalition as a bitmask over players 0..n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoalitionId(pub u32);

impl CoalitionId {
    pub const EMPTY: CoalitionId = CoalitionId(0);

    pub fn singleton(player: usize) -> Self {
        CoalitionId(1 << player)
    }

    pub fn contains(self, player: usize) -> bool {
        self.0 & (1 << player) != 0
    }

    pub fn with(self, player: usize) -> Self {
        CoalitionId(self.0 | (1 << player))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        let mask = self.0;
        (0..32).filter(move |i| mask & (1 << i) != 0)
    }
}

/// Coalition worth: a real value or the infeasibility sentinel.
///
/// The sentinel is kept out of float arithmetic; it absorbs in sums and
/// compares below every finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Worth {
    NegInf,
    Finite(f64),
}

impl Worth {
    pub fn is_neg_inf(self) -> bool {
        matches!(self, Worth::NegInf)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Worth::NegInf => None,
            Worth::Finite(v) => Some(v),
        }
    }

    /// Subtract a finite amount; -inf absorbs.
    pub fn minus(self, x: f64) -> Worth {
        match self {
            Worth::NegInf => Worth::NegInf,
            Worth::Finite(v) => Worth::Finite(v - x),
        }
    }

    pub fn max(self, other: Worth) -> Worth {
        match (self, other) {
            (Worth::NegInf, w) | (w, Worth::NegInf) => w,
            (Worth::Finite(a), Worth::Finite(b)) => Worth::Finite(a.max(b)),
        }
    }

    /// Equality under the worth tolerance, with -inf equal only to itself.
    pub fn approx_eq(self, other: Worth, tol: f64) -> bool {
        match (self, other) {
            (Worth::NegInf, Worth::NegInf) => true,
            (Worth::Finite(a), Worth::Finite(b)) => (a - b).abs() <= tol,
            _ => false,
        }
    }
}

impl fmt::Display for Worth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Worth::NegInf => write!(f, "-inf"),
            Worth::Finite(v) => write!(f, "{v}"),
        }
    }
}

/// Payoff vector, one entry per player.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation(pub Vec<f64>);

impl Allocation {
    pub fn sum_over(&self, s: CoalitionId) -> f64 {
        s.members().map(|i| self.0[i]).sum()
    }
}

/// Shapley values, one per player.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyVector(pub Vec<f64>);

/// Tabulated coalition worths over all 2^n subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicFunction {
    n_players: usize,
    worths: Vec<Worth>,
}

impl CharacteristicFunction {
    /// Builds from a full table indexed by coalition mask.
    ///
    /// The empty coalition must have worth 0. A super-additivity violation
    /// over disjoint finite-worth coalitions is logged, not rejected: the
    /// multi-backbone market game partitions on purpose.
    pub fn new(n_players: usize, worths: Vec<Worth>) -> Result<Self, CoopError> {
        if n_players == 0 || n_players > MAX_PLAYERS_ENUM {
            return Err(CoopError::SizeLimit(n_players, MAX_PLAYERS_ENUM));
        }
        if worths.len() != 1usize << n_players {
            return Err(CoopError::Invalid(format!(
                "expected {} worths for {} players, got {}",
                1usize << n_players,
                n_players,
                worths.len()
            )));
        }
        match worths[0] {
            Worth::Finite(v) if v.abs() <= WORTH_TOL => {}
            w => {
                return Err(CoopError::Invalid(format!(
                    "empty coalition must have worth 0, got {w}"
                )))
            }
        }
        if let Some(v) = worths.iter().find_map(|w| {
            w.finite().filter(|v| !v.is_finite())
        }) {
            return Err(CoopError::Invalid(format!("non-finite worth {v}")));
        }
        let cf = CharacteristicFunction { n_players, worths };
        if let Some((s, z)) = cf.superadditivity_violation() {
            log::warn!(
                "characteristic function is not super-additive: v({:#b}) + v({:#b}) > v(union)",
                s.0,
                z.0
            );
        }
        Ok(cf)
    }

    /// Builds the table by evaluating `f` on every coalition mask.
    pub fn from_fn(
        n_players: usize,
        f: impl Fn(CoalitionId) -> Worth,
    ) -> Result<Self, CoopError> {
        if n_players == 0 || n_players > MAX_PLAYERS_ENUM {
            return Err(CoopError::SizeLimit(n_players, MAX_PLAYERS_ENUM));
        }
        let worths = (0..1u32 << n_players).map(|m| f(CoalitionId(m))).collect();
        Self::new(n_players, worths)
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn grand(&self) -> CoalitionId {
        CoalitionId((1u32 << self.n_players) - 1)
    }

    pub fn worth(&self, s: CoalitionId) -> Worth {
        self.worths[s.0 as usize]
    }

    /// Iterates over all coalition masks.
    pub fn coalitions(&self) -> impl Iterator<Item = CoalitionId> {
        (0..1u32 << self.n_players).map(CoalitionId)
    }

    fn superadditivity_violation(&self) -> Option<(CoalitionId, CoalitionId)> {
        // The disjoint-pair scan is O(3^n); skip it for games too large to
        // check at construction time.
        if self.n_players > 12 {
            return None;
        }
        let full = self.grand().0;
        for s in 1..=full {
            let rest = full & !s;
            // Iterate subsets of the complement.
            let mut z = rest;
            loop {
                if z != 0 {
                    if let (Worth::Finite(vs), Worth::Finite(vz), Worth::Finite(vu)) = (
                        self.worths[s as usize],
                        self.worths[z as usize],
                        self.worths[(s | z) as usize],
                    ) {
                        if vs + vz > vu + WORTH_TOL {
                            return Some((CoalitionId(s), CoalitionId(z)));
                        }
                    }
                }
                if z == 0 {
                    break;
                }
                z = (z - 1) & rest;
            }
        }
        None
    }

    /// Elementwise sum of two games over the same player set.
    pub fn add(&self, other: &CharacteristicFunction) -> Result<Self, CoopError> {
        if self.n_players != other.n_players {
            return Err(CoopError::Invalid("player counts differ".into()));
        }
        let worths = self
            .worths
            .iter()
            .zip(&other.worths)
            .map(|(a, b)| match (a, b) {
                (Worth::Finite(x), Worth::Finite(y)) => Worth::Finite(x + y),
                _ => Worth::NegInf,
            })
            .collect();
        Self::new(self.n_players, worths)
    }
}

/// Coalition dissatisfaction: v(S) minus what S is paid.
pub fn excess(v: &CharacteristicFunction, u: &Allocation, s: CoalitionId) -> Worth {
    v.worth(s).minus(u.sum_over(s))
}

/// Group rationality plus individual rationality.
pub fn is_imputation(v: &CharacteristicFunction, u: &Allocation) -> bool {
    let grand = v.grand();
    let total = u.sum_over(grand);
    let efficient = match v.worth(grand) {
        Worth::NegInf => false,
        Worth::Finite(w) => (total - w).abs() <= WORTH_TOL,
    };
    efficient
        && (0..v.n_players()).all(|i| match v.worth(CoalitionId::singleton(i)) {
            Worth::NegInf => true,
            Worth::Finite(w) => u.0[i] >= w - WORTH_TOL,
        })
}

/// Exhaustive core membership test over all coalitions.
pub fn core_contains(v: &CharacteristicFunction, u: &Allocation) -> Result<bool, CoopError> {
    if v.n_players() > MAX_PLAYERS_ENUM {
        return Err(CoopError::SizeLimit(v.n_players(), MAX_PLAYERS_ENUM));
    }
    if !is_imputation(v, u) {
        return Ok(false);
    }
    Ok(v.coalitions().all(|s| match excess(v, u, s) {
        Worth::NegInf => true,
        Worth::Finite(e) => e <= WORTH_TOL,
    }))
}

/// Least-core value: the smallest epsilon for which the epsilon-core is
/// nonempty. Negative or zero iff the core itself is nonempty.
///
/// Solved as a small LP (minimize epsilon over efficient allocations subject
/// to every proper nonempty finite-worth coalition's excess <= epsilon).
/// Coalitions with -inf worth impose no constraint; if no coalition does,
/// the value is unbounded below and -inf is returned.
pub fn least_core_value(v: &CharacteristicFunction) -> Result<f64, CoopError> {
    let n = v.n_players();
    if n > MAX_PLAYERS_LEAST_CORE {
        return Err(CoopError::SizeLimit(n, MAX_PLAYERS_LEAST_CORE));
    }
    let grand_worth = v
        .worth(v.grand())
        .finite()
        .ok_or(CoopError::InfeasibleWorth(v.grand().0))?;

    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let free = (f64::NEG_INFINITY, f64::INFINITY);
    let payoffs: Vec<_> = (0..n).map(|_| problem.add_var(0.0, free)).collect();
    let eps = problem.add_var(1.0, free);

    let grand_row: Vec<_> = payoffs.iter().map(|&p| (p, 1.0)).collect();
    problem.add_constraint(&grand_row, ComparisonOp::Eq, grand_worth);

    let mut constrained = false;
    for s in v.coalitions() {
        if s.is_empty() || s == v.grand() {
            continue;
        }
        let worth = match v.worth(s) {
            Worth::NegInf => continue,
            Worth::Finite(w) => w,
        };
        let mut row: Vec<_> = s.members().map(|i| (payoffs[i], 1.0)).collect();
        row.push((eps, 1.0));
        problem.add_constraint(&row, ComparisonOp::Ge, worth);
        constrained = true;
    }
    if !constrained {
        return Ok(f64::NEG_INFINITY);
    }
    match problem.solve() {
        Ok(solution) => Ok(solution[eps]),
        Err(e) => Err(CoopError::Invalid(format!("least-core LP failed: {e}"))),
    }
}

/// Maximum excess over coalitions containing `with` and excluding `without`.
fn max_partial_excess(
    v: &CharacteristicFunction,
    u: &Allocation,
    with: usize,
    without: usize,
) -> Worth {
    let mut best = Worth::NegInf;
    for s in v.coalitions() {
        if s.contains(with) && !s.contains(without) {
            best = best.max(excess(v, u, s));
        }
    }
    best
}

/// Kernel balance between players i and j: the maximal excess i can raise
/// in coalitions without j equals the reverse, within tolerance. Sides that
/// only reach -inf compare equal iff both do.
pub fn kernel_check(
    v: &CharacteristicFunction,
    u: &Allocation,
    i: usize,
    j: usize,
) -> Result<bool, CoopError> {
    if v.n_players() > MAX_PLAYERS_ENUM {
        return Err(CoopError::SizeLimit(v.n_players(), MAX_PLAYERS_ENUM));
    }
    if i == j || i >= v.n_players() || j >= v.n_players() {
        return Err(CoopError::Invalid(format!("bad player pair ({i}, {j})")));
    }
    let lhs = max_partial_excess(v, u, i, j);
    let rhs = max_partial_excess(v, u, j, i);
    Ok(lhs.approx_eq(rhs, WORTH_TOL))
}

/// Shapley value by the subset-weighted marginal formula.
///
/// Fails with `InfeasibleWorth` if any coalition entering a marginal term is
/// -inf; callers must map sentinels to finite worths first.
pub fn shapley(v: &CharacteristicFunction) -> Result<ShapleyVector, CoopError> {
    let n = v.n_players();
    if n > MAX_PLAYERS_SHAPLEY {
        return Err(CoopError::SizeLimit(n, MAX_PLAYERS_SHAPLEY));
    }
    let fact: Vec<f64> = {
        let mut f = vec![1.0; n + 1];
        for k in 1..=n {
            f[k] = f[k - 1] * k as f64;
        }
        f
    };
    let n_fact = fact[n];
    let mut values = vec![0.0; n];
    for (i, value) in values.iter_mut().enumerate() {
        for s in v.coalitions() {
            if s.contains(i) {
                continue;
            }
            let with_i = s.with(i);
            let (vs, vsi) = match (v.worth(s), v.worth(with_i)) {
                (Worth::Finite(a), Worth::Finite(b)) => (a, b),
                (Worth::NegInf, _) => return Err(CoopError::InfeasibleWorth(s.0)),
                (_, Worth::NegInf) => return Err(CoopError::InfeasibleWorth(with_i.0)),
            };
            let size = s.len();
            let weight = fact[size] * fact[n - 1 - size] / n_fact;
            *value += weight * (vsi - vs);
        }
    }
    Ok(ShapleyVector(values))
}

/// Shapley value by full enumeration of joining orders.
///
/// Exhaustive reference for [`shapley`]; limited to small games.
pub fn shapley_by_orders(v: &CharacteristicFunction) -> Result<ShapleyVector, CoopError> {
    let n = v.n_players();
    if n > MAX_PLAYERS_ORDER_ORACLE {
        return Err(CoopError::SizeLimit(n, MAX_PLAYERS_ORDER_ORACLE));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut sums = vec![0.0; n];
    let mut count = 0u64;
    permute(&mut order, 0, &mut |perm| {
        let mut formed = CoalitionId::EMPTY;
        let mut prev = 0.0;
        for &player in perm {
            formed = formed.with(player);
            let now = match v.worth(formed) {
                Worth::Finite(w) => w,
                Worth::NegInf => return Err(CoopError::InfeasibleWorth(formed.0)),
            };
            sums[player] += now - prev;
            prev = now;
        }
        count += 1;
        Ok(())
    })?;
    Ok(ShapleyVector(
        sums.into_iter().map(|s| s / count as f64).collect(),
    ))
}

fn permute<E>(
    items: &mut [usize],
    k: usize,
    visit: &mut impl FnMut(&[usize]) -> Result<(), E>,
) -> Result<(), E> {
    if k == items.len() {
        return visit(items);
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit)?;
        items.swap(k, i);
    }
    Ok(())
}

pub mod table {
    //! Plain-text serialization of characteristic functions: one
    //! `mask,value` pair per line, `-inf` for the sentinel. Lines may be
    //! blank or start with `#`.

    use super::{CharacteristicFunction, Worth};
    use thiserror::Error;

    #[derive(Debug, Error, PartialEq)]
    pub enum TableError {
        #[error("line {0}: expected `mask,value`")]
        Malformed(usize),
        #[error("line {0}: bad mask")]
        BadMask(usize),
        #[error("line {0}: bad value")]
        BadValue(usize),
        #[error("line {0}: duplicate mask {1}")]
        DuplicateMask(usize, u32),
        #[error("table does not cover all 2^n masks for any n <= 20")]
        Incomplete,
        #[error("{0}")]
        Invalid(String),
    }

    pub fn to_string(cf: &CharacteristicFunction) -> String {
        let mut out = String::new();
        for s in cf.coalitions() {
            out.push_str(&format!("{},{}\n", s.0, cf.worth(s)));
        }
        out
    }

    pub fn parse(text: &str) -> Result<CharacteristicFunction, TableError> {
        let mut entries: Vec<(u32, Worth)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (mask_s, value_s) =
                line.split_once(',').ok_or(TableError::Malformed(lineno))?;
            let mask: u32 = mask_s
                .trim()
                .parse()
                .map_err(|_| TableError::BadMask(lineno))?;
            let value_s = value_s.trim();
            let worth = if value_s.eq_ignore_ascii_case("-inf") {
                Worth::NegInf
            } else {
                let v: f64 = value_s.parse().map_err(|_| TableError::BadValue(lineno))?;
                if !v.is_finite() {
                    return Err(TableError::BadValue(lineno));
                }
                Worth::Finite(v)
            };
            if entries.iter().any(|&(m, _)| m == mask) {
                return Err(TableError::DuplicateMask(lineno, mask));
            }
            entries.push((mask, worth));
        }
        let len = entries.len();
        let n = (1..=super::MAX_PLAYERS_ENUM)
            .find(|&n| 1usize << n == len)
            .ok_or(TableError::Incomplete)?;
        let mut worths = vec![None; len];
        for (mask, worth) in entries {
            let slot = worths.get_mut(mask as usize).ok_or(TableError::Incomplete)?;
            *slot = Some(worth);
        }
        if worths.iter().any(|w| w.is_none()) {
            return Err(TableError::Incomplete);
        }
        CharacteristicFunction::new(n, worths.into_iter().map(Option::unwrap).collect())
            .map_err(|e| TableError::Invalid(e.to_string()))
    }
}
