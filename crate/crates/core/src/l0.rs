//! Multi-incumbent coordination protocols.
//!
//! Every incumbent runs the fair greedy allocator over the operators of its
//! own coalition, using only that coalition's priority indices (frozen for the
//! whole allocation instant). The resulting offers are then resolved in
//! rounds:
//!
//! * **OOS**: one operator/incumbent pair per round, the largest best offer
//!   first. An operator is served by at most one incumbent; an incumbent may
//!   serve several operators.
//! * **OOC**: like OOS, but an incumbent leaves after its first assignment and
//!   its residual supply is wasted.
//! * **MCS**: every operator with a positive offer accepts it in the same
//!   round and keeps accepting its next-best offers until its demand is met,
//!   so one operator can aggregate several incumbents.
//!
//! The restricted variants ([`Protocol::OosMultiAssign`],
//! [`Protocol::McsSingleIncumbent`], [`Protocol::McsSingleAssignment`]) exist
//! to compare against the protocols above.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::l1::{check_offered, greedy_by_key, DemandVector, PriorityVector};
use crate::model::{Coalition, IncumbentId, EPS};

/// Multi-incumbent protocol selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Oos,
    Ooc,
    Mcs,
    /// OOS accepting every operator's best offer in the same round.
    OosMultiAssign,
    /// MCS where an operator accepts at most one incumbent per round.
    McsSingleIncumbent,
    /// MCS with a single operator/incumbent assignment per round.
    McsSingleAssignment,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Protocol::Oos => "oos",
            Protocol::Ooc => "ooc",
            Protocol::Mcs => "mcs",
            Protocol::OosMultiAssign => "oos_multi_assign",
            Protocol::McsSingleIncumbent => "mcs_single_incumbent",
            Protocol::McsSingleAssignment => "mcs_single_assignment",
        };
        f.write_str(s)
    }
}

/// `offer[n][m]`: bandwidth incumbent `m` offers operator `n` this round.
#[derive(Debug, Clone, PartialEq)]
pub struct OfferMatrix {
    offers: Vec<Vec<f64>>,
}

impl OfferMatrix {
    pub fn get(&self, operator: usize, incumbent: usize) -> f64 {
        self.offers[operator][incumbent]
    }

    pub fn row(&self, operator: usize) -> &[f64] {
        &self.offers[operator]
    }

    pub fn column(&self, incumbent: usize) -> Vec<f64> {
        self.offers.iter().map(|r| r[incumbent]).collect()
    }
}

/// Mutable state of one allocation instant across protocol rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundState {
    active_operators: Vec<bool>,
    active_incumbents: Vec<bool>,
    supply: Vec<f64>,
    demand: Vec<f64>,
    allocated: Vec<Vec<f64>>,
    rounds: usize,
}

impl RoundState {
    /// Every operator starts active; incumbents start active when they offer
    /// positive bandwidth.
    pub fn new(demand: &DemandVector, supply: &[f64]) -> Result<Self> {
        for &s in supply {
            check_offered(s)?;
        }
        if supply.is_empty() {
            return Err(Error::InvalidInput(
                "at least one incumbent is required".into(),
            ));
        }
        let n = demand.len();
        Ok(Self {
            active_operators: vec![true; n],
            active_incumbents: supply.iter().map(|&s| s > EPS).collect(),
            supply: supply.to_vec(),
            demand: demand.as_slice().to_vec(),
            allocated: vec![vec![0.0; supply.len()]; n],
            rounds: 0,
        })
    }

    pub fn operators(&self) -> usize {
        self.demand.len()
    }

    pub fn incumbents(&self) -> usize {
        self.supply.len()
    }

    /// Remaining (unmet) demand per operator.
    pub fn remaining_demand(&self) -> &[f64] {
        &self.demand
    }

    pub fn remaining_supply(&self) -> &[f64] {
        &self.supply
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    fn active_ops(&self) -> Vec<usize> {
        (0..self.operators())
            .filter(|&n| self.active_operators[n])
            .collect()
    }

    fn active_incs(&self) -> Vec<usize> {
        (0..self.incumbents())
            .filter(|&m| self.active_incumbents[m])
            .collect()
    }

    fn done(&self) -> bool {
        !self.active_operators.iter().any(|&a| a) || !self.active_incumbents.iter().any(|&a| a)
    }

    fn assign(&mut self, n: usize, m: usize, amount: f64) {
        debug_assert!(amount <= self.demand[n] + EPS && amount <= self.supply[m] + EPS);
        self.allocated[n][m] += amount;
        self.demand[n] = (self.demand[n] - amount).max(0.0);
        self.supply[m] = (self.supply[m] - amount).max(0.0);
    }

    fn retire_exhausted(&mut self) {
        for m in 0..self.incumbents() {
            if self.supply[m] <= EPS {
                self.active_incumbents[m] = false;
            }
        }
        for n in 0..self.operators() {
            if self.demand[n] <= EPS {
                self.active_operators[n] = false;
            }
        }
    }

    fn finish(self) -> InstantOutcome {
        InstantOutcome {
            allocated: self.allocated,
            rounds: self.rounds,
        }
    }
}

/// Result of one multi-incumbent allocation instant.
#[derive(Debug, Clone, PartialEq)]
pub struct InstantOutcome {
    /// `allocated[n][m]`.
    pub allocated: Vec<Vec<f64>>,
    pub rounds: usize,
}

impl InstantOutcome {
    pub fn operator_totals(&self) -> Vec<f64> {
        self.allocated.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn incumbent_totals(&self) -> Vec<f64> {
        let m = self.allocated.first().map_or(0, |r| r.len());
        (0..m)
            .map(|j| self.allocated.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// Number of incumbents each operator received spectrum from.
    pub fn sources_per_operator(&self) -> Vec<usize> {
        self.allocated
            .iter()
            .map(|r| r.iter().filter(|&&a| a > EPS).count())
            .collect()
    }

    pub fn recipients_per_incumbent(&self) -> Vec<usize> {
        let m = self.allocated.first().map_or(0, |r| r.len());
        (0..m)
            .map(|j| self.allocated.iter().filter(|r| r[j] > EPS).count())
            .collect()
    }
}

/// Offers of one coalition's incumbent to the active operators of that
/// coalition, from the coalition's own priority indices.
pub fn coalition_offers<R: Rng + ?Sized>(
    coalition: &Coalition,
    priority: &PriorityVector,
    state: &RoundState,
    rng: &mut R,
) -> Vec<f64> {
    let m = coalition.incumbent().0;
    let pi = priority.as_slice();
    let keys: Vec<Option<f64>> = (0..state.operators())
        .map(|n| {
            let member = coalition.contains(crate::model::OperatorId(n));
            (state.active_operators[n] && member).then(|| pi[n])
        })
        .collect();
    let supply = if state.active_incumbents[m] {
        state.supply[m]
    } else {
        0.0
    };
    greedy_by_key(&keys, &state.demand, supply, rng)
}

/// Offer matrix for the current round. Incumbents outside the active set
/// offer nothing.
pub fn collect_offers<R: Rng + ?Sized>(
    coalitions: &[Coalition],
    priorities: &[PriorityVector],
    state: &RoundState,
    rng: &mut R,
) -> OfferMatrix {
    let mut offers = vec![vec![0.0; state.incumbents()]; state.operators()];
    for (coalition, pi) in coalitions.iter().zip(priorities) {
        let m = coalition.incumbent().0;
        if !state.active_incumbents[m] {
            continue;
        }
        let column = coalition_offers(coalition, pi, state, rng);
        for (n, a) in column.into_iter().enumerate() {
            offers[n][m] = a;
        }
    }
    OfferMatrix { offers }
}

/// Index of the maximum of `values` over `candidates`, ties within [`EPS`]
/// broken uniformly at random.
fn argmax_random<R: Rng + ?Sized>(
    candidates: &[usize],
    value: impl Fn(usize) -> f64,
    rng: &mut R,
) -> Option<usize> {
    let best = candidates
        .iter()
        .map(|&c| value(c))
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&c| value(c) >= best - EPS)
        .collect();
    match tied.len() {
        0 => None,
        1 => Some(tied[0]),
        k => Some(tied[rng.random_range(0..k)]),
    }
}

/// Positive offers of operator `n`, best first, ties in random order.
fn ranked_offers<R: Rng + ?Sized>(
    offers: &OfferMatrix,
    n: usize,
    incs: &[usize],
    rng: &mut R,
) -> Vec<usize> {
    let mut left: Vec<usize> = incs
        .iter()
        .copied()
        .filter(|&m| offers.get(n, m) > EPS)
        .collect();
    let mut ranked = Vec::with_capacity(left.len());
    while let Some(pos_m) = argmax_random(&left, |m| offers.get(n, m), rng) {
        ranked.push(pos_m);
        left.retain(|&m| m != pos_m);
    }
    ranked
}

fn check_inputs(
    coalitions: &[Coalition],
    priorities: &[PriorityVector],
    state: &RoundState,
) -> Result<()> {
    if coalitions.len() != state.incumbents() || priorities.len() != state.incumbents() {
        return Err(Error::InvalidInput(format!(
            "{} coalitions and {} priority vectors for {} incumbents",
            coalitions.len(),
            priorities.len(),
            state.incumbents()
        )));
    }
    for (m, (c, pi)) in coalitions.iter().zip(priorities).enumerate() {
        if c.incumbent() != IncumbentId(m) {
            return Err(Error::InvalidInput(format!(
                "coalition at position {m} belongs to incumbent {}",
                c.incumbent()
            )));
        }
        if pi.len() != state.operators() {
            return Err(Error::InvalidInput(format!(
                "priority vector of incumbent {m} has {} entries for {} operators",
                pi.len(),
                state.operators()
            )));
        }
        if let Some(op) = c.members().iter().find(|op| op.0 >= state.operators()) {
            return Err(Error::InvalidInput(format!(
                "coalition of incumbent {m} names unknown operator {op}"
            )));
        }
    }
    Ok(())
}

/// Runs one allocation instant of `protocol` to completion.
pub fn run_protocol<R: Rng + ?Sized>(
    protocol: Protocol,
    coalitions: &[Coalition],
    priorities: &[PriorityVector],
    mut state: RoundState,
    rng: &mut R,
) -> Result<InstantOutcome> {
    check_inputs(coalitions, priorities, &state)?;
    // each productive round retires an operator or an incumbent, or moves
    // bandwidth; the cap only guards against a non-terminating bug
    let cap = 4 * (state.operators() + state.incumbents()) + 16;
    while !state.done() {
        let offers = collect_offers(coalitions, priorities, &state, rng);
        let progressed = match protocol {
            Protocol::Oos | Protocol::Ooc => single_pair_round(protocol, &offers, &mut state, rng),
            Protocol::Mcs => aggregate_round(&offers, &mut state, rng, true),
            Protocol::McsSingleIncumbent => aggregate_round(&offers, &mut state, rng, false),
            Protocol::OosMultiAssign => multi_assign_round(&offers, &mut state, rng),
            Protocol::McsSingleAssignment => single_assignment_round(&offers, &mut state, rng),
        };
        if !progressed {
            // no positive offer left: the active operators have no demand
            break;
        }
        state.rounds += 1;
        assert!(state.rounds <= cap, "{protocol} exceeded {cap} rounds");
    }
    Ok(state.finish())
}

/// OOS and OOC round: the operator holding the globally largest best offer is
/// assigned to its best incumbent and leaves.
fn single_pair_round<R: Rng + ?Sized>(
    protocol: Protocol,
    offers: &OfferMatrix,
    state: &mut RoundState,
    rng: &mut R,
) -> bool {
    let ops = state.active_ops();
    let incs = state.active_incs();
    let mut best_inc = vec![None; state.operators()];
    for &n in &ops {
        best_inc[n] = argmax_random(&incs, |m| offers.get(n, m), rng);
    }
    let best_value = |n: usize| best_inc[n].map_or(0.0, |m| offers.get(n, m));
    let Some(n) = argmax_random(&ops, best_value, rng) else {
        return false;
    };
    let amount = best_value(n);
    if amount <= EPS {
        return false;
    }
    let m = best_inc[n].expect("positive offer has a source");
    state.assign(n, m, amount);
    state.active_operators[n] = false;
    if protocol == Protocol::Ooc {
        state.active_incumbents[m] = false;
    }
    state.retire_exhausted();
    true
}

/// MCS round. Every operator accepts its positive offers best first, each
/// capped at its unmet demand. With `all_sources == false` an operator takes
/// only its best offer this round.
///
/// Offers of one incumbent never sum above its supply, so simultaneous
/// acceptances cannot conflict.
fn aggregate_round<R: Rng + ?Sized>(
    offers: &OfferMatrix,
    state: &mut RoundState,
    rng: &mut R,
    all_sources: bool,
) -> bool {
    let ops = state.active_ops();
    let incs = state.active_incs();
    let mut progressed = false;
    for &n in &ops {
        for m in ranked_offers(offers, n, &incs, rng) {
            let amount = offers.get(n, m).min(state.demand[n]);
            if amount <= EPS {
                break;
            }
            state.assign(n, m, amount);
            progressed = true;
            if !all_sources {
                break;
            }
        }
    }
    state.retire_exhausted();
    progressed
}

/// OOS variant: every operator accepts its best offer in the same round and
/// leaves.
fn multi_assign_round<R: Rng + ?Sized>(
    offers: &OfferMatrix,
    state: &mut RoundState,
    rng: &mut R,
) -> bool {
    let ops = state.active_ops();
    let incs = state.active_incs();
    let mut progressed = false;
    for &n in &ops {
        let Some(m) = argmax_random(&incs, |m| offers.get(n, m), rng) else {
            continue;
        };
        let amount = offers.get(n, m);
        if amount > EPS {
            state.assign(n, m, amount);
            state.active_operators[n] = false;
            progressed = true;
        }
    }
    state.retire_exhausted();
    progressed
}

/// MCS variant: only the globally largest offer is accepted this round; the
/// operator and incumbent stay while they have demand and supply left.
fn single_assignment_round<R: Rng + ?Sized>(
    offers: &OfferMatrix,
    state: &mut RoundState,
    rng: &mut R,
) -> bool {
    let ops = state.active_ops();
    let incs = state.active_incs();
    let pairs: Vec<(usize, usize)> = ops
        .iter()
        .flat_map(|&n| incs.iter().map(move |&m| (n, m)))
        .collect();
    let idx: Vec<usize> = (0..pairs.len()).collect();
    let Some(k) = argmax_random(&idx, |k| offers.get(pairs[k].0, pairs[k].1), rng) else {
        return false;
    };
    let (n, m) = pairs[k];
    let amount = offers.get(n, m);
    if amount <= EPS {
        return false;
    }
    state.assign(n, m, amount);
    state.retire_exhausted();
    true
}

pub fn run_oos<R: Rng + ?Sized>(
    coalitions: &[Coalition],
    priorities: &[PriorityVector],
    state: RoundState,
    rng: &mut R,
) -> Result<InstantOutcome> {
    run_protocol(Protocol::Oos, coalitions, priorities, state, rng)
}

pub fn run_ooc<R: Rng + ?Sized>(
    coalitions: &[Coalition],
    priorities: &[PriorityVector],
    state: RoundState,
    rng: &mut R,
) -> Result<InstantOutcome> {
    run_protocol(Protocol::Ooc, coalitions, priorities, state, rng)
}

pub fn run_mcs<R: Rng + ?Sized>(
    coalitions: &[Coalition],
    priorities: &[PriorityVector],
    state: RoundState,
    rng: &mut R,
) -> Result<InstantOutcome> {
    run_protocol(Protocol::Mcs, coalitions, priorities, state, rng)
}

pub fn run_oos_multi_assign_variant<R: Rng + ?Sized>(
    coalitions: &[Coalition],
    priorities: &[PriorityVector],
    state: RoundState,
    rng: &mut R,
) -> Result<InstantOutcome> {
    run_protocol(Protocol::OosMultiAssign, coalitions, priorities, state, rng)
}

pub fn run_mcs_single_incumbent_variant<R: Rng + ?Sized>(
    coalitions: &[Coalition],
    priorities: &[PriorityVector],
    state: RoundState,
    rng: &mut R,
) -> Result<InstantOutcome> {
    run_protocol(
        Protocol::McsSingleIncumbent,
        coalitions,
        priorities,
        state,
        rng,
    )
}

pub fn run_mcs_single_assign_variant<R: Rng + ?Sized>(
    coalitions: &[Coalition],
    priorities: &[PriorityVector],
    state: RoundState,
    rng: &mut R,
) -> Result<InstantOutcome> {
    run_protocol(
        Protocol::McsSingleAssignment,
        coalitions,
        priorities,
        state,
        rng,
    )
}

/// Inclusive round-count bounds claimed for `protocol` with `operators`
/// operators and `incumbents` incumbents, all with positive demand and supply.
pub fn round_bounds(protocol: Protocol, operators: usize, incumbents: usize) -> (usize, usize) {
    let lo = operators.min(incumbents);
    match protocol {
        Protocol::Oos => (lo, operators),
        Protocol::Ooc => (lo, lo),
        Protocol::Mcs => (lo, operators.max(incumbents)),
        Protocol::OosMultiAssign | Protocol::McsSingleIncumbent | Protocol::McsSingleAssignment => {
            (1, usize::MAX)
        }
    }
}
