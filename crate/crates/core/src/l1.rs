//! Single-incumbent spectrum allocation.
//!
//! [`fair_allocate`] is the greedy history-aware allocator: operators are
//! served in increasing priority-index order, each receiving
//! `min(demand, remaining)`. [`strictly_fair_allocate`] and
//! [`round_robin_allocate`] are the comparison baselines.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{HistoryWindow, OperatorId, EPS};

/// Per-operator priority index, each value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityVector(Vec<f64>);

impl PriorityVector {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if let Some((n, v)) = pi
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < -EPS || **v > 1.0 + EPS)
        {
            return Err(Error::InvalidInput(format!(
                "priority index {v} of operator {n} outside [0, 1]"
            )));
        }
        Ok(Self(pi))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Per-operator demand in bandwidth units, each finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandVector(Vec<f64>);

impl DemandVector {
    pub fn new(demand: Vec<f64>) -> Result<Self> {
        if let Some((n, v)) = demand
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidInput(format!(
                "demand {v} of operator {n} must be finite and non-negative"
            )));
        }
        Ok(Self(demand))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

pub(crate) fn check_offered(offered: f64) -> Result<()> {
    if !offered.is_finite() || offered < 0.0 {
        return Err(Error::InvalidInput(format!(
            "offered bandwidth {offered} must be finite and non-negative"
        )));
    }
    Ok(())
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidInput(format!(
            "priority vector has {a} entries but demand vector has {b}"
        )));
    }
    Ok(())
}

/// Windowed mean of `operator`'s per-slot share of the incumbent's offer.
pub fn compute_pi(history: &HistoryWindow, operator: OperatorId) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    if operator.0 >= history.operators() {
        return Err(Error::InvalidInput(format!(
            "operator {operator} not tracked by history of {} operators",
            history.operators()
        )));
    }
    let pi = history.share_sum(operator) / history.window() as f64;
    Ok(pi.clamp(0.0, 1.0))
}

/// Priority index of every operator tracked by `history`.
pub fn priority_vector(history: &HistoryWindow) -> Result<PriorityVector> {
    (0..history.operators())
        .map(|n| compute_pi(history, OperatorId(n)))
        .collect::<Result<Vec<_>>>()
        .map(PriorityVector)
}

/// Priority source for one incumbent: its allocation history plus the
/// initial priority indices used until the history holds `W` real slots.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityHistory {
    history: HistoryWindow,
    initial: Option<PriorityVector>,
}

impl PriorityHistory {
    pub fn new(history: HistoryWindow, initial: Option<PriorityVector>) -> Result<Self> {
        if let Some(pi) = &initial {
            if pi.len() != history.operators() {
                return Err(Error::InvalidInput(format!(
                    "{} initial priority indices for {} operators",
                    pi.len(),
                    history.operators()
                )));
            }
        }
        Ok(Self { history, initial })
    }

    pub fn history(&self) -> &HistoryWindow {
        &self.history
    }

    /// True while the initial values still stand in for the windowed mean.
    pub fn in_warmup(&self) -> bool {
        self.initial.is_some() && !self.history.is_full()
    }

    pub fn priority_vector(&self) -> Result<PriorityVector> {
        match &self.initial {
            Some(pi) if !self.history.is_full() => Ok(pi.clone()),
            _ => priority_vector(&self.history),
        }
    }

    pub fn push_slot(&mut self, allocations: &[f64], incumbent_total: f64) -> Result<()> {
        self.history.push_slot(allocations, incumbent_total)
    }
}

/// Greedy core shared by the fair allocator, the enforced allocator and the
/// per-coalition offer computation.
///
/// `keys[n] == None` removes operator `n` from the candidate set. Candidates
/// are served in increasing key order, ties (within [`EPS`]) broken uniformly
/// at random. The loop stops once the candidate set is empty or the remaining
/// bandwidth is exhausted.
pub(crate) fn greedy_by_key<R: Rng + ?Sized>(
    keys: &[Option<f64>],
    demand: &[f64],
    offered: f64,
    rng: &mut R,
) -> Vec<f64> {
    debug_assert_eq!(keys.len(), demand.len());
    let mut allocated = vec![0.0; demand.len()];
    let mut remaining = offered;
    let mut candidates: Vec<usize> = (0..keys.len()).filter(|&n| keys[n].is_some()).collect();
    let mut tied = Vec::with_capacity(candidates.len());

    while !candidates.is_empty() && remaining > EPS {
        let min = candidates
            .iter()
            .map(|&n| keys[n].unwrap_or(f64::INFINITY))
            .fold(f64::INFINITY, f64::min);
        tied.clear();
        tied.extend(
            candidates
                .iter()
                .enumerate()
                .filter(|(_, &n)| keys[n].unwrap_or(f64::INFINITY) <= min + EPS)
                .map(|(pos, _)| pos),
        );
        let pick = if tied.len() == 1 {
            tied[0]
        } else {
            tied[rng.random_range(0..tied.len())]
        };
        let n = candidates.remove(pick);
        let grant = demand[n].min(remaining);
        allocated[n] = grant;
        remaining -= grant;
    }

    debug_assert!(allocated.iter().zip(demand).all(|(a, d)| *a <= *d + EPS));
    debug_assert!(allocated.iter().sum::<f64>() <= offered + EPS);
    allocated
}

/// Greedy fair allocation: serve operators in increasing priority index.
pub fn fair_allocate<R: Rng + ?Sized>(
    pi: &PriorityVector,
    demand: &DemandVector,
    offered: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_lengths(pi.len(), demand.len())?;
    check_offered(offered)?;
    let keys: Vec<Option<f64>> = pi.as_slice().iter().copied().map(Some).collect();
    Ok(greedy_by_key(&keys, demand.as_slice(), offered, rng))
}

/// Water-filling baseline: every unsaturated operator gets
/// `B * (1 - PI_n) / sum(1 - PI_k)` of the remaining bandwidth, capped at its
/// demand, with the surplus of saturated operators redistributed the same way.
pub fn strictly_fair_allocate(
    pi: &PriorityVector,
    demand: &DemandVector,
    offered: f64,
) -> Result<Vec<f64>> {
    check_lengths(pi.len(), demand.len())?;
    check_offered(offered)?;
    let pi = pi.as_slice();
    let demand = demand.as_slice();
    let n_ops = demand.len();
    let mut allocated = vec![0.0; n_ops];
    let mut pool: Vec<usize> = (0..n_ops).filter(|&n| demand[n] > EPS).collect();
    let mut remaining = offered;
    let mut rounds = 0usize;

    while !pool.is_empty() && remaining > EPS {
        rounds += 1;
        assert!(rounds <= n_ops, "water-filling exceeded {n_ops} rounds");
        let weight: f64 = pool.iter().map(|&n| 1.0 - pi[n]).sum();
        if weight <= EPS {
            return Err(Error::DegenerateShares);
        }
        let share = |n: usize| remaining * (1.0 - pi[n]) / weight;
        let (saturated, open): (Vec<usize>, Vec<usize>) =
            pool.iter().partition(|&&n| share(n) >= demand[n] - EPS);
        if saturated.is_empty() {
            for &n in &pool {
                allocated[n] = share(n);
            }
            break;
        }
        for &n in &saturated {
            allocated[n] = demand[n];
            remaining -= demand[n];
        }
        remaining = remaining.max(0.0);
        pool = open;
    }

    debug_assert!(allocated.iter().zip(demand).all(|(a, d)| *a <= *d + EPS));
    Ok(allocated)
}

/// Round robin baseline. Serves operators from `start` in cyclic index order;
/// the next instant starts one operator later regardless of how many were
/// served.
pub fn round_robin_allocate(
    start: OperatorId,
    demand: &DemandVector,
    offered: f64,
) -> Result<(Vec<f64>, OperatorId)> {
    check_offered(offered)?;
    let n_ops = demand.len();
    if n_ops == 0 {
        return Err(Error::InvalidInput(
            "round robin needs at least one operator".into(),
        ));
    }
    if start.0 >= n_ops {
        return Err(Error::InvalidInput(format!(
            "start operator {start} out of range for {n_ops} operators"
        )));
    }
    let demand = demand.as_slice();
    let mut allocated = vec![0.0; n_ops];
    let mut remaining = offered;
    for k in 0..n_ops {
        if remaining <= EPS {
            break;
        }
        let n = (start.0 + k) % n_ops;
        let grant = demand[n].min(remaining);
        allocated[n] = grant;
        remaining -= grant;
    }
    Ok((allocated, OperatorId((start.0 + 1) % n_ops)))
}
