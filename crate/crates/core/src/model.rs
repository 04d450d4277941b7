//! Domain types and history bookkeeping shared by every allocator.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for every bandwidth comparison.
pub const EPS: f64 = 1e-9;

/// Index of a licensee operator (MNO) in `[0, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OperatorId(pub usize);

/// Index of an incumbent in `[0, M)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IncumbentId(pub usize);

impl fmt::Display for OperatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for IncumbentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One incumbent and the operators sharing its LSA agreement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coalition {
    incumbent: IncumbentId,
    members: Vec<OperatorId>,
}

impl Coalition {
    pub fn new(
        incumbent: IncumbentId,
        members: impl IntoIterator<Item = OperatorId>,
    ) -> Result<Self> {
        let mut members: Vec<OperatorId> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(Error::InvalidInput(format!(
                "coalition of incumbent {incumbent} has no members"
            )));
        }
        Ok(Self { incumbent, members })
    }

    /// Coalition containing every operator `0..operators`.
    pub fn full(incumbent: IncumbentId, operators: usize) -> Result<Self> {
        Self::new(incumbent, (0..operators).map(OperatorId))
    }

    pub fn incumbent(&self) -> IncumbentId {
        self.incumbent
    }

    pub fn members(&self) -> &[OperatorId] {
        &self.members
    }

    pub fn contains(&self, op: OperatorId) -> bool {
        self.members.binary_search(&op).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    allocations: Vec<f64>,
    total: f64,
}

/// Ring buffer of the last `W` allocation slots of one incumbent.
///
/// Each slot stores what every operator received and the bandwidth the
/// incumbent offered in that slot. A slot's share for operator `n` is
/// `allocation[n] / total`, with a zero-offer slot contributing 0.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWindow {
    window: usize,
    operators: usize,
    slots: VecDeque<Slot>,
}

impl HistoryWindow {
    pub fn new(window: usize, operators: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidInput(
                "history window must be positive".into(),
            ));
        }
        if operators == 0 {
            return Err(Error::InvalidInput(
                "history needs at least one operator".into(),
            ));
        }
        Ok(Self {
            window,
            operators,
            slots: VecDeque::with_capacity(window),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn operators(&self) -> usize {
        self.operators
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.slots.len() == self.window
    }

    /// Appends a slot, evicting the oldest one once the buffer holds `W` slots.
    pub fn push_slot(&mut self, allocations: &[f64], incumbent_total: f64) -> Result<()> {
        if allocations.len() != self.operators {
            return Err(Error::InvalidInput(format!(
                "slot has {} allocations, history tracks {} operators",
                allocations.len(),
                self.operators
            )));
        }
        if !incumbent_total.is_finite() || incumbent_total < 0.0 {
            return Err(Error::InvalidInput(format!(
                "incumbent total {incumbent_total} must be finite and non-negative"
            )));
        }
        let mut sum = 0.0;
        for (n, &a) in allocations.iter().enumerate() {
            if !a.is_finite() || a < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "allocation {a} to operator {n} must be finite and non-negative"
                )));
            }
            sum += a;
        }
        if sum > incumbent_total + EPS {
            return Err(Error::InvalidInput(format!(
                "slot allocations sum to {sum}, exceeding incumbent total {incumbent_total}"
            )));
        }
        if self.slots.len() == self.window {
            self.slots.pop_front();
        }
        self.slots.push_back(Slot {
            allocations: allocations.to_vec(),
            total: incumbent_total,
        });
        Ok(())
    }

    /// Sum over stored slots of `operator`'s per-slot share.
    pub fn share_sum(&self, operator: OperatorId) -> f64 {
        self.slots
            .iter()
            .map(|s| {
                if s.total <= 0.0 {
                    0.0
                } else {
                    s.allocations[operator.0] / s.total
                }
            })
            .sum()
    }

    /// Stored slots oldest first, as `(allocations, total)`.
    pub fn slots(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.slots
            .iter()
            .map(|s| (s.allocations.as_slice(), s.total))
    }
}

/// What one operator received from one incumbent at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationRecord {
    pub instant: u64,
    pub operator: OperatorId,
    pub incumbent: IncumbentId,
    pub amount: f64,
}

/// Everything that happened at one allocation instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstantRecord {
    pub instant: u64,
    /// Demand per operator.
    pub demand: Vec<f64>,
    /// Offered bandwidth per incumbent.
    pub offered: Vec<f64>,
    /// `allocated[n][m]`: bandwidth operator `n` received from incumbent `m`.
    pub allocated: Vec<Vec<f64>>,
    /// Regulation violation flag per operator.
    pub violations: Vec<bool>,
    /// Protocol rounds used at this instant (multi-incumbent protocols only).
    pub rounds: Option<usize>,
}

impl InstantRecord {
    /// Total bandwidth operator `n` received over all incumbents.
    pub fn operator_total(&self, op: OperatorId) -> f64 {
        self.allocated[op.0].iter().sum()
    }

    /// Total bandwidth incumbent `m` granted.
    pub fn incumbent_total(&self, inc: IncumbentId) -> f64 {
        self.allocated.iter().map(|row| row[inc.0]).sum()
    }

    pub fn total_demand(&self) -> f64 {
        self.demand.iter().sum()
    }

    pub fn total_offered(&self) -> f64 {
        self.offered.iter().sum()
    }

    pub fn total_allocated(&self) -> f64 {
        self.allocated.iter().flatten().sum()
    }

    pub fn records(&self) -> impl Iterator<Item = AllocationRecord> + '_ {
        self.allocated.iter().enumerate().flat_map(move |(n, row)| {
            row.iter()
                .enumerate()
                .map(move |(m, &amount)| AllocationRecord {
                    instant: self.instant,
                    operator: OperatorId(n),
                    incumbent: IncumbentId(m),
                    amount,
                })
        })
    }

    /// Checks demand compliance per operator and conservation per incumbent.
    pub fn validate(&self) -> Result<()> {
        for (n, row) in self.allocated.iter().enumerate() {
            if row.iter().any(|&a| !a.is_finite() || a < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "instant {}: operator {n} has a negative or non-finite allocation",
                    self.instant
                )));
            }
            let got: f64 = row.iter().sum();
            if got > self.demand[n] + EPS {
                return Err(Error::InvalidInput(format!(
                    "instant {}: operator {n} received {got} above its demand {}",
                    self.instant, self.demand[n]
                )));
            }
        }
        for (m, &offered) in self.offered.iter().enumerate() {
            let granted = self.incumbent_total(IncumbentId(m));
            if granted > offered + EPS {
                return Err(Error::InvalidInput(format!(
                    "instant {}: incumbent {m} granted {granted} above its offer {offered}",
                    self.instant
                )));
            }
        }
        Ok(())
    }
}

/// Per-instant record of demands, offers, allocations and violations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AllocationTrace {
    operators: usize,
    incumbents: usize,
    instants: Vec<InstantRecord>,
}

impl AllocationTrace {
    pub fn new(operators: usize, incumbents: usize) -> Self {
        Self {
            operators,
            incumbents,
            instants: Vec::new(),
        }
    }

    pub fn operators(&self) -> usize {
        self.operators
    }

    pub fn incumbents(&self) -> usize {
        self.incumbents
    }

    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }

    pub fn instants(&self) -> &[InstantRecord] {
        &self.instants
    }

    /// Appends an instant after checking shape, ordering and conservation.
    pub fn push(&mut self, record: InstantRecord) -> Result<()> {
        if record.demand.len() != self.operators
            || record.violations.len() != self.operators
            || record.allocated.len() != self.operators
            || record.offered.len() != self.incumbents
            || record.allocated.iter().any(|r| r.len() != self.incumbents)
        {
            return Err(Error::InvalidInput(format!(
                "instant {} does not match trace shape {}x{}",
                record.instant, self.operators, self.incumbents
            )));
        }
        if let Some(last) = self.instants.last() {
            if record.instant <= last.instant {
                return Err(Error::InvalidInput(format!(
                    "instant {} is not after {}",
                    record.instant, last.instant
                )));
            }
        }
        record.validate()?;
        self.instants.push(record);
        Ok(())
    }

    /// Total allocation series of one operator, summed over incumbents.
    pub fn operator_series(&self, op: OperatorId) -> Vec<f64> {
        self.instants.iter().map(|r| r.operator_total(op)).collect()
    }
}
