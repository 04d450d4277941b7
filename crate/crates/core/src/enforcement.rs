//! Regulation-compliance layer on top of the fair allocator.
//!
//! Each operator carries a penalty index `PEI = N_v / N_a` (violations over
//! assignments). The selection index blends it with the priority index,
//! `SI = omega * PI + (1 - omega) * f(PEI)`, and the greedy allocator runs on
//! `SI` instead of `PI`. Priority indices are computed from a fictitious
//! history that records what the pure fair allocator would have granted, so
//! withheld spectrum never raises a penalised operator's priority.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::l1::{check_offered, greedy_by_key, DemandVector, PriorityHistory, PriorityVector};
use crate::model::OperatorId;

/// Cumulative violation/assignment counters plus the cool-off countdown.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ViolationLedger {
    violations: Vec<u64>,
    assignments: Vec<u64>,
    cooloff: Vec<u32>,
}

impl ViolationLedger {
    pub fn new(operators: usize) -> Self {
        Self {
            violations: vec![0; operators],
            assignments: vec![0; operators],
            cooloff: vec![0; operators],
        }
    }

    /// Ledger with preset counters, mostly for tests and replays.
    pub fn with_counts(violations: Vec<u64>, assignments: Vec<u64>) -> Result<Self> {
        if violations.len() != assignments.len() {
            return Err(Error::InvalidInput(
                "counter vectors differ in length".into(),
            ));
        }
        if let Some(n) = (0..violations.len()).find(|&n| violations[n] > assignments[n]) {
            return Err(Error::InvalidInput(format!(
                "operator {n}: {} violations exceed {} assignments",
                violations[n], assignments[n]
            )));
        }
        let cooloff = vec![0; violations.len()];
        Ok(Self {
            violations,
            assignments,
            cooloff,
        })
    }

    pub fn operators(&self) -> usize {
        self.assignments.len()
    }

    pub fn violations(&self, op: OperatorId) -> u64 {
        self.violations[op.0]
    }

    pub fn assignments(&self, op: OperatorId) -> u64 {
        self.assignments[op.0]
    }

    pub fn record_assignment(&mut self, op: OperatorId) {
        self.assignments[op.0] += 1;
    }

    /// Counts a violation against an assignment already recorded.
    pub fn record_violation(&mut self, op: OperatorId) -> Result<()> {
        if self.violations[op.0] >= self.assignments[op.0] {
            return Err(Error::InvalidInput(format!(
                "operator {op} cannot have more violations than assignments"
            )));
        }
        self.violations[op.0] += 1;
        Ok(())
    }

    /// Remaining instants operator `op` sits out.
    pub fn cooloff_remaining(&self, op: OperatorId) -> u32 {
        self.cooloff[op.0]
    }
}

/// Penalty index `N_v / N_a`; an operator never assigned has index 0.
pub fn compute_pei(ledger: &ViolationLedger, op: OperatorId) -> f64 {
    let assigned = ledger.assignments(op);
    if assigned == 0 {
        0.0
    } else {
        ledger.violations(op) as f64 / assigned as f64
    }
}

/// Maps a penalty index in `[0, 1]` onto a penalty in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltyFunction {
    #[default]
    Linear,
    /// `pei^exponent`: mild for small offences, steep for large ones.
    Power { exponent: f64 },
}

impl PenaltyFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PenaltyFunction::Linear => Ok(()),
            PenaltyFunction::Power { exponent } if exponent.is_finite() && exponent > 0.0 => Ok(()),
            PenaltyFunction::Power { exponent } => Err(Error::config(
                "enforcement.penalty.exponent",
                format!("must be finite and > 0, got {exponent}"),
            )),
        }
    }
}

pub fn apply_penalty(f: PenaltyFunction, pei: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pei) {
        return Err(Error::InvalidInput(format!(
            "penalty index {pei} outside [0, 1]"
        )));
    }
    Ok(match f {
        PenaltyFunction::Linear => pei,
        PenaltyFunction::Power { exponent } => pei.powf(exponent),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnforcementConfig {
    /// Weight of the priority index against the penalty, in `[0, 1]`.
    pub omega: f64,
    /// Penalty threshold in `(0, 1]` above which an operator is excluded.
    #[serde(default = "default_kappa")]
    pub kappa_pei: f64,
    /// Instants an excluded operator sits out after exclusion.
    #[serde(default)]
    pub cooloff_slots: u32,
    #[serde(default)]
    pub penalty: PenaltyFunction,
}

fn default_kappa() -> f64 {
    1.0
}

impl Default for EnforcementConfig {
    fn default() -> Self {
        Self {
            omega: 1.0,
            kappa_pei: 1.0,
            cooloff_slots: 0,
            penalty: PenaltyFunction::Linear,
        }
    }
}

impl EnforcementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::config(
                "enforcement.omega",
                format!("must lie in [0, 1], got {}", self.omega),
            ));
        }
        if !(self.kappa_pei > 0.0 && self.kappa_pei <= 1.0) {
            return Err(Error::config(
                "enforcement.kappa_pei",
                format!("must lie in (0, 1], got {}", self.kappa_pei),
            ));
        }
        self.penalty.validate()
    }
}

/// Selection index, or exclusion when the penalty crosses the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionIndex {
    Value(f64),
    Excluded,
}

impl SelectionIndex {
    pub fn value(self) -> Option<f64> {
        match self {
            SelectionIndex::Value(v) => Some(v),
            SelectionIndex::Excluded => None,
        }
    }
}

pub fn compute_si(pi: f64, pei: f64, cfg: &EnforcementConfig) -> Result<SelectionIndex> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::InvalidInput(format!(
            "priority index {pi} outside [0, 1]"
        )));
    }
    let penalty = apply_penalty(cfg.penalty, pei)?;
    if penalty <= cfg.kappa_pei {
        Ok(SelectionIndex::Value(
            cfg.omega * pi + (1.0 - cfg.omega) * penalty,
        ))
    } else {
        Ok(SelectionIndex::Excluded)
    }
}

/// Shadow history driven only by priority-index decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct FictitiousLedger(PriorityHistory);

impl FictitiousLedger {
    pub fn new(history: PriorityHistory) -> Self {
        Self(history)
    }

    pub fn history(&self) -> &PriorityHistory {
        &self.0
    }

    pub fn priority_vector(&self) -> Result<PriorityVector> {
        self.0.priority_vector()
    }
}

/// Result of one enforced allocation instant.
#[derive(Debug, Clone, PartialEq)]
pub struct EnforcedOutcome {
    /// Spectrum actually granted (greedy on the selection index).
    pub real: Vec<f64>,
    /// What the pure fair allocator granted (greedy on the priority index).
    pub fictitious: Vec<f64>,
    pub priority: Vec<f64>,
    pub selection: Vec<SelectionIndex>,
}

/// One enforced allocation instant.
///
/// The fictitious run draws its tie-breaks from `rng` first; the real run
/// replays the same draws from a snapshot taken beforehand, so `rng` advances
/// exactly as it would under the pure fair allocator and `omega = 1`
/// reproduces the fictitious decision. The fictitious ledger receives the
/// fictitious allocation, and every operator with a positive real allocation
/// gains one assignment in `ledger`.
pub fn enforced_allocate<R: Rng + Clone>(
    fictitious: &mut FictitiousLedger,
    ledger: &mut ViolationLedger,
    demand: &DemandVector,
    offered: f64,
    cfg: &EnforcementConfig,
    rng: &mut R,
) -> Result<EnforcedOutcome> {
    check_offered(offered)?;
    let n_ops = demand.len();
    if ledger.operators() != n_ops || fictitious.0.history().operators() != n_ops {
        return Err(Error::InvalidInput(format!(
            "enforcement state does not match {n_ops} operators"
        )));
    }

    let pi = fictitious.priority_vector()?;
    let mut selection = Vec::with_capacity(n_ops);
    for n in 0..n_ops {
        let op = OperatorId(n);
        let si = if ledger.cooloff[n] > 0 {
            ledger.cooloff[n] -= 1;
            SelectionIndex::Excluded
        } else {
            let si = compute_si(pi.as_slice()[n], compute_pei(ledger, op), cfg)?;
            if si == SelectionIndex::Excluded {
                ledger.cooloff[n] = cfg.cooloff_slots;
            }
            si
        };
        selection.push(si);
    }

    let mut replay = rng.clone();
    let pi_keys: Vec<Option<f64>> = pi.as_slice().iter().copied().map(Some).collect();
    let fictitious_alloc = greedy_by_key(&pi_keys, demand.as_slice(), offered, rng);
    let si_keys: Vec<Option<f64>> = selection.iter().map(|s| s.value()).collect();
    let real = greedy_by_key(&si_keys, demand.as_slice(), offered, &mut replay);

    fictitious.0.push_slot(&fictitious_alloc, offered)?;
    for (n, &a) in real.iter().enumerate() {
        if a > 0.0 {
            ledger.record_assignment(OperatorId(n));
        }
    }

    Ok(EnforcedOutcome {
        real,
        fictitious: fictitious_alloc,
        priority: pi.into_inner(),
        selection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::l1::fair_allocate;
    use crate::model::HistoryWindow;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(omega: f64) -> EnforcementConfig {
        EnforcementConfig {
            omega,
            ..EnforcementConfig::default()
        }
    }

    fn fresh_fictitious(n: usize, initial: Vec<f64>) -> FictitiousLedger {
        let h = HistoryWindow::new(20, n).unwrap();
        FictitiousLedger::new(
            PriorityHistory::new(h, Some(PriorityVector::new(initial).unwrap())).unwrap(),
        )
    }

    #[test]
    fn pei_ratio_and_conventions() {
        let l = ViolationLedger::with_counts(vec![3, 0, 0], vec![10, 7, 0]).unwrap();
        assert!((compute_pei(&l, OperatorId(0)) - 0.3).abs() < 1e-15);
        assert_eq!(compute_pei(&l, OperatorId(1)), 0.0);
        assert_eq!(compute_pei(&l, OperatorId(2)), 0.0);
        // never assigned: SI reduces to omega * PI
        let c = cfg(0.4);
        let si = compute_si(0.5, compute_pei(&l, OperatorId(2)), &c).unwrap();
        assert_eq!(si, SelectionIndex::Value(0.4 * 0.5));
    }

    #[test]
    fn ledger_rejects_excess_violations() {
        assert!(ViolationLedger::with_counts(vec![2], vec![1]).is_err());
        let mut l = ViolationLedger::new(1);
        assert!(l.record_violation(OperatorId(0)).is_err());
        l.record_assignment(OperatorId(0));
        l.record_violation(OperatorId(0)).unwrap();
        assert!(l.record_violation(OperatorId(0)).is_err());
    }

    #[test]
    fn penalty_functions() {
        assert_eq!(apply_penalty(PenaltyFunction::Linear, 0.3).unwrap(), 0.3);
        let p = apply_penalty(PenaltyFunction::Power { exponent: 2.0 }, 0.1).unwrap();
        assert!((p - 0.01).abs() < 1e-15);
        assert_eq!(
            apply_penalty(PenaltyFunction::Power { exponent: 2.0 }, 0.0).unwrap(),
            0.0
        );
        assert_eq!(apply_penalty(PenaltyFunction::Linear, 0.0).unwrap(), 0.0);
        assert!(apply_penalty(PenaltyFunction::Linear, 1.2).is_err());
        assert!(apply_penalty(PenaltyFunction::Linear, -0.1).is_err());
    }

    #[test]
    fn si_evaluation() {
        assert_eq!(
            compute_si(0.37, 0.2, &cfg(1.0)).unwrap(),
            SelectionIndex::Value(0.37)
        );
        let si = compute_si(0.4, 0.2, &cfg(0.5)).unwrap().value().unwrap();
        assert!((si - 0.3).abs() < 1e-15);
        let strict = EnforcementConfig {
            omega: 0.5,
            kappa_pei: 0.25,
            ..EnforcementConfig::default()
        };
        assert_eq!(
            compute_si(0.1, 0.3, &strict).unwrap(),
            SelectionIndex::Excluded
        );
        assert!(compute_si(0.1, 0.25, &strict).unwrap().value().is_some());
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1.2).validate().is_err());
        let bad_kappa = EnforcementConfig {
            kappa_pei: 0.0,
            ..EnforcementConfig::default()
        };
        assert!(bad_kappa.validate().is_err());
        let bad_power = EnforcementConfig {
            penalty: PenaltyFunction::Power { exponent: 0.0 },
            ..EnforcementConfig::default()
        };
        assert!(bad_power.validate().is_err());
        assert!(EnforcementConfig::default().validate().is_ok());
    }

    #[test]
    fn omega_one_real_equals_fictitious() {
        let mut f = fresh_fictitious(4, vec![0.3, 0.3, 0.1, 0.1]);
        let mut l = ViolationLedger::with_counts(vec![0, 1, 2, 3], vec![10; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = DemandVector::new(vec![50.0, 100.0, 50.0, 100.0]).unwrap();
        for _ in 0..200 {
            let out = enforced_allocate(&mut f, &mut l, &d, 100.0, &cfg(1.0), &mut rng).unwrap();
            assert_eq!(out.real, out.fictitious);
        }
    }

    #[test]
    fn omega_zero_serves_cleanest_operator() {
        let mut f = fresh_fictitious(4, vec![0.0, 0.1, 0.2, 0.3]);
        let mut l = ViolationLedger::with_counts(vec![0, 1, 2, 3], vec![10; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = DemandVector::new(vec![100.0; 4]).unwrap();
        for _ in 0..50 {
            let out = enforced_allocate(&mut f, &mut l, &d, 100.0, &cfg(0.0), &mut rng).unwrap();
            assert_eq!(out.real, vec![100.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn fictitious_tracks_pure_fair_allocator() {
        let mut f = fresh_fictitious(3, vec![0.5, 0.2, 0.9]);
        let mut l = ViolationLedger::with_counts(vec![5, 0, 1], vec![10, 10, 10]).unwrap();
        let mut ph = PriorityHistory::new(
            HistoryWindow::new(20, 3).unwrap(),
            Some(PriorityVector::new(vec![0.5, 0.2, 0.9]).unwrap()),
        )
        .unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(11);
        let mut r2 = ChaCha8Rng::seed_from_u64(11);
        let c = cfg(0.3);
        for t in 0..300 {
            let d = DemandVector::new(vec![50.0 + (t % 3) as f64 * 25.0, 100.0, 60.0]).unwrap();
            let out = enforced_allocate(&mut f, &mut l, &d, 100.0, &c, &mut r1).unwrap();
            let pi = ph.priority_vector().unwrap();
            let pure = fair_allocate(&pi, &d, 100.0, &mut r2).unwrap();
            ph.push_slot(&pure, 100.0).unwrap();
            assert_eq!(out.fictitious, pure);
        }
        assert_eq!(f.history(), &ph);
    }

    #[test]
    fn excluded_operator_sits_out_cooloff() {
        let c = EnforcementConfig {
            omega: 0.5,
            kappa_pei: 0.5,
            cooloff_slots: 2,
            penalty: PenaltyFunction::Linear,
        };
        let mut f = fresh_fictitious(2, vec![0.0, 0.5]);
        let mut l = ViolationLedger::with_counts(vec![9, 0], vec![10, 10]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = DemandVector::new(vec![100.0, 50.0]).unwrap();
        let out = enforced_allocate(&mut f, &mut l, &d, 100.0, &c, &mut rng).unwrap();
        assert_eq!(out.selection[0], SelectionIndex::Excluded);
        assert_eq!(out.real, vec![0.0, 50.0]);
        assert_eq!(l.cooloff_remaining(OperatorId(0)), 2);
        enforced_allocate(&mut f, &mut l, &d, 100.0, &c, &mut rng).unwrap();
        assert_eq!(l.cooloff_remaining(OperatorId(0)), 1);
        let out = enforced_allocate(&mut f, &mut l, &d, 100.0, &c, &mut rng).unwrap();
        assert_eq!(out.selection[0], SelectionIndex::Excluded);
        assert_eq!(l.cooloff_remaining(OperatorId(0)), 0);
        // re-enters with counters intact, and is immediately excluded again
        let out = enforced_allocate(&mut f, &mut l, &d, 100.0, &c, &mut rng).unwrap();
        assert_eq!(out.selection[0], SelectionIndex::Excluded);
        assert_eq!(l.violations(OperatorId(0)), 9);
    }

    #[test]
    fn all_excluded_gives_zero_allocation() {
        let c = EnforcementConfig {
            omega: 0.5,
            kappa_pei: 0.1,
            ..EnforcementConfig::default()
        };
        let mut f = fresh_fictitious(2, vec![0.4, 0.6]);
        let mut l = ViolationLedger::with_counts(vec![5, 5], vec![10, 10]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = DemandVector::new(vec![100.0, 100.0]).unwrap();
        let out = enforced_allocate(&mut f, &mut l, &d, 100.0, &c, &mut rng).unwrap();
        assert_eq!(out.real, vec![0.0, 0.0]);
        assert_eq!(out.fictitious, vec![100.0, 0.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn larger_penalty_never_served_earlier(
                pi in 0.0f64..1.0,
                pei_a in 0.0f64..1.0,
                pei_b in 0.0f64..1.0,
                omega in 0.0f64..1.0,
            ) {
                let c = cfg(omega);
                let a = compute_si(pi, pei_a, &c).unwrap().value().unwrap();
                let b = compute_si(pi, pei_b, &c).unwrap().value().unwrap();
                if pei_a > pei_b {
                    prop_assert!(a >= b);
                }
                // and the greedy pass agrees with that order
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                let alloc = greedy_by_key(&[Some(a), Some(b)], &[100.0, 100.0], 100.0, &mut rng);
                if a > b + 1e-9 {
                    prop_assert_eq!(alloc, vec![0.0, 100.0]);
                }
            }

            #[test]
            fn power_penalty_is_monotone_unit_map(
                c in 0.1f64..6.0,
                x in 0.0f64..1.0,
                y in 0.0f64..1.0,
            ) {
                let f = PenaltyFunction::Power { exponent: c };
                let fx = apply_penalty(f, x).unwrap();
                let fy = apply_penalty(f, y).unwrap();
                prop_assert!((0.0..=1.0).contains(&fx));
                if x <= y { prop_assert!(fx <= fy); }
                prop_assert_eq!(apply_penalty(f, 1.0).unwrap(), 1.0);
            }
        }
    }
}
