//! Evaluation metrics over allocation traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AllocationTrace, IncumbentId, OperatorId, EPS};

/// Which offered bandwidth a share is normalised by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShareBasis {
    /// Bandwidth from incumbent `m` over `B^m(t)`.
    Incumbent(IncumbentId),
    /// Bandwidth from every incumbent over the total offer at `t`.
    All,
}

/// Mean per-instant normalised share of `operator`. Instants with zero offered
/// bandwidth contribute 0.
pub fn mean_share(trace: &AllocationTrace, operator: OperatorId, basis: ShareBasis) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let sum: f64 = trace
        .instants()
        .iter()
        .map(|r| {
            let (got, offered) = match basis {
                ShareBasis::Incumbent(m) => (r.allocated[operator.0][m.0], r.offered[m.0]),
                ShareBasis::All => (r.operator_total(operator), r.total_offered()),
            };
            if offered > 0.0 {
                got / offered
            } else {
                0.0
            }
        })
        .sum();
    Ok(sum / trace.len() as f64)
}

/// Trailing mean of `series` over `window` samples: element `k` averages
/// `series[k..k + window]`.
pub fn moving_average_series(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::InvalidInput(
            "moving-average window must be positive".into(),
        ));
    }
    if window > series.len() {
        return Err(Error::WindowTooLarge {
            window,
            len: series.len(),
        });
    }
    let w = window as f64;
    let mut out = Vec::with_capacity(series.len() - window + 1);
    let mut sum: f64 = series[..window].iter().sum();
    out.push(sum / w);
    for k in window..series.len() {
        sum += series[k] - series[k - window];
        out.push(sum / w);
    }
    Ok(out)
}

/// Moving average of `operator`'s absolute allocation (summed over
/// incumbents), of length `T - W + 1`.
pub fn moving_average(
    trace: &AllocationTrace,
    operator: OperatorId,
    window: usize,
) -> Result<Vec<f64>> {
    moving_average_series(&trace.operator_series(operator), window)
}

/// A mean over a qualifying subset of instants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualifiedMean {
    pub value: f64,
    /// Number of instants that entered the mean; 0 means none qualified and
    /// `value` is reported as 0.
    pub qualifying: usize,
}

impl QualifiedMean {
    pub fn has_data(&self) -> bool {
        self.qualifying > 0
    }
}

/// Mean unallocated fraction of incumbent `m`'s offer, over the instants where
/// total demand is at least the total offer.
pub fn unallocated_factor(trace: &AllocationTrace, incumbent: IncumbentId) -> QualifiedMean {
    let mut sum = 0.0;
    let mut q = 0usize;
    for r in trace.instants() {
        if r.total_demand() + EPS < r.total_offered() {
            continue;
        }
        q += 1;
        let offered = r.offered[incumbent.0];
        if offered > 0.0 {
            sum += 1.0 - r.incumbent_total(incumbent) / offered;
        }
    }
    QualifiedMean {
        value: if q == 0 { 0.0 } else { sum / q as f64 },
        qualifying: q,
    }
}

/// Mean unmet fraction of total demand, over the instants where total demand
/// does not exceed the total offer.
pub fn dissatisfaction(trace: &AllocationTrace) -> QualifiedMean {
    let mut sum = 0.0;
    let mut l = 0usize;
    for r in trace.instants() {
        let demand = r.total_demand();
        if demand > r.total_offered() + EPS {
            continue;
        }
        l += 1;
        if demand > 0.0 {
            sum += 1.0 - r.total_allocated() / demand;
        }
    }
    QualifiedMean {
        value: if l == 0 { 0.0 } else { sum / l as f64 },
        qualifying: l,
    }
}

/// Jain's fairness index `(sum x)^2 / (N * sum x^2)`, in `[1/N, 1]`.
pub fn jain_index(shares: &[f64]) -> Result<f64> {
    if shares.is_empty() {
        return Err(Error::InvalidInput("Jain index of an empty vector".into()));
    }
    if shares.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidInput(
            "Jain index needs finite non-negative shares".into(),
        ));
    }
    let sum: f64 = shares.iter().sum();
    let sq: f64 = shares.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return Err(Error::AllZeroShares);
    }
    Ok(sum * sum / (shares.len() as f64 * sq))
}

/// Population variance.
pub fn variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean normalised share per operator over all incumbents.
    pub mean_share: Vec<f64>,
    /// `mean_share_by_incumbent[m][n]`: share of incumbent `m`'s offer.
    pub mean_share_by_incumbent: Vec<Vec<f64>>,
    /// Moving average of each operator's absolute allocation.
    #[serde(skip)]
    pub moving_average: Vec<Vec<f64>>,
    pub moving_average_window: usize,
    pub unallocated: Vec<QualifiedMean>,
    pub dissatisfaction: QualifiedMean,
    pub share_variance: f64,
    /// `None` when every share is zero.
    pub jain_index: Option<f64>,
}

impl MetricReport {
    pub fn from_trace(trace: &AllocationTrace, window: usize) -> Result<Self> {
        let ops: Vec<OperatorId> = (0..trace.operators()).map(OperatorId).collect();
        let incs: Vec<IncumbentId> = (0..trace.incumbents()).map(IncumbentId).collect();
        let mean_share = ops
            .iter()
            .map(|&n| mean_share(trace, n, ShareBasis::All))
            .collect::<Result<Vec<_>>>()?;
        let mean_share_by_incumbent = incs
            .iter()
            .map(|&m| {
                ops.iter()
                    .map(|&n| self::mean_share(trace, n, ShareBasis::Incumbent(m)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let window = window.min(trace.len()).max(1);
        let moving_average = ops
            .iter()
            .map(|&n| moving_average(trace, n, window))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            share_variance: variance(&mean_share),
            jain_index: jain_index(&mean_share).ok(),
            mean_share,
            mean_share_by_incumbent,
            moving_average,
            moving_average_window: window,
            unallocated: incs.iter().map(|&m| unallocated_factor(trace, m)).collect(),
            dissatisfaction: dissatisfaction(trace),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InstantRecord;

    fn trace(rows: &[(&[f64], &[f64], &[&[f64]])]) -> AllocationTrace {
        let n = rows[0].0.len();
        let m = rows[0].1.len();
        let mut t = AllocationTrace::new(n, m);
        for (i, (d, o, a)) in rows.iter().enumerate() {
            t.push(InstantRecord {
                instant: i as u64,
                demand: d.to_vec(),
                offered: o.to_vec(),
                allocated: a.iter().map(|r| r.to_vec()).collect(),
                violations: vec![false; n],
                rounds: None,
            })
            .unwrap();
        }
        t
    }

    fn single(allocs: &[f64]) -> AllocationTrace {
        let mut t = AllocationTrace::new(1, 1);
        for (i, &a) in allocs.iter().enumerate() {
            t.push(InstantRecord {
                instant: i as u64,
                demand: vec![100.0],
                offered: vec![100.0],
                allocated: vec![vec![a]],
                violations: vec![false],
                rounds: None,
            })
            .unwrap();
        }
        t
    }

    #[test]
    fn share_of_full_and_alternating_grants() {
        let t = single(&[100.0; 5]);
        assert_eq!(mean_share(&t, OperatorId(0), ShareBasis::All).unwrap(), 1.0);
        let t = single(&[100.0, 0.0, 100.0, 0.0]);
        assert_eq!(
            mean_share(&t, OperatorId(0), ShareBasis::Incumbent(IncumbentId(0))).unwrap(),
            0.5
        );
        assert!(matches!(
            mean_share(&AllocationTrace::new(1, 1), OperatorId(0), ShareBasis::All),
            Err(Error::EmptyTrace)
        ));
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(
            moving_average(&single(&[25.0; 6]), OperatorId(0), 3).unwrap(),
            vec![25.0; 4]
        );
        assert_eq!(
            moving_average(&single(&[100.0, 0.0, 100.0]), OperatorId(0), 2).unwrap(),
            vec![50.0, 50.0]
        );
        assert!(matches!(
            moving_average(&single(&[1.0, 2.0]), OperatorId(0), 3),
            Err(Error::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn unallocated_examples() {
        let t = trace(&[(&[100.0, 100.0], &[100.0], &[&[60.0], &[40.0]])]);
        assert_eq!(unallocated_factor(&t, IncumbentId(0)).value, 0.0);
        let t = trace(&[(&[100.0, 100.0], &[100.0], &[&[75.0], &[0.0]])]);
        let u = unallocated_factor(&t, IncumbentId(0));
        assert!((u.value - 0.25).abs() < 1e-12);
        assert_eq!(u.qualifying, 1);
        // demand below offer: not qualifying
        let t = trace(&[(&[10.0, 10.0], &[100.0], &[&[10.0], &[10.0]])]);
        let u = unallocated_factor(&t, IncumbentId(0));
        assert!(!u.has_data());
        assert_eq!(u.value, 0.0);
    }

    #[test]
    fn dissatisfaction_examples() {
        let t = trace(&[(&[50.0, 50.0], &[100.0], &[&[50.0], &[50.0]])]);
        assert_eq!(dissatisfaction(&t).value, 0.0);
        let t = trace(&[(&[50.0, 50.0], &[100.0], &[&[50.0], &[30.0]])]);
        let d = dissatisfaction(&t);
        assert!((d.value - 0.2).abs() < 1e-12);
        assert_eq!(d.qualifying, 1);
        let t = trace(&[(&[100.0, 100.0], &[100.0], &[&[50.0], &[50.0]])]);
        assert!(!dissatisfaction(&t).has_data());
    }

    #[test]
    fn jain_examples() {
        assert!((jain_index(&[0.25; 4]).unwrap() - 1.0).abs() < 1e-15);
        assert!((jain_index(&[1.0, 0.0, 0.0, 0.0]).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(jain_index(&[0.0, 0.0]), Err(Error::AllZeroShares)));
        assert!(jain_index(&[]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn naive_ma(series: &[f64], w: usize) -> Vec<f64> {
            (0..=series.len() - w)
                .map(|k| series[k..k + w].iter().sum::<f64>() / w as f64)
                .collect()
        }

        /// Random 3-operator, 2-incumbent instants with conservation.
        fn instants() -> impl Strategy<Value = Vec<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)>> {
            proptest::collection::vec(
                (
                    proptest::collection::vec(0.0f64..100.0, 3),
                    proptest::collection::vec(1.0f64..100.0, 2),
                    proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 2), 3),
                ),
                1..30,
            )
            .prop_map(|rows| {
                rows.into_iter()
                    .map(|(d, o, frac)| {
                        // scale fractions so each incumbent and operator stays feasible
                        let mut a = vec![vec![0.0; 2]; 3];
                        for m in 0..2 {
                            for n in 0..3 {
                                a[n][m] = frac[n][m] * (o[m] / 3.0).min(d[n] / 2.0);
                            }
                        }
                        (d, o, a)
                    })
                    .collect()
            })
        }

        fn build(rows: &[(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)], perm: &[usize]) -> AllocationTrace {
            let mut t = AllocationTrace::new(3, 2);
            for (i, (d, o, a)) in rows.iter().enumerate() {
                t.push(InstantRecord {
                    instant: i as u64,
                    demand: perm.iter().map(|&p| d[p]).collect(),
                    offered: o.clone(),
                    allocated: perm.iter().map(|&p| a[p].clone()).collect(),
                    violations: vec![false; 3],
                    rounds: None,
                })
                .unwrap();
            }
            t
        }

        proptest! {
            #[test]
            fn moving_average_matches_naive(series in proptest::collection::vec(0.0f64..100.0, 1..60), w in 1usize..20) {
                prop_assume!(w <= series.len());
                let fast = moving_average_series(&series, w).unwrap();
                let slow = naive_ma(&series, w);
                prop_assert_eq!(fast.len(), slow.len());
                for (a, b) in fast.iter().zip(&slow) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }

            #[test]
            fn metrics_invariant_under_relabeling(rows in instants()) {
                let t = build(&rows, &[0, 1, 2]);
                let p = build(&rows, &[2, 0, 1]);
                for m in 0..2 {
                    let a = unallocated_factor(&t, IncumbentId(m));
                    let b = unallocated_factor(&p, IncumbentId(m));
                    prop_assert_eq!(a.qualifying, b.qualifying);
                    prop_assert!((a.value - b.value).abs() < 1e-12);
                }
                prop_assert!((dissatisfaction(&t).value - dissatisfaction(&p).value).abs() < 1e-12);
            }

            #[test]
            fn shares_plus_waste_is_one_when_all_qualify(rows in instants()) {
                // force every instant to qualify by raising demands
                let rows: Vec<_> = rows.into_iter().map(|(_, o, a)| (vec![500.0; 3], o, a)).collect();
                let t = build(&rows, &[0, 1, 2]);
                for m in 0..2 {
                    let shares: f64 = (0..3)
                        .map(|n| mean_share(&t, OperatorId(n), ShareBasis::Incumbent(IncumbentId(m))).unwrap())
                        .sum();
                    let u = unallocated_factor(&t, IncumbentId(m));
                    prop_assert_eq!(u.qualifying, t.len());
                    prop_assert!((shares + u.value - 1.0).abs() < 1e-9);
                }
            }

            #[test]
            fn jain_in_range(x in proptest::collection::vec(0.0f64..1.0, 1..8)) {
                if let Ok(j) = jain_index(&x) {
                    let n = x.len() as f64;
                    prop_assert!(j >= 1.0 / n - 1e-12 && j <= 1.0 + 1e-12);
                }
            }
        }
    }
}
