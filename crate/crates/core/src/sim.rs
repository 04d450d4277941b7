//! Scenario engine: configuration, seeded streams, warmup and the per-instant
//! loop that binds the allocators to their histories.
//!
//! Randomness comes from one ChaCha8 generator per scenario seed, split into
//! independent streams (demand sampling, tie-breaks, violations, warmup
//! priorities) via the ChaCha stream id, so adding draws to one consumer never
//! shifts another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enforcement::{
    enforced_allocate, EnforcementConfig, FictitiousLedger, PenaltyFunction, ViolationLedger,
};
use crate::error::{Error, Result};
use crate::l0::{self, Protocol, RoundState};
use crate::l1::{
    fair_allocate, round_robin_allocate, strictly_fair_allocate, DemandVector, PriorityHistory,
    PriorityVector,
};
use crate::metrics::MetricReport;
use crate::model::{
    AllocationTrace, Coalition, HistoryWindow, IncumbentId, InstantRecord, OperatorId,
};

const DEMAND_STREAM: u64 = 1;
const TIE_STREAM: u64 = 2;
const VIOLATION_STREAM: u64 = 3;
const WARMUP_STREAM: u64 = 4;

/// Named sub-stream `stream` of the scenario generator seeded with `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    FairL1,
    StrictFair,
    RoundRobin,
    EnforcedL1,
    Oos,
    Ooc,
    Mcs,
    OosMultiAssign,
    McsSingleIncumbent,
    McsSingleAssignment,
}

impl ProtocolKind {
    /// The multi-incumbent protocol, if this is one.
    pub fn multi_incumbent(self) -> Option<Protocol> {
        match self {
            ProtocolKind::Oos => Some(Protocol::Oos),
            ProtocolKind::Ooc => Some(Protocol::Ooc),
            ProtocolKind::Mcs => Some(Protocol::Mcs),
            ProtocolKind::OosMultiAssign => Some(Protocol::OosMultiAssign),
            ProtocolKind::McsSingleIncumbent => Some(Protocol::McsSingleIncumbent),
            ProtocolKind::McsSingleAssignment => Some(Protocol::McsSingleAssignment),
            _ => None,
        }
    }
}

/// Per-instant demand of one operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandModel {
    Fixed {
        value: f64,
    },
    /// Uniform choice among `values`.
    Uniform {
        values: Vec<f64>,
    },
}

impl DemandModel {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DemandModel::Fixed { value } => *value,
            DemandModel::Uniform { values } => values[rng.random_range(0..values.len())],
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        let values: &[f64] = match self {
            DemandModel::Fixed { value } => std::slice::from_ref(value),
            DemandModel::Uniform { values } => values,
        };
        if values.is_empty() {
            return Err(Error::config(
                field,
                "uniform demand needs at least one value",
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config(
                field,
                "demand values must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Offered bandwidth per incumbent per instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SupplyModel {
    /// Same offer every instant, one value per incumbent.
    Constant { values: Vec<f64> },
    /// Offers per instant, one row per instant, cycled when exhausted.
    Schedule { values: Vec<Vec<f64>> },
}

impl SupplyModel {
    pub fn at(&self, instant: usize) -> &[f64] {
        match self {
            SupplyModel::Constant { values } => values,
            SupplyModel::Schedule { values } => &values[instant % values.len()],
        }
    }

    fn validate(&self, incumbents: usize) -> Result<()> {
        let rows: Vec<&Vec<f64>> = match self {
            SupplyModel::Constant { values } => vec![values],
            SupplyModel::Schedule { values } => values.iter().collect(),
        };
        if rows.is_empty() {
            return Err(Error::config(
                "supply.values",
                "schedule needs at least one row",
            ));
        }
        for row in rows {
            if row.len() != incumbents {
                return Err(Error::config(
                    "supply.values",
                    format!(
                        "expected {incumbents} values per instant, got {}",
                        row.len()
                    ),
                ));
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::config(
                    "supply.values",
                    "offers must be finite and non-negative",
                ));
            }
        }
        Ok(())
    }
}

/// How priority indices are initialised before the history holds `W` slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmupPolicy {
    /// One uniform `[0, 1)` draw per operator and coalition.
    #[default]
    RandomPi,
    /// Every operator starts at priority 0 (ties broken at random).
    ZeroPi,
}

fn default_incumbents() -> usize {
    1
}

fn default_window() -> usize {
    20
}

/// Declarative description of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub protocol: ProtocolKind,
    pub operators: usize,
    #[serde(default = "default_incumbents")]
    pub incumbents: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    pub instants: usize,
    pub seed: u64,
    #[serde(default)]
    pub warmup: WarmupPolicy,
    pub supply: SupplyModel,
    /// One demand model per operator.
    pub demand: Vec<DemandModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enforcement: Option<EnforcementConfig>,
    /// Per-operator probability that an assignment violates the rules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation_probability: Option<Vec<f64>>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.operators == 0 {
            return Err(Error::config("operators", "must be at least 1"));
        }
        if self.incumbents == 0 {
            return Err(Error::config("incumbents", "must be at least 1"));
        }
        if self.protocol.multi_incumbent().is_none() && self.incumbents != 1 {
            return Err(Error::config(
                "incumbents",
                format!("protocol {:?} needs exactly 1 incumbent", self.protocol),
            ));
        }
        if self.window == 0 {
            return Err(Error::config("window", "must be at least 1"));
        }
        if self.instants < self.window {
            return Err(Error::config(
                "instants",
                format!(
                    "must be at least window ({}), got {}",
                    self.window, self.instants
                ),
            ));
        }
        if self.demand.len() != self.operators {
            return Err(Error::config(
                "demand",
                format!(
                    "expected {} demand models, got {}",
                    self.operators,
                    self.demand.len()
                ),
            ));
        }
        for (n, d) in self.demand.iter().enumerate() {
            d.validate(&format!("demand[{n}]"))?;
        }
        self.supply.validate(self.incumbents)?;
        if let Some(e) = &self.enforcement {
            e.validate()?;
        }
        if self.protocol == ProtocolKind::EnforcedL1 && self.enforcement.is_none() {
            return Err(Error::config(
                "enforcement",
                "required by protocol enforced_l1",
            ));
        }
        if let Some(p) = &self.violation_probability {
            if p.len() != self.operators {
                return Err(Error::config(
                    "violation_probability",
                    format!("expected {} values, got {}", self.operators, p.len()),
                ));
            }
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::config(
                    "violation_probability",
                    "values must lie in [0, 1]",
                ));
            }
        }
        Ok(())
    }
}

/// Output of one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: ScenarioConfig,
    pub trace: AllocationTrace,
    pub report: MetricReport,
    /// Protocol rounds per instant (multi-incumbent protocols only).
    pub rounds: Vec<usize>,
    /// Pure fair allocation per instant (enforced runs only).
    pub fictitious: Option<Vec<Vec<f64>>>,
}

impl RunResult {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }
}

/// Initial priority histories, one per incumbent.
pub fn warmup<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Vec<PriorityHistory>> {
    (0..cfg.incumbents)
        .map(|_| {
            let initial = match cfg.warmup {
                WarmupPolicy::RandomPi => (0..cfg.operators).map(|_| rng.random::<f64>()).collect(),
                WarmupPolicy::ZeroPi => vec![0.0; cfg.operators],
            };
            PriorityHistory::new(
                HistoryWindow::new(cfg.window, cfg.operators)?,
                Some(PriorityVector::new(initial)?),
            )
        })
        .collect()
}

/// Runs the warmup and `cfg.instants` allocation instants.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunResult> {
    cfg.validate()?;
    let n_ops = cfg.operators;
    let n_incs = cfg.incumbents;
    let mut demand_rng = stream(cfg.seed, DEMAND_STREAM);
    let mut tie_rng = stream(cfg.seed, TIE_STREAM);
    let mut violation_rng = stream(cfg.seed, VIOLATION_STREAM);
    let mut warmup_rng = stream(cfg.seed, WARMUP_STREAM);

    let mut histories = warmup(cfg, &mut warmup_rng)?;
    let coalitions: Vec<Coalition> = (0..n_incs)
        .map(|m| Coalition::full(IncumbentId(m), n_ops))
        .collect::<Result<_>>()?;
    let enforcement = cfg.enforcement.unwrap_or_default();
    let violation_p = cfg
        .violation_probability
        .clone()
        .unwrap_or_else(|| vec![0.0; n_ops]);
    let mut ledger = ViolationLedger::new(n_ops);
    let mut fictitious_ledger = FictitiousLedger::new(histories[0].clone());
    let mut fictitious = (cfg.protocol == ProtocolKind::EnforcedL1).then(Vec::new);
    let mut rr_start = OperatorId(0);
    let mut rounds = Vec::new();
    let mut trace = AllocationTrace::new(n_ops, n_incs);

    for t in 0..cfg.instants {
        let demand = DemandVector::new(
            cfg.demand
                .iter()
                .map(|d| d.sample(&mut demand_rng))
                .collect(),
        )?;
        let supply = cfg.supply.at(t).to_vec();
        let mut violations = vec![false; n_ops];
        let mut round_count = None;

        let allocated: Vec<Vec<f64>> = match cfg.protocol {
            ProtocolKind::FairL1 | ProtocolKind::StrictFair => {
                let pi = histories[0].priority_vector()?;
                let alloc = if cfg.protocol == ProtocolKind::FairL1 {
                    fair_allocate(&pi, &demand, supply[0], &mut tie_rng)?
                } else {
                    strictly_fair_allocate(&pi, &demand, supply[0])?
                };
                histories[0].push_slot(&alloc, supply[0])?;
                alloc.into_iter().map(|a| vec![a]).collect()
            }
            ProtocolKind::RoundRobin => {
                let (alloc, next) = round_robin_allocate(rr_start, &demand, supply[0])?;
                rr_start = next;
                alloc.into_iter().map(|a| vec![a]).collect()
            }
            ProtocolKind::EnforcedL1 => {
                let out = enforced_allocate(
                    &mut fictitious_ledger,
                    &mut ledger,
                    &demand,
                    supply[0],
                    &enforcement,
                    &mut tie_rng,
                )?;
                for (n, &a) in out.real.iter().enumerate() {
                    if a > 0.0 && violation_rng.random_bool(violation_p[n]) {
                        ledger.record_violation(OperatorId(n))?;
                        violations[n] = true;
                    }
                }
                if let Some(f) = fictitious.as_mut() {
                    f.push(out.fictitious);
                }
                out.real.into_iter().map(|a| vec![a]).collect()
            }
            kind => {
                let protocol = kind
                    .multi_incumbent()
                    .expect("remaining kinds are multi-incumbent");
                let priorities = histories
                    .iter()
                    .map(|h| h.priority_vector())
                    .collect::<Result<Vec<_>>>()?;
                let state = RoundState::new(&demand, &supply)?;
                let out =
                    l0::run_protocol(protocol, &coalitions, &priorities, state, &mut tie_rng)?;
                for (m, h) in histories.iter_mut().enumerate() {
                    let column: Vec<f64> = out.allocated.iter().map(|r| r[m]).collect();
                    h.push_slot(&column, supply[m])?;
                }
                round_count = Some(out.rounds);
                rounds.push(out.rounds);
                out.allocated
            }
        };

        trace.push(InstantRecord {
            instant: t as u64 + 1,
            demand: demand.as_slice().to_vec(),
            offered: supply,
            allocated,
            violations,
            rounds: round_count,
        })?;
    }

    let report = MetricReport::from_trace(&trace, cfg.window)?;
    Ok(RunResult {
        config: cfg.clone(),
        trace,
        report,
        rounds,
        fictitious,
    })
}

/// Parameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Omega,
    PenaltyExponent,
    Seed,
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega" => Ok(SweepParameter::Omega),
            "penalty_exponent" | "exponent" => Ok(SweepParameter::PenaltyExponent),
            "seed" => Ok(SweepParameter::Seed),
            other => Err(Error::config(
                "parameter",
                format!(
                    "unknown sweep parameter {other:?} (expected omega, penalty_exponent or seed)"
                ),
            )),
        }
    }
}

impl std::fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepParameter::Omega => "omega",
            SweepParameter::PenaltyExponent => "penalty_exponent",
            SweepParameter::Seed => "seed",
        })
    }
}

/// `template` with `parameter` set to `value`.
///
/// Omega and exponent sweeps keep the template's seed for every value, so all
/// runs see the same demand, tie-break and violation streams.
pub fn apply_parameter(
    template: &ScenarioConfig,
    parameter: SweepParameter,
    value: f64,
) -> Result<ScenarioConfig> {
    let mut cfg = template.clone();
    match parameter {
        SweepParameter::Omega => {
            let e = cfg.enforcement.as_mut().ok_or_else(|| {
                Error::config("enforcement", "omega sweep needs an enforcement section")
            })?;
            e.omega = value;
        }
        SweepParameter::PenaltyExponent => {
            let e = cfg.enforcement.as_mut().ok_or_else(|| {
                Error::config("enforcement", "exponent sweep needs an enforcement section")
            })?;
            e.penalty = PenaltyFunction::Power { exponent: value };
        }
        SweepParameter::Seed => {
            if value < 0.0 || value.fract() != 0.0 || value > u64::MAX as f64 {
                return Err(Error::config(
                    "seed",
                    format!("must be a non-negative integer, got {value}"),
                ));
            }
            cfg.seed = value as u64;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// One run per value, executed in parallel; results are in value order.
pub fn sweep(
    template: &ScenarioConfig,
    parameter: SweepParameter,
    values: &[f64],
) -> Result<Vec<RunResult>> {
    if values.is_empty() {
        return Err(Error::config("values", "sweep needs at least one value"));
    }
    let configs = values
        .iter()
        .map(|&v| apply_parameter(template, parameter, v))
        .collect::<Result<Vec<_>>>()?;
    configs.par_iter().map(run_scenario).collect()
}

/// Built-in evaluation scenarios.
pub mod presets {
    use super::*;

    pub const NAMES: [&str; 9] = [
        "fig2a", "fig2b", "fig3", "fig4a", "fig4b", "fig5-oos", "fig5-ooc", "fig5-mcs", "fig6",
    ];

    pub const DEFAULT_SEED: u64 = 1;

    fn evaluation_demand(operators: usize) -> Vec<DemandModel> {
        // operators 1..N-1 pick 50 or 100; the last always asks for 100
        let mut d = vec![
            DemandModel::Uniform {
                values: vec![50.0, 100.0],
            };
            operators - 1
        ];
        d.push(DemandModel::Fixed { value: 100.0 });
        d
    }

    fn single(protocol: ProtocolKind) -> ScenarioConfig {
        ScenarioConfig {
            protocol,
            operators: 4,
            incumbents: 1,
            window: 20,
            instants: 10_000,
            seed: DEFAULT_SEED,
            warmup: WarmupPolicy::RandomPi,
            supply: SupplyModel::Constant {
                values: vec![100.0],
            },
            demand: evaluation_demand(4),
            enforcement: None,
            violation_probability: None,
        }
    }

    fn enforced(penalty: PenaltyFunction) -> ScenarioConfig {
        ScenarioConfig {
            enforcement: Some(EnforcementConfig {
                omega: 1.0,
                kappa_pei: 1.0,
                cooloff_slots: 0,
                penalty,
            }),
            violation_probability: Some(vec![0.0, 0.1, 0.2, 0.3]),
            ..single(ProtocolKind::EnforcedL1)
        }
    }

    fn multi(protocol: ProtocolKind, operators: usize, demand: Vec<DemandModel>) -> ScenarioConfig {
        ScenarioConfig {
            incumbents: 2,
            operators,
            supply: SupplyModel::Constant {
                values: vec![100.0, 100.0],
            },
            demand,
            ..single(protocol)
        }
    }

    pub fn get(name: &str) -> Option<ScenarioConfig> {
        Some(match name {
            "fig2a" => single(ProtocolKind::FairL1),
            "fig2b" => single(ProtocolKind::RoundRobin),
            "fig3" => single(ProtocolKind::StrictFair),
            "fig4a" => enforced(PenaltyFunction::Linear),
            "fig4b" => enforced(PenaltyFunction::Power { exponent: 2.0 }),
            "fig5-oos" => multi(ProtocolKind::Oos, 4, evaluation_demand(4)),
            "fig5-ooc" => multi(ProtocolKind::Ooc, 4, evaluation_demand(4)),
            "fig5-mcs" => multi(ProtocolKind::Mcs, 4, evaluation_demand(4)),
            "fig6" => multi(
                ProtocolKind::Mcs,
                3,
                vec![
                    DemandModel::Uniform {
                        values: vec![50.0, 100.0]
                    };
                    3
                ],
            ),
            _ => return None,
        })
    }

    pub fn describe(name: &str) -> Option<&'static str> {
        Some(match name {
            "fig2a" => "fair greedy allocator, N=4, B=100, W=20",
            "fig2b" => "round robin baseline, N=4, B=100",
            "fig3" => "strictly fair water-filling baseline, N=4, B=100, W=20",
            "fig4a" => "enforced allocator, linear penalty, violation rates 0/0.1/0.2/0.3",
            "fig4b" => "enforced allocator, power penalty c=2, violation rates 0/0.1/0.2/0.3",
            "fig5-oos" => "OOS, N=4, M=2, supplies 100/100",
            "fig5-ooc" => "OOC, N=4, M=2, supplies 100/100",
            "fig5-mcs" => "MCS, N=4, M=2, supplies 100/100",
            "fig6" => "MCS, N=3, M=2, supplies 100/100, demands uniform {50,100}",
            _ => return None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(protocol: ProtocolKind) -> ScenarioConfig {
        ScenarioConfig {
            instants: 400,
            ..presets::get("fig2a")
                .map(|c| ScenarioConfig { protocol, ..c })
                .unwrap()
        }
    }

    #[test]
    fn every_preset_validates() {
        for name in presets::NAMES {
            let cfg = presets::get(name).unwrap();
            cfg.validate().unwrap();
            assert!(presets::describe(name).is_some());
        }
        assert!(presets::get("fig9").is_none());
    }

    #[test]
    fn validation_names_field() {
        let mut cfg = small(ProtocolKind::FairL1);
        cfg.instants = 5;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("instants"), "{err}");

        let mut cfg = small(ProtocolKind::FairL1);
        cfg.incumbents = 2;
        cfg.supply = SupplyModel::Constant {
            values: vec![100.0, 100.0],
        };
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("incumbents"));

        let cfg = small(ProtocolKind::EnforcedL1);
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("enforcement"));

        let mut cfg = small(ProtocolKind::FairL1);
        cfg.demand.pop();
        assert!(cfg.validate().unwrap_err().to_string().contains("demand"));
    }

    #[test]
    fn trace_length_equals_instants() {
        let mut cfg = small(ProtocolKind::FairL1);
        cfg.instants = cfg.window;
        let r = run_scenario(&cfg).unwrap();
        assert_eq!(r.trace.len(), cfg.window);
        assert_eq!(r.trace.instants()[0].instant, 1);
    }

    #[test]
    fn warmup_draws_in_unit_interval_and_depend_on_seed() {
        let cfg = small(ProtocolKind::FairL1);
        let a = warmup(&cfg, &mut stream(1, WARMUP_STREAM)).unwrap();
        let b = warmup(&cfg, &mut stream(2, WARMUP_STREAM)).unwrap();
        let pa = a[0].priority_vector().unwrap();
        let pb = b[0].priority_vector().unwrap();
        assert!(pa.as_slice().iter().all(|p| (0.0..1.0).contains(p)));
        assert_ne!(pa, pb);
        assert!(a[0].in_warmup());
    }

    #[test]
    fn warmup_hands_over_to_history_after_window() {
        let cfg = small(ProtocolKind::FairL1);
        let mut h = warmup(&cfg, &mut stream(3, WARMUP_STREAM))
            .unwrap()
            .remove(0);
        let initial = h.priority_vector().unwrap();
        for _ in 0..cfg.window - 1 {
            h.push_slot(&[100.0, 0.0, 0.0, 0.0], 100.0).unwrap();
            assert_eq!(h.priority_vector().unwrap(), initial);
        }
        h.push_slot(&[100.0, 0.0, 0.0, 0.0], 100.0).unwrap();
        assert!(!h.in_warmup());
        assert_eq!(
            h.priority_vector().unwrap().as_slice(),
            &[1.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn demand_frequencies_match_model() {
        let model = DemandModel::Uniform {
            values: vec![50.0, 100.0],
        };
        let mut rng = stream(7, DEMAND_STREAM);
        let n = 10_000;
        let fifties = (0..n).filter(|_| model.sample(&mut rng) == 50.0).count();
        let freq = fifties as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.02, "{freq}");
        let fixed = DemandModel::Fixed { value: 100.0 };
        assert_eq!(fixed.sample(&mut rng), 100.0);
    }

    #[test]
    fn violation_rate_converges_to_probability() {
        let mut cfg = presets::get("fig4a").unwrap();
        cfg.violation_probability = Some(vec![0.05, 0.1, 0.2, 0.3]);
        let r = run_scenario(&cfg).unwrap();
        for n in 0..4 {
            let assigned = r
                .trace
                .instants()
                .iter()
                .filter(|i| i.allocated[n][0] > 0.0)
                .count();
            let violated = r
                .trace
                .instants()
                .iter()
                .filter(|i| i.violations[n])
                .count();
            let p = cfg.violation_probability.as_ref().unwrap()[n];
            let rate = violated as f64 / assigned as f64;
            let tol = if assigned >= 10_000 {
                0.02
            } else {
                3.0 * (p * (1.0 - p) / assigned as f64).sqrt() + 0.005
            };
            assert!(
                (rate - p).abs() < tol,
                "operator {n}: {rate} vs {p} over {assigned}"
            );
        }
    }

    #[test]
    fn same_seed_same_trace_different_seed_different_trace() {
        let cfg = small(ProtocolKind::FairL1);
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.trace, b.trace);
        let c = run_scenario(&ScenarioConfig { seed: 99, ..cfg }).unwrap();
        assert_ne!(a.trace, c.trace);
    }

    #[test]
    fn multi_incumbent_run_records_rounds() {
        let mut cfg = presets::get("fig5-oos").unwrap();
        cfg.instants = 200;
        let r = run_scenario(&cfg).unwrap();
        assert_eq!(r.rounds.len(), 200);
        assert!(r.rounds.iter().all(|&k| (2..=4).contains(&k)));
        assert!(r.trace.instants().iter().all(|i| i.rounds.is_some()));
    }

    #[test]
    fn supply_schedule_cycles() {
        let mut cfg = small(ProtocolKind::FairL1);
        cfg.supply = SupplyModel::Schedule {
            values: vec![vec![100.0], vec![0.0], vec![40.0]],
        };
        let r = run_scenario(&cfg).unwrap();
        let offered: Vec<f64> = r
            .trace
            .instants()
            .iter()
            .take(4)
            .map(|i| i.offered[0])
            .collect();
        assert_eq!(offered, vec![100.0, 0.0, 40.0, 100.0]);
        assert_eq!(r.trace.instants()[1].total_allocated(), 0.0);
    }

    #[test]
    fn sweep_rejects_empty_and_orders_results() {
        let cfg = presets::get("fig4a")
            .map(|c| ScenarioConfig { instants: 300, ..c })
            .unwrap();
        assert!(sweep(&cfg, SweepParameter::Omega, &[]).is_err());
        let runs = sweep(&cfg, SweepParameter::Omega, &[1.0, 0.5, 0.0]).unwrap();
        let omegas: Vec<f64> = runs
            .iter()
            .map(|r| r.config.enforcement.unwrap().omega)
            .collect();
        assert_eq!(omegas, vec![1.0, 0.5, 0.0]);
        let single = sweep(&cfg, SweepParameter::Omega, &[1.0]).unwrap();
        assert_eq!(single[0].trace, run_scenario(&cfg).unwrap().trace);
        assert!(sweep(&small(ProtocolKind::FairL1), SweepParameter::Omega, &[0.5]).is_err());
        assert!(sweep(&cfg, SweepParameter::Seed, &[1.5]).is_err());
    }
}
