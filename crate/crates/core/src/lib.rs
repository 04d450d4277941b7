//! Fair dynamic spectrum management for Licensed Shared Access (LSA) networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: identifiers, coalitions, the sliding allocation history and
//!   per-instant traces shared by every allocator.
//! * [`l1`]: single-incumbent allocation (priority index, the fair greedy
//!   allocator, the strictly fair water-filling baseline and round robin).
//! * [`enforcement`]: penalty index, penalty functions, selection index and
//!   the fictitious ledger that keeps penalties out of the priority index.
//! * [`l0`]: multi-incumbent coordination (OOS, OOC, MCS) plus the restricted
//!   protocol variants used to check their round/allocation properties.
//! * [`metrics`]: mean shares, moving averages, unallocated factor,
//!   dissatisfaction and Jain's index over traces.
//! * [`sim`]: scenario configuration, seeded streams, warmup and the
//!   per-instant engine.
//! * [`cli`]: config files, overrides, presets and output bundles.

pub mod cli;
pub mod enforcement;
pub mod error;
pub mod l0;
pub mod l1;
pub mod metrics;
pub mod model;
pub mod sim;

pub use error::{Error, Result};
pub use model::{
    AllocationRecord, AllocationTrace, Coalition, HistoryWindow, IncumbentId, InstantRecord,
    OperatorId, EPS,
};
