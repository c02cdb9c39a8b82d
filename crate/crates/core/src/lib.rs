//! Dynamic context-parallel planning for batches of variable-length
//! sequences.
//!
//! A global batch is split into micro-batches; each micro-batch is packed into
//! atomic groups (best-fit decreasing under a per-rank memory budget), and a
//! dynamic program then picks a ring-attention degree for every group so that
//! the slowest group finishes as early as possible. Groups may use any integer
//! degree, not only powers of two.
//!
//! ```
//! use ringplan::{ClusterParams, ClusterSpec, CoefficientValues, CostCoefficients, SequenceSpec};
//! use ringplan::planner::{plan, PlanOptions};
//!
//! let cluster = ClusterSpec::new(ClusterParams {
//!     num_ranks: 8,
//!     mem_budget_per_rank: 10.0,
//!     ranks_per_node: 8,
//!     intra_node_bandwidth: 1e11,
//!     inter_node_bandwidth: 1e10,
//! })?;
//! let coeffs = CostCoefficients::new(CoefficientValues {
//!     alpha1: 1e-6,
//!     alpha2: 1e-4,
//!     mem_per_token: 1.0,
//!     ..Default::default()
//! })?;
//! let batch: Vec<SequenceSpec> = [12, 5, 4, 3]
//!     .iter()
//!     .enumerate()
//!     .map(|(i, &len)| SequenceSpec::causal(i as u64, len))
//!     .collect::<Result<_, _>>()?;
//! let plans = plan(&batch, &cluster, &coeffs, &PlanOptions::default())?;
//! assert!(plans.iter().all(|p| p.assignments().iter().map(|a| a.degree()).sum::<usize>() <= 8));
//! # Ok::<(), ringplan::Error>(())
//! ```

pub mod cost;
pub mod error;
pub mod io;
pub mod packer;
pub mod par;
pub mod planner;
pub mod profiler;
pub mod sim;
pub mod solver;
pub mod types;
pub mod workload;

pub use error::{Error, Result};
pub use par::Execution;
pub use types::{
    validate_plan, AtomicGroup, ClusterParams, ClusterSpec, CoefficientValues, CostCoefficients,
    CpGroupAssignment, MicroBatch, SchedulePlan, SequenceSpec, Violation,
};
