//! Memory and execution-time estimators for a CP group.
//!
//! Compute scales as `1/d` in the group's degree `d`. The ring communication
//! volume per rank is roughly the whole sequence regardless of `d`, so the
//! linear communication term carries no degree factor. A degree-1 group has no
//! ring and pays no communication at all. The attention part of compute
//! overlaps with the attention part of communication, so the smaller of the
//! two is subtracted from the sum.

use log::warn;

use crate::error::{Error, Result};
use crate::types::{AtomicGroup, ClusterSpec, CostCoefficients, SequenceSpec};

/// Per-phase time estimate for one group at one degree, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeBreakdown {
    pub compute: f64,
    pub comm: f64,
    pub attn_compute: f64,
    pub attn_comm: f64,
    pub total: f64,
    /// Set when an attention term exceeded its total and was clamped.
    pub overlap_clamped: bool,
}

/// Length-dependent sums of a group, the only inputs the time model needs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroupLoad {
    /// `sum (1 + eta) * len^2`
    pub quadratic: f64,
    /// `sum len`
    pub linear: f64,
}

impl GroupLoad {
    pub fn of<'a>(sequences: impl IntoIterator<Item = &'a SequenceSpec>) -> Self {
        let mut load = GroupLoad::default();
        for s in sequences {
            let len = s.length() as f64;
            load.quadratic += (1.0 + s.mask_efficiency()) * len * len;
            load.linear += len;
        }
        load
    }
}

/// Activation memory of `tokens` tokens.
pub fn activation_memory(tokens: u64, coeffs: &CostCoefficients) -> f64 {
    tokens as f64 * coeffs.mem_per_token
}

/// Total memory of a sequence set: activations plus one copy of model states.
pub fn estimate_memory<'a>(
    sequences: impl IntoIterator<Item = &'a SequenceSpec>,
    coeffs: &CostCoefficients,
) -> f64 {
    let tokens: u64 = sequences.into_iter().map(SequenceSpec::length).sum();
    activation_memory(tokens, coeffs) + coeffs.mem_model_states
}

pub fn group_memory(group: &AtomicGroup, coeffs: &CostCoefficients) -> f64 {
    activation_memory(group.total_tokens(), coeffs) + coeffs.mem_model_states
}

/// Activation room left on one rank once its model states are resident.
pub fn activation_capacity_per_rank(cluster: &ClusterSpec, coeffs: &CostCoefficients) -> f64 {
    cluster.mem_budget_per_rank - coeffs.mem_model_states
}

/// Whether `tokens` tokens fit on `degree` ranks, each holding its own model
/// states plus a `1/degree` share of the activations.
pub fn fits_memory(
    tokens: u64,
    degree: usize,
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
) -> bool {
    activation_memory(tokens, coeffs)
        <= degree as f64 * activation_capacity_per_rank(cluster, coeffs)
}

/// Smallest degree whose combined memory holds `tokens` tokens.
pub fn min_degree_for_tokens(
    tokens: u64,
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
) -> Result<usize> {
    let cap = activation_capacity_per_rank(cluster, coeffs);
    if cap <= 0.0 {
        return Err(Error::invalid(
            "cluster",
            format!(
                "model states ({}) leave no room under the per-rank budget ({})",
                coeffs.mem_model_states, cluster.mem_budget_per_rank
            ),
        ));
    }
    let act = activation_memory(tokens, coeffs);
    let ratio = (act / cap).ceil();
    let limit = cluster.num_ranks;
    if !ratio.is_finite() || ratio > limit as f64 + 1.0 {
        return Err(Error::ExceedsCluster {
            id: 0,
            required: if ratio.is_finite() {
                ratio as usize
            } else {
                usize::MAX
            },
            available: limit,
        });
    }
    // settle rounding in the division against the exact fit predicate
    let mut d = (ratio as usize).max(1);
    while d > 1 && fits_memory(tokens, d - 1, cluster, coeffs) {
        d -= 1;
    }
    while !fits_memory(tokens, d, cluster, coeffs) {
        d += 1;
    }
    if d > limit {
        return Err(Error::ExceedsCluster {
            id: 0,
            required: d,
            available: limit,
        });
    }
    Ok(d)
}

/// Minimum CP degree for a set of sequences. Errors if it exceeds the cluster.
pub fn min_degree<'a>(
    sequences: impl IntoIterator<Item = &'a SequenceSpec>,
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
) -> Result<usize> {
    let seqs: Vec<&SequenceSpec> = sequences.into_iter().collect();
    let tokens = seqs.iter().map(|s| s.length()).sum();
    min_degree_for_tokens(tokens, cluster, coeffs).map_err(|e| match e {
        Error::ExceedsCluster {
            required,
            available,
            ..
        } => Error::ExceedsCluster {
            id: seqs.first().map_or(0, |s| s.id()),
            required,
            available,
        },
        other => other,
    })
}

/// Where a group's ranks live.
#[derive(Debug, Clone, Copy)]
pub enum RankSpan<'a> {
    /// `degree` consecutive ranks starting on a node boundary.
    Contiguous(usize),
    /// Concrete rank ids.
    Ranks(&'a [usize]),
}

impl RankSpan<'_> {
    pub fn degree(&self) -> usize {
        match self {
            RankSpan::Contiguous(d) => *d,
            RankSpan::Ranks(r) => r.len(),
        }
    }
}

/// Ring bandwidth for a group: intra-node if every rank is on one node,
/// otherwise the inter-node bottleneck. A single rank has no ring; it gets an
/// infinite sentinel.
pub fn group_bandwidth(span: RankSpan<'_>, cluster: &ClusterSpec) -> f64 {
    let single_node = match span {
        RankSpan::Contiguous(d) if d <= 1 => return f64::INFINITY,
        RankSpan::Ranks(r) if r.len() <= 1 => return f64::INFINITY,
        RankSpan::Contiguous(d) => d <= cluster.ranks_per_node,
        RankSpan::Ranks(r) => {
            let node = cluster.node_of(r[0]);
            r.iter().all(|&x| cluster.node_of(x) == node)
        }
    };
    if single_node {
        cluster.intra_node_bandwidth
    } else {
        cluster.inter_node_bandwidth
    }
}

/// Time model evaluated on precomputed group sums.
pub fn time_for_load(
    load: GroupLoad,
    degree: usize,
    bandwidth: f64,
    coeffs: &CostCoefficients,
) -> TimeBreakdown {
    let d = degree as f64;
    let compute = (coeffs.alpha1 * load.quadratic + coeffs.alpha2 * load.linear) / d + coeffs.beta1;
    let raw_attn_compute = (coeffs.alpha1_attn * load.quadratic + coeffs.alpha2_attn * load.linear)
        / d
        + coeffs.beta1_attn;
    let (comm, raw_attn_comm) = if degree <= 1 || bandwidth.is_infinite() {
        (0.0, 0.0)
    } else {
        (
            coeffs.alpha3 * load.linear / bandwidth + coeffs.beta2,
            coeffs.alpha3_attn * load.linear / bandwidth + coeffs.beta2_attn,
        )
    };
    let attn_compute = raw_attn_compute.min(compute);
    let attn_comm = raw_attn_comm.min(comm);
    let overlap_clamped = attn_compute != raw_attn_compute || attn_comm != raw_attn_comm;
    if overlap_clamped {
        warn!(
            "attention term exceeds its total (compute {raw_attn_compute} > {compute} or comm {raw_attn_comm} > {comm}); clamped"
        );
    }
    TimeBreakdown {
        compute,
        comm,
        attn_compute,
        attn_comm,
        total: compute + comm - attn_compute.min(attn_comm),
        overlap_clamped,
    }
}

/// Estimated time of `group` at `degree`, assuming the ranks are contiguous
/// from a node boundary.
pub fn estimate_time(
    group: &AtomicGroup,
    degree: usize,
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
) -> Result<TimeBreakdown> {
    check_degree(group, degree)?;
    let bw = group_bandwidth(RankSpan::Contiguous(degree), cluster);
    Ok(time_for_load(
        GroupLoad::of(group.sequences()),
        degree,
        bw,
        coeffs,
    ))
}

/// Estimated time of `group` on a concrete rank set.
pub fn estimate_time_on_ranks(
    group: &AtomicGroup,
    ranks: &[usize],
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
) -> Result<TimeBreakdown> {
    check_degree(group, ranks.len())?;
    let bw = group_bandwidth(RankSpan::Ranks(ranks), cluster);
    Ok(time_for_load(
        GroupLoad::of(group.sequences()),
        ranks.len(),
        bw,
        coeffs,
    ))
}

fn check_degree(group: &AtomicGroup, degree: usize) -> Result<()> {
    if degree < group.d_min() || degree == 0 {
        return Err(Error::invalid(
            "degree",
            format!(
                "degree {degree} is below d_min {} (memory infeasible)",
                group.d_min()
            ),
        ));
    }
    Ok(())
}
