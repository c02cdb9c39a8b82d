//! Domain types shared by the cost model, packer, solver and simulator.
//!
//! Every type validates its invariants on construction, including when it is
//! deserialized, so a value that exists is a value that is well formed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::cost;
use crate::error::{Error, Result};

/// One input sequence: its token length and attention-mask efficiency factor.
///
/// `mask_efficiency` is zero for purely causal attention; positive values
/// scale up the quadratic attention work for full-attention (vision) masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSequence", into = "RawSequence")]
pub struct SequenceSpec {
    id: u64,
    length: u64,
    mask_efficiency: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSequence {
    id: u64,
    length: u64,
    #[serde(default)]
    mask_efficiency: f64,
}

impl SequenceSpec {
    pub fn new(id: u64, length: u64, mask_efficiency: f64) -> Result<Self> {
        if length == 0 {
            return Err(Error::invalid(
                "sequence",
                format!("sequence {id} has zero length"),
            ));
        }
        if !mask_efficiency.is_finite() || mask_efficiency < 0.0 {
            return Err(Error::invalid(
                "sequence",
                format!(
                    "sequence {id} has mask efficiency {mask_efficiency}; must be finite and >= 0"
                ),
            ));
        }
        Ok(SequenceSpec {
            id,
            length,
            mask_efficiency,
        })
    }

    /// Causal sequence (mask efficiency 0).
    pub fn causal(id: u64, length: u64) -> Result<Self> {
        Self::new(id, length, 0.0)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn length(&self) -> u64 {
        self.length
    }

    pub fn mask_efficiency(&self) -> f64 {
        self.mask_efficiency
    }
}

impl TryFrom<RawSequence> for SequenceSpec {
    type Error = Error;
    fn try_from(raw: RawSequence) -> Result<Self> {
        SequenceSpec::new(raw.id, raw.length, raw.mask_efficiency)
    }
}

impl From<SequenceSpec> for RawSequence {
    fn from(s: SequenceSpec) -> Self {
        RawSequence {
            id: s.id,
            length: s.length,
            mask_efficiency: s.mask_efficiency,
        }
    }
}

/// Raw cluster parameters. Convert into a [`ClusterSpec`] to validate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterParams {
    /// Number of ranks; one rank is one complete model replica.
    pub num_ranks: usize,
    /// Per-rank memory budget, in activation-capacity units.
    pub mem_budget_per_rank: f64,
    pub ranks_per_node: usize,
    /// Point-to-point bandwidth between ranks on the same node.
    pub intra_node_bandwidth: f64,
    /// Point-to-point bandwidth between ranks on different nodes.
    pub inter_node_bandwidth: f64,
}

/// Validated cluster description. Read fields through `Deref`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClusterParams", into = "ClusterParams")]
pub struct ClusterSpec(ClusterParams);

impl ClusterSpec {
    pub fn new(params: ClusterParams) -> Result<Self> {
        let p = &params;
        if p.num_ranks == 0 {
            return Err(Error::invalid("cluster", "num_ranks must be >= 1"));
        }
        if p.ranks_per_node == 0 {
            return Err(Error::invalid("cluster", "ranks_per_node must be >= 1"));
        }
        if !(p.mem_budget_per_rank.is_finite() && p.mem_budget_per_rank > 0.0) {
            return Err(Error::invalid(
                "cluster",
                "mem_budget_per_rank must be finite and > 0",
            ));
        }
        for (name, bw) in [
            ("intra_node_bandwidth", p.intra_node_bandwidth),
            ("inter_node_bandwidth", p.inter_node_bandwidth),
        ] {
            if bw.is_nan() || bw <= 0.0 {
                return Err(Error::invalid("cluster", format!("{name} must be > 0")));
            }
        }
        if p.inter_node_bandwidth > p.intra_node_bandwidth {
            return Err(Error::invalid(
                "cluster",
                "inter_node_bandwidth must not exceed intra_node_bandwidth",
            ));
        }
        Ok(ClusterSpec(params))
    }

    pub fn params(&self) -> &ClusterParams {
        &self.0
    }

    pub fn node_of(&self, rank: usize) -> usize {
        rank / self.0.ranks_per_node
    }

    pub fn num_nodes(&self) -> usize {
        self.0.num_ranks.div_ceil(self.0.ranks_per_node)
    }

    /// Same cluster with a different rank count.
    pub fn with_num_ranks(&self, num_ranks: usize) -> Result<Self> {
        ClusterSpec::new(ClusterParams {
            num_ranks,
            ..self.0.clone()
        })
    }
}

impl Deref for ClusterSpec {
    type Target = ClusterParams;
    fn deref(&self) -> &ClusterParams {
        &self.0
    }
}

impl TryFrom<ClusterParams> for ClusterSpec {
    type Error = Error;
    fn try_from(p: ClusterParams) -> Result<Self> {
        ClusterSpec::new(p)
    }
}

impl From<ClusterSpec> for ClusterParams {
    fn from(c: ClusterSpec) -> Self {
        c.0
    }
}

/// Raw profiled cost constants. Convert into [`CostCoefficients`] to validate.
///
/// The `*_attn` fields are the attention-only parts of the compute and
/// communication terms; they share the functional form of the totals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientValues {
    /// Quadratic compute, sec/token^2.
    pub alpha1: f64,
    /// Linear compute, sec/token.
    pub alpha2: f64,
    /// Fixed compute overhead, sec.
    pub beta1: f64,
    /// Communication volume per token (divided by bandwidth).
    pub alpha3: f64,
    /// Fixed communication overhead, sec.
    pub beta2: f64,
    pub alpha1_attn: f64,
    pub alpha2_attn: f64,
    pub beta1_attn: f64,
    pub alpha3_attn: f64,
    pub beta2_attn: f64,
    /// Activation memory per token, capacity units.
    pub mem_per_token: f64,
    /// Model-state memory held by every rank, capacity units.
    pub mem_model_states: f64,
}

impl CoefficientValues {
    pub(crate) fn named(&self) -> [(&'static str, f64); 12] {
        [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("beta1", self.beta1),
            ("alpha3", self.alpha3),
            ("beta2", self.beta2),
            ("alpha1_attn", self.alpha1_attn),
            ("alpha2_attn", self.alpha2_attn),
            ("beta1_attn", self.beta1_attn),
            ("alpha3_attn", self.alpha3_attn),
            ("beta2_attn", self.beta2_attn),
            ("mem_per_token", self.mem_per_token),
            ("mem_model_states", self.mem_model_states),
        ]
    }
}

/// Validated cost coefficients. Read fields through `Deref`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoefficientValues", into = "CoefficientValues")]
pub struct CostCoefficients(CoefficientValues);

impl CostCoefficients {
    pub fn new(values: CoefficientValues) -> Result<Self> {
        for (name, v) in values.named() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(
                    "coefficients",
                    format!("{name} = {v}; all coefficients must be finite and >= 0"),
                ));
            }
        }
        if values.alpha1_attn > values.alpha1 {
            return Err(Error::invalid(
                "coefficients",
                "alpha1_attn must not exceed alpha1",
            ));
        }
        if values.alpha3_attn > values.alpha3 {
            return Err(Error::invalid(
                "coefficients",
                "alpha3_attn must not exceed alpha3",
            ));
        }
        Ok(CostCoefficients(values))
    }

    pub fn values(&self) -> &CoefficientValues {
        &self.0
    }
}

impl Deref for CostCoefficients {
    type Target = CoefficientValues;
    fn deref(&self) -> &CoefficientValues {
        &self.0
    }
}

impl TryFrom<CoefficientValues> for CostCoefficients {
    type Error = Error;
    fn try_from(v: CoefficientValues) -> Result<Self> {
        CostCoefficients::new(v)
    }
}

impl From<CostCoefficients> for CoefficientValues {
    fn from(c: CostCoefficients) -> Self {
        c.0
    }
}

/// A non-empty list of sequences with unique ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SequenceSpec>", into = "Vec<SequenceSpec>")]
pub struct MicroBatch {
    sequences: Vec<SequenceSpec>,
}

impl MicroBatch {
    pub fn new(sequences: Vec<SequenceSpec>) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::invalid(
                "micro-batch",
                "must contain at least one sequence",
            ));
        }
        let mut seen = BTreeSet::new();
        for s in &sequences {
            if !seen.insert(s.id()) {
                return Err(Error::invalid(
                    "micro-batch",
                    format!("duplicate sequence id {}", s.id()),
                ));
            }
        }
        Ok(MicroBatch { sequences })
    }

    pub fn sequences(&self) -> &[SequenceSpec] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn total_tokens(&self) -> u64 {
        self.sequences.iter().map(SequenceSpec::length).sum()
    }
}

impl TryFrom<Vec<SequenceSpec>> for MicroBatch {
    type Error = Error;
    fn try_from(v: Vec<SequenceSpec>) -> Result<Self> {
        MicroBatch::new(v)
    }
}

impl From<MicroBatch> for Vec<SequenceSpec> {
    fn from(b: MicroBatch) -> Self {
        b.sequences
    }
}

/// Sequences scheduled together as one unit, with the minimum CP degree their
/// combined activations need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGroup", into = "RawGroup")]
pub struct AtomicGroup {
    sequences: Vec<SequenceSpec>,
    total_tokens: u64,
    d_min: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    sequences: Vec<SequenceSpec>,
    total_tokens: u64,
    d_min: usize,
}

impl AtomicGroup {
    /// Builds a group with an explicit minimum degree.
    pub fn new(sequences: Vec<SequenceSpec>, d_min: usize) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::invalid(
                "atomic group",
                "must contain at least one sequence",
            ));
        }
        if d_min == 0 {
            return Err(Error::invalid("atomic group", "d_min must be >= 1"));
        }
        let total_tokens = sequences.iter().map(SequenceSpec::length).sum();
        Ok(AtomicGroup {
            sequences,
            total_tokens,
            d_min,
        })
    }

    /// Builds a group whose `d_min` is derived from its activation memory.
    pub fn from_sequences(
        sequences: Vec<SequenceSpec>,
        cluster: &ClusterSpec,
        coeffs: &CostCoefficients,
    ) -> Result<Self> {
        let tokens: u64 = sequences.iter().map(SequenceSpec::length).sum();
        let d_min = cost::min_degree_for_tokens(tokens, cluster, coeffs).map_err(|e| match e {
            Error::ExceedsCluster {
                required,
                available,
                ..
            } => Error::ExceedsCluster {
                id: sequences.first().map_or(0, SequenceSpec::id),
                required,
                available,
            },
            other => other,
        })?;
        Self::new(sequences, d_min)
    }

    pub fn sequences(&self) -> &[SequenceSpec] {
        &self.sequences
    }

    pub fn sequence_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.sequences.iter().map(SequenceSpec::id)
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn d_min(&self) -> usize {
        self.d_min
    }
}

impl TryFrom<RawGroup> for AtomicGroup {
    type Error = Error;
    fn try_from(raw: RawGroup) -> Result<Self> {
        let group = AtomicGroup::new(raw.sequences, raw.d_min)?;
        if group.total_tokens != raw.total_tokens {
            return Err(Error::invalid(
                "atomic group",
                format!(
                    "total_tokens {} does not match member lengths (sum {})",
                    raw.total_tokens, group.total_tokens
                ),
            ));
        }
        Ok(group)
    }
}

impl From<AtomicGroup> for RawGroup {
    fn from(g: AtomicGroup) -> Self {
        RawGroup {
            sequences: g.sequences,
            total_tokens: g.total_tokens,
            d_min: g.d_min,
        }
    }
}

/// An atomic group placed on a concrete set of ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAssignment", into = "RawAssignment")]
pub struct CpGroupAssignment {
    group: AtomicGroup,
    degree: usize,
    rank_ids: Vec<usize>,
    predicted_time: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAssignment {
    group: AtomicGroup,
    degree: usize,
    rank_ids: Vec<usize>,
    predicted_time: f64,
}

impl CpGroupAssignment {
    pub fn new(
        group: AtomicGroup,
        degree: usize,
        rank_ids: Vec<usize>,
        predicted_time: f64,
    ) -> Result<Self> {
        if degree < group.d_min() {
            return Err(Error::invalid(
                "assignment",
                format!(
                    "degree {degree} is below the group's d_min {}",
                    group.d_min()
                ),
            ));
        }
        if rank_ids.len() != degree {
            return Err(Error::invalid(
                "assignment",
                format!("{} rank ids given for degree {degree}", rank_ids.len()),
            ));
        }
        let distinct: BTreeSet<_> = rank_ids.iter().collect();
        if distinct.len() != rank_ids.len() {
            return Err(Error::invalid("assignment", "rank ids must be distinct"));
        }
        if !predicted_time.is_finite() || predicted_time < 0.0 {
            return Err(Error::invalid(
                "assignment",
                "predicted_time must be finite and >= 0",
            ));
        }
        Ok(CpGroupAssignment {
            group,
            degree,
            rank_ids,
            predicted_time,
        })
    }

    pub fn group(&self) -> &AtomicGroup {
        &self.group
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn rank_ids(&self) -> &[usize] {
        &self.rank_ids
    }

    pub fn predicted_time(&self) -> f64 {
        self.predicted_time
    }
}

impl TryFrom<RawAssignment> for CpGroupAssignment {
    type Error = Error;
    fn try_from(r: RawAssignment) -> Result<Self> {
        CpGroupAssignment::new(r.group, r.degree, r.rank_ids, r.predicted_time)
    }
}

impl From<CpGroupAssignment> for RawAssignment {
    fn from(a: CpGroupAssignment) -> Self {
        RawAssignment {
            group: a.group,
            degree: a.degree,
            rank_ids: a.rank_ids,
            predicted_time: a.predicted_time,
        }
    }
}

/// CP groups for one micro-batch, with their predicted makespan.
///
/// Ranks not used by any group are listed in `idle_ranks`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPlan", into = "RawPlan")]
pub struct SchedulePlan {
    micro_batch_index: usize,
    num_ranks: usize,
    assignments: Vec<CpGroupAssignment>,
    makespan: f64,
    idle_ranks: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawPlan {
    micro_batch_index: usize,
    num_ranks: usize,
    assignments: Vec<CpGroupAssignment>,
    makespan: f64,
    idle_ranks: Vec<usize>,
}

impl SchedulePlan {
    /// Builds a plan, deriving the makespan and idle ranks. Structural
    /// problems (overlapping or out-of-range ranks, duplicated sequences) are
    /// rejected.
    pub fn new(
        micro_batch_index: usize,
        num_ranks: usize,
        assignments: Vec<CpGroupAssignment>,
    ) -> Result<Self> {
        let makespan = assignments
            .iter()
            .map(CpGroupAssignment::predicted_time)
            .fold(0.0, f64::max);
        let used: BTreeSet<usize> = assignments
            .iter()
            .flat_map(|a| a.rank_ids().iter().copied())
            .collect();
        let idle_ranks = (0..num_ranks).filter(|r| !used.contains(r)).collect();
        let plan = SchedulePlan {
            micro_batch_index,
            num_ranks,
            assignments,
            makespan,
            idle_ranks,
        };
        let violations = plan.structural_violations();
        if violations.is_empty() {
            Ok(plan)
        } else {
            Err(Error::Validation(violations))
        }
    }

    pub fn micro_batch_index(&self) -> usize {
        self.micro_batch_index
    }

    pub fn num_ranks(&self) -> usize {
        self.num_ranks
    }

    pub fn assignments(&self) -> &[CpGroupAssignment] {
        &self.assignments
    }

    pub fn makespan(&self) -> f64 {
        self.makespan
    }

    pub fn idle_ranks(&self) -> &[usize] {
        &self.idle_ranks
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.assignments
            .iter()
            .map(CpGroupAssignment::degree)
            .collect()
    }

    /// All sequences covered by the plan, in assignment order.
    pub fn sequences(&self) -> impl Iterator<Item = &SequenceSpec> {
        self.assignments.iter().flat_map(|a| a.group().sequences())
    }

    /// Checks that need neither the batch nor the cost model.
    pub fn structural_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
        let mut seen_seq = BTreeSet::new();
        let mut degree_sum = 0usize;
        for (gi, a) in self.assignments.iter().enumerate() {
            degree_sum += a.degree();
            if a.rank_ids().len() != a.degree() {
                out.push(Violation::RankCountMismatch {
                    group: gi,
                    degree: a.degree(),
                    ranks: a.rank_ids().len(),
                });
            }
            if a.degree() < a.group().d_min() {
                out.push(Violation::DegreeBelowMinimum {
                    group: gi,
                    degree: a.degree(),
                    d_min: a.group().d_min(),
                });
            }
            for &r in a.rank_ids() {
                if r >= self.num_ranks {
                    out.push(Violation::RankOutOfRange {
                        rank: r,
                        num_ranks: self.num_ranks,
                    });
                }
                if owner.insert(r, gi).is_some() {
                    out.push(Violation::RankDoubleAssigned { rank: r });
                }
            }
            for id in a.group().sequence_ids() {
                if !seen_seq.insert(id) {
                    out.push(Violation::SequenceDuplicated { id });
                }
            }
        }
        if degree_sum > self.num_ranks {
            out.push(Violation::RankBudgetExceeded {
                used: degree_sum,
                available: self.num_ranks,
            });
        }
        let max_time = self
            .assignments
            .iter()
            .map(CpGroupAssignment::predicted_time)
            .fold(0.0, f64::max);
        if max_time != self.makespan {
            out.push(Violation::MakespanMismatch {
                stored: self.makespan,
                derived: max_time,
            });
        }
        out
    }
}

impl TryFrom<RawPlan> for SchedulePlan {
    type Error = Error;
    fn try_from(r: RawPlan) -> Result<Self> {
        let plan = SchedulePlan::new(r.micro_batch_index, r.num_ranks, r.assignments)?;
        if plan.makespan != r.makespan {
            return Err(Error::Validation(vec![Violation::MakespanMismatch {
                stored: r.makespan,
                derived: plan.makespan,
            }]));
        }
        if plan.idle_ranks != r.idle_ranks {
            return Err(Error::invalid(
                "plan",
                "idle_ranks do not match the assignments",
            ));
        }
        Ok(plan)
    }
}

impl From<SchedulePlan> for RawPlan {
    fn from(p: SchedulePlan) -> Self {
        RawPlan {
            micro_batch_index: p.micro_batch_index,
            num_ranks: p.num_ranks,
            assignments: p.assignments,
            makespan: p.makespan,
            idle_ranks: p.idle_ranks,
        }
    }
}

/// A broken plan constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    RankDoubleAssigned {
        rank: usize,
    },
    RankOutOfRange {
        rank: usize,
        num_ranks: usize,
    },
    RankCountMismatch {
        group: usize,
        degree: usize,
        ranks: usize,
    },
    RankBudgetExceeded {
        used: usize,
        available: usize,
    },
    DegreeBelowMinimum {
        group: usize,
        degree: usize,
        d_min: usize,
    },
    SequenceUnassigned {
        id: u64,
    },
    SequenceDuplicated {
        id: u64,
    },
    UnknownSequence {
        id: u64,
    },
    SequenceMismatch {
        id: u64,
    },
    MemoryExceeded {
        group: usize,
        required: f64,
        capacity: f64,
    },
    MakespanMismatch {
        stored: f64,
        derived: f64,
    },
    ClusterMismatch {
        plan_ranks: usize,
        cluster_ranks: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RankDoubleAssigned { rank } => write!(f, "rank {rank} double-assigned"),
            Violation::RankOutOfRange { rank, num_ranks } => {
                write!(f, "rank {rank} out of range [0, {num_ranks})")
            }
            Violation::RankCountMismatch {
                group,
                degree,
                ranks,
            } => {
                write!(f, "group {group} has degree {degree} but {ranks} ranks")
            }
            Violation::RankBudgetExceeded { used, available } => {
                write!(f, "degrees sum to {used}, exceeding {available} ranks")
            }
            Violation::DegreeBelowMinimum {
                group,
                degree,
                d_min,
            } => {
                write!(f, "group {group} degree {degree} below d_min {d_min}")
            }
            Violation::SequenceUnassigned { id } => write!(f, "sequence {id} unassigned"),
            Violation::SequenceDuplicated { id } => {
                write!(f, "sequence {id} assigned more than once")
            }
            Violation::UnknownSequence { id } => write!(f, "sequence {id} not in batch"),
            Violation::SequenceMismatch { id } => {
                write!(f, "sequence {id} differs from the batch entry")
            }
            Violation::MemoryExceeded {
                group,
                required,
                capacity,
            } => write!(
                f,
                "group {group} needs {required} memory but has {capacity}"
            ),
            Violation::MakespanMismatch { stored, derived } => {
                write!(f, "makespan {stored} differs from max group time {derived}")
            }
            Violation::ClusterMismatch {
                plan_ranks,
                cluster_ranks,
            } => write!(
                f,
                "plan built for {plan_ranks} ranks, cluster has {cluster_ranks}"
            ),
        }
    }
}

/// Checks a plan against its micro-batch and the memory model.
///
/// Returns every violated constraint; an empty list means the plan respects
/// the memory limit, exclusive assignment and the rank budget.
pub fn validate_plan(
    plan: &SchedulePlan,
    batch: &MicroBatch,
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
) -> Vec<Violation> {
    let mut out = plan.structural_violations();
    if plan.num_ranks() != cluster.num_ranks {
        out.push(Violation::ClusterMismatch {
            plan_ranks: plan.num_ranks(),
            cluster_ranks: cluster.num_ranks,
        });
    }

    let expected: BTreeMap<u64, &SequenceSpec> =
        batch.sequences().iter().map(|s| (s.id(), s)).collect();
    let mut covered = BTreeSet::new();
    for s in plan.sequences() {
        match expected.get(&s.id()) {
            None => out.push(Violation::UnknownSequence { id: s.id() }),
            Some(orig) if *orig != s => out.push(Violation::SequenceMismatch { id: s.id() }),
            Some(_) => {}
        }
        covered.insert(s.id());
    }
    for id in expected.keys() {
        if !covered.contains(id) {
            out.push(Violation::SequenceUnassigned { id: *id });
        }
    }

    for (gi, a) in plan.assignments().iter().enumerate() {
        let tokens = a.group().total_tokens();
        if !cost::fits_memory(tokens, a.degree(), cluster, coeffs) {
            out.push(Violation::MemoryExceeded {
                group: gi,
                required: cost::activation_memory(tokens, coeffs)
                    + a.degree() as f64 * coeffs.mem_model_states,
                capacity: a.degree() as f64 * cluster.mem_budget_per_rank,
            });
        }
    }
    out
}
