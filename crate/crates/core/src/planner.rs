//! End-to-end planning of a global batch: split into micro-batches, pack each
//! into atomic groups, allocate degrees, and place groups on ranks.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::cost;
use crate::error::{Error, Result};
use crate::packer;
use crate::par::{self, Execution};
use crate::solver::{self, DpSolution};
use crate::types::{
    validate_plan, AtomicGroup, ClusterSpec, CostCoefficients, CpGroupAssignment, MicroBatch,
    SchedulePlan, SequenceSpec,
};

/// Splits a global batch into micro-batches with balanced token counts.
///
/// Sequences are taken longest first and each goes to the currently lightest
/// micro-batch (lowest index on ties). The count is `hint` when given,
/// otherwise `ceil(total_tokens / token_budget)`, and never exceeds the
/// number of sequences.
pub fn plan_micro_batches(
    global_batch: &[SequenceSpec],
    token_budget: u64,
    hint: Option<usize>,
) -> Result<Vec<MicroBatch>> {
    if global_batch.is_empty() {
        return Err(Error::invalid(
            "global batch",
            "must contain at least one sequence",
        ));
    }
    let total: u64 = global_batch.iter().map(SequenceSpec::length).sum();
    let count = match hint {
        Some(0) => return Err(Error::invalid("micro-batch count", "must be >= 1")),
        Some(m) => m,
        None => {
            if token_budget == 0 {
                return Err(Error::invalid("token budget", "must be >= 1"));
            }
            if let Some(s) = global_batch.iter().find(|s| s.length() > token_budget) {
                return Err(Error::invalid(
                    "token budget",
                    format!(
                        "sequence {} has {} tokens, above the budget of {token_budget}",
                        s.id(),
                        s.length()
                    ),
                ));
            }
            total.div_ceil(token_budget) as usize
        }
    }
    .clamp(1, global_batch.len());

    let mut order: Vec<&SequenceSpec> = global_batch.iter().collect();
    order.sort_by(|a, b| b.length().cmp(&a.length()).then(a.id().cmp(&b.id())));

    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = (0..count).map(|i| Reverse((0, i))).collect();
    let mut buckets: Vec<Vec<SequenceSpec>> = vec![Vec::new(); count];
    for s in order {
        let Reverse((load, i)) = heap.pop().expect("count >= 1");
        buckets[i].push(s.clone());
        heap.push(Reverse((load + s.length(), i)));
    }
    buckets.into_iter().map(MicroBatch::new).collect()
}

/// Places groups on ranks. Larger groups are placed first; a group that fits
/// on one node goes to the node with the least sufficient free room, and a
/// larger group takes a run of empty nodes. When fragmentation prevents
/// either, the lowest free ranks are used.
///
/// Returns rank ids per group, in the order of `degrees`.
pub fn assign_ranks(degrees: &[usize], cluster: &ClusterSpec) -> Vec<Vec<usize>> {
    let n = cluster.num_ranks;
    let per_node = cluster.ranks_per_node;
    let nodes = cluster.num_nodes();
    let node_range = |node: usize| (node * per_node)..((node + 1) * per_node).min(n);
    let mut used = vec![false; n];
    let free_in = |used: &[bool], node: usize| node_range(node).filter(|&r| !used[r]).count();

    let mut order: Vec<usize> = (0..degrees.len()).collect();
    order.sort_by(|&a, &b| degrees[b].cmp(&degrees[a]).then(a.cmp(&b)));

    let mut out = vec![Vec::new(); degrees.len()];
    for gi in order {
        let d = degrees[gi];
        let mut ranks: Vec<usize> = Vec::with_capacity(d);
        if d <= per_node {
            let best = (0..nodes)
                .map(|node| (free_in(&used, node), node))
                .filter(|&(free, _)| free >= d)
                .min();
            if let Some((_, node)) = best {
                ranks.extend(node_range(node).filter(|&r| !used[r]).take(d));
            }
        } else {
            let span = d.div_ceil(per_node);
            let start = (0..nodes.saturating_sub(span - 1)).find(|&first| {
                let cap: usize = (first..first + span).map(|x| node_range(x).len()).sum();
                cap >= d && (first..first + span).all(|x| free_in(&used, x) == node_range(x).len())
            });
            if let Some(first) = start {
                let base = first * per_node;
                ranks.extend(base..base + d);
            }
        }
        if ranks.is_empty() {
            ranks.extend((0..n).filter(|&r| !used[r]).take(d));
            debug!("group {gi} of degree {d} placed on fragmented ranks {ranks:?}");
        }
        for &r in &ranks {
            used[r] = true;
        }
        out[gi] = ranks;
    }
    out
}

/// Tuning knobs for [`plan`]. Every field has a default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanOptions {
    /// Tokens per micro-batch. Defaults to the cluster's total activation
    /// capacity expressed in tokens.
    pub token_budget: Option<u64>,
    /// Fixed micro-batch count. When unset the count comes from the token
    /// budget and is raised until every micro-batch is feasible.
    pub num_micro_batches: Option<usize>,
    /// Hand idle ranks to the slowest group while that lowers its time.
    pub absorb_idle_ranks: bool,
    /// Planning latency budget; exceeding it is reported, not enforced.
    pub latency_budget_ms: Option<f64>,
    pub execution: Execution,
}

impl PlanOptions {
    pub fn effective_token_budget(&self, cluster: &ClusterSpec, coeffs: &CostCoefficients) -> u64 {
        if let Some(b) = self.token_budget {
            return b;
        }
        if coeffs.mem_per_token <= 0.0 {
            return u64::MAX;
        }
        let cap = cost::activation_capacity_per_rank(cluster, coeffs).max(0.0);
        ((cluster.num_ranks as f64 * cap / coeffs.mem_per_token).floor() as u64).max(1)
    }
}

/// Everything produced while planning one micro-batch.
#[derive(Debug, Clone)]
pub struct MicroBatchPlan {
    pub batch: MicroBatch,
    pub groups: Vec<AtomicGroup>,
    pub solution: DpSolution,
    pub plan: SchedulePlan,
}

/// Pack, solve and place one micro-batch.
pub fn plan_micro_batch(
    index: usize,
    batch: &MicroBatch,
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
    absorb_idle_ranks: bool,
) -> Result<MicroBatchPlan> {
    let groups = packer::pack_bfd(batch, cluster, coeffs)?;
    let mut solution = solver::solve(&groups, cluster, coeffs)?;
    let mut degrees = solution.degrees.clone();
    if absorb_idle_ranks {
        absorb_idle(&groups, &mut degrees, cluster, coeffs)?;
    }
    let ranks = assign_ranks(&degrees, cluster);
    let assignments = groups
        .iter()
        .zip(ranks)
        .map(|(g, r)| {
            let t = cost::estimate_time_on_ranks(g, &r, cluster, coeffs)?.total;
            CpGroupAssignment::new(g.clone(), r.len(), r, t)
        })
        .collect::<Result<Vec<_>>>()?;
    let plan = SchedulePlan::new(index, cluster.num_ranks, assignments)?;
    let violations = validate_plan(&plan, batch, cluster, coeffs);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    if absorb_idle_ranks {
        solution.degrees = degrees;
    }
    Ok(MicroBatchPlan {
        batch: batch.clone(),
        groups,
        solution,
        plan,
    })
}

fn absorb_idle(
    groups: &[AtomicGroup],
    degrees: &mut [usize],
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
) -> Result<()> {
    let time =
        |g: usize, d: usize| cost::estimate_time(&groups[g], d, cluster, coeffs).map(|t| t.total);
    loop {
        let used: usize = degrees.iter().sum();
        if used >= cluster.num_ranks {
            return Ok(());
        }
        let mut slowest = 0;
        let mut slowest_t = f64::NEG_INFINITY;
        for (g, &d) in degrees.iter().enumerate() {
            let t = time(g, d)?;
            if t > slowest_t {
                slowest = g;
                slowest_t = t;
            }
        }
        if time(slowest, degrees[slowest] + 1)? < slowest_t {
            degrees[slowest] += 1;
        } else {
            return Ok(());
        }
    }
}

/// Distinct communication-group shapes seen across plans, mirroring a pool of
/// reusable collective groups keyed by rank set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupPool {
    pub distinct_groups: usize,
    pub lookups: usize,
    pub hits: usize,
}

impl GroupPool {
    pub fn from_plans(plans: &[SchedulePlan]) -> Self {
        let mut seen: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        let mut pool = GroupPool::default();
        for a in plans.iter().flat_map(|p| p.assignments()) {
            if a.degree() < 2 {
                continue;
            }
            pool.lookups += 1;
            let mut key = a.rank_ids().to_vec();
            key.sort_unstable();
            let hits = seen.entry(key).or_insert(0);
            if *hits > 0 {
                pool.hits += 1;
            }
            *hits += 1;
        }
        pool.distinct_groups = seen.len();
        pool
    }
}

/// Result of planning a global batch.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub micro_batches: Vec<MicroBatchPlan>,
    pub pool: GroupPool,
    pub elapsed: Duration,
    /// `Some(true)` when a latency budget was set and exceeded.
    pub over_latency_budget: Option<bool>,
}

impl PlanOutcome {
    pub fn plans(&self) -> Vec<SchedulePlan> {
        self.micro_batches.iter().map(|m| m.plan.clone()).collect()
    }

    pub fn total_makespan(&self) -> f64 {
        crate::sim::sequential_sum(self.micro_batches.iter().map(|m| m.plan.makespan()))
    }
}

/// Plans a global batch and returns one plan per micro-batch.
pub fn plan(
    global_batch: &[SequenceSpec],
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
    options: &PlanOptions,
) -> Result<Vec<SchedulePlan>> {
    Ok(plan_detailed(global_batch, cluster, coeffs, options)?.plans())
}

/// Like [`plan`], keeping the intermediate groups, DP solutions and timings.
pub fn plan_detailed(
    global_batch: &[SequenceSpec],
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
    options: &PlanOptions,
) -> Result<PlanOutcome> {
    let start = Instant::now();
    MicroBatch::new(global_batch.to_vec())?;
    for s in global_batch {
        cost::min_degree([s], cluster, coeffs)?;
    }
    let budget = options.effective_token_budget(cluster, coeffs);

    let micro_batches = match options.num_micro_batches {
        Some(m) => {
            let batches = plan_micro_batches(global_batch, budget, Some(m))?;
            plan_all(&batches, cluster, coeffs, options)?
        }
        None => {
            let mut count = global_batch
                .iter()
                .map(SequenceSpec::length)
                .sum::<u64>()
                .div_ceil(budget) as usize;
            loop {
                let batches = plan_micro_batches(global_batch, budget, Some(count.max(1)))?;
                match plan_all(&batches, cluster, coeffs, options) {
                    Err(Error::MicroBatch { source, .. })
                        if matches!(*source, Error::Infeasible { .. })
                            && count < global_batch.len() =>
                    {
                        debug!("{count} micro-batches infeasible; retrying with one more");
                        count = count.max(1) + 1;
                    }
                    other => break other?,
                }
            }
        }
    };

    let plans: Vec<SchedulePlan> = micro_batches.iter().map(|m| m.plan.clone()).collect();
    let elapsed = start.elapsed();
    let over = options
        .latency_budget_ms
        .map(|b| elapsed.as_secs_f64() * 1e3 > b);
    if over == Some(true) {
        warn!("planning took {elapsed:?}, over the latency budget");
    }
    Ok(PlanOutcome {
        pool: GroupPool::from_plans(&plans),
        micro_batches,
        elapsed,
        over_latency_budget: over,
    })
}

fn plan_all(
    batches: &[MicroBatch],
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
    options: &PlanOptions,
) -> Result<Vec<MicroBatchPlan>> {
    par::map_range(options.execution, batches.len(), |i| {
        plan_micro_batch(i, &batches[i], cluster, coeffs, options.absorb_idle_ranks).map_err(|e| {
            Error::MicroBatch {
                index: i,
                source: Box::new(e),
            }
        })
    })
    .into_iter()
    .collect()
}
