//! Degree allocation by 2D dynamic programming over (groups, ranks).
//!
//! `DP[i][j]` is the least makespan reachable by the first `i` groups using
//! exactly `j` ranks. Each group's degree ranges from its `d_min` up to what
//! remains after reserving `d_min` for every group still to come. The answer
//! is the best cell of the last row over all `j <= N`, recovered by
//! backtracking the stored choices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost;
use crate::error::{Error, Result};
use crate::types::{
    AtomicGroup, ClusterParams, ClusterSpec, CoefficientValues, CostCoefficients, SequenceSpec,
};

#[derive(Debug, Clone, PartialEq)]
pub struct DpSolution {
    /// One degree per group, in input order.
    pub degrees: Vec<usize>,
    pub makespan: f64,
    /// Inner-loop evaluations of the recurrence.
    pub table_cells_evaluated: u64,
}

impl DpSolution {
    pub fn ranks_used(&self) -> usize {
        self.degrees.iter().sum()
    }
}

fn check_feasible(d_mins: &[usize], num_ranks: usize) -> Result<()> {
    if d_mins.is_empty() {
        return Err(Error::invalid("groups", "at least one group is required"));
    }
    if d_mins.contains(&0) {
        return Err(Error::invalid("groups", "every d_min must be >= 1"));
    }
    let required: usize = d_mins.iter().sum();
    if required > num_ranks {
        return Err(Error::Infeasible {
            required,
            available: num_ranks,
        });
    }
    Ok(())
}

/// Optimal degrees for `groups` on the cluster under the cost model.
pub fn solve(
    groups: &[AtomicGroup],
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
) -> Result<DpSolution> {
    let d_mins: Vec<usize> = groups.iter().map(AtomicGroup::d_min).collect();
    check_feasible(&d_mins, cluster.num_ranks)?;
    let table = CostTable::build(groups, cluster, coeffs);
    Ok(solve_table(&d_mins, cluster.num_ranks, |g, d| {
        table.get(g, d)
    }))
}

/// The recurrence over an arbitrary cost function `cost(group, degree)`.
///
/// `cost` is called at most once per `(group, degree)` pair.
pub fn solve_costs<F>(d_mins: &[usize], num_ranks: usize, mut cost: F) -> Result<DpSolution>
where
    F: FnMut(usize, usize) -> f64,
{
    check_feasible(d_mins, num_ranks)?;
    let total_min: usize = d_mins.iter().sum();
    let mut values = Vec::with_capacity(d_mins.len());
    for (g, &lo) in d_mins.iter().enumerate() {
        let hi = num_ranks - (total_min - lo);
        values.push((lo..=hi).map(|d| cost(g, d)).collect::<Vec<_>>());
    }
    Ok(solve_table(d_mins, num_ranks, |g, d| {
        values[g][d - d_mins[g]]
    }))
}

/// Memoized `T(G_i, d)` for every feasible degree of every group.
struct CostTable {
    lo: Vec<usize>,
    values: Vec<Vec<f64>>,
}

impl CostTable {
    fn build(groups: &[AtomicGroup], cluster: &ClusterSpec, coeffs: &CostCoefficients) -> Self {
        let total_min: usize = groups.iter().map(AtomicGroup::d_min).sum();
        let mut lo = Vec::with_capacity(groups.len());
        let mut values = Vec::with_capacity(groups.len());
        for g in groups {
            let load = cost::GroupLoad::of(g.sequences());
            let hi = cluster.num_ranks - (total_min - g.d_min());
            let row = (g.d_min()..=hi)
                .map(|d| {
                    let bw = cost::group_bandwidth(cost::RankSpan::Contiguous(d), cluster);
                    cost::time_for_load(load, d, bw, coeffs).total
                })
                .collect();
            lo.push(g.d_min());
            values.push(row);
        }
        CostTable { lo, values }
    }

    fn get(&self, group: usize, degree: usize) -> f64 {
        self.values[group][degree - self.lo[group]]
    }
}

fn solve_table<F>(d_mins: &[usize], n: usize, cost: F) -> DpSolution
where
    F: Fn(usize, usize) -> f64,
{
    let k = d_mins.len();
    let width = n + 1;
    let mut dp = vec![f64::INFINITY; (k + 1) * width];
    let mut path = vec![0usize; (k + 1) * width];
    dp[0] = 0.0;

    let total_min: usize = d_mins.iter().sum();
    let mut prefix = 0usize; // sum of d_min over groups before this one
    let mut cells = 0u64;
    for i in 1..=k {
        let g = i - 1;
        let d_lo = d_mins[g];
        let remain = total_min - prefix - d_lo;
        for j in (prefix + d_lo)..=(n - remain) {
            let mut best = f64::INFINITY;
            let mut best_d = 0;
            for d in d_lo..=(j - prefix) {
                cells += 1;
                let c = dp[(i - 1) * width + (j - d)].max(cost(g, d));
                // strict: ties keep the smaller degree
                if c < best {
                    best = c;
                    best_d = d;
                }
            }
            dp[i * width + j] = best;
            path[i * width + j] = best_d;
        }
        prefix += d_lo;
    }

    let mut best_j = total_min;
    for j in total_min..=n {
        if dp[k * width + j] < dp[k * width + best_j] {
            best_j = j;
        }
    }
    let makespan = dp[k * width + best_j];

    let mut degrees = vec![0; k];
    let mut j = best_j;
    for i in (1..=k).rev() {
        let d = path[i * width + j];
        degrees[i - 1] = d;
        j -= d;
    }
    debug_assert_eq!(j, 0);

    DpSolution {
        degrees,
        makespan,
        table_cells_evaluated: cells,
    }
}

/// Size limits for [`brute_force_optimal`].
#[derive(Debug, Clone, Copy)]
pub struct BruteForceLimits {
    pub max_groups: usize,
    pub max_ranks: usize,
}

impl Default for BruteForceLimits {
    fn default() -> Self {
        BruteForceLimits {
            max_groups: 6,
            max_ranks: 12,
        }
    }
}

/// Exhaustive search over every degree vector with `d_i >= d_min_i` and
/// `sum d_i <= N`. Evaluates the cost model directly for every vector; meant
/// as a reference for small instances.
pub fn brute_force_optimal(
    groups: &[AtomicGroup],
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
) -> Result<DpSolution> {
    brute_force_with_limits(groups, cluster, coeffs, BruteForceLimits::default())
}

pub fn brute_force_with_limits(
    groups: &[AtomicGroup],
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
    limits: BruteForceLimits,
) -> Result<DpSolution> {
    if groups.len() > limits.max_groups || cluster.num_ranks > limits.max_ranks {
        return Err(Error::SizeGuard {
            groups: groups.len(),
            ranks: cluster.num_ranks,
            max_groups: limits.max_groups,
            max_ranks: limits.max_ranks,
        });
    }
    let d_mins: Vec<usize> = groups.iter().map(AtomicGroup::d_min).collect();
    check_feasible(&d_mins, cluster.num_ranks)?;
    brute_force_costs(&d_mins, cluster.num_ranks, |g, d| {
        cost::estimate_time(&groups[g], d, cluster, coeffs)
            .expect("degree >= d_min by construction")
            .total
    })
}

/// Exhaustive search over an arbitrary cost function.
pub fn brute_force_costs<F>(d_mins: &[usize], num_ranks: usize, cost: F) -> Result<DpSolution>
where
    F: Fn(usize, usize) -> f64,
{
    check_feasible(d_mins, num_ranks)?;
    let mut best = DpSolution {
        degrees: vec![],
        makespan: f64::INFINITY,
        table_cells_evaluated: 0,
    };
    let mut current = Vec::with_capacity(d_mins.len());
    let reserve: usize = d_mins.iter().sum();
    enumerate(
        d_mins,
        num_ranks,
        reserve,
        0.0,
        &mut current,
        &mut best,
        &cost,
    );
    Ok(best)
}

fn enumerate<F>(
    d_mins: &[usize],
    budget: usize,
    reserve: usize,
    running_max: f64,
    current: &mut Vec<usize>,
    best: &mut DpSolution,
    cost: &F,
) where
    F: Fn(usize, usize) -> f64,
{
    let g = current.len();
    if g == d_mins.len() {
        best.table_cells_evaluated += 1;
        if running_max < best.makespan {
            best.makespan = running_max;
            best.degrees = current.clone();
        }
        return;
    }
    let rest = reserve - d_mins[g];
    for d in d_mins[g]..=(budget - rest) {
        current.push(d);
        let m = running_max.max(cost(g, d));
        enumerate(d_mins, budget - d, rest, m, current, best, cost);
        current.pop();
    }
}

/// A random instance of `k` single-sequence groups, each with `d_min = 1`, on
/// an `n`-rank cluster of 8-rank nodes. Used for latency sweeps.
pub fn synthetic_instance(
    k: usize,
    n: usize,
    seed: u64,
) -> Result<(Vec<AtomicGroup>, ClusterSpec, CostCoefficients)> {
    let cluster = ClusterSpec::new(ClusterParams {
        num_ranks: n,
        mem_budget_per_rank: 1e9,
        ranks_per_node: 8,
        intra_node_bandwidth: 5.6e10,
        inter_node_bandwidth: 1.25e10,
    })?;
    let coeffs = CostCoefficients::new(CoefficientValues {
        alpha1: 9e-9,
        alpha2: 2.4e-4,
        beta1: 0.05,
        alpha3: 3e5,
        beta2: 0.02,
        alpha1_attn: 9e-9,
        alpha2_attn: 2.4e-5,
        beta1_attn: 0.01,
        alpha3_attn: 3e5,
        beta2_attn: 0.02,
        mem_per_token: 1e-6,
        mem_model_states: 0.0,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = (0..k)
        .map(|i| {
            let seq = SequenceSpec::new(i as u64, rng.random_range(1024..=131_072), 0.3)?;
            AtomicGroup::new(vec![seq], 1)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((groups, cluster, coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_work_split_evenly() {
        let w = [8.0, 8.0];
        let s = solve_costs(&[1, 1], 4, |g, d| w[g] / d as f64).unwrap();
        assert_eq!(s.degrees, vec![2, 2]);
        assert_eq!(s.makespan, 4.0);
        let b = brute_force_costs(&[1, 1], 4, |g, d| w[g] / d as f64).unwrap();
        assert_eq!(b.makespan, 4.0);
    }

    #[test]
    fn non_power_of_two_split() {
        let w = [9.0, 3.0];
        let s = solve_costs(&[1, 1], 4, |g, d| w[g] / d as f64).unwrap();
        assert_eq!(s.degrees, vec![3, 1]);
        assert_eq!(s.makespan, 3.0);
        // the even split is worse
        assert_eq!(f64::max(9.0 / 2.0, 3.0 / 2.0), 4.5);
    }

    #[test]
    fn single_group_takes_all_ranks_when_monotone() {
        for n in 1..=10 {
            let s = solve_costs(&[1], n, |_, d| 10.0 / d as f64).unwrap();
            assert_eq!(s.degrees, vec![n]);
        }
    }

    #[test]
    fn flat_cost_prefers_fewer_ranks() {
        let s = solve_costs(&[1, 2], 8, |_, _| 1.0).unwrap();
        assert_eq!(s.degrees, vec![1, 2]);
        assert_eq!(s.ranks_used(), 3);
    }

    #[test]
    fn infeasible_and_empty() {
        assert!(matches!(
            solve_costs(&[3, 3], 5, |_, _| 1.0),
            Err(Error::Infeasible {
                required: 6,
                available: 5
            })
        ));
        assert!(matches!(
            brute_force_costs(&[3, 3], 5, |_, _| 1.0),
            Err(Error::Infeasible {
                required: 6,
                available: 5
            })
        ));
        assert!(solve_costs(&[], 5, |_, _| 1.0).is_err());
    }

    #[test]
    fn respects_minimum_degrees() {
        let w = [1.0, 100.0, 1.0];
        let s = solve_costs(&[3, 1, 2], 8, |g, d| w[g] / d as f64).unwrap();
        assert_eq!(s.degrees, vec![3, 3, 2]);
    }

    #[test]
    fn cells_bounded_by_k_n_squared() {
        for k in 1..6 {
            for n in k..40 {
                let s = solve_costs(&vec![1; k], n, |_, d| 1.0 / d as f64).unwrap();
                assert!(s.table_cells_evaluated <= (k * n * n) as u64);
            }
        }
    }
}
