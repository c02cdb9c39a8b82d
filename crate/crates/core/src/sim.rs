//! Static-parallelism baselines and a cost-model simulator for plans.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cost;
use crate::error::{Error, Result};
use crate::packer;
use crate::par::{self, Execution};
use crate::planner::{self, PlanOptions};
use crate::types::{
    validate_plan, ClusterSpec, CostCoefficients, CpGroupAssignment, MicroBatch, SchedulePlan,
    SequenceSpec,
};

/// Sum of sequential phase times, added in ascending order so the result does
/// not depend on the order the phases were produced in.
pub fn sequential_sum(times: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = times.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

/// Uniform-degree baseline over a set of sequences.
///
/// Sequences are packed into bins of exactly `degree` ranks, and the bins run
/// in synchronous waves of `N / degree` concurrent groups. Bins are ordered by
/// decreasing time before being cut into waves. Each wave is returned as its
/// own plan; wave times add.
pub fn static_plan(
    sequences: &[SequenceSpec],
    degree: usize,
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
) -> Result<Vec<SchedulePlan>> {
    static_waves(sequences, degree, 0, cluster, coeffs)
}

/// [`static_plan`] applied to each micro-batch in turn. Plan indices run
/// across all waves of all micro-batches.
pub fn static_plan_batches(
    batches: &[MicroBatch],
    degree: usize,
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
) -> Result<Vec<SchedulePlan>> {
    let mut out = Vec::new();
    for b in batches {
        let waves = static_waves(b.sequences(), degree, out.len(), cluster, coeffs)?;
        out.extend(waves);
    }
    Ok(out)
}

fn static_waves(
    sequences: &[SequenceSpec],
    degree: usize,
    first_index: usize,
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
) -> Result<Vec<SchedulePlan>> {
    if degree == 0 || degree > cluster.num_ranks {
        return Err(Error::invalid(
            "static degree",
            format!("{degree} is outside [1, {}]", cluster.num_ranks),
        ));
    }
    MicroBatch::new(sequences.to_vec())?;
    let groups = packer::pack_fixed_degree(sequences, degree, cluster, coeffs)?;
    let mut timed: Vec<(f64, usize)> = groups
        .iter()
        .enumerate()
        .map(|(i, g)| Ok((cost::estimate_time(g, degree, cluster, coeffs)?.total, i)))
        .collect::<Result<_>>()?;
    timed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let slots = cluster.num_ranks / degree;
    timed
        .chunks(slots)
        .enumerate()
        .map(|(wave, chunk)| {
            let assignments = chunk
                .iter()
                .enumerate()
                .map(|(slot, &(_, gi))| {
                    let ranks: Vec<usize> = (slot * degree..(slot + 1) * degree).collect();
                    let t =
                        cost::estimate_time_on_ranks(&groups[gi], &ranks, cluster, coeffs)?.total;
                    CpGroupAssignment::new(groups[gi].clone(), degree, ranks, t)
                })
                .collect::<Result<Vec<_>>>()?;
            SchedulePlan::new(first_index + wave, cluster.num_ranks, assignments)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTime {
    pub micro_batch: usize,
    pub group: usize,
    pub degree: usize,
    pub sequences: usize,
    pub time: f64,
}

/// Cost-model evaluation of a sequence of plans run one after another.
///
/// For a single plan `makespan` is the largest group time; for several it is
/// the sum of the per-plan makespans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub plan_source: String,
    pub num_ranks: usize,
    pub per_group_time: Vec<GroupTime>,
    pub per_plan_makespan: Vec<f64>,
    pub makespan: f64,
    pub total_rank_seconds: f64,
    pub busy_rank_seconds: f64,
    pub idle_fraction: f64,
}

/// Re-evaluates every group of every plan with the cost model, ignoring the
/// stored predictions.
pub fn simulate(
    plans: &[SchedulePlan],
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
    plan_source: &str,
) -> Result<SimReport> {
    let mut per_group_time = Vec::new();
    let mut per_plan_makespan = Vec::with_capacity(plans.len());
    let mut busy = Vec::new();
    for plan in plans {
        let batch = MicroBatch::new(plan.sequences().cloned().collect())?;
        let violations = validate_plan(plan, &batch, cluster, coeffs);
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        let mut worst = 0.0f64;
        for (gi, a) in plan.assignments().iter().enumerate() {
            let t = cost::estimate_time_on_ranks(a.group(), a.rank_ids(), cluster, coeffs)?.total;
            worst = worst.max(t);
            busy.push(a.degree() as f64 * t);
            per_group_time.push(GroupTime {
                micro_batch: plan.micro_batch_index(),
                group: gi,
                degree: a.degree(),
                sequences: a.group().sequences().len(),
                time: t,
            });
        }
        per_plan_makespan.push(worst);
    }
    let makespan = sequential_sum(per_plan_makespan.iter().copied());
    let total_rank_seconds = cluster.num_ranks as f64 * makespan;
    let busy_rank_seconds = sequential_sum(busy);
    let idle_fraction = if total_rank_seconds > 0.0 {
        (1.0 - busy_rank_seconds / total_rank_seconds).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(SimReport {
        plan_source: plan_source.to_string(),
        num_ranks: cluster.num_ranks,
        per_group_time,
        per_plan_makespan,
        makespan,
        total_rank_seconds,
        busy_rank_seconds,
        idle_fraction,
    })
}

/// Degree mix of one plan, as `(degree, number of groups)`, largest first.
pub fn group_shape(plan: &SchedulePlan) -> Vec<(usize, usize)> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for d in plan.degrees() {
        *counts.entry(d).or_default() += 1;
    }
    counts.into_iter().rev().collect()
}

/// Formats a degree mix as `8x1 + 6x2`.
pub fn format_shape(shape: &[(usize, usize)]) -> String {
    shape
        .iter()
        .map(|(d, m)| format!("{d}x{m}"))
        .collect::<Vec<_>>()
        .join(" + ")
}

/// How often each degree mix occurs across plans, most frequent first.
pub fn shape_histogram(plans: &[SchedulePlan]) -> Vec<ShapeCount> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for p in plans {
        *counts.entry(format_shape(&group_shape(p))).or_default() += 1;
    }
    let mut out: Vec<ShapeCount> = counts
        .into_iter()
        .map(|(shape, micro_batches)| ShapeCount {
            shape,
            micro_batches,
        })
        .collect();
    out.sort_by(|a, b| {
        b.micro_batches
            .cmp(&a.micro_batches)
            .then(a.shape.cmp(&b.shape))
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeCount {
    pub shape: String,
    pub micro_batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticOutcome {
    pub degree: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub report: Option<SimReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub shapes: Option<Vec<ShapeCount>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub dhp: SimReport,
    pub dhp_shapes: Vec<ShapeCount>,
    /// Degree mix of every DHP micro-batch, in order.
    pub dhp_micro_batches: Vec<String>,
    pub statics: Vec<StaticOutcome>,
    pub best_static_degree: Option<usize>,
    /// Best static makespan over DHP makespan; `None` when no static degree
    /// was feasible.
    pub speedup: Option<f64>,
}

impl ComparisonReport {
    pub fn best_static(&self) -> Option<&SimReport> {
        let d = self.best_static_degree?;
        self.statics
            .iter()
            .find(|s| s.degree == d)
            .and_then(|s| s.report.as_ref())
    }
}

/// Runs the DHP planner and every static degree on the same global batch and
/// reports their simulated makespans. Static baselines run on the same
/// micro-batches the planner produced.
pub fn compare(
    global_batch: &[SequenceSpec],
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
    static_degrees: &[usize],
    options: &PlanOptions,
) -> Result<ComparisonReport> {
    let outcome = planner::plan_detailed(global_batch, cluster, coeffs, options)?;
    let dhp_plans = outcome.plans();
    let dhp = simulate(&dhp_plans, cluster, coeffs, "dhp")?;
    let batches: Vec<MicroBatch> = outcome.micro_batches.into_iter().map(|m| m.batch).collect();
    let statics = static_outcomes(&batches, cluster, coeffs, static_degrees, options.execution);

    let best = statics
        .iter()
        .filter_map(|s| s.report.as_ref().map(|r| (s.degree, r.makespan)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(ComparisonReport {
        dhp_shapes: shape_histogram(&dhp_plans),
        dhp_micro_batches: dhp_plans
            .iter()
            .map(|p| format_shape(&group_shape(p)))
            .collect(),
        speedup: best.map(|(_, m)| {
            if dhp.makespan > 0.0 {
                m / dhp.makespan
            } else {
                1.0
            }
        }),
        best_static_degree: best.map(|(d, _)| d),
        dhp,
        statics,
    })
}

fn static_outcomes(
    batches: &[MicroBatch],
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
    degrees: &[usize],
    exec: Execution,
) -> Vec<StaticOutcome> {
    par::map(exec, degrees, |&degree| {
        let run = static_plan_batches(batches, degree, cluster, coeffs).and_then(|plans| {
            let report = simulate(&plans, cluster, coeffs, &format!("static-{degree}"))?;
            Ok((report, shape_histogram(&plans)))
        });
        match run {
            Ok((report, shapes)) => StaticOutcome {
                degree,
                report: Some(report),
                shapes: Some(shapes),
                skipped: None,
            },
            Err(e) => StaticOutcome {
                degree,
                report: None,
                shapes: None,
                skipped: Some(e.to_string()),
            },
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{AtomicGroup, ClusterParams, CoefficientValues};

    fn setup(n: usize) -> (ClusterSpec, CostCoefficients) {
        let cluster = ClusterSpec::new(ClusterParams {
            num_ranks: n,
            mem_budget_per_rank: 10.0,
            ranks_per_node: 8,
            intra_node_bandwidth: 100.0,
            inter_node_bandwidth: 10.0,
        })
        .unwrap();
        let coeffs = CostCoefficients::new(CoefficientValues {
            alpha1: 0.01,
            alpha2: 0.1,
            beta1: 0.5,
            alpha3: 1.0,
            beta2: 0.2,
            alpha1_attn: 0.01,
            alpha3_attn: 1.0,
            mem_per_token: 1.0,
            ..Default::default()
        })
        .unwrap();
        (cluster, coeffs)
    }

    fn seqs(lens: &[u64]) -> Vec<SequenceSpec> {
        lens.iter()
            .enumerate()
            .map(|(i, &l)| SequenceSpec::causal(i as u64, l).unwrap())
            .collect()
    }

    #[test]
    fn single_wave_makespan_is_max_group() {
        let (c, k) = setup(8);
        let plans = static_plan(&seqs(&[20, 20, 15, 5]), 2, &c, &k).unwrap();
        assert_eq!(plans.len(), 1);
        let max = plans[0]
            .assignments()
            .iter()
            .map(|a| a.predicted_time())
            .fold(0.0, f64::max);
        assert_eq!(plans[0].makespan(), max);
    }

    #[test]
    fn two_waves_add() {
        let (c, k) = setup(4);
        // four bins of degree 2 on 4 ranks -> two waves
        let plans = static_plan(&seqs(&[20, 20, 20, 20]), 2, &c, &k).unwrap();
        assert_eq!(plans.len(), 2);
        let r = simulate(&plans, &c, &k, "static").unwrap();
        assert_eq!(r.makespan, plans[0].makespan() + plans[1].makespan());
    }

    #[test]
    fn uniform_case_shape() {
        let (c, k) = setup(32);
        let plans = static_plan(&seqs(&[35; 8]), 4, &c, &k).unwrap();
        assert_eq!(plans.len(), 1);
        assert_eq!(group_shape(&plans[0]), vec![(4, 8)]);
        assert_eq!(format_shape(&group_shape(&plans[0])), "4x8");
    }

    #[test]
    fn static_too_small_is_rejected() {
        let (c, k) = setup(8);
        assert!(matches!(
            static_plan(&seqs(&[25]), 2, &c, &k),
            Err(Error::StaticDegreeTooSmall { .. })
        ));
    }

    #[test]
    fn simulate_single_group() {
        let (c, k) = setup(8);
        let g = AtomicGroup::from_sequences(seqs(&[15]), &c, &k).unwrap();
        let t = cost::estimate_time(&g, 2, &c, &k).unwrap().total;
        // stored prediction is deliberately wrong; simulate recomputes
        let a = CpGroupAssignment::new(g, 2, vec![0, 1], 123.0).unwrap();
        let plan = SchedulePlan::new(0, 8, vec![a]).unwrap();
        let r = simulate(&[plan], &c, &k, "x").unwrap();
        assert_eq!(r.makespan, t);
        assert!((r.idle_fraction - 0.75).abs() < 1e-12);
    }

    #[test]
    fn simulate_parallel_identical_groups() {
        let (c, k) = setup(8);
        let s = seqs(&[8, 8]);
        let g0 = AtomicGroup::new(vec![s[0].clone()], 1).unwrap();
        let g1 = AtomicGroup::new(vec![s[1].clone()], 1).unwrap();
        let t = cost::estimate_time(&g0, 2, &c, &k).unwrap().total;
        let plan = SchedulePlan::new(
            0,
            8,
            vec![
                CpGroupAssignment::new(g0, 2, vec![0, 1], t).unwrap(),
                CpGroupAssignment::new(g1, 2, vec![2, 3], t).unwrap(),
            ],
        )
        .unwrap();
        let r = simulate(&[plan], &c, &k, "x").unwrap();
        assert_eq!(r.makespan, t);
        assert!((r.idle_fraction - 0.5).abs() < 1e-12);
    }

    #[test]
    fn simulate_rejects_invalid_plan() {
        let (c, k) = setup(2);
        let g = AtomicGroup::new(seqs(&[25]), 1).unwrap();
        let plan = SchedulePlan::new(
            0,
            2,
            vec![CpGroupAssignment::new(g, 1, vec![0], 1.0).unwrap()],
        )
        .unwrap();
        assert!(matches!(
            simulate(&[plan], &c, &k, "x"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn full_cluster_sequences_coincide() {
        let (c, k) = setup(4);
        let batch = seqs(&[35, 38, 31, 40, 33]);
        let report = compare(&batch, &c, &k, &[4], &PlanOptions::default()).unwrap();
        assert_eq!(report.dhp.makespan, report.best_static().unwrap().makespan);
        assert_eq!(report.speedup, Some(1.0));
    }

    #[test]
    fn infeasible_static_degrees_are_skipped() {
        let (c, k) = setup(8);
        let report = compare(
            &seqs(&[25, 3, 4]),
            &c,
            &k,
            &[1, 2, 4],
            &PlanOptions::default(),
        )
        .unwrap();
        assert!(report.statics[0].skipped.is_some());
        assert!(report.statics[1].skipped.is_some());
        assert!(report.statics[2].report.is_some());
        assert_eq!(report.best_static_degree, Some(4));
    }
}
