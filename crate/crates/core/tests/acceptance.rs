//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ringplan::cost;
use ringplan::planner::{self, MicroBatchPlan, PlanOptions};
use ringplan::profiler::{self, FitOptions, Phase, SyntheticTrace};
use ringplan::sim;
use ringplan::solver;
use ringplan::workload::{self, WorkloadConfig};
use ringplan::{
    io, validate_plan, AtomicGroup, ClusterParams, ClusterSpec, CoefficientValues,
    CostCoefficients, SequenceSpec,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_cluster(rng: &mut ChaCha8Rng, max_ranks: usize) -> ClusterSpec {
    let n = rng.random_range(1..=max_ranks);
    ClusterSpec::new(ClusterParams {
        num_ranks: n,
        mem_budget_per_rank: rng.random_range(10.0..100.0),
        ranks_per_node: rng.random_range(1..=n.min(8)),
        intra_node_bandwidth: rng.random_range(1e9..1e11),
        inter_node_bandwidth: rng.random_range(1e8..1e9),
    })
    .unwrap()
}

fn random_coeffs(rng: &mut ChaCha8Rng, mem_per_token: f64) -> CostCoefficients {
    let alpha1 = rng.random_range(1e-10..1e-8);
    let alpha3 = rng.random_range(1e4..1e6);
    CostCoefficients::new(CoefficientValues {
        alpha1,
        alpha2: rng.random_range(1e-6..1e-3),
        beta1: rng.random_range(0.0..0.1),
        alpha3,
        beta2: rng.random_range(0.0..0.1),
        alpha1_attn: alpha1 * rng.random_range(0.0..=1.0),
        alpha2_attn: rng.random_range(0.0..1e-4),
        beta1_attn: rng.random_range(0.0..0.05),
        alpha3_attn: alpha3 * rng.random_range(0.0..=1.0),
        beta2_attn: rng.random_range(0.0..0.05),
        mem_per_token,
        mem_model_states: 0.0,
    })
    .unwrap()
}

/// Criterion 1: DP equals exhaustive search on small instances.
fn dp_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut instances = 0;
    let mut mismatches = 0;
    while instances < 2000 {
        let cluster = random_cluster(&mut rng, 12);
        let coeffs = random_coeffs(&mut rng, 1e-3);
        let n = cluster.num_ranks;
        let k = rng.random_range(1..=n.min(6));
        let mut d_mins = vec![1; k];
        for _ in 0..rng.random_range(0..=n - k) {
            let g = rng.random_range(0..k);
            d_mins[g] += 1;
        }
        let groups: Vec<AtomicGroup> = d_mins
            .iter()
            .enumerate()
            .map(|(g, &d)| {
                let seqs = (0..rng.random_range(1..=3))
                    .map(|s| {
                        SequenceSpec::new(
                            (g * 10 + s) as u64,
                            rng.random_range(1..200_000),
                            rng.random_range(0.0..=1.0),
                        )
                        .unwrap()
                    })
                    .collect();
                AtomicGroup::new(seqs, d).unwrap()
            })
            .collect();
        let dp = solver::solve(&groups, &cluster, &coeffs).unwrap();
        let bf = solver::brute_force_optimal(&groups, &cluster, &coeffs).unwrap();
        if dp.makespan != bf.makespan {
            mismatches += 1;
        }
        instances += 1;
    }
    outcome(
        mismatches == 0,
        format!("{instances} instances, {mismatches} makespan mismatches (exact equality)"),
    )
}

/// Criterion 2: every plan from random end-to-end runs validates cleanly.
fn constraint_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut plans = 0usize;
    let mut violations = 0usize;
    let mut coverage_errors = 0usize;
    let mut runs = 0usize;
    while plans < 10_000 {
        let cluster = random_cluster(&mut rng, 32);
        let mem_per_token = rng.random_range(1e-4..1e-3);
        let coeffs = random_coeffs(&mut rng, mem_per_token);
        let cap = (cluster.mem_budget_per_rank / coeffs.mem_per_token) as u64;
        let max_len = (cap * cluster.num_ranks as u64).max(1);
        let count = rng.random_range(1..=40);
        let batch: Vec<SequenceSpec> = (0..count)
            .map(|i| {
                SequenceSpec::new(
                    i,
                    rng.random_range(1..=max_len),
                    rng.random_range(0.0..=1.0),
                )
                .unwrap()
            })
            .collect();
        let options = PlanOptions {
            absorb_idle_ranks: rng.random_bool(0.5),
            ..PlanOptions::default()
        };
        let out = planner::plan_detailed(&batch, &cluster, &coeffs, &options).unwrap();
        runs += 1;
        let mut seen = Vec::new();
        for mb in &out.micro_batches {
            plans += 1;
            violations += validate_plan(&mb.plan, &mb.batch, &cluster, &coeffs).len();
            seen.extend(mb.plan.sequences().map(|s| s.id()));
        }
        seen.sort_unstable();
        if seen != (0..count).collect::<Vec<_>>() {
            coverage_errors += 1;
        }
    }
    outcome(
        violations == 0 && coverage_errors == 0,
        format!("{plans} plans from {runs} batches, {violations} violations, {coverage_errors} coverage errors"),
    )
}

/// Criterion 3: solver latency and cell-count scaling.
fn solver_scaling() -> Outcome {
    // K'=N forces every degree to 1, so smaller K' are timed too
    let mut pass = true;
    let mut detail = String::from("median solve at N=64:");
    for k in [16, 32, 64] {
        let (groups, cluster, coeffs) = solver::synthetic_instance(k, 64, 3).unwrap();
        let mut times: Vec<Duration> = (0..5)
            .map(|_| {
                let t = Instant::now();
                solver::solve(&groups, &cluster, &coeffs).unwrap();
                t.elapsed()
            })
            .collect();
        times.sort();
        let median = times[2].as_secs_f64() * 1e3;
        pass &= median <= 100.0;
        detail.push_str(&format!(" K'={k}:{median:.2}ms"));
    }
    detail.push_str(" (<= 100 ms); cell ratios per N doubling:");
    for k in [1, 2, 4] {
        let cells: Vec<u64> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let (g, c, co) = solver::synthetic_instance(k, n, 3).unwrap();
                solver::solve(&g, &c, &co).unwrap().table_cells_evaluated
            })
            .collect();
        for w in cells.windows(2) {
            let r = w[1] as f64 / w[0] as f64;
            pass &= (3.2..=4.8).contains(&r);
            detail.push_str(&format!(" K'={k}:{r:.2}"));
        }
    }
    detail.push_str(" (4 +/- 20%)");
    outcome(pass, detail)
}

struct SeedRun {
    speedup: f64,
    micro_batches: Vec<MicroBatchPlan>,
    dhp_idle: f64,
    static_idle: f64,
}

struct CaseRuns {
    preset: String,
    runs: Vec<SeedRun>,
    cluster: ClusterSpec,
    coeffs: CostCoefficients,
}

fn run_case(preset: &str, budget_fraction: f64) -> CaseRuns {
    let cfg = common::acceptance_config();
    let dir = common::configs_dir();
    let cluster: ClusterSpec = io::read(&dir.join(&cfg.cluster)).unwrap();
    let coeffs: CostCoefficients = io::read(&dir.join(&cfg.coefficients)).unwrap();
    let full = PlanOptions::default().effective_token_budget(&cluster, &coeffs);
    let options = PlanOptions {
        token_budget: Some((full as f64 * budget_fraction) as u64),
        ..PlanOptions::default()
    };
    let runs = cfg
        .seeds
        .iter()
        .map(|&seed| {
            let config = WorkloadConfig::preset(preset, cfg.global_batch_size, seed).unwrap();
            let batch = workload::generate(&config);
            let report =
                sim::compare(&batch, &cluster, &coeffs, &cfg.static_degrees, &options).unwrap();
            let detailed = planner::plan_detailed(&batch, &cluster, &coeffs, &options).unwrap();
            SeedRun {
                speedup: report.speedup.expect("some static degree is feasible"),
                dhp_idle: report.dhp.idle_fraction,
                static_idle: report
                    .best_static()
                    .map(|r| r.idle_fraction)
                    .unwrap_or(f64::NAN),
                micro_batches: detailed.micro_batches,
            }
        })
        .collect();
    CaseRuns {
        preset: preset.to_string(),
        runs,
        cluster,
        coeffs,
    }
}

/// Criterion 4: mean speedup over the best uniform degree.
fn speedup(case1: &CaseRuns, case2: &CaseRuns) -> Outcome {
    let mean = |c: &CaseRuns| c.runs.iter().map(|r| r.speedup).sum::<f64>() / c.runs.len() as f64;
    let min = |c: &CaseRuns| {
        c.runs
            .iter()
            .map(|r| r.speedup)
            .fold(f64::INFINITY, f64::min)
    };
    let (m1, m2) = (mean(case1), mean(case2));
    outcome(
        m1 >= 1.10 && m2 >= 1.05 && case1.runs.len() >= 20 && case2.runs.len() >= 20,
        format!(
            "{}: mean {m1:.3}x (>= 1.10, min {:.3}x); {}: mean {m2:.3}x (>= 1.05, min {:.3}x); {} seeds each",
            case1.preset,
            min(case1),
            case2.preset,
            min(case2),
            case1.runs.len()
        ),
    )
}

/// Criterion 5: some plan uses a degree that is not a power of two.
fn non_power_of_two(case1: &CaseRuns) -> Outcome {
    let mut found: Vec<usize> = case1
        .runs
        .iter()
        .flat_map(|r| r.micro_batches.iter().flat_map(|m| m.plan.degrees()))
        .filter(|d| [3, 5, 6, 7].contains(d))
        .collect();
    found.sort_unstable();
    found.dedup();
    outcome(
        !found.is_empty(),
        format!("degrees from {{3,5,6,7}} seen: {found:?}"),
    )
}

/// Criterion 6: no scheduling freedom means identical makespans.
fn degenerate_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checked = 0;
    let mut differing = 0;
    for _ in 0..50 {
        let n = rng.random_range(1..=16);
        let cluster = ClusterSpec::new(ClusterParams {
            num_ranks: n,
            mem_budget_per_rank: 10.0,
            ranks_per_node: 8,
            intra_node_bandwidth: 5e10,
            inter_node_bandwidth: 1e10,
        })
        .unwrap();
        let coeffs = random_coeffs(&mut rng, 1.0);
        // lengths in (10(N-1), 10N] need exactly N ranks
        let batch: Vec<SequenceSpec> = (0..rng.random_range(1..=12))
            .map(|i| {
                let len = rng.random_range((10 * (n as u64 - 1) + 1)..=(10 * n as u64));
                SequenceSpec::new(i, len, rng.random_range(0.0..=1.0)).unwrap()
            })
            .collect();
        let report =
            sim::compare(&batch, &cluster, &coeffs, &[n], &PlanOptions::default()).unwrap();
        let static_makespan = report.best_static().unwrap().makespan;
        checked += 1;
        if report.dhp.makespan != static_makespan {
            differing += 1;
        }
    }
    outcome(
        differing == 0,
        format!("{checked} batches with d_min = N, {differing} makespan differences (exact)"),
    )
}

/// Criterion 7: fit accuracy under noise and noiseless recovery.
fn fit_accuracy() -> Outcome {
    let (cluster, coeffs) = common::reference_model();
    let phases = vec![
        Phase::Compute,
        Phase::Comm,
        Phase::AttnCompute,
        Phase::AttnComm,
    ];
    let trace = |sigma: f64, seed: u64| SyntheticTrace {
        lengths: vec![1024, 131_072],
        degrees: vec![1, 32],
        mask_efficiencies: vec![0.0, 1.0],
        phases: phases.clone(),
        noise_sigma: sigma,
        seed,
    };
    let mut worst_mape: f64 = 0.0;
    for seed in 0..10 {
        let train = trace(0.05, seed).random(400, &coeffs, &cluster);
        let mut holdout_spec = trace(0.05, 1000 + seed);
        holdout_spec.phases.push(Phase::Total);
        let holdout = holdout_spec.random(400, &coeffs, &cluster);
        let fitted = profiler::fit(&train, &FitOptions::new(cluster.clone())).unwrap();
        let errs = profiler::predict_error(&fitted.coefficients, &holdout, &cluster).unwrap();
        for e in errs {
            worst_mape = worst_mape.max(e.mape);
        }
    }
    let clean = trace(0.0, 0).random(400, &coeffs, &cluster);
    let fitted = profiler::fit(&clean, &FitOptions::new(cluster.clone()))
        .unwrap()
        .coefficients;
    let mut worst_rel: f64 = 0.0;
    for ((_, want), (_, got)) in named(&coeffs).iter().zip(named(&fitted)).take(10) {
        worst_rel = worst_rel.max(((got - want) / want).abs());
    }
    outcome(
        worst_mape <= 0.08 && worst_rel <= 1e-6,
        format!(
            "worst holdout phase MAPE {:.2}% over 10 seeds (<= 8%, 5% noise); noiseless max relative error {worst_rel:.1e} (<= 1e-6)",
            100.0 * worst_mape
        ),
    )
}

fn named(c: &CostCoefficients) -> [(&'static str, f64); 10] {
    [
        ("alpha1", c.alpha1),
        ("alpha2", c.alpha2),
        ("beta1", c.beta1),
        ("alpha3", c.alpha3),
        ("beta2", c.beta2),
        ("alpha1_attn", c.alpha1_attn),
        ("alpha2_attn", c.alpha2_attn),
        ("beta1_attn", c.beta1_attn),
        ("alpha3_attn", c.alpha3_attn),
        ("beta2_attn", c.beta2_attn),
    ]
}

/// Criterion 8: simulation reproduces stored makespans.
fn self_consistency(cases: &[&CaseRuns]) -> Outcome {
    let mut plans = 0;
    let mut worst: f64 = 0.0;
    for c in cases {
        for r in &c.runs {
            let ps: Vec<_> = r.micro_batches.iter().map(|m| m.plan.clone()).collect();
            let report = sim::simulate(&ps, &c.cluster, &c.coeffs, "dhp").unwrap();
            for (p, m) in ps.iter().zip(&report.per_plan_makespan) {
                worst = worst.max(((m - p.makespan()) / p.makespan()).abs());
                plans += 1;
            }
        }
    }
    outcome(
        worst <= 1e-9,
        format!("{plans} plans, max relative deviation {worst:.1e} (<= 1e-9)"),
    )
}

/// Criterion 9: DP makespan never exceeds any uniform degree at fixed grouping.
fn dominance(cases: &[&CaseRuns]) -> Outcome {
    let mut comparisons = 0;
    let mut breaches = 0;
    let mut batches = 0;
    let mut with_uniform = 0;
    for c in cases {
        let n = c.cluster.num_ranks;
        for r in &c.runs {
            for m in &r.micro_batches {
                let k = m.groups.len();
                let lo = m.groups.iter().map(AtomicGroup::d_min).max().unwrap();
                batches += 1;
                with_uniform += usize::from(lo <= n / k);
                for d in lo..=n / k {
                    let uniform = m
                        .groups
                        .iter()
                        .map(|g| {
                            cost::estimate_time(g, d, &c.cluster, &c.coeffs)
                                .unwrap()
                                .total
                        })
                        .fold(0.0, f64::max);
                    comparisons += 1;
                    if m.solution.makespan > uniform {
                        breaches += 1;
                    }
                }
            }
        }
    }
    outcome(
        breaches == 0 && comparisons > 0,
        format!(
            "{comparisons} (micro-batch, uniform degree) pairs from {with_uniform}/{batches} micro-batches with a feasible uniform degree, {breaches} where DP was slower"
        ),
    )
}

fn main() {
    let start = Instant::now();
    let cfg = common::acceptance_config();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let timed = |f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let mut o = f();
        o.detail
            .push_str(&format!(" [{:.1} s]", t.elapsed().as_secs_f64()));
        o
    };
    results.push((1, "DP optimality vs brute force", timed(&dp_optimality)));
    results.push((2, "constraint suite", timed(&constraint_suite)));
    results.push((3, "solver latency and scaling", timed(&solver_scaling)));
    let case1 = run_case(&cfg.case1_preset, 1.0);
    let case2 = run_case(&cfg.case2_preset, 1.0);
    // default micro-batches fill memory, leaving no room for uniform degrees
    // at fixed grouping; smaller budgets exercise the comparison
    let lighter: Vec<CaseRuns> = [0.25, 0.5]
        .iter()
        .flat_map(|&f| {
            [
                run_case(&cfg.case1_preset, f),
                run_case(&cfg.case2_preset, f),
            ]
        })
        .collect();
    results.push((4, "speedup over best static", speedup(&case1, &case2)));
    results.push((5, "non-power-of-two degrees", non_power_of_two(&case1)));
    results.push((6, "degenerate equivalence", timed(&degenerate_equivalence)));
    results.push((7, "cost-fit accuracy", timed(&fit_accuracy)));
    let mut all = vec![&case1, &case2];
    all.extend(lighter.iter());
    results.push((8, "estimator self-consistency", self_consistency(&all)));
    results.push((9, "DP dominance", dominance(&all)));

    let idle_wins = case1
        .runs
        .iter()
        .chain(&case2.runs)
        .filter(|r| r.dhp_idle <= r.static_idle)
        .count();
    let mut failed = 0;
    for (n, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} [{tag}] {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "info: DHP idle fraction <= best static in {idle_wins}/{} seeded runs",
        case1.runs.len() + case2.runs.len()
    );
    println!(
        "acceptance: {}/{} criteria passed in {:.1} s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
