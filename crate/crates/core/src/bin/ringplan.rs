use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ringplan::io::{self, Document};
use ringplan::planner::{self, PlanOptions};
use ringplan::profiler::{self, FitOptions, TraceSample};
use ringplan::sim::{self, ComparisonReport};
use ringplan::workload::{self, WorkloadConfig};
use ringplan::{solver, ClusterSpec, CostCoefficients, Error, Execution, MicroBatch, Result};

/// Context-parallel group planner for variable-length sequence batches.
///
/// Errors are printed to stderr as `{"error": {"category", "message"}}` and
/// the exit code identifies the category.
#[derive(Parser)]
#[command(name = "ringplan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a batch file from a workload config or a named preset.
    Gen(GenArgs),
    /// Plan a batch with dynamic degrees.
    Schedule(ScheduleArgs),
    /// Plan a batch with one uniform degree.
    Static(StaticArgs),
    /// Re-evaluate plan files with the cost model.
    Simulate(SimulateArgs),
    /// Compare dynamic planning against uniform degrees.
    Compare(CompareArgs),
    /// Fit cost coefficients to a trace file.
    Fit(FitArgs),
    /// Time the degree solver over a (groups, ranks) sweep; writes CSV.
    BenchSolver(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Workload config file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// msrvtt-like, internvid-like or openvid-like.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = 128)]
    count: usize,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Model {
    #[arg(long)]
    cluster: PathBuf,
    #[arg(long)]
    coeffs: PathBuf,
}

impl Model {
    fn load(&self) -> Result<(ClusterSpec, CostCoefficients)> {
        Ok((io::read(&self.cluster)?, io::read(&self.coeffs)?))
    }
}

#[derive(Args)]
struct PlanFlags {
    /// Planner options file.
    #[arg(long)]
    options: Option<PathBuf>,
    /// Fixed micro-batch count; overrides the options file.
    #[arg(long)]
    micro_batches: Option<usize>,
    /// Tokens per micro-batch; overrides the options file.
    #[arg(long)]
    token_budget: Option<u64>,
    /// Give idle ranks to the slowest group.
    #[arg(long)]
    absorb_idle: bool,
    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

impl PlanFlags {
    fn load(&self) -> Result<PlanOptions> {
        let mut o = match &self.options {
            Some(p) => io::read::<PlanOptions>(p)?,
            None => PlanOptions::default(),
        };
        if self.micro_batches.is_some() {
            o.num_micro_batches = self.micro_batches;
        }
        if self.token_budget.is_some() {
            o.token_budget = self.token_budget;
        }
        o.absorb_idle_ranks |= self.absorb_idle;
        if self.sequential {
            o.execution = Execution::Sequential;
        }
        Ok(o)
    }
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    batch: PathBuf,
    #[command(flatten)]
    model: Model,
    #[command(flatten)]
    plan: PlanFlags,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StaticArgs {
    #[arg(long)]
    batch: PathBuf,
    #[command(flatten)]
    model: Model,
    #[arg(long)]
    degree: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Plan files; their plans are simulated back to back.
    #[arg(long, required = true, num_args = 1..)]
    plans: Vec<PathBuf>,
    #[command(flatten)]
    model: Model,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    batch: PathBuf,
    #[command(flatten)]
    model: Model,
    /// Uniform degrees to compare against, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    degrees: Vec<usize>,
    #[command(flatten)]
    plan: PlanFlags,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Supplies ring bandwidths.
    #[arg(long)]
    cluster: PathBuf,
    /// Trace to report held-out error on.
    #[arg(long)]
    holdout: Option<PathBuf>,
    /// Coefficients output; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Fit report output (training error, clamped coefficients, notes).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "4,16,64")]
    groups: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
    ranks: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn emit<T: Document>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => io::write(p, value),
        None => {
            println!("{}", io::to_string(value)?);
            Ok(())
        }
    }
}

fn write_text(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|source| Error::Io {
            context: format!("writing {}", p.display()),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let mut config = match (&a.config, &a.preset) {
        (Some(p), _) => io::read::<WorkloadConfig>(p)?,
        (None, Some(name)) => WorkloadConfig::preset(name, a.count, a.seed.unwrap_or(0))?,
        (None, None) => {
            return Err(Error::Invalid {
                what: "arguments",
                reason: "one of --config or --preset is required".into(),
            })
        }
    };
    if let Some(seed) = a.seed {
        config = config.with_seed(seed);
    }
    emit(
        &MicroBatch::new(workload::generate(&config))?,
        a.out.as_deref(),
    )
}

fn schedule(a: ScheduleArgs) -> Result<()> {
    let batch: MicroBatch = io::read(&a.batch)?;
    let (cluster, coeffs) = a.model.load()?;
    let outcome = planner::plan_detailed(batch.sequences(), &cluster, &coeffs, &a.plan.load()?)?;
    let plans = outcome.plans();
    eprintln!(
        "{} micro-batches, total makespan {:.4} s, planned in {:.1} ms",
        plans.len(),
        outcome.total_makespan(),
        outcome.elapsed.as_secs_f64() * 1e3
    );
    if outcome.over_latency_budget == Some(true) {
        eprintln!("warning: planning exceeded the latency budget");
    }
    emit(&plans, a.out.as_deref())
}

fn static_cmd(a: StaticArgs) -> Result<()> {
    let batch: MicroBatch = io::read(&a.batch)?;
    let (cluster, coeffs) = a.model.load()?;
    let plans = sim::static_plan(batch.sequences(), a.degree, &cluster, &coeffs)?;
    emit(&plans, a.out.as_deref())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let (cluster, coeffs) = a.model.load()?;
    let mut plans = Vec::new();
    for p in &a.plans {
        plans.extend(io::read_plans(p)?);
    }
    let source = a
        .plans
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(",");
    let report = sim::simulate(&plans, &cluster, &coeffs, &source)?;
    eprintln!(
        "makespan {:.4} s, idle fraction {:.3}",
        report.makespan, report.idle_fraction
    );
    emit(&report, a.out.as_deref())
}

fn print_comparison(r: &ComparisonReport) {
    eprintln!(
        "{:<10} {:>12} {:>8}  groups (degree x count)",
        "plan", "makespan_s", "idle"
    );
    let row = |name: String, rep: &sim::SimReport, shapes: &[sim::ShapeCount]| {
        let mix: Vec<String> = shapes
            .iter()
            .map(|s| format!("{} [{}]", s.shape, s.micro_batches))
            .collect();
        eprintln!(
            "{:<10} {:>12.4} {:>8.3}  {}",
            name,
            rep.makespan,
            rep.idle_fraction,
            mix.join("; ")
        );
    };
    row("dhp".into(), &r.dhp, &r.dhp_shapes);
    for s in &r.statics {
        match (&s.report, &s.shapes) {
            (Some(rep), Some(shapes)) => row(format!("static-{}", s.degree), rep, shapes),
            _ => eprintln!(
                "{:<10} {:>12}  {}",
                format!("static-{}", s.degree),
                "-",
                s.skipped.as_deref().unwrap_or("")
            ),
        }
    }
    if let (Some(d), Some(x)) = (r.best_static_degree, r.speedup) {
        eprintln!("speedup over best static (degree {d}): {x:.3}x");
    }
}

fn compare(a: CompareArgs) -> Result<()> {
    let batch: MicroBatch = io::read(&a.batch)?;
    let (cluster, coeffs) = a.model.load()?;
    let report = sim::compare(
        batch.sequences(),
        &cluster,
        &coeffs,
        &a.degrees,
        &a.plan.load()?,
    )?;
    print_comparison(&report);
    emit(&report, a.out.as_deref())
}

fn fit(a: FitArgs) -> Result<()> {
    let trace: Vec<TraceSample> = io::read(&a.trace)?;
    let cluster: ClusterSpec = io::read(&a.cluster)?;
    let report = profiler::fit(&trace, &FitOptions::new(cluster.clone()))?;
    for e in &report.training_error {
        eprintln!(
            "train {:<12} n={:<5} MAPE {:.2}%",
            e.phase.to_string(),
            e.samples,
            100.0 * e.mape
        );
    }
    if let Some(h) = &a.holdout {
        let holdout: Vec<TraceSample> = io::read(h)?;
        for e in profiler::predict_error(&report.coefficients, &holdout, &cluster)? {
            eprintln!(
                "holdout {:<10} n={:<5} MAPE {:.2}%",
                e.phase.to_string(),
                e.samples,
                100.0 * e.mape
            );
        }
    }
    for c in &report.clamped {
        eprintln!("warning: {c} was negative and clamped to 0");
    }
    if let Some(p) = &a.report {
        io::write(p, &report)?;
    }
    emit(&report.coefficients, a.out.as_deref())
}

fn bench_solver(a: BenchArgs) -> Result<()> {
    let mut csv = String::from("groups,ranks,cells_evaluated,min_ms,median_ms\n");
    for &k in &a.groups {
        for &n in &a.ranks {
            if k > n {
                continue;
            }
            let (groups, cluster, coeffs) = solver::synthetic_instance(k, n, a.seed)?;
            let mut times = Vec::with_capacity(a.repeats.max(1));
            let mut cells = 0;
            for _ in 0..a.repeats.max(1) {
                let t = Instant::now();
                let s = solver::solve(&groups, &cluster, &coeffs)?;
                times.push(t.elapsed().as_secs_f64() * 1e3);
                cells = s.table_cells_evaluated;
            }
            times.sort_by(f64::total_cmp);
            csv.push_str(&format!(
                "{k},{n},{cells},{:.4},{:.4}\n",
                times[0],
                times[times.len() / 2]
            ));
        }
    }
    write_text(&csv, a.out.as_deref())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Schedule(a) => schedule(a),
        Command::Static(a) => static_cmd(a),
        Command::Simulate(a) => simulate(a),
        Command::Compare(a) => compare(a),
        Command::Fit(a) => fit(a),
        Command::BenchSolver(a) => bench_solver(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = json!({"error": {"category": e.category(), "message": e.to_string()}});
            eprintln!("{body}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
