//! `revcache`: run simulations, check the revision graphs, compile whitelist
//! plans and exercise cache backends.
//!
//! Exit codes: 0 success, 1 a check or invariant failed, 2 usage or
//! configuration error, 3 backend or file I/O failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use revcache::cache::contract::run_contract_suite;
use revcache::cache::{Cache, MemcachedCache, MemoryCache};
use revcache::cachedb::CacheDbError;
use revcache::harness::{
    run_workload, write_events, EvictionSpec, FreshnessReport, HarnessError, OpMix, ReportDocument, ReportFormat,
    SchedulerKind, SchemeKind, Strategy, WorkloadSpec, STANDARD_MIXES,
};
use revcache::planner::{parse_whitelist, TrimmedPlan};
use revcache::verify::{verify_dyadic, verify_graph, VERIFY_MAX_W};

#[derive(Debug, Parser)]
#[command(
    name = "revcache",
    version,
    about = "Generational-key query cache simulator and verifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a concurrent workload and report hit ratios and staleness.
    Simulate(Box<SimulateArgs>),
    /// Exhaustively check the revision graph over a small domain.
    VerifyGraph {
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 3)]
        domain: usize,
    },
    /// Compile a whitelist into a trimmed counter plan.
    Plan {
        #[arg(long)]
        whitelist: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the dyadic range scheme for every range of a w-bit column.
    VerifyDyadic {
        #[arg(long)]
        w: u32,
    },
    /// Run the cache contract suite against a backend.
    CacheProbe {
        #[arg(long, value_parser = ["memory", "memcached"], default_value = "memory")]
        backend: String,
        #[arg(long)]
        addr: Option<String>,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON workload file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    ops: Option<usize>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    initial_fill: Option<usize>,
    #[arg(long)]
    p_select: Option<f64>,
    #[arg(long)]
    p_insert: Option<f64>,
    #[arg(long)]
    p_delete: Option<f64>,
    /// Run each of the five standard mixes and report them side by side.
    #[arg(long, conflicts_with_all = ["p_select", "p_insert", "p_delete"])]
    all_mixes: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    scheduler: Option<SchedulerKind>,
    #[arg(long)]
    scheme: Option<SchemeKind>,
    #[arg(long)]
    pad_columns: Option<usize>,
    #[arg(long)]
    horizon_ms: Option<u64>,
    /// `none` or `random:P[:global|local|both]`.
    #[arg(long)]
    evictions: Option<EvictionSpec>,
    #[arg(long)]
    skew_ms: Option<u64>,
    /// Defaults to standard output.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
    /// Write every operation as newline-delimited JSON.
    #[arg(long)]
    events: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Check(String),
    Usage(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match &e {
            HarnessError::Config(_) | HarnessError::Plan(_) | HarnessError::Model(_) => Failure::Usage(e.to_string()),
            HarnessError::CacheDb(CacheDbError::Config(_)) => Failure::Usage(e.to_string()),
            HarnessError::CacheDb(CacheDbError::InvalidationFailed { .. }) => Failure::Io(e.to_string()),
            _ => Failure::Check(e.to_string()),
        }
    }
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::Io(e.to_string())),
    }
}

fn load_spec(args: &SimulateArgs) -> Result<WorkloadSpec, Failure> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => WorkloadSpec::default(),
    };
    macro_rules! apply {
        ($($flag:ident => $field:ident),+) => {
            $(if let Some(v) = args.$flag.clone() { spec.$field = v; })+
        };
    }
    apply!(
        workers => workers, ops => ops_per_worker, grid => grid, initial_fill => initial_fill,
        seed => seed, strategy => strategy, scheduler => scheduler, scheme => scheme,
        pad_columns => pad_columns, horizon_ms => horizon_ms, evictions => evictions, skew_ms => skew_ms
    );
    match (args.p_select, args.p_insert, args.p_delete) {
        (None, None, None) => {}
        (Some(s), Some(i), Some(d)) => spec.mix = OpMix::new(s, i, d),
        _ => {
            return Err(Failure::Usage(
                "--p-select, --p-insert and --p-delete go together".into(),
            ))
        }
    }
    spec.validate()?;
    Ok(spec)
}

/// Invariants every run must satisfy; returns one line per failure.
fn invariant_failures(r: &FreshnessReport) -> Vec<String> {
    let mut out: Vec<String> = r
        .inconsistencies()
        .into_iter()
        .map(|m| format!("{}: {m}", r.label))
        .collect();
    if r.strategy == Strategy::Revision && r.epsilon_violations > 0 {
        out.push(format!(
            "{}: {} stale results older than epsilon {}us + skew allowance {}us",
            r.label, r.epsilon_violations, r.epsilon_us, r.skew_allowance_us
        ));
    }
    if r.workers == 1 && r.strategy == Strategy::Revision && r.stale > 0 {
        out.push(format!("{}: {} stale results with a single worker", r.label, r.stale));
    }
    if r.oracle_mismatches > 0 {
        out.push(format!(
            "{}: {} hits differ from the table",
            r.label, r.oracle_mismatches
        ));
    }
    out
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let base = load_spec(&args)?;
    let mixes: Vec<OpMix> = if args.all_mixes {
        STANDARD_MIXES.to_vec()
    } else {
        vec![base.mix]
    };
    let mut reports = Vec::new();
    let mut events = Vec::new();
    for mix in mixes {
        let spec = WorkloadSpec { mix, ..base.clone() };
        let started = Instant::now();
        let out = run_workload(&spec)?;
        eprintln!(
            "{}: {} selects, hit ratio {:.3}, stale {}, epsilon {}us ({:.1}s)",
            out.report.label,
            out.report.selects,
            out.report.hit_ratio,
            out.report.stale,
            out.report.epsilon_us,
            started.elapsed().as_secs_f64()
        );
        reports.push(out.report);
        if args.events.is_some() {
            events.extend(out.events);
        }
    }
    let doc = ReportDocument::new(reports);
    write_output(args.report.as_deref(), &doc.emit(args.format))?;
    if let Some(path) = &args.events {
        let file = fs::File::create(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        write_events(&events, std::io::BufWriter::new(file)).map_err(|e| Failure::Io(e.to_string()))?;
    }
    let failures: Vec<String> = doc.reports.iter().flat_map(invariant_failures).collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failures.join("\n")))
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("reports serialize");
    bytes.push(b'\n');
    write_output(None, &bytes)
}

fn verify_graph_cmd(k: usize, domain: usize) -> Result<(), Failure> {
    if k == 0 || domain == 0 {
        return Err(Failure::Usage("--k and --domain must be positive".into()));
    }
    // (domain + 1)^k queries by (domain + 2)^k patterns.
    let cells = ((domain + 1) as f64).powi(k as i32) * ((domain + 2) as f64).powi(k as i32);
    if cells > 5e7 {
        return Err(Failure::Usage(format!(
            "k={k}, domain={domain} is too large to enumerate"
        )));
    }
    let started = Instant::now();
    let report = verify_graph(k, domain).map_err(|e| Failure::Usage(e.to_string()))?;
    print_json(&report)?;
    eprintln!(
        "{} queries, {} patterns, {} counterexamples ({:.1}s)",
        report.queries,
        report.patterns,
        report.counterexamples(),
        started.elapsed().as_secs_f64()
    );
    if report.counterexamples() == 0 {
        Ok(())
    } else {
        Err(Failure::Check(format!("{} counterexamples", report.counterexamples())))
    }
}

fn plan_cmd(whitelist: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let text = fs::read_to_string(whitelist).map_err(|e| Failure::Usage(format!("{}: {e}", whitelist.display())))?;
    let wl = parse_whitelist(&text).map_err(|e| Failure::Usage(format!("{}: {e}", whitelist.display())))?;
    let doc = TrimmedPlan::from_whitelist(&wl).document();
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("plans serialize");
    bytes.push(b'\n');
    write_output(out, &bytes)
}

fn verify_dyadic_cmd(w: u32) -> Result<(), Failure> {
    if w == 0 || w > VERIFY_MAX_W {
        return Err(Failure::Usage(format!("--w must be in 1..={VERIFY_MAX_W}")));
    }
    let started = Instant::now();
    let report = verify_dyadic(w).map_err(|e| Failure::Usage(e.to_string()))?;
    print_json(&report)?;
    let w = w as usize;
    let verdict = |ok: bool| if ok { "ok" } else { "VIOLATED" };
    eprintln!(
        "max probe keys {} (bound 3w+2 = {}): {}",
        report.max_probe_keys,
        3 * w + 2,
        verdict(report.max_probe_keys <= 3 * w + 2)
    );
    eprintln!(
        "max incr keys {} (bound w+2 = {}): {}",
        report.max_incr_keys,
        w + 2,
        verdict(report.max_incr_keys <= w + 2)
    );
    eprintln!(
        "{} ranges, {} range pairs, {} node pairs, {} violations ({:.1}s)",
        report.ranges,
        report.range_pairs,
        report.node_pairs,
        report.soundness_violations + report.cover_violations,
        started.elapsed().as_secs_f64()
    );
    if report.sound() {
        Ok(())
    } else {
        Err(Failure::Check(
            "dyadic key sets disagree with range intersection".into(),
        ))
    }
}

fn cache_probe_cmd(backend: &str, addr: Option<&str>) -> Result<(), Failure> {
    let cache: Box<dyn Cache> = match (backend, addr) {
        ("memory", None) => Box::new(MemoryCache::new(
            Default::default(),
            std::sync::Arc::new(revcache::clock::SystemClock::new()),
        )),
        ("memory", Some(_)) => return Err(Failure::Usage("--addr only applies to --backend memcached".into())),
        ("memcached", Some(a)) => Box::new(MemcachedCache::connect(a).map_err(|e| Failure::Io(format!("{a}: {e}")))?),
        ("memcached", None) => return Err(Failure::Usage("--backend memcached needs --addr HOST:PORT".into())),
        _ => unreachable!("clap restricts the backend"),
    };
    let report = run_contract_suite(&*cache, "revcache-probe:").map_err(|e| Failure::Io(e.to_string()))?;
    for c in &report.checks {
        println!("{} {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check("cache contract violated".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(*args),
        Command::VerifyGraph { k, domain } => verify_graph_cmd(k, domain),
        Command::Plan { whitelist, out } => plan_cmd(&whitelist, out.as_deref()),
        Command::VerifyDyadic { w } => verify_dyadic_cmd(w),
        Command::CacheProbe { backend, addr } => cache_probe_cmd(&backend, addr.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Check(m) | Failure::Usage(m) | Failure::Io(m) => eprintln!("revcache: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
