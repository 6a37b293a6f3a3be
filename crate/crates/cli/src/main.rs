use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use xcsim::compare::{compare, Trend};
use xcsim::metrics::Report;
use xcsim::runner::run_suite;
use xcsim::scenario::{builtin, Overrides, Scenario, BUILTINS};
use xcsim::world::Protocol;

#[derive(Parser)]
#[command(name = "xcsim", version, about = "Cross-chain invocation simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

impl From<Toggle> for bool {
    fn from(t: Toggle) -> bool {
        matches!(t, Toggle::On)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Integratex,
    Baseline,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a builtin scenario or a scenario TOML file.
    Run {
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to out/<scenario>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
        /// Transaction aggregation.
        #[arg(long, value_enum)]
        ta: Option<Toggle>,
        /// Fine-grained state locks.
        #[arg(long, value_enum)]
        fgsl: Option<Toggle>,
        /// Block time for every chain; repeat to sweep.
        #[arg(long = "block-time", num_args = 1..)]
        block_time: Vec<u64>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        concurrency: Option<usize>,
        /// Worker threads for independent runs.
        #[arg(long, default_value_t = 4)]
        threads: usize,
    },
    /// Diff two CSV files with the same columns.
    Compare {
        left: PathBuf,
        right: PathBuf,
        /// Columns that identify a row, comma separated.
        #[arg(long, value_delimiter = ',')]
        key: Option<Vec<String>>,
        /// Expected direction from left to right, e.g. `mean_latency_ms:up`.
        #[arg(long)]
        expect: Vec<String>,
    },
    /// List builtin scenarios.
    List,
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::List => {
            for b in BUILTINS {
                println!("{b}");
            }
            ExitCode::SUCCESS
        }
        Cmd::Run { scenario, seed, out, protocol, ta, fgsl, block_time, depth, concurrency, threads } => {
            let o = Overrides {
                seed,
                protocol: protocol.map(|p| match p {
                    ProtocolArg::Integratex => Protocol::Integratex,
                    ProtocolArg::Baseline => Protocol::Baseline,
                }),
                aggregation: ta.map(bool::from),
                fgsl: fgsl.map(bool::from),
                block_times: block_time,
                depth,
                concurrency,
            };
            run(&scenario, &o, out, threads)
        }
        Cmd::Compare { left, right, key, expect } => diff(&left, &right, key, &expect),
    }
}

fn run(scenario: &str, o: &Overrides, out: Option<PathBuf>, threads: usize) -> ExitCode {
    let suite = if BUILTINS.contains(&scenario) {
        builtin(scenario, o)
    } else {
        Scenario::load(Path::new(scenario)).and_then(|s| {
            if o.depth.is_some() || o.concurrency.is_some() {
                eprintln!("note: --depth and --concurrency only apply to builtin sweeps");
            }
            s.suite(o)
        })
    };
    let suite = match suite {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let (_, report) = match run_suite(&suite, threads) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let dir = out.unwrap_or_else(|| PathBuf::from("out").join(&suite.name));
    if let Err(e) = report.write_dir(&dir) {
        eprintln!("error: writing {}: {e}", dir.display());
        return ExitCode::from(2);
    }
    print_report(&report);
    println!("wrote {}", dir.display());
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn print_report(r: &Report) {
    println!(
        "{:<28} {:<10} {:>4} {:>4} {:>4} {:>10} {:>7} {:>10} {:>12} {:>6}",
        "variant", "protocol", "req", "ok", "abrt", "latency_s", "rounds", "tput/s", "gas", "audit"
    );
    for s in &r.summary {
        println!(
            "{:<28} {:<10} {:>4} {:>4} {:>4} {:>10.1} {:>7.2} {:>10.4} {:>12} {:>6}",
            s.variant,
            s.protocol,
            s.requests,
            s.committed,
            s.aborted,
            s.mean_latency_ms / 1000.0,
            s.mean_rounds,
            s.throughput_per_s,
            s.total_gas,
            if s.audit_violations == 0 { "ok" } else { "FAIL" },
        );
    }
    for c in r.comparisons.iter().filter(|c| c.metric == "mean_latency_ms") {
        println!("{}: integratex latency {:.1}% lower than baseline", c.variant, c.reduction_pct);
    }
    for l in &r.lsd {
        println!(
            "{}: deploy gas monolithic {} decoupled {} ({:.1}% saved)",
            l.service, l.monolithic_gas, l.decoupled_gas, l.saving_pct
        );
    }
    for a in &r.assertions {
        let actual = a.actual.map(|x| format!("{x:.3}")).unwrap_or_else(|| "missing".into());
        println!(
            "[{}] {} {} {} ({}) = {}",
            if a.pass { "pass" } else { "FAIL" },
            a.assertion.metric,
            a.assertion.op.symbol(),
            a.assertion.value,
            if a.variant.is_empty() { "all" } else { &a.variant },
            actual
        );
    }
}

fn diff(left: &Path, right: &Path, key: Option<Vec<String>>, expect: &[String]) -> ExitCode {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()));
    let (l, r) = match (read(left), read(right)) {
        (Ok(l), Ok(r)) => (l, r),
        (Err(e), _) | (_, Err(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let trends: Vec<Trend> = match expect.iter().map(|e| e.parse()).collect::<Result<_, _>>() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let d = match compare(&l, &r, key.as_deref()) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if !d.is_empty() {
        print!("{}", d.to_csv());
    }
    let mut ok = true;
    for t in &trends {
        let pass = d.holds(t);
        ok &= pass;
        eprintln!("[{}] {}", if pass { "pass" } else { "FAIL" }, t.column);
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
