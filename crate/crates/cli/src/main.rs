//! `bevpool`: scene generation, offline plan building, the oracle-equivalence
//! suite, and the latency sweep.
//!
//! Exit codes: 0 success, 1 domain failure (verification failed, output not
//! writable), 2 usage or input parse error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bevpool_bench::alloc::CountingAllocator;
use bevpool_bench::harness::sweep_with;
use bevpool_bench::report::{emit_report, parse_report, render_table, Format};
use bevpool_bench::BenchConfig;
use bevpool_core::config::{parse_frustum, parse_grid, parse_rig, write_scene};
use bevpool_core::geometry::voxel_index_map;
use bevpool_core::plan::{build_plan, serialize_plan};
use bevpool_core::synth::{default_frustum, default_grid, surround_rig, InstanceLimits};
use bevpool_core::verify::{run_suite, Mutation};
use clap::{Parser, Subcommand, ValueEnum};

#[global_allocator]
static ALLOCATOR: CountingAllocator = CountingAllocator::system();

#[derive(Parser)]
#[command(name = "bevpool", version, about = "Camera-to-BEV pooling: plans, kernels, verification and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic surround rig, frustum and ego-centered grid as one scene file.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..))]
        views: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build and serialize the pooling plan for a scene.
    Plan {
        #[arg(long)]
        rig: PathBuf,
        #[arg(long)]
        frustum: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check every kernel against the dense oracle on seeded random instances.
    Verify {
        #[arg(long)]
        seed: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        cases: u64,
        /// Swap in a deliberately broken kernel to check that the suite notices.
        #[arg(long, value_enum, hide = true)]
        mutation: Option<MutationArg>,
    },
    /// Run the latency sweep and write a CSV or JSON report.
    Bench {
        #[arg(long)]
        seed: u64,
        /// Sweep configuration; the default ladder and all kernels when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv", value_parser = parse_format)]
        format: Format,
        /// Kernel worker threads, overriding the configuration.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        workers: Option<u64>,
    },
    /// Print a report as an aligned table with per-step speedups.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MutationArg {
    IntervalOffByOne,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: bevpool_bench::ReportError| e.to_string())
}

enum Failure {
    Usage(String),
    Domain(String),
}

type Outcome = Result<(), Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Outcome {
    fs::write(path, bytes).map_err(|e| Failure::Domain(format!("cannot write {}: {e}", path.display())))
}

fn usage<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> Failure + '_ {
    move |e| Failure::Usage(format!("{}: {e}", path.display()))
}

fn cmd_gen(seed: u64, views: usize, out: &Path) -> Outcome {
    let frustum = default_frustum(16, 44);
    let rig = surround_rig(seed, views, frustum.image_size());
    write_bytes(out, write_scene(Some(&rig), Some(&frustum), Some(&default_grid())).as_bytes())?;
    println!("wrote {views} views to {}", out.display());
    Ok(())
}

fn cmd_plan(rig: &Path, frustum: &Path, grid: &Path, out: &Path) -> Outcome {
    let rig_spec = parse_rig(&read_text(rig)?).map_err(usage(rig))?;
    let frustum_spec = parse_frustum(&read_text(frustum)?).map_err(usage(frustum))?;
    let grid_spec = parse_grid(&read_text(grid)?).map_err(usage(grid))?;
    let vmap = voxel_index_map(&rig_spec, &frustum_spec, &grid_spec).map_err(|e| Failure::Usage(e.to_string()))?;
    let plan = build_plan(&vmap).map_err(|e| Failure::Domain(e.to_string()))?;
    let bytes = serialize_plan(&plan);
    write_bytes(out, &bytes)?;
    if plan.is_empty() {
        eprintln!("warning: empty plan (no frustum point falls inside the grid)");
    }
    println!("points (P): {}", plan.num_points());
    println!("intervals (M): {}", plan.num_intervals());
    println!("plan bytes: {}", bytes.len());
    println!("digest: {:016x}", plan.meta.digest);
    Ok(())
}

fn cmd_verify(seed: u64, cases: usize, mutation: Mutation) -> Outcome {
    let report = run_suite(seed, cases, &InstanceLimits::default(), mutation);
    println!("cases: {}", report.cases);
    println!("max relative error: {:.3e}", report.worst.max_relative);
    println!("max |value| where oracle is zero: {:.3e}", report.worst.max_abs_on_zero);
    if report.passed() {
        println!("all cases passed");
        return Ok(());
    }
    for f in &report.failures {
        println!("FAIL seed {} [{}]: {}", f.seed, f.check, f.detail);
    }
    let first = report.failures[0].seed;
    Err(Failure::Domain(format!(
        "{} of {cases} cases failed; reproduce with: bevpool verify --seed {first} --cases 1",
        report.failures.len()
    )))
}

fn cmd_bench(seed: u64, config: Option<&Path>, out: &Path, format: Format, workers: Option<usize>) -> Outcome {
    let mut cfg = match config {
        Some(path) => BenchConfig::parse(&read_text(path)?, seed).map_err(usage(path))?,
        None => BenchConfig::default_with_seed(seed),
    };
    if workers.is_some() {
        cfg.workers = workers;
    }
    let records = sweep_with(&cfg, |r| match &r.status {
        bevpool_bench::RecordStatus::Ok => {
            println!("{:<10} {:>7}  median {:>12} ns", r.kernel.name(), r.cell.to_string(), r.median_ns)
        }
        bevpool_bench::RecordStatus::Failed(why) => println!("{:<10} {:>7}  FAIL {why}", r.kernel.name(), r.cell.to_string()),
    });
    let bytes = emit_report(&records, format).map_err(|e| Failure::Domain(e.to_string()))?;
    write_bytes(out, &bytes)?;
    println!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

fn cmd_report(input: &Path) -> Outcome {
    let bytes = fs::read(input).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", input.display())))?;
    let rows = parse_report(&bytes).map_err(usage(input))?;
    print!("{}", render_table(&rows));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen { seed, views, out } => cmd_gen(seed, views as usize, &out),
        Command::Plan { rig, frustum, grid, out } => cmd_plan(&rig, &frustum, &grid, &out),
        Command::Verify { seed, cases, mutation } => {
            let mutation = match mutation {
                Some(MutationArg::IntervalOffByOne) => Mutation::IntervalOffByOne,
                None => Mutation::None,
            };
            cmd_verify(seed, cases as usize, mutation)
        }
        Command::Bench {
            seed,
            config,
            out,
            format,
            workers,
        } => cmd_bench(seed, config.as_deref(), &out, format, workers.map(|w| w as usize)),
        Command::Report { input } => cmd_report(&input),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
