//! `sfc`: command-line front end to the codec, bench harness, analysis and
//! cache simulator.
//!
//! Exit codes: 0 success, 1 usage, 2 runtime failure, 3 energy required but
//! unavailable.

use std::fs::{self, File};
use std::io::{self, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sfc_locality::analysis::{self, CodecQuery};
use sfc_locality::bench::{self, BenchError, ExperimentConfig, SampleSink};
use sfc_locality::cachesim::{self, CAccess, HierarchyConfig, TraceOptions};
use sfc_locality::{Coord2, CurveOrder, LayoutKind, LinearIndex};

#[derive(Parser)]
#[command(
    name = "sfc",
    version,
    about = "Space-filling-curve matrix layouts: codec, bench, analysis, cache simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Translate a coordinate to an index, or an index to a coordinate.
    Codec(CodecArgs),
    /// Run the matmul experiment grid and write the bench CSV.
    Bench(BenchArgs),
    /// Parallel speedup table from a bench CSV.
    Speedup(SpeedupArgs),
    /// Energy-vs-time dataset and gnuplot script from a bench CSV.
    EnergyTime(EnergyTimeArgs),
    /// Simulate the cache behaviour of each layout on a few output rows.
    Simcache(SimcacheArgs),
    /// Write the binary access trace of a matmul row range.
    TraceDump(TraceDumpArgs),
}

#[derive(Args)]
struct CodecArgs {
    #[arg(long)]
    layout: LayoutKind,
    #[arg(long)]
    n: u32,
    #[arg(long, requires = "x", conflicts_with = "index")]
    y: Option<u32>,
    #[arg(long, requires = "y")]
    x: Option<u32>,
    #[arg(long, required_unless_present = "y")]
    index: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    layouts: Option<Vec<LayoutKind>>,
    #[arg(long, value_delimiter = ',')]
    workers: Option<Vec<usize>>,
    #[arg(long)]
    reps: Option<u32>,
    #[arg(long)]
    warmup: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sample RAPL counters during every run.
    #[arg(long)]
    energy: bool,
    /// Exit with status 3 instead of falling back to time-only mode.
    #[arg(long)]
    require_energy: bool,
    #[arg(long)]
    rate_hz: Option<f64>,
    /// Zero timing/energy columns so the CSV is reproducible byte for byte.
    #[arg(long)]
    no_timing: bool,
    /// Directory for per-run `t_s,domain,socket,cumulative_j` sample CSVs.
    #[arg(long)]
    samples_dir: Option<PathBuf>,
    /// Output CSV; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpeedupArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnergyTimeArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Writes `<prefix>.dat` and `<prefix>.gp`.
    #[arg(long, default_value = "energy_time")]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    n: u32,
    /// Output rows as `start..end`; defaults to the 5 middle rows.
    #[arg(long, value_parser = parse_rows)]
    rows: Option<Range<u32>>,
    /// Emit a C store on every k step instead of once per output element.
    #[arg(long)]
    c_per_step: bool,
}

impl TraceArgs {
    fn resolve(&self) -> Result<(CurveOrder, Range<u32>, TraceOptions), Failure> {
        let order = CurveOrder::new(self.n).map_err(usage)?;
        let rows = self.rows.clone().unwrap_or_else(|| cachesim::middle_rows(order, 5));
        let c_access = if self.c_per_step {
            CAccess::PerStep
        } else {
            CAccess::InRegister
        };
        Ok((order, rows, TraceOptions { c_access, base: 0 }))
    }
}

#[derive(Args)]
struct SimcacheArgs {
    #[command(flatten)]
    trace: TraceArgs,
    #[arg(long, value_delimiter = ',', default_value = "rowmajor,morton,hilbert")]
    layouts: Vec<LayoutKind>,
    /// Hierarchy JSON (`{"levels":[{"line_bytes":..,"sets":..,"associativity":..}]}`).
    #[arg(long, conflicts_with = "desk_scale")]
    hierarchy: Option<PathBuf>,
    /// Use the 32 KiB L1 + 256 KiB last-level hierarchy instead of the E5-2670 one.
    #[arg(long)]
    desk_scale: bool,
}

#[derive(Args)]
struct TraceDumpArgs {
    #[command(flatten)]
    trace: TraceArgs,
    #[arg(long)]
    layout: LayoutKind,
    #[arg(long, short)]
    out: PathBuf,
}

fn parse_rows(s: &str) -> Result<Range<u32>, String> {
    let (a, b) = s.split_once("..").ok_or("expected start..end")?;
    let start = a.trim().parse().map_err(|e| format!("{e}"))?;
    let end = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok(start..end)
}

enum Failure {
    Usage(String),
    Runtime(String),
    EnergyUnavailable(String),
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn write_output(path: Option<&Path>, contents: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, contents).map_err(|e| runtime(format!("{}: {e}", p.display()))),
        None => io::stdout().write_all(contents).map_err(runtime),
    }
}

fn read_rows(path: &Path) -> Result<Vec<bench::ResultRow>, Failure> {
    let file = File::open(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    bench::read_bench_csv(file).map_err(runtime)
}

fn cmd_codec(args: CodecArgs) -> Result<(), Failure> {
    let order = CurveOrder::new(args.n).map_err(usage)?;
    let query = match (args.y, args.x, args.index) {
        (Some(y), Some(x), None) => CodecQuery::Encode(Coord2::new(y, x)),
        (None, None, Some(i)) => CodecQuery::Decode(LinearIndex(i)),
        _ => return Err(usage("give either --y and --x, or --index")),
    };
    let text = analysis::codec_query(args.layout, order, query).map_err(usage)?;
    write_output(None, text.as_bytes())
}

fn bench_config(args: &BenchArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text).map_err(usage)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &args.sizes {
        cfg.sizes = v.clone();
    }
    if let Some(v) = &args.layouts {
        cfg.layouts = v.clone();
    }
    if let Some(v) = &args.workers {
        cfg.workers = v.clone();
    }
    if let Some(v) = args.reps {
        cfg.repetitions = v;
    }
    if let Some(v) = args.warmup {
        cfg.warmup = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.rate_hz {
        cfg.rate_hz = v;
    }
    cfg.energy |= args.energy || args.require_energy;
    cfg.require_energy |= args.require_energy;
    cfg.no_timing |= args.no_timing;
    Ok(cfg)
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let cfg = bench_config(&args)?;
    let mut warnings = Vec::new();
    let meter = bench::meter_for(&cfg, &mut warnings).map_err(|e| match e {
        BenchError::EnergyUnavailable(_) => Failure::EnergyUnavailable(e.to_string()),
        BenchError::Energy(_) => runtime(e),
        other => usage(other),
    })?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let sink = SampleSink {
        dir: args.samples_dir.clone(),
    };
    let out = bench::run_bench(&cfg, &meter, &sink).map_err(|e| match e {
        BenchError::Config(_) | BenchError::Codec(_) => usage(e),
        other => runtime(other),
    })?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let mut buf = Vec::new();
    bench::write_bench_csv(&out.rows, &mut buf).map_err(runtime)?;
    write_output(args.out.as_deref(), &buf)
}

fn cmd_speedup(args: SpeedupArgs) -> Result<(), Failure> {
    let rows = read_rows(&args.input)?;
    let table = analysis::speedup_table(&rows).map_err(runtime)?;
    write_output(args.out.as_deref(), analysis::render_speedup_csv(&table).as_bytes())
}

fn cmd_energy_time(args: EnergyTimeArgs) -> Result<(), Failure> {
    let rows = read_rows(&args.input)?;
    let series = analysis::energy_time(&rows).map_err(runtime)?;
    let dat_path = args.out_prefix.with_extension("dat");
    let gp_path = args.out_prefix.with_extension("gp");
    let file_name = |p: &Path| p.file_name().unwrap_or_default().to_string_lossy().into_owned();
    let png = file_name(&args.out_prefix.with_extension("png"));
    let dat = analysis::render_energy_dat(&series);
    let gp = analysis::render_energy_gnuplot(&series, &file_name(&dat_path), &png);
    write_output(Some(&dat_path), dat.as_bytes())?;
    write_output(Some(&gp_path), gp.as_bytes())?;
    eprintln!("wrote {} and {}", dat_path.display(), gp_path.display());
    Ok(())
}

fn cmd_simcache(args: SimcacheArgs) -> Result<(), Failure> {
    let (order, rows, opts) = args.trace.resolve()?;
    let cfg = match (&args.hierarchy, args.desk_scale) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            HierarchyConfig::from_json(&text).map_err(usage)?
        }
        (None, true) => HierarchyConfig::desk_scale(),
        (None, false) => HierarchyConfig::e5_2670(),
    };
    let results = cachesim::compare_layouts(order, &args.layouts, &cfg, rows.clone(), opts).map_err(usage)?;
    write_output(None, analysis::render_simcache(order, &rows, &results).as_bytes())
}

fn cmd_trace_dump(args: TraceDumpArgs) -> Result<(), Failure> {
    let (order, rows, opts) = args.trace.resolve()?;
    let trace = cachesim::matmul_trace(order, args.layout, rows, opts).map_err(usage)?;
    let file = File::create(&args.out).map_err(|e| runtime(format!("{}: {e}", args.out.display())))?;
    let count = cachesim::write_trace(trace, file).map_err(runtime)?;
    eprintln!("wrote {count} records to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Codec(a) => cmd_codec(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Speedup(a) => cmd_speedup(a),
        Command::EnergyTime(a) => cmd_energy_time(a),
        Command::Simcache(a) => cmd_simcache(a),
        Command::TraceDump(a) => cmd_trace_dump(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::EnergyUnavailable(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
