//! Command-line front end shared by the `dpzip` binary.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 corrupt data,
//! 3 I/O failure. Files named with `-o` are written to a temporary file in
//! the same directory and renamed into place only on success.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{self, BenchOptions, Corpus};
use crate::format::{self, Policy, StreamOptions};
use crate::ftl::{self, Ftl, FtlError, NandGeometry, TraceOptions};

#[derive(Debug, Parser)]
#[command(name = "dpzip", version, about = "Page-granular LZ77 + entropy compressor and SSD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compress a file (or stdin) into a framed stream.
    Compress(CompressArgs),
    /// Restore the original bytes of a framed stream.
    Decompress(DecompressArgs),
    /// Ratio and throughput statistics over a corpus.
    Bench(BenchArgs),
    /// Empirical byte entropy in bits per symbol.
    Entropy(EntropyArgs),
    /// Synthetic data with a target compression ratio.
    Gen(GenArgs),
    /// Replay a trace on the flash translation layer simulator.
    Ftl(FtlArgs),
}

#[derive(Debug, Args)]
struct OutputArg {
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CodecArgs {
    /// Encoding policy: auto, raw, huf, fse or lz.
    #[arg(long, default_value = "auto")]
    mode: Policy,
    /// log2 of the chunk size.
    #[arg(long, default_value_t = format::DEFAULT_CHUNK_LOG, value_parser = clap::value_parser!(u8).range(12..=16))]
    chunk_log: u8,
    /// Worker threads.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=256))]
    jobs: u32,
}

#[derive(Debug, Args)]
struct CompressArgs {
    /// Input file; standard input when omitted or `-`.
    input: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArg,
    #[command(flatten)]
    codec: CodecArgs,
    /// Append a CRC32 to every chunk record.
    #[arg(long)]
    crc: bool,
}

#[derive(Debug, Args)]
struct DecompressArgs {
    input: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Corpus file or directory; the built-in mini-corpus when omitted.
    corpus: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArg,
    #[command(flatten)]
    codec: CodecArgs,
    /// Emit JSON instead of a table.
    #[arg(long)]
    json: bool,
    /// Leave out wall-clock throughput so reports are reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Args)]
struct EntropyArgs {
    input: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArg,
    /// Emit the full histogram as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Target compression ratio in 0..=1.
    #[arg(long, value_parser = parse_unit)]
    ratio: f64,
    /// Bytes to generate.
    #[arg(long)]
    len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Debug, Args)]
struct FtlArgs {
    /// Trace file of `W <lpn> <pattern>`, `R <lpn>` and `GC` lines.
    #[arg(long, conflicts_with = "random_ops")]
    trace: Option<PathBuf>,
    /// Generate a random trace of this many operations instead.
    #[arg(long)]
    random_ops: Option<usize>,
    /// Seed for generated traces.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the replayed trace to this file.
    #[arg(long)]
    emit_trace: Option<PathBuf>,
    #[arg(long, default_value_t = 4096)]
    page_size: usize,
    #[arg(long, default_value_t = 64)]
    pages_per_block: u32,
    #[arg(long, default_value_t = 128)]
    blocks: u32,
    /// Over-provisioning fraction.
    #[arg(long, default_value_t = 0.2)]
    op: f64,
    /// Exposed capacity as a multiple of user capacity.
    #[arg(long, default_value_t = 1.0)]
    capacity: f64,
    /// Return zero pages for reads of unwritten lpns.
    #[arg(long)]
    zero_unmapped: bool,
    /// Verify mapping invariants after every operation.
    #[arg(long)]
    check_invariants: bool,
    /// Emit the report as JSON.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    out: OutputArg,
}

fn parse_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside 0..=1"))
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Corrupt(String),
    #[error("{0}")]
    Io(#[from] io::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Corrupt(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::Io(io) => CliError::Io(io),
            e if e.is_corruption() => CliError::Corrupt(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<FtlError> for CliError {
    fn from(e: FtlError) -> Self {
        match e {
            FtlError::Codec(inner) => inner.into(),
            FtlError::InvariantViolated(_) => CliError::Corrupt(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("dpzip: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Compress(a) => compress(a),
        Command::Decompress(a) => decompress(a),
        Command::Bench(a) => run_bench(a),
        Command::Entropy(a) => entropy(a),
        Command::Gen(a) => gen(a),
        Command::Ftl(a) => run_ftl(a),
    }
}

fn open_input(path: Option<&Path>) -> io::Result<Box<dyn Read>> {
    match path {
        None => Ok(Box::new(io::stdin().lock())),
        Some(p) if p.as_os_str() == "-" => Ok(Box::new(io::stdin().lock())),
        Some(p) => Ok(Box::new(BufReader::new(File::open(p)?))),
    }
}

fn read_input(path: Option<&Path>) -> io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    open_input(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

/// Runs `body` against the output; a named file only appears if it succeeds.
fn with_output<F>(path: Option<&Path>, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    match path {
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            body(&mut w)?;
            w.flush()?;
            Ok(())
        }
        Some(p) => {
            let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let tmp = tempfile::NamedTempFile::new_in(dir)?;
            let mut w = BufWriter::new(tmp);
            body(&mut w)?;
            let tmp = w.into_inner().map_err(|e| e.into_error())?;
            tmp.persist(p).map_err(|e| e.error)?;
            Ok(())
        }
    }
}

fn compress(a: CompressArgs) -> Result<(), CliError> {
    let opts = StreamOptions {
        chunk_log: a.codec.chunk_log,
        policy: a.codec.mode,
        crc: a.crc,
        jobs: a.codec.jobs as usize,
    };
    let input = open_input(a.input.as_deref())?;
    with_output(a.out.output.as_deref(), |w| {
        format::compress_stream(input, w, &opts)?;
        Ok(())
    })
}

fn decompress(a: DecompressArgs) -> Result<(), CliError> {
    let input = open_input(a.input.as_deref())?;
    with_output(a.out.output.as_deref(), |w| {
        format::decompress_stream(input, w)?;
        Ok(())
    })
}

fn run_bench(a: BenchArgs) -> Result<(), CliError> {
    let corpus = match &a.corpus {
        Some(p) => Corpus::load(p)?,
        None => bench::mini_corpus(),
    };
    if corpus.total_bytes() == 0 {
        return Err(CliError::Usage("corpus is empty".into()));
    }
    let opts = BenchOptions {
        policy: a.codec.mode,
        chunk_log: a.codec.chunk_log,
        jobs: a.codec.jobs as usize,
        ..BenchOptions::default()
    };
    let mut report = bench::bench_run(&corpus, &opts)?;
    if a.no_timing {
        report = report.without_timing();
    }
    let text = if a.json { report.to_json() + "\n" } else { report.to_table() };
    with_output(a.out.output.as_deref(), |w| Ok(w.write_all(text.as_bytes())?))
}

fn entropy(a: EntropyArgs) -> Result<(), CliError> {
    let data = read_input(a.input.as_deref())?;
    let report = bench::shannon_entropy(&data)?;
    let text = if a.json {
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
    } else {
        format!("{:.4}\n", report.entropy)
    };
    with_output(a.out.output.as_deref(), |w| Ok(w.write_all(text.as_bytes())?))
}

fn gen(a: GenArgs) -> Result<(), CliError> {
    let data = bench::gen_data(a.ratio, a.len, a.seed);
    with_output(a.out.output.as_deref(), |w| Ok(w.write_all(&data)?))
}

fn run_ftl(a: FtlArgs) -> Result<(), CliError> {
    let geometry = NandGeometry {
        page_size: a.page_size,
        pages_per_block: a.pages_per_block,
        block_count: a.blocks,
        op_fraction: a.op,
    };
    let mut sim = Ftl::new(geometry)?;
    let lpns = sim.configure_capacity(a.capacity)?;
    sim.set_zero_unmapped(a.zero_unmapped);
    let ops = match (&a.trace, a.random_ops) {
        (Some(path), _) => ftl::parse_trace(&std::fs::read_to_string(path)?)?,
        (None, Some(n)) => ftl::random_trace(n, lpns, a.seed),
        (None, None) => return Err(CliError::Usage("ftl needs --trace or --random-ops".into())),
    };
    if let Some(path) = &a.emit_trace {
        let text = ftl::format_trace(&ops);
        with_output(Some(path), |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    let report = ftl::run_trace(&mut sim, &ops, TraceOptions { check_invariants: a.check_invariants })?;
    let text = if a.json {
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
    } else {
        ftl_summary(&report)
    };
    with_output(a.out.output.as_deref(), |w| Ok(w.write_all(text.as_bytes())?))?;
    if report.mismatches > 0 {
        return Err(CliError::Corrupt(format!("{} reads disagreed with the shadow map", report.mismatches)));
    }
    Ok(())
}

fn ftl_summary(r: &ftl::TraceReport) -> String {
    let m = &r.metrics;
    let opt = |v: Option<f64>| v.map_or_else(|| "null".to_string(), |v| format!("{v:.4}"));
    let rows = [
        ("ops", r.ops.to_string()),
        ("writes", r.writes.to_string()),
        ("reads", r.reads.to_string()),
        ("verified reads", r.verified_reads.to_string()),
        ("mismatches", r.mismatches.to_string()),
        ("rejected writes (no space)", r.rejected_writes.to_string()),
        ("unmapped reads", r.unmapped_reads.to_string()),
        ("gc requests", r.gc_requests.to_string()),
        ("gc futile", r.gc_futile.to_string()),
        ("gc runs", m.gc_runs.to_string()),
        ("host bytes written", m.host_bytes_written.to_string()),
        ("nand bytes programmed", m.nand_bytes_programmed.to_string()),
        ("relocated bytes", m.relocated_bytes.to_string()),
        ("waf", opt(m.waf)),
        ("raf", opt(m.raf)),
        ("max pages per read", m.max_pages_per_read.to_string()),
        ("records over two pages", m.records_over_two_pages.to_string()),
        ("space utilization", format!("{:.4}", m.space_utilization)),
        ("state digest", r.state_digest.clone()),
    ];
    rows.iter().map(|(k, v)| format!("{k:<28} {v}\n")).collect()
}
