//! Corpus handling, synthetic data and ratio statistics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cycle_model::{self, EngineConfig, ModeledRun};
use crate::error::{Error, Result};
use crate::format::{self, Policy, PAGE_SIZE};

/// Empirical byte entropy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyReport {
    /// Bits per symbol, `-Σ p log2 p`.
    pub entropy: f64,
    pub len: u64,
    pub counts: Vec<u64>,
}

impl EntropyReport {
    pub fn probability(&self, byte: u8) -> f64 {
        self.counts[byte as usize] as f64 / self.len as f64
    }
}

pub fn shannon_entropy(bytes: &[u8]) -> Result<EntropyReport> {
    if bytes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut counts = vec![0u64; 256];
    for &b in bytes {
        counts[b as usize] += 1;
    }
    let n = bytes.len() as f64;
    let entropy = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0);
    Ok(EntropyReport {
        entropy,
        len: bytes.len() as u64,
        counts,
    })
}

// ---------------------------------------------------------------------------
// synthetic data

const RUNS_PER_PAGE: usize = 8;
const MOTIF_LEN: usize = 16;
const CALIBRATION_PAGES: u64 = 32;

fn page_rng(seed: u64, page: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ page.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn motif(seed: u64) -> [u8; MOTIF_LEN] {
    let mut m = [0u8; MOTIF_LEN];
    ChaCha8Rng::seed_from_u64(seed.rotate_left(17) ^ 0x006d_6f74_6966).fill_bytes(&mut m);
    m
}

/// One page with `random` seeded bytes spread over eight runs; the rest is a
/// repeating motif.
fn gen_page(len: usize, random: usize, seed: u64, page: u64, motif: &[u8; MOTIF_LEN]) -> Vec<u8> {
    let mut rng = page_rng(seed, page);
    let mut out: Vec<u8> = (0..len).map(|i| motif[i % MOTIF_LEN]).collect();
    let random = random.min(len);
    let run_span = len.div_ceil(RUNS_PER_PAGE);
    let mut left = random;
    for run in 0..RUNS_PER_PAGE {
        let start = run * run_span;
        if start >= len {
            break;
        }
        let span = run_span.min(len - start);
        let runs_left = RUNS_PER_PAGE - run;
        let take = left.div_ceil(runs_left).min(span);
        rng.fill_bytes(&mut out[start..start + take]);
        left -= take;
    }
    out
}

fn page_ratio(data: &[u8]) -> (usize, usize) {
    let rec = format::compress_chunk(data, Policy::Auto).expect("non-empty page");
    (rec.stored_len(format::DEFAULT_CHUNK_LOG), data.len())
}

/// Random bytes per full page that keeps the ratio at or below `target`.
///
/// The bound is checked on the sample mean plus three standard errors so
/// that long outputs, whose pages scatter around the mean, stay below the
/// target as well.
fn calibrate(target: f64, seed: u64) -> usize {
    if target >= 1.0 {
        return PAGE_SIZE;
    }
    let m = motif(seed);
    let ratio_at = |random: usize| {
        let ratios: Vec<f64> = (0..CALIBRATION_PAGES)
            .map(|p| {
                let (stored, orig) = page_ratio(&gen_page(PAGE_SIZE, random, seed, p, &m));
                stored as f64 / orig as f64
            })
            .collect();
        let n = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / n;
        let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        mean + 3.0 * (var / n).sqrt()
    };
    let (mut lo, mut hi) = (0usize, PAGE_SIZE);
    if ratio_at(lo) > target {
        return 0;
    }
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if ratio_at(mid) <= target {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

/// Deterministic generator whose 4 KiB compression ratio tracks a target.
///
/// Each page mixes seeded random runs with a repeating motif; the share of
/// random bytes is found by bisection against the real page pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataGen {
    random_per_page: usize,
    seed: u64,
    motif: [u8; MOTIF_LEN],
}

impl DataGen {
    pub fn new(target: f64, seed: u64) -> Self {
        DataGen {
            random_per_page: calibrate(target.clamp(0.0, 1.0), seed),
            seed,
            motif: motif(seed),
        }
    }

    /// Same calibration, different content.
    pub fn reseed(&self, seed: u64) -> Self {
        DataGen {
            random_per_page: self.random_per_page,
            seed,
            motif: motif(seed),
        }
    }

    /// Seeded random bytes in every full page.
    pub fn random_per_page(&self) -> usize {
        self.random_per_page
    }

    pub fn page(&self, index: u64, len: usize) -> Vec<u8> {
        let random = (self.random_per_page * len).div_ceil(PAGE_SIZE);
        gen_page(len, random, self.seed, index, &self.motif)
    }

    pub fn generate(&self, len: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(len);
        let mut index = 0u64;
        while out.len() < len {
            let n = PAGE_SIZE.min(len - out.len());
            out.extend_from_slice(&self.page(index, n));
            index += 1;
        }
        out
    }
}

pub fn gen_data(target: f64, len: usize, seed: u64) -> Vec<u8> {
    DataGen::new(target, seed).generate(len)
}

/// Aggregate stored/original ratio of `data` cut into 4 KiB chunks.
pub fn measured_ratio(data: &[u8], policy: Policy) -> f64 {
    let (stored, orig) = data
        .chunks(PAGE_SIZE)
        .map(|c| {
            let rec = format::compress_chunk(c, policy).expect("non-empty chunk");
            (rec.stored_len(format::DEFAULT_CHUNK_LOG), c.len())
        })
        .fold((0usize, 0usize), |a, b| (a.0 + b.0, a.1 + b.1));
    stored as f64 / orig.max(1) as f64
}

// ---------------------------------------------------------------------------
// corpora

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusFile {
    pub name: String,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub files: Vec<CorpusFile>,
}

/// One chunk of one corpus file; files are chunked independently and the
/// last chunk of a file may be short.
#[derive(Debug, Clone, Copy)]
pub struct Chunk<'a> {
    pub file: usize,
    pub index: usize,
    pub data: &'a [u8],
}

impl Corpus {
    /// A file, or every regular file under a directory in path order.
    pub fn load(path: &Path) -> Result<Self> {
        let meta = std::fs::metadata(path)?;
        let paths: Vec<PathBuf> = if meta.is_file() {
            vec![path.to_path_buf()]
        } else {
            let mut v: Vec<PathBuf> = walkdir::WalkDir::new(path)
                .sort_by_file_name()
                .into_iter()
                .filter_map(|e| e.ok())
                .filter(|e| e.file_type().is_file())
                .map(|e| e.into_path())
                .collect();
            v.sort();
            v
        };
        let files = paths
            .into_iter()
            .map(|p| {
                let name = p
                    .strip_prefix(path)
                    .ok()
                    .filter(|r| !r.as_os_str().is_empty())
                    .unwrap_or(&p)
                    .to_string_lossy()
                    .into_owned();
                Ok(CorpusFile { name, data: std::fs::read(&p)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus { files })
    }

    pub fn total_bytes(&self) -> usize {
        self.files.iter().map(|f| f.data.len()).sum()
    }
}

pub fn chunk_corpus(corpus: &Corpus, chunk_log: u8) -> impl Iterator<Item = Chunk<'_>> {
    let size = 1usize << chunk_log;
    corpus.files.iter().enumerate().flat_map(move |(file, f)| {
        f.data
            .chunks(size)
            .enumerate()
            .map(move |(index, data)| Chunk { file, index, data })
    })
}

pub const MINI_CORPUS_BYTES: usize = 1 << 20;

/// Built-in 1 MiB mixed corpus: prose, markup, fixed-width records, a
/// smooth raster and seeded random bytes.
pub fn mini_corpus() -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d69_6e69);
    let files = vec![
        CorpusFile { name: "prose.txt".into(), data: prose(&mut rng, 320 << 10) },
        CorpusFile { name: "markup.xml".into(), data: markup(&mut rng, 192 << 10) },
        CorpusFile { name: "records.bin".into(), data: records(&mut rng, 256 << 10) },
        CorpusFile { name: "raster.img".into(), data: raster(&mut rng, 128 << 10) },
        CorpusFile { name: "noise.bin".into(), data: noise(&mut rng, 128 << 10) },
    ];
    debug_assert_eq!(files.iter().map(|f| f.data.len()).sum::<usize>(), MINI_CORPUS_BYTES);
    Corpus { files }
}

fn vocabulary(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    const CONSONANTS: &[u8] = b"bcdfghklmnprstvwz";
    const VOWELS: &[u8] = b"aeiou";
    (0..n)
        .map(|_| {
            let mut word = String::new();
            for _ in 0..rng.random_range(1..4) {
                word.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
                word.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
            }
            if rng.random_bool(0.4) {
                word.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
            }
            word
        })
        .collect()
}

/// Index with a roughly Zipfian preference for small values.
fn zipf_index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let u: f64 = rng.random();
    ((n as f64).powf(u) - 1.0) as usize % n
}

fn prose(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    let words = vocabulary(rng, 800);
    let mut out = String::with_capacity(len + 64);
    let mut sentence = 0;
    while out.len() < len {
        let w = &words[zipf_index(rng, words.len())];
        if sentence == 0 {
            let mut c = w.chars();
            if let Some(first) = c.next() {
                out.push(first.to_ascii_uppercase());
                out.push_str(c.as_str());
            }
        } else {
            out.push_str(w);
        }
        sentence += 1;
        if sentence > rng.random_range(6..18) {
            out.push_str(if rng.random_bool(0.1) { "?\n" } else { ". " });
            sentence = 0;
        } else if rng.random_bool(0.08) {
            out.push_str(", ");
        } else {
            out.push(' ');
        }
    }
    out.truncate(len);
    out.into_bytes()
}

fn markup(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    let tags = ["entry", "author", "title", "volume", "pages", "year", "note"];
    let words = vocabulary(rng, 200);
    let mut out = String::with_capacity(len + 256);
    out.push_str("<?xml version=\"1.0\"?>\n<catalog>\n");
    let mut id = 1000u32;
    while out.len() < len {
        id += rng.random_range(1..5);
        let _ = writeln!(out, "  <entry id=\"{id}\" lang=\"en\">");
        for tag in &tags[1..] {
            if rng.random_bool(0.8) {
                let body: Vec<&str> = (0..rng.random_range(1..5))
                    .map(|_| words[zipf_index(rng, words.len())].as_str())
                    .collect();
                let _ = writeln!(out, "    <{tag}>{}</{tag}>", body.join(" "));
            }
        }
        let _ = writeln!(out, "    <year>{}</year>\n  </entry>", rng.random_range(1950..2025));
    }
    out.truncate(len);
    out.into_bytes()
}

fn records(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + 32);
    let mut id = 1u32;
    let mut balance = 10_000i32;
    let codes = [*b"ACCT", *b"XFER", *b"DEPO", *b"WDRL"];
    while out.len() < len {
        id += 1;
        balance += rng.random_range(-500..500);
        out.extend_from_slice(&id.to_le_bytes());
        out.extend_from_slice(&codes[zipf_index(rng, codes.len())]);
        out.extend_from_slice(&balance.to_le_bytes());
        out.extend_from_slice(&(rng.random_range(0..16u16)).to_le_bytes());
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&(id as f32 * 0.25).to_le_bytes());
        out.extend_from_slice(&(1_600_000_000u32 + id * 60).to_le_bytes());
        out.extend_from_slice(&rng.random::<u32>().to_le_bytes()[..2]);
        out.extend_from_slice(&[0xff; 6]);
    }
    out.truncate(len);
    out
}

fn raster(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    let width = 512usize;
    (0..len)
        .map(|i| {
            let (x, y) = (i % width, i / width);
            let base = ((x / 4 + y / 2) % 256) as u8;
            if rng.random_bool(0.15) {
                base.wrapping_add(rng.random_range(0..4))
            } else {
                base
            }
        })
        .collect()
}

fn noise(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    let mut v = vec![0u8; len];
    rng.fill_bytes(&mut v);
    v
}

// ---------------------------------------------------------------------------
// statistics and reports

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioStats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub max: f64,
}

/// Linear interpolation between closest ranks.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let (lo, hi) = (rank.floor() as usize, rank.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

pub fn ratio_stats(ratios: &[f64]) -> Option<RatioStats> {
    if ratios.is_empty() {
        return None;
    }
    let mut s = ratios.to_vec();
    s.sort_by(f64::total_cmp);
    Some(RatioStats {
        count: s.len(),
        mean: s.iter().sum::<f64>() / s.len() as f64,
        min: s[0],
        p5: percentile(&s, 5.0),
        p25: percentile(&s, 25.0),
        p50: percentile(&s, 50.0),
        p75: percentile(&s, 75.0),
        p95: percentile(&s, 95.0),
        max: s[s.len() - 1],
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BenchOptions {
    pub policy: Policy,
    pub chunk_log: u8,
    pub jobs: usize,
    pub engine: EngineConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            policy: Policy::Auto,
            chunk_log: format::DEFAULT_CHUNK_LOG,
            jobs: 1,
            engine: EngineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub file: String,
    pub bytes: u64,
    pub chunks: usize,
    /// Stored bytes over original bytes for the whole file.
    pub aggregate_ratio: f64,
    pub ratios: RatioStats,
    pub mean_entropy: f64,
    /// Modeled device throughput across all engines.
    pub modeled_gbps: f64,
    /// Measured software throughput; `None` once timing is stripped.
    pub wall_mbps: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub options: BenchOptions,
    pub files: Vec<BenchRow>,
    pub total: BenchRow,
}

#[derive(Debug, Clone)]
struct ChunkResult {
    file: usize,
    orig: usize,
    stored: usize,
    entropy: f64,
    modeled: ModeledRun,
}

fn summarize(name: String, results: &[&ChunkResult], seconds: Option<f64>, engine: &EngineConfig) -> BenchRow {
    let bytes: usize = results.iter().map(|r| r.orig).sum();
    let stored: usize = results.iter().map(|r| r.stored).sum();
    let ratios: Vec<f64> = results.iter().map(|r| r.stored as f64 / r.orig as f64).collect();
    let mut modeled = ModeledRun::default();
    for r in results {
        modeled.merge(&r.modeled);
    }
    BenchRow {
        file: name,
        bytes: bytes as u64,
        chunks: results.len(),
        aggregate_ratio: stored as f64 / bytes.max(1) as f64,
        ratios: ratio_stats(&ratios).unwrap_or(RatioStats {
            count: 0,
            mean: 0.0,
            min: 0.0,
            p5: 0.0,
            p25: 0.0,
            p50: 0.0,
            p75: 0.0,
            p95: 0.0,
            max: 0.0,
        }),
        mean_entropy: results.iter().map(|r| r.entropy).sum::<f64>() / results.len().max(1) as f64,
        modeled_gbps: modeled.throughput_gbps(engine),
        wall_mbps: seconds.map(|s| bytes as f64 / s.max(1e-9) / 1e6),
    }
}

/// Compresses every chunk of `corpus` and reports per-file and total ratios.
pub fn bench_run(corpus: &Corpus, opts: &BenchOptions) -> Result<BenchReport> {
    if !(format::MIN_CHUNK_LOG..=format::MAX_CHUNK_LOG).contains(&opts.chunk_log) {
        return Err(Error::InvalidChunkLog(opts.chunk_log));
    }
    let chunks: Vec<Chunk<'_>> = chunk_corpus(corpus, opts.chunk_log).collect();
    let run_chunk = |c: &Chunk<'_>| -> Result<ChunkResult> {
        let (rec, stats) = format::compress_chunk_detailed(c.data, opts.policy)?;
        let mut modeled = ModeledRun::default();
        for (page, trace) in c.data.chunks(PAGE_SIZE).zip(&stats.traces) {
            let trace = trace.unwrap_or_default();
            modeled.add(&cycle_model::estimate_with(page.len() as u64, &trace, &opts.engine));
        }
        Ok(ChunkResult {
            file: c.file,
            orig: c.data.len(),
            stored: rec.stored_len(opts.chunk_log),
            entropy: shannon_entropy(c.data)?.entropy,
            modeled,
        })
    };

    let started = Instant::now();
    let results: Vec<ChunkResult> = if opts.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        pool.install(|| chunks.par_iter().map(run_chunk).collect::<Result<_>>())?
    } else {
        chunks.iter().map(run_chunk).collect::<Result<_>>()?
    };
    let elapsed = started.elapsed().as_secs_f64();
    let total_bytes = corpus.total_bytes().max(1) as f64;

    let files = corpus
        .files
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let rows: Vec<&ChunkResult> = results.iter().filter(|r| r.file == i).collect();
            // wall time is apportioned by size; only the total is measured directly
            let share = elapsed * f.data.len() as f64 / total_bytes;
            summarize(f.name.clone(), &rows, Some(share), &opts.engine)
        })
        .collect();
    let all: Vec<&ChunkResult> = results.iter().collect();
    let total = summarize("TOTAL".into(), &all, Some(elapsed), &opts.engine);
    Ok(BenchReport {
        options: *opts,
        files,
        total,
    })
}

impl BenchReport {
    pub fn without_timing(mut self) -> Self {
        for row in self.files.iter_mut().chain(std::iter::once(&mut self.total)) {
            row.wall_mbps = None;
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned table; modeled columns are separate from the measured one.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<24} {:>10} {:>7} {:>8} {:>8} {:>8} {:>8} {:>8} | {:>10} | {:>9}",
            "file", "bytes", "chunks", "ratio", "p25", "median", "p75", "entropy", "model GB/s", "wall MB/s"
        );
        for row in self.files.iter().chain(std::iter::once(&self.total)) {
            let wall = row.wall_mbps.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
            let _ = writeln!(
                out,
                "{:<24} {:>10} {:>7} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.3} | {:>10.2} | {:>9}",
                truncate_name(&row.file, 24),
                row.bytes,
                row.chunks,
                row.aggregate_ratio,
                row.ratios.p25,
                row.ratios.p50,
                row.ratios.p75,
                row.mean_entropy,
                row.modeled_gbps,
                wall
            );
        }
        out
    }
}

fn truncate_name(name: &str, width: usize) -> String {
    if name.chars().count() <= width {
        name.to_string()
    } else {
        let tail: String = name.chars().rev().take(width - 1).collect::<Vec<_>>().into_iter().rev().collect();
        format!("…{tail}")
    }
}
