//! Ratio statistics at 4 KiB and 64 KiB chunking.
//!
//! `cargo run --release --example corpus_bench [corpus-dir]`
//!
//! Without an argument the built-in mini-corpus is used. The Silesia corpus
//! (https://sun.aei.polsl.pl/~sdeor/index.php?page=silesia) can be extracted
//! into a directory and passed instead.

use dpzip::bench::{self, BenchOptions, Corpus};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = match std::env::args_os().nth(1) {
        Some(path) => Corpus::load(path.as_ref())?,
        None => bench::mini_corpus(),
    };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    for chunk_log in [12, 16] {
        let opts = BenchOptions { chunk_log, jobs, ..BenchOptions::default() };
        let report = bench::bench_run(&corpus, &opts)?;
        println!("chunk size {} bytes", 1u32 << chunk_log);
        print!("{}", report.to_table());
        println!();
    }
    Ok(())
}
