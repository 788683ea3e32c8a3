//! Modeled engine latency and throughput for a few block sizes.
//!
//! `cargo run --example cycle_estimate`

use dpzip::cycle_model::{self, EngineConfig};
use dpzip::format::{self, Policy};
use dpzip::huffman::CanonizationTrace;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = EngineConfig::default();
    println!("{:>8} {:>8} {:>10} {:>10}", "bytes", "cycles", "latency us", "GB/s");
    for bytes in [512u64, 4096, 16384, 65536] {
        let est = cycle_model::estimate(bytes, &CanonizationTrace::worst_case());
        println!("{bytes:>8} {:>8} {:>10.3} {:>10.2}", est.total_cycles(), est.latency_us(), est.throughput_gbps());
    }
    println!(
        "steady state: {} GB/s per engine, {} GB/s across {} engines",
        cycle_model::steady_throughput_gbps(&cfg),
        cycle_model::device_throughput_gbps(&cfg),
        cfg.engines
    );

    // The limiter usually finishes well inside its worst-case budget.
    let page = dpzip::bench::gen_data(0.5, 4096, 3);
    let (_, stats) = format::compress_chunk_detailed(&page, Policy::Auto)?;
    let trace = stats.traces[0].unwrap_or_default();
    let est = cycle_model::estimate(4096, &trace);
    println!("typical page: limiter {} cycles, latency {:.3} us", trace.total_cycles(), est.latency_us());
    Ok(())
}
