//! Analytical cost of running a block through the hardware engine.
//!
//! The datapath consumes 8 bytes per cycle, the Huffman limiter adds its
//! traced cycles, and a fixed fill term covers pipeline setup. The fill
//! constant is chosen so a 4 KiB page with the worst-case limiter schedule
//! lands on 2000 cycles, i.e. 2 µs at 1 GHz.

use serde::Serialize;

use crate::huffman::CanonizationTrace;

pub const BYTES_PER_CYCLE: u64 = 8;
pub const DEFAULT_CLOCK_HZ: f64 = 1e9;
pub const DEFAULT_OVERHEAD_CYCLES: u64 = 1214;
pub const DEFAULT_ENGINES: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EngineConfig {
    pub clock_hz: f64,
    pub overhead_cycles: u64,
    /// Engines working on independent pages in parallel.
    pub engines: u32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            clock_hz: DEFAULT_CLOCK_HZ,
            overhead_cycles: DEFAULT_OVERHEAD_CYCLES,
            engines: DEFAULT_ENGINES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleEstimate {
    pub bytes: u64,
    pub pipeline_cycles: u64,
    pub huffman_cycles: u64,
    pub overhead_cycles: u64,
    pub clock_hz: f64,
}

impl CycleEstimate {
    pub fn total_cycles(&self) -> u64 {
        self.pipeline_cycles + self.huffman_cycles + self.overhead_cycles
    }

    pub fn latency_us(&self) -> f64 {
        self.total_cycles() as f64 / self.clock_hz * 1e6
    }

    /// Bytes per second for this one operation, in GB/s (10^9 bytes).
    pub fn throughput_gbps(&self) -> f64 {
        self.bytes as f64 / (self.latency_us() * 1e-6) / 1e9
    }
}

pub fn estimate(n_bytes: u64, trace: &CanonizationTrace) -> CycleEstimate {
    estimate_with(n_bytes, trace, &EngineConfig::default())
}

pub fn estimate_with(n_bytes: u64, trace: &CanonizationTrace, cfg: &EngineConfig) -> CycleEstimate {
    CycleEstimate {
        bytes: n_bytes,
        pipeline_cycles: n_bytes.div_ceil(BYTES_PER_CYCLE),
        huffman_cycles: u64::from(trace.total_cycles()),
        overhead_cycles: cfg.overhead_cycles,
        clock_hz: cfg.clock_hz,
    }
}

/// Per-engine throughput once fill and table builds are hidden by streaming.
pub fn steady_throughput_gbps(cfg: &EngineConfig) -> f64 {
    BYTES_PER_CYCLE as f64 * cfg.clock_hz / 1e9
}

pub fn device_throughput_gbps(cfg: &EngineConfig) -> f64 {
    steady_throughput_gbps(cfg) * f64::from(cfg.engines)
}

/// Modeled time for pages streamed back to back through the engines; the
/// pipeline fill is paid once per run rather than once per page.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ModeledRun {
    pub bytes: u64,
    /// Datapath and limiter cycles summed over pages.
    pub busy_cycles: u64,
    pub fill_cycles: u64,
}

impl ModeledRun {
    pub fn add(&mut self, est: &CycleEstimate) {
        self.bytes += est.bytes;
        self.busy_cycles += est.pipeline_cycles + est.huffman_cycles;
        self.fill_cycles = self.fill_cycles.max(est.overhead_cycles);
    }

    pub fn merge(&mut self, other: &ModeledRun) {
        self.bytes += other.bytes;
        self.busy_cycles += other.busy_cycles;
        self.fill_cycles = self.fill_cycles.max(other.fill_cycles);
    }

    /// Device throughput in GB/s with pages spread evenly over the engines.
    pub fn throughput_gbps(&self, cfg: &EngineConfig) -> f64 {
        let cycles = self.busy_cycles as f64 / f64::from(cfg.engines) + self.fill_cycles as f64;
        if cycles == 0.0 {
            return 0.0;
        }
        self.bytes as f64 / (cycles / cfg.clock_hz) / 1e9
    }
}
