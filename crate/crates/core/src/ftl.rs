//! Log-structured flash translation layer with inline compression.
//!
//! Host pages are compressed with the chunk pipeline and appended to a
//! single open NAND page. Records that do not fit continue on the next page
//! of the same block. Incompressible pages are stored page-aligned with
//! their header kept in the mapping entry, so they cost exactly one page.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::DataGen;
use crate::format::{self, ChunkRecord, Mode, Policy};

/// Host-visible page size; every write and read moves exactly this much.
pub const LOGICAL_PAGE: usize = 4096;
const CHUNK_LOG: u8 = format::DEFAULT_CHUNK_LOG;
/// GC runs before a host write while fewer free blocks remain.
pub const GC_TRIGGER_FREE_BLOCKS: usize = 3;
/// Free blocks host writes may not consume; they keep GC able to relocate.
const HOST_RESERVED_FREE_BLOCKS: usize = 1;
const ERASED: u8 = 0xff;

pub type Lpn = u32;

#[derive(Debug, thiserror::Error)]
pub enum FtlError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("lpn {lpn} out of range (exposed {exposed})")]
    LpnOutOfRange { lpn: Lpn, exposed: u32 },
    #[error("host writes must be {LOGICAL_PAGE} bytes, got {0}")]
    BadWriteLength(usize),
    #[error("no space")]
    NoSpace,
    #[error("unmapped read of lpn {0}")]
    UnmappedRead(Lpn),
    #[error("gc futile")]
    GcFutile,
    #[error("capacity factor {0} outside 1.0..=4.0")]
    InvalidCapacityFactor(f64),
    #[error("capacity change would drop mapped lpn {0}")]
    CapacityInUse(Lpn),
    #[error("invariant violated: {0}")]
    InvariantViolated(String),
    #[error(transparent)]
    Codec(#[from] crate::Error),
    #[error("trace line {line}: {msg}")]
    TraceParse { line: usize, msg: String },
}

pub type FtlResult<T> = std::result::Result<T, FtlError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NandGeometry {
    pub page_size: usize,
    pub pages_per_block: u32,
    pub block_count: u32,
    /// Share of physical pages withheld from user capacity.
    pub op_fraction: f64,
}

impl Default for NandGeometry {
    fn default() -> Self {
        NandGeometry {
            page_size: 4096,
            pages_per_block: 64,
            block_count: 128,
            op_fraction: 0.2,
        }
    }
}

impl NandGeometry {
    pub fn total_pages(&self) -> u64 {
        u64::from(self.pages_per_block) * u64::from(self.block_count)
    }

    pub fn block_bytes(&self) -> usize {
        self.page_size * self.pages_per_block as usize
    }

    pub fn user_pages(&self) -> u64 {
        (self.total_pages() as f64 * (1.0 - self.op_fraction)).floor() as u64
    }

    pub fn user_bytes(&self) -> u64 {
        self.user_pages() * self.page_size as u64
    }

    /// Host pages that fit the user capacity uncompressed.
    pub fn physical_lpns(&self) -> u32 {
        (self.user_bytes() / LOGICAL_PAGE as u64) as u32
    }

    pub fn validate(&self) -> FtlResult<()> {
        let bad = |m: &str| Err(FtlError::InvalidGeometry(m.to_string()));
        if self.page_size < 16 || self.pages_per_block == 0 || self.block_count == 0 {
            return bad("all dimensions must be positive and pages at least 16 bytes");
        }
        if !(0.05..=0.5).contains(&self.op_fraction) {
            return bad("over-provisioning fraction must lie in 0.05..=0.5");
        }
        if self.block_bytes() < 4 * max_record_bytes() {
            return bad("a block must hold at least four uncompressed host pages");
        }
        if (self.block_count as usize) < GC_TRIGGER_FREE_BLOCKS + 3 {
            return bad("too few blocks for garbage collection");
        }
        if self.physical_lpns() == 0 {
            return bad("user capacity below one host page");
        }
        Ok(())
    }
}

fn max_record_bytes() -> usize {
    LOGICAL_PAGE + format::record_header_len(CHUNK_LOG)
}

/// A byte range of one NAND page holding all or part of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PhysicalSegment {
    pub page_id: u32,
    pub byte_offset: u32,
    pub byte_len: u32,
    /// Set on every segment after the first.
    pub continuation: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MappingEntry {
    pub segments: Vec<PhysicalSegment>,
    /// `Raw` entries hold bare page bytes; others hold a serialized record.
    pub mode: Mode,
    pub orig_len: u32,
    pub stored_len: u32,
}

impl MappingEntry {
    pub fn is_raw(&self) -> bool {
        self.mode == Mode::Raw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
enum PageState {
    Erased,
    Open,
    Programmed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
enum BlockState {
    Free,
    Open,
    Sealed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct WritePointer {
    block: u32,
    page: u32,
    offset: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
struct Counters {
    host_writes: u64,
    host_reads: u64,
    host_bytes_written: u64,
    host_bytes_read: u64,
    nand_pages_programmed: u64,
    nand_pages_read: u64,
    relocated_bytes: u64,
    relocated_records: u64,
    gc_runs: u64,
    blocks_erased: u64,
    rejected_writes: u64,
    max_pages_per_read: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub geometry: NandGeometry,
    pub capacity_factor: f64,
    pub exposed_lpns: u32,
    pub mapped_lpns: u64,
    pub host_writes: u64,
    pub host_reads: u64,
    pub host_bytes_written: u64,
    pub host_bytes_read: u64,
    pub nand_pages_programmed: u64,
    pub nand_bytes_programmed: u64,
    pub nand_pages_read: u64,
    pub nand_bytes_read: u64,
    pub relocated_bytes: u64,
    pub relocated_records: u64,
    pub gc_runs: u64,
    pub blocks_erased: u64,
    pub rejected_writes: u64,
    /// NAND bytes programmed per host byte written; `None` before any write.
    pub waf: Option<f64>,
    /// Physical pages read per host read; `None` before any read.
    pub raf: Option<f64>,
    pub max_pages_per_read: u64,
    /// Live records spanning more than two pages.
    pub records_over_two_pages: u64,
    pub live_bytes: u64,
    pub user_capacity_bytes: u64,
    pub space_utilization: f64,
    pub free_blocks: usize,
    pub block_valid_bytes: Vec<u64>,
    /// Sealed blocks bucketed by valid fraction in tenths.
    pub valid_histogram: [u64; 10],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GcReport {
    pub victim: u32,
    pub relocated_records: u64,
    pub relocated_bytes: u64,
    pub freed_pages: u32,
}

#[derive(Debug, Clone)]
pub struct Ftl {
    geometry: NandGeometry,
    capacity_factor: f64,
    exposed_lpns: u32,
    zero_unmapped: bool,
    nand: Vec<u8>,
    page_state: Vec<PageState>,
    block_state: Vec<BlockState>,
    block_valid: Vec<u64>,
    block_lpns: Vec<BTreeSet<Lpn>>,
    free_blocks: VecDeque<u32>,
    open: Option<WritePointer>,
    map: Vec<Option<MappingEntry>>,
    live_bytes: u64,
    counters: Counters,
}

impl Ftl {
    pub fn new(geometry: NandGeometry) -> FtlResult<Self> {
        geometry.validate()?;
        let pages = geometry.total_pages() as usize;
        let blocks = geometry.block_count as usize;
        let exposed = geometry.physical_lpns();
        Ok(Ftl {
            geometry,
            capacity_factor: 1.0,
            exposed_lpns: exposed,
            zero_unmapped: false,
            nand: vec![ERASED; pages * geometry.page_size],
            page_state: vec![PageState::Erased; pages],
            block_state: vec![BlockState::Free; blocks],
            block_valid: vec![0; blocks],
            block_lpns: vec![BTreeSet::new(); blocks],
            free_blocks: (0..geometry.block_count).collect(),
            open: None,
            map: vec![None; exposed as usize],
            live_bytes: 0,
            counters: Counters::default(),
        })
    }

    pub fn geometry(&self) -> &NandGeometry {
        &self.geometry
    }

    pub fn exposed_lpns(&self) -> u32 {
        self.exposed_lpns
    }

    /// Reads of never-written pages return zeros instead of failing.
    pub fn set_zero_unmapped(&mut self, on: bool) {
        self.zero_unmapped = on;
    }

    /// Exposes `factor` times the user capacity as logical pages.
    pub fn configure_capacity(&mut self, factor: f64) -> FtlResult<u32> {
        if !(1.0..=4.0).contains(&factor) {
            return Err(FtlError::InvalidCapacityFactor(factor));
        }
        let exposed = (f64::from(self.geometry.physical_lpns()) * factor).floor() as u32;
        if let Some(lpn) = (exposed as usize..self.map.len()).find(|&l| self.map[l].is_some()) {
            return Err(FtlError::CapacityInUse(lpn as Lpn));
        }
        self.map.resize(exposed as usize, None);
        self.exposed_lpns = exposed;
        self.capacity_factor = factor;
        Ok(exposed)
    }

    pub fn mapping(&self, lpn: Lpn) -> Option<&MappingEntry> {
        self.map.get(lpn as usize).and_then(Option::as_ref)
    }

    pub fn live_bytes(&self) -> u64 {
        self.live_bytes
    }

    pub fn free_block_count(&self) -> usize {
        self.free_blocks.len()
    }

    fn check_lpn(&self, lpn: Lpn) -> FtlResult<()> {
        if lpn >= self.exposed_lpns {
            return Err(FtlError::LpnOutOfRange { lpn, exposed: self.exposed_lpns });
        }
        Ok(())
    }

    fn block_of(&self, page_id: u32) -> u32 {
        page_id / self.geometry.pages_per_block
    }

    pub fn host_write(&mut self, lpn: Lpn, data: &[u8]) -> FtlResult<()> {
        self.check_lpn(lpn)?;
        if data.len() != LOGICAL_PAGE {
            return Err(FtlError::BadWriteLength(data.len()));
        }
        let record = format::compress_chunk(data, Policy::Auto)?;
        let (mode, bytes) = if record.mode == Mode::Raw {
            (Mode::Raw, data.to_vec())
        } else {
            (record.mode, record.to_bytes(CHUNK_LOG))
        };
        let old = self.mapping(lpn).map_or(0, |e| u64::from(e.stored_len));
        if self.live_bytes - old + bytes.len() as u64 > self.geometry.user_bytes() {
            self.counters.rejected_writes += 1;
            return Err(FtlError::NoSpace);
        }
        self.collect_garbage();
        let segments = match self.append(&bytes, mode == Mode::Raw, HOST_RESERVED_FREE_BLOCKS) {
            Ok(s) => s,
            Err(e) => {
                self.counters.rejected_writes += 1;
                return Err(e);
            }
        };
        if let Some(previous) = self.map[lpn as usize].take() {
            self.release(lpn, &previous);
        }
        let entry = MappingEntry {
            segments,
            mode,
            orig_len: LOGICAL_PAGE as u32,
            stored_len: bytes.len() as u32,
        };
        self.claim(lpn, &entry);
        self.map[lpn as usize] = Some(entry);
        self.counters.host_writes += 1;
        self.counters.host_bytes_written += LOGICAL_PAGE as u64;
        Ok(())
    }

    pub fn host_read(&mut self, lpn: Lpn) -> FtlResult<Vec<u8>> {
        self.check_lpn(lpn)?;
        let Some(entry) = self.map[lpn as usize].clone() else {
            if self.zero_unmapped {
                self.counters.host_reads += 1;
                self.counters.host_bytes_read += LOGICAL_PAGE as u64;
                return Ok(vec![0; LOGICAL_PAGE]);
            }
            return Err(FtlError::UnmappedRead(lpn));
        };
        let bytes = self.gather(&entry);
        let data = if entry.is_raw() {
            bytes
        } else {
            let record = ChunkRecord::from_bytes(&bytes, CHUNK_LOG, false)?;
            format::decompress_chunk(&record)?
        };
        let pages = entry.segments.len() as u64;
        self.counters.host_reads += 1;
        self.counters.host_bytes_read += LOGICAL_PAGE as u64;
        self.counters.nand_pages_read += pages;
        self.counters.max_pages_per_read = self.counters.max_pages_per_read.max(pages);
        Ok(data)
    }

    fn gather(&self, entry: &MappingEntry) -> Vec<u8> {
        let ps = self.geometry.page_size;
        let mut out = Vec::with_capacity(entry.stored_len as usize);
        for s in &entry.segments {
            let start = s.page_id as usize * ps + s.byte_offset as usize;
            out.extend_from_slice(&self.nand[start..start + s.byte_len as usize]);
        }
        out
    }

    fn release(&mut self, lpn: Lpn, entry: &MappingEntry) {
        for s in &entry.segments {
            let b = self.block_of(s.page_id) as usize;
            self.block_valid[b] -= u64::from(s.byte_len);
            self.block_lpns[b].remove(&lpn);
        }
        self.live_bytes -= u64::from(entry.stored_len);
    }

    fn claim(&mut self, lpn: Lpn, entry: &MappingEntry) {
        for s in &entry.segments {
            let b = self.block_of(s.page_id) as usize;
            self.block_valid[b] += u64::from(s.byte_len);
            self.block_lpns[b].insert(lpn);
        }
        self.live_bytes += u64::from(entry.stored_len);
    }

    fn commit_page(&mut self, page_id: u32) {
        self.page_state[page_id as usize] = PageState::Programmed;
        self.counters.nand_pages_programmed += 1;
    }

    fn page_id(&self, wp: &WritePointer) -> u32 {
        wp.block * self.geometry.pages_per_block + wp.page
    }

    /// Closes the open page and, if it was the last one, the open block.
    fn advance_page(&mut self, mut wp: WritePointer) -> Option<WritePointer> {
        self.commit_page(self.page_id(&wp));
        wp.page += 1;
        wp.offset = 0;
        if wp.page == self.geometry.pages_per_block {
            self.block_state[wp.block as usize] = BlockState::Sealed;
            None
        } else {
            Some(wp)
        }
    }

    fn seal_open_block(&mut self) {
        if let Some(wp) = self.open.take() {
            if wp.offset > 0 {
                self.commit_page(self.page_id(&wp));
            }
            self.block_state[wp.block as usize] = BlockState::Sealed;
        }
    }

    /// Bytes left in the open block after any alignment `raw` requires.
    fn open_room(&self, raw: bool) -> usize {
        let ps = self.geometry.page_size;
        match self.open {
            None => 0,
            Some(wp) => {
                let pages_left = (self.geometry.pages_per_block - wp.page) as usize;
                if raw && wp.offset > 0 {
                    (pages_left - 1) * ps
                } else {
                    pages_left * ps - wp.offset
                }
            }
        }
    }

    /// Writes `bytes` at the write pointer and returns where they landed.
    fn append(&mut self, bytes: &[u8], raw: bool, reserve: usize) -> FtlResult<Vec<PhysicalSegment>> {
        let ps = self.geometry.page_size;
        let need = if raw { bytes.len().div_ceil(ps) * ps } else { bytes.len() };
        if self.open_room(raw) < need {
            if self.free_blocks.len() <= reserve {
                return Err(FtlError::NoSpace);
            }
            self.seal_open_block();
            let block = self.free_blocks.pop_front().expect("checked above");
            self.block_state[block as usize] = BlockState::Open;
            self.open = Some(WritePointer { block, page: 0, offset: 0 });
        }
        let mut wp = self.open.take().expect("open block");
        if raw && wp.offset > 0 {
            wp = self.advance_page(wp).expect("room was checked");
        }
        let mut segments = Vec::new();
        let mut pos = 0;
        let mut open = Some(wp);
        while pos < bytes.len() {
            let mut wp = open.take().expect("room was checked");
            let take = (ps - wp.offset).min(bytes.len() - pos);
            let page_id = self.page_id(&wp);
            let start = page_id as usize * ps + wp.offset;
            self.nand[start..start + take].copy_from_slice(&bytes[pos..pos + take]);
            self.page_state[page_id as usize] = PageState::Open;
            segments.push(PhysicalSegment {
                page_id,
                byte_offset: wp.offset as u32,
                byte_len: take as u32,
                continuation: pos > 0,
            });
            pos += take;
            wp.offset += take;
            open = if wp.offset == ps || (raw && pos == bytes.len()) {
                self.advance_page(wp)
            } else {
                Some(wp)
            };
        }
        self.open = open;
        Ok(segments)
    }

    fn collect_garbage(&mut self) {
        let mut budget = self.geometry.block_count;
        while self.free_blocks.len() < GC_TRIGGER_FREE_BLOCKS && budget > 0 {
            if self.gc_step().is_err() {
                break;
            }
            budget -= 1;
        }
    }

    /// Relocation footprint of a block's valid data, page-rounding raw entries.
    fn relocation_bytes(&self, block: u32) -> u64 {
        let ps = self.geometry.page_size as u64;
        self.block_lpns[block as usize]
            .iter()
            .filter_map(|&lpn| self.mapping(lpn))
            .map(|e| {
                let n = u64::from(e.stored_len);
                if e.is_raw() { n.div_ceil(ps) * ps } else { n }
            })
            .sum()
    }

    /// Erases the sealed block with the least valid data after moving its
    /// live records verbatim to the write pointer.
    pub fn gc_step(&mut self) -> FtlResult<GcReport> {
        let victim = (0..self.geometry.block_count)
            .filter(|&b| self.block_state[b as usize] == BlockState::Sealed)
            .min_by_key(|&b| (self.block_valid[b as usize], b))
            .ok_or(FtlError::GcFutile)?;
        let block_bytes = self.geometry.block_bytes() as u64;
        let ps = self.geometry.page_size as u64;
        let moving = self.relocation_bytes(victim);
        if moving + ps > block_bytes {
            return Err(FtlError::GcFutile);
        }
        // worst case: one page lost to alignment and one record lost at a block end
        let room = self.open_room(false) as u64 + self.free_blocks.len() as u64 * block_bytes;
        if moving + ps + max_record_bytes() as u64 > room {
            return Err(FtlError::GcFutile);
        }

        let lpns: Vec<Lpn> = self.block_lpns[victim as usize].iter().copied().collect();
        let (raw, packed): (Vec<Lpn>, Vec<Lpn>) =
            lpns.into_iter().partition(|&l| self.mapping(l).is_some_and(MappingEntry::is_raw));
        let mut report = GcReport {
            victim,
            relocated_records: 0,
            relocated_bytes: 0,
            freed_pages: self.geometry.pages_per_block,
        };
        for lpn in raw.into_iter().chain(packed) {
            let mut entry = self.map[lpn as usize].take().expect("block index tracks live entries");
            let bytes = self.gather(&entry);
            self.release(lpn, &entry);
            entry.segments = self.append(&bytes, entry.is_raw(), 0)?;
            self.claim(lpn, &entry);
            self.map[lpn as usize] = Some(entry);
            report.relocated_records += 1;
            report.relocated_bytes += bytes.len() as u64;
        }
        debug_assert_eq!(self.block_valid[victim as usize], 0);
        self.erase(victim);
        self.counters.gc_runs += 1;
        self.counters.relocated_bytes += report.relocated_bytes;
        self.counters.relocated_records += report.relocated_records;
        Ok(report)
    }

    fn erase(&mut self, block: u32) {
        let ps = self.geometry.page_size;
        let ppb = self.geometry.pages_per_block as usize;
        let first = block as usize * ppb;
        self.nand[first * ps..(first + ppb) * ps].fill(ERASED);
        self.page_state[first..first + ppb].fill(PageState::Erased);
        self.block_state[block as usize] = BlockState::Free;
        self.block_lpns[block as usize].clear();
        self.free_blocks.push_back(block);
        self.counters.blocks_erased += 1;
    }

    pub fn metrics(&self) -> Metrics {
        let c = &self.counters;
        let ps = self.geometry.page_size as u64;
        let block_bytes = self.geometry.block_bytes() as f64;
        let mut valid_histogram = [0u64; 10];
        for (b, &v) in self.block_valid.iter().enumerate() {
            if self.block_state[b] == BlockState::Sealed {
                let bin = ((v as f64 / block_bytes) * 10.0).floor() as usize;
                valid_histogram[bin.min(9)] += 1;
            }
        }
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        let nand_bytes_programmed = c.nand_pages_programmed * ps;
        Metrics {
            geometry: self.geometry,
            capacity_factor: self.capacity_factor,
            exposed_lpns: self.exposed_lpns,
            mapped_lpns: self.map.iter().filter(|e| e.is_some()).count() as u64,
            host_writes: c.host_writes,
            host_reads: c.host_reads,
            host_bytes_written: c.host_bytes_written,
            host_bytes_read: c.host_bytes_read,
            nand_pages_programmed: c.nand_pages_programmed,
            nand_bytes_programmed,
            nand_pages_read: c.nand_pages_read,
            nand_bytes_read: c.nand_pages_read * ps,
            relocated_bytes: c.relocated_bytes,
            relocated_records: c.relocated_records,
            gc_runs: c.gc_runs,
            blocks_erased: c.blocks_erased,
            rejected_writes: c.rejected_writes,
            waf: ratio(nand_bytes_programmed, c.host_bytes_written),
            raf: ratio(c.nand_pages_read, c.host_reads),
            max_pages_per_read: c.max_pages_per_read,
            records_over_two_pages: self.map.iter().flatten().filter(|e| e.segments.len() > 2).count() as u64,
            live_bytes: self.live_bytes,
            user_capacity_bytes: self.geometry.user_bytes(),
            space_utilization: self.live_bytes as f64 / self.geometry.user_bytes() as f64,
            free_blocks: self.free_blocks.len(),
            block_valid_bytes: self.block_valid.clone(),
            valid_histogram,
        }
    }

    /// Verifies exclusivity, adjacency and conservation over the whole map.
    pub fn check_invariants(&self) -> FtlResult<()> {
        let fail = |m: String| Err(FtlError::InvariantViolated(m));
        let ps = self.geometry.page_size as u32;
        let mut by_page: HashMap<u32, Vec<(u32, u32, Lpn)>> = HashMap::new();
        let mut block_valid = vec![0u64; self.block_valid.len()];
        let mut live = 0u64;
        for (lpn, entry) in self.map.iter().enumerate() {
            let Some(entry) = entry else { continue };
            let lpn = lpn as Lpn;
            let mut total = 0u64;
            for (i, s) in entry.segments.iter().enumerate() {
                if s.byte_offset + s.byte_len > ps || s.byte_len == 0 {
                    return fail(format!("lpn {lpn}: segment {i} exceeds its page"));
                }
                if i > 0 {
                    let prev = entry.segments[i - 1];
                    if s.page_id != prev.page_id + 1 || !s.continuation || s.byte_offset != 0 {
                        return fail(format!("lpn {lpn}: segment {i} not on the next page"));
                    }
                    if prev.byte_offset + prev.byte_len != ps && !entry.is_raw() {
                        return fail(format!("lpn {lpn}: segment {} leaves a gap", i - 1));
                    }
                } else if s.continuation {
                    return fail(format!("lpn {lpn}: first segment flagged as continuation"));
                }
                let block = self.block_of(s.page_id);
                if self.block_state[block as usize] == BlockState::Free
                    || self.page_state[s.page_id as usize] == PageState::Erased
                {
                    return fail(format!("lpn {lpn}: segment on erased page {}", s.page_id));
                }
                if !self.block_lpns[block as usize].contains(&lpn) {
                    return fail(format!("lpn {lpn}: block {block} index misses it"));
                }
                block_valid[block as usize] += u64::from(s.byte_len);
                total += u64::from(s.byte_len);
                by_page.entry(s.page_id).or_default().push((s.byte_offset, s.byte_len, lpn));
            }
            let first = self.block_of(entry.segments[0].page_id);
            let last = self.block_of(entry.segments[entry.segments.len() - 1].page_id);
            if first != last {
                return fail(format!("lpn {lpn}: record crosses a block boundary"));
            }
            if total != u64::from(entry.stored_len) {
                return fail(format!("lpn {lpn}: segments hold {total} of {} bytes", entry.stored_len));
            }
            live += total;
        }
        for (page, mut ranges) in by_page {
            ranges.sort_unstable();
            for w in ranges.windows(2) {
                if w[0].0 + w[0].1 > w[1].0 {
                    return fail(format!("page {page}: lpn {} overlaps lpn {}", w[0].2, w[1].2));
                }
            }
        }
        if live != self.live_bytes {
            return fail(format!("live bytes {} but mapped {live}", self.live_bytes));
        }
        if block_valid != self.block_valid {
            return fail("per-block valid bytes drifted".into());
        }
        Ok(())
    }

    /// CRC over mapping, block bookkeeping, NAND contents and counters.
    pub fn state_digest(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for (lpn, entry) in self.map.iter().enumerate() {
            let Some(e) = entry else { continue };
            h.update(&(lpn as u32).to_le_bytes());
            h.update(&[e.mode as u8]);
            h.update(&e.stored_len.to_le_bytes());
            for s in &e.segments {
                h.update(&s.page_id.to_le_bytes());
                h.update(&s.byte_offset.to_le_bytes());
                h.update(&s.byte_len.to_le_bytes());
            }
        }
        for (&state, &valid) in self.block_state.iter().zip(&self.block_valid) {
            h.update(&[state as u8]);
            h.update(&valid.to_le_bytes());
        }
        for &b in &self.free_blocks {
            h.update(&b.to_le_bytes());
        }
        if let Some(wp) = self.open {
            h.update(&wp.block.to_le_bytes());
            h.update(&wp.page.to_le_bytes());
            h.update(&(wp.offset as u64).to_le_bytes());
        }
        h.update(&self.nand);
        h.update(serde_json::to_string(&self.counters).expect("counters serialize").as_bytes());
        h.finalize()
    }
}

// ---------------------------------------------------------------------------
// traces

/// Content of one host write in a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pattern {
    Zero,
    Byte(u8),
    Random(u64),
    /// Generator output calibrated to a 4 KiB compression ratio.
    Ratio { target: f64, seed: u64 },
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Zero => write!(f, "zero"),
            Pattern::Byte(v) => write!(f, "byte:{v}"),
            Pattern::Random(seed) => write!(f, "random:{seed}"),
            Pattern::Ratio { target, seed } => write!(f, "ratio:{target}:{seed}"),
        }
    }
}

impl FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |v: &str| v.parse::<u64>().map_err(|e| format!("bad number {v:?}: {e}"));
        match parts.as_slice() {
            ["zero"] => Ok(Pattern::Zero),
            ["byte", v] => v.parse().map(Pattern::Byte).map_err(|e| format!("bad byte {v:?}: {e}")),
            ["random", seed] => Ok(Pattern::Random(num(seed)?)),
            ["ratio", t, seed] => {
                let target: f64 = t.parse().map_err(|e| format!("bad ratio {t:?}: {e}"))?;
                if !(0.0..=1.0).contains(&target) {
                    return Err(format!("ratio {target} outside 0..=1"));
                }
                Ok(Pattern::Ratio { target, seed: num(seed)? })
            }
            _ => Err(format!("unknown pattern {s:?}")),
        }
    }
}

/// Renders patterns to page contents, calibrating each ratio once.
#[derive(Debug, Default)]
pub struct PatternRenderer {
    calibrated: HashMap<u64, DataGen>,
}

impl PatternRenderer {
    pub fn render(&mut self, pattern: &Pattern) -> Vec<u8> {
        match *pattern {
            Pattern::Zero => vec![0; LOGICAL_PAGE],
            Pattern::Byte(v) => vec![v; LOGICAL_PAGE],
            Pattern::Random(seed) => {
                let mut page = vec![0; LOGICAL_PAGE];
                ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut page);
                page
            }
            Pattern::Ratio { target, seed } => self
                .calibrated
                .entry(target.to_bits())
                .or_insert_with(|| DataGen::new(target, 0))
                .reseed(seed)
                .page(0, LOGICAL_PAGE),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceOp {
    Write { lpn: Lpn, pattern: Pattern },
    Read { lpn: Lpn },
    Gc,
}

impl fmt::Display for TraceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceOp::Write { lpn, pattern } => write!(f, "W {lpn} {pattern}"),
            TraceOp::Read { lpn } => write!(f, "R {lpn}"),
            TraceOp::Gc => write!(f, "GC"),
        }
    }
}

/// Parses `W <lpn> <pattern>`, `R <lpn>` and `GC` lines; `#` starts a comment.
pub fn parse_trace(text: &str) -> FtlResult<Vec<TraceOp>> {
    let mut ops = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| FtlError::TraceParse { line: i + 1, msg };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let lpn = |v: &str| v.parse::<Lpn>().map_err(|e| err(format!("bad lpn {v:?}: {e}")));
        let op = match fields.as_slice() {
            ["W", l, p] => TraceOp::Write { lpn: lpn(l)?, pattern: p.parse().map_err(err)? },
            ["R", l] => TraceOp::Read { lpn: lpn(l)? },
            ["GC"] => TraceOp::Gc,
            _ => return Err(err(format!("unrecognized operation {line:?}"))),
        };
        ops.push(op);
    }
    Ok(ops)
}

pub fn format_trace(ops: &[TraceOp]) -> String {
    ops.iter().map(|op| format!("{op}\n")).collect()
}

/// Seeded mix of writes, overwrites, reads and explicit GC requests.
pub fn random_trace(ops: usize, lpns: Lpn, seed: u64) -> Vec<TraceOp> {
    const TARGETS: [f64; 6] = [0.1, 0.25, 0.4, 0.5, 0.7, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut written: Vec<Lpn> = Vec::new();
    (0..ops)
        .map(|_| {
            let roll: f64 = rng.random();
            if roll < 0.02 {
                TraceOp::Gc
            } else if roll < 0.45 && !written.is_empty() {
                TraceOp::Read { lpn: written[rng.random_range(0..written.len())] }
            } else {
                let lpn = rng.random_range(0..lpns);
                written.push(lpn);
                let pattern = match rng.random_range(0..10) {
                    0 => Pattern::Zero,
                    1 => Pattern::Byte(rng.random()),
                    2 => Pattern::Random(rng.random()),
                    _ => Pattern::Ratio {
                        target: TARGETS[rng.random_range(0..TARGETS.len())],
                        seed: rng.random_range(0..64),
                    },
                };
                TraceOp::Write { lpn, pattern }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TraceOptions {
    pub check_invariants: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceReport {
    pub ops: usize,
    pub writes: u64,
    pub reads: u64,
    pub gc_requests: u64,
    pub verified_reads: u64,
    pub mismatches: u64,
    pub rejected_writes: u64,
    pub unmapped_reads: u64,
    pub gc_futile: u64,
    pub state_digest: String,
    pub metrics: Metrics,
}

/// Replays `ops`, comparing every read with the last accepted write.
pub fn run_trace(ftl: &mut Ftl, ops: &[TraceOp], opts: TraceOptions) -> FtlResult<TraceReport> {
    let mut renderer = PatternRenderer::default();
    let mut shadow: HashMap<Lpn, Vec<u8>> = HashMap::new();
    let mut r = TraceReport {
        ops: ops.len(),
        writes: 0,
        reads: 0,
        gc_requests: 0,
        verified_reads: 0,
        mismatches: 0,
        rejected_writes: 0,
        unmapped_reads: 0,
        gc_futile: 0,
        state_digest: String::new(),
        metrics: ftl.metrics(),
    };
    for op in ops {
        match *op {
            TraceOp::Write { lpn, pattern } => {
                r.writes += 1;
                let page = renderer.render(&pattern);
                match ftl.host_write(lpn, &page) {
                    Ok(()) => {
                        shadow.insert(lpn, page);
                    }
                    Err(FtlError::NoSpace) => r.rejected_writes += 1,
                    Err(e) => return Err(e),
                }
            }
            TraceOp::Read { lpn } => {
                r.reads += 1;
                match ftl.host_read(lpn) {
                    Ok(data) => {
                        let expected = shadow.get(&lpn).map_or(&[0u8; LOGICAL_PAGE][..], Vec::as_slice);
                        if data == expected {
                            r.verified_reads += 1;
                        } else {
                            r.mismatches += 1;
                        }
                    }
                    Err(FtlError::UnmappedRead(_)) => {
                        r.unmapped_reads += 1;
                        if shadow.contains_key(&lpn) {
                            r.mismatches += 1;
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            TraceOp::Gc => {
                r.gc_requests += 1;
                if let Err(FtlError::GcFutile) = ftl.gc_step() {
                    r.gc_futile += 1;
                }
            }
        }
        if opts.check_invariants {
            ftl.check_invariants()?;
        }
    }
    r.state_digest = format!("{:08x}", ftl.state_digest());
    r.metrics = ftl.metrics();
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NandGeometry {
        NandGeometry { page_size: 4096, pages_per_block: 8, block_count: 16, op_fraction: 0.25 }
    }

    fn random_page(seed: u64) -> Vec<u8> {
        PatternRenderer::default().render(&Pattern::Random(seed))
    }

    #[test]
    fn zero_page_is_one_small_segment() {
        let mut ftl = Ftl::new(small()).unwrap();
        ftl.host_write(0, &[0; LOGICAL_PAGE]).unwrap();
        let e = ftl.mapping(0).unwrap();
        assert_eq!(e.segments.len(), 1);
        assert!(e.segments[0].byte_len < 128);
        assert_eq!(ftl.host_read(0).unwrap(), vec![0; LOGICAL_PAGE]);
        ftl.check_invariants().unwrap();
    }

    #[test]
    fn random_page_is_one_aligned_raw_page() {
        let mut ftl = Ftl::new(small()).unwrap();
        ftl.host_write(0, &[0; LOGICAL_PAGE]).unwrap();
        ftl.host_write(1, &random_page(3)).unwrap();
        let e = ftl.mapping(1).unwrap();
        assert!(e.is_raw());
        assert_eq!(e.segments, vec![PhysicalSegment { page_id: 1, byte_offset: 0, byte_len: 4096, continuation: false }]);
        assert_eq!(ftl.host_read(1).unwrap(), random_page(3));
        assert_eq!(ftl.metrics().raf, Some(1.0));
    }

    #[test]
    fn records_split_onto_the_next_page() {
        let mut ftl = Ftl::new(small()).unwrap();
        let page = DataGen::new(0.6, 9).page(0, LOGICAL_PAGE);
        ftl.host_write(0, &page).unwrap();
        ftl.host_write(1, &page).unwrap();
        let first = ftl.mapping(0).unwrap().clone();
        let second = ftl.mapping(1).unwrap().clone();
        assert!(first.stored_len > 2048 && first.stored_len < 4096, "{}", first.stored_len);
        assert_eq!(first.segments.len(), 1);
        assert_eq!(second.segments.len(), 2);
        assert_eq!(second.segments[0].byte_offset, first.stored_len);
        assert_eq!(second.segments[1].page_id, second.segments[0].page_id + 1);
        assert_eq!(ftl.host_read(1).unwrap(), page);
        assert_eq!(ftl.metrics().nand_pages_read, 2);
        ftl.check_invariants().unwrap();
    }

    #[test]
    fn fresh_device_reports_null_amplification() {
        let ftl = Ftl::new(small()).unwrap();
        let m = ftl.metrics();
        assert_eq!(m.waf, None);
        assert_eq!(m.raf, None);
        let json = serde_json::to_value(&m).unwrap();
        assert!(json["waf"].is_null());
    }

    #[test]
    fn errors() {
        let mut ftl = Ftl::new(small()).unwrap();
        let n = ftl.exposed_lpns();
        assert!(matches!(ftl.host_write(n, &[0; LOGICAL_PAGE]), Err(FtlError::LpnOutOfRange { .. })));
        assert!(matches!(ftl.host_write(0, &[0; 10]), Err(FtlError::BadWriteLength(10))));
        assert!(matches!(ftl.host_read(0), Err(FtlError::UnmappedRead(0))));
        assert_eq!(FtlError::UnmappedRead(0).to_string(), "unmapped read of lpn 0");
        ftl.set_zero_unmapped(true);
        assert_eq!(ftl.host_read(0).unwrap(), vec![0; LOGICAL_PAGE]);
        assert!(matches!(ftl.gc_step(), Err(FtlError::GcFutile)));
        assert!(matches!(ftl.configure_capacity(0.5), Err(FtlError::InvalidCapacityFactor(_))));
        assert!(matches!(ftl.configure_capacity(4.5), Err(FtlError::InvalidCapacityFactor(_))));
        assert_eq!(ftl.configure_capacity(1.0).unwrap(), n);
        assert_eq!(ftl.configure_capacity(2.0).unwrap(), 2 * n);
        assert!(Ftl::new(NandGeometry { op_fraction: 0.01, ..small() }).is_err());
        assert!(Ftl::new(NandGeometry { pages_per_block: 2, ..small() }).is_err());
    }

    #[test]
    fn fully_invalid_block_erases_without_relocation() {
        let mut ftl = Ftl::new(small()).unwrap();
        for lpn in 0..8 {
            ftl.host_write(lpn, &random_page(u64::from(lpn))).unwrap();
        }
        for lpn in 0..8 {
            ftl.host_write(lpn, &random_page(100 + u64::from(lpn))).unwrap();
        }
        let r = ftl.gc_step().unwrap();
        assert_eq!(r.victim, 0);
        assert_eq!(r.relocated_bytes, 0);
        assert_eq!(r.freed_pages, 8);
        for lpn in 0..8 {
            assert_eq!(ftl.host_read(lpn).unwrap(), random_page(100 + u64::from(lpn)));
        }
        ftl.check_invariants().unwrap();
    }

    #[test]
    fn all_valid_blocks_are_futile() {
        let mut ftl = Ftl::new(small()).unwrap();
        for lpn in 0..16 {
            ftl.host_write(lpn, &random_page(u64::from(lpn))).unwrap();
        }
        assert!(matches!(ftl.gc_step(), Err(FtlError::GcFutile)));
        assert_eq!(FtlError::GcFutile.to_string(), "gc futile");
    }

    #[test]
    fn incompressible_fill_has_unit_waf() {
        let mut ftl = Ftl::new(small()).unwrap();
        let n = ftl.exposed_lpns();
        for lpn in 0..n {
            ftl.host_write(lpn, &random_page(u64::from(lpn))).unwrap();
        }
        assert_eq!(ftl.metrics().waf, Some(1.0));
        assert!(matches!(ftl.host_write(0, &[0; 8]), Err(FtlError::BadWriteLength(_))));
    }

    #[test]
    fn tiny_pages_allow_long_records() {
        let g = NandGeometry { page_size: 1024, pages_per_block: 32, block_count: 16, op_fraction: 0.25 };
        let mut ftl = Ftl::new(g).unwrap();
        let page = DataGen::new(0.7, 1).page(0, LOGICAL_PAGE);
        for lpn in 0..6 {
            ftl.host_write(lpn, &page).unwrap();
        }
        assert!(ftl.metrics().records_over_two_pages > 0);
        for lpn in 0..6 {
            assert_eq!(ftl.host_read(lpn).unwrap(), page);
        }
        ftl.host_write(7, &random_page(1)).unwrap();
        assert_eq!(ftl.mapping(7).unwrap().segments.len(), 4);
        assert_eq!(ftl.host_read(7).unwrap(), random_page(1));
        ftl.check_invariants().unwrap();
    }

    #[test]
    fn trace_text_round_trips() {
        let ops = random_trace(300, 40, 5);
        assert_eq!(parse_trace(&format_trace(&ops)).unwrap(), ops);
        let parsed = parse_trace("# header\nW 3 ratio:0.5:7\n\nR 3  # read back\nGC\n").unwrap();
        assert_eq!(parsed.len(), 3);
        assert!(matches!(parse_trace("W x zero"), Err(FtlError::TraceParse { line: 1, .. })));
        assert!(matches!(parse_trace("Q 1"), Err(FtlError::TraceParse { .. })));
        assert!(parse_trace("W 1 ratio:1.5:0").is_err());
    }

    #[test]
    fn random_trace_stays_consistent_and_deterministic() {
        let ops = random_trace(3000, 60, 11);
        let run = || {
            let mut ftl = Ftl::new(small()).unwrap();
            run_trace(&mut ftl, &ops, TraceOptions { check_invariants: true }).unwrap()
        };
        let a = run();
        assert_eq!(a.mismatches, 0);
        assert!(a.verified_reads > 0);
        assert!(a.metrics.gc_runs > 0);
        assert_eq!(a.state_digest, run().state_digest);
    }
}
