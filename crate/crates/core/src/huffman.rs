//! Canonical Huffman coding of the byte alphabet with a hard depth cap.
//!
//! Code construction is a plain two-queue Huffman build followed by a
//! fixed-latency length limiter that works in three stages:
//!
//! 1. **Scan and cap**: one pass over all 256 slots clips every length above
//!    the cap and tallies the leaf count and the Kraft over-subscription `k`
//!    (in units of `2^-MAX_BITS`).
//! 2. **Redistribution**: levels `MAX_BITS-1 ..= 1` are visited once each,
//!    deepest first. At level `L` pushing a leaf one level down frees
//!    `2^(MAX_BITS-L-1)` units, so `ceil(k / unit)` leaves are demoted (capped
//!    by what the level holds). Only the level that finishes the job can
//!    overshoot, and by less than one unit.
//! 3. **Hole repair**: the overshoot leaves holes. Depths are visited from the
//!    cap upward and `holes / unit` leaves are lifted one level at each. A
//!    depth with too few leaves lifts all of them, which leaves the holes a
//!    multiple of the next unit up, so the loop terminates exactly. Because the
//!    overshoot stays below 256 units the loop needs at most 8 depths.
//!
//! The modeled cycle count is one per slot scanned plus one per level visited
//! in stages 2 and 3, giving the `256 + 10 + 8 = 274` worst case.

use crate::bits::{BitReader, BitWriter};
use crate::error::{Corruption, Error, Result};

pub const ALPHABET: usize = 256;
pub const MAX_BITS: u8 = 11;
/// Serialized size of a [`CodeLengths`] header.
pub const LENGTH_HEADER_BYTES: usize = ALPHABET / 2;

pub const SCAN_CYCLES_MAX: u32 = ALPHABET as u32;
pub const REDISTRIBUTE_CYCLES_MAX: u32 = MAX_BITS as u32 - 1;
pub const REPAIR_CYCLES_MAX: u32 = 8;
pub const CANONIZATION_CYCLES_MAX: u32 =
    SCAN_CYCLES_MAX + REDISTRIBUTE_CYCLES_MAX + REPAIR_CYCLES_MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub counts: [u32; ALPHABET],
}

impl Default for Histogram {
    fn default() -> Self {
        Histogram { counts: [0; ALPHABET] }
    }
}

impl Histogram {
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let mut h = Histogram::default();
        for &b in bytes {
            h.counts[b as usize] += 1;
        }
        h
    }

    pub fn from_counts(counts: &[u32]) -> Self {
        let mut h = Histogram::default();
        h.counts[..counts.len()].copy_from_slice(counts);
        h
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn distinct(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Per-symbol code lengths; 0 marks an unused symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CodeLengths(pub [u8; ALPHABET]);

impl Default for CodeLengths {
    fn default() -> Self {
        CodeLengths([0; ALPHABET])
    }
}

impl CodeLengths {
    pub fn max_len(&self) -> u8 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn used(&self) -> usize {
        self.0.iter().filter(|&&l| l > 0).count()
    }

    /// Kraft sum in units of `2^-max_bits`. Lengths above `max_bits` count
    /// as zero here; use [`CodeLengths::is_complete`] for deep codes.
    pub fn kraft_units(&self, max_bits: u8) -> u64 {
        self.0
            .iter()
            .filter(|&&l| l > 0 && l <= max_bits)
            .map(|&l| 1u64 << (max_bits - l))
            .sum()
    }

    /// Exact Kraft equality at the code's own depth, without wide integers.
    pub fn is_complete(&self) -> bool {
        let max = self.max_len() as usize;
        if max == 0 {
            return false;
        }
        let mut per_len = vec![0u64; max + 1];
        for &l in &self.0 {
            if l > 0 {
                per_len[l as usize] += 1;
            }
        }
        let mut carry = 0u64;
        for len in (1..=max).rev() {
            carry += per_len[len];
            if carry % 2 == 1 {
                return false;
            }
            carry /= 2;
        }
        carry == 1
    }

    /// Total coded bits for `hist` under these lengths.
    pub fn cost(&self, hist: &Histogram) -> u64 {
        self.0
            .iter()
            .zip(hist.counts.iter())
            .map(|(&l, &c)| u64::from(l) * u64::from(c))
            .sum()
    }
}

/// Record of one run of the depth limiter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CanonizationTrace {
    /// Used symbols.
    pub n_leaves: u32,
    /// Kraft over-subscription right after clipping, in `2^-MAX_BITS` units.
    pub deficit: u32,
    pub scan_cycles: u32,
    pub redistribute_cycles: u32,
    pub repair_cycles: u32,
}

impl CanonizationTrace {
    pub fn total_cycles(&self) -> u32 {
        self.scan_cycles + self.redistribute_cycles + self.repair_cycles
    }

    /// Trace with every stage at its bound.
    pub fn worst_case() -> Self {
        CanonizationTrace {
            n_leaves: ALPHABET as u32,
            deficit: 0,
            scan_cycles: SCAN_CYCLES_MAX,
            redistribute_cycles: REDISTRIBUTE_CYCLES_MAX,
            repair_cycles: REPAIR_CYCLES_MAX,
        }
    }
}

/// Unbounded optimal code lengths via the two-queue method.
pub fn build_lengths(hist: &Histogram) -> Result<CodeLengths> {
    let mut leaves: Vec<(u64, usize)> = hist
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| (u64::from(c), s))
        .collect();
    let mut out = CodeLengths::default();
    match leaves.len() {
        0 => return Err(Error::EmptyHistogram),
        1 => {
            out.0[leaves[0].1] = 1;
            return Ok(out);
        }
        _ => {}
    }
    leaves.sort_unstable();

    // nodes 0..n are leaves, n.. are internal; parent links give depths
    let n = leaves.len();
    let mut weight: Vec<u64> = leaves.iter().map(|&(w, _)| w).collect();
    let mut parent = vec![0usize; 2 * n - 1];
    let (mut next_leaf, mut next_internal) = (0usize, n);

    for node in n..2 * n - 1 {
        let mut pick = |weight: &Vec<u64>| {
            let take_leaf = next_leaf < n
                && (next_internal >= node || weight[next_leaf] <= weight[next_internal]);
            if take_leaf {
                next_leaf += 1;
                next_leaf - 1
            } else {
                next_internal += 1;
                next_internal - 1
            }
        };
        let a = pick(&weight);
        let b = pick(&weight);
        weight.push(weight[a] + weight[b]);
        parent[a] = node;
        parent[b] = node;
    }

    let mut depth = vec![0u32; 2 * n - 1];
    for node in (0..2 * n - 2).rev() {
        depth[node] = depth[parent[node]] + 1;
    }
    for (i, &(_, sym)) in leaves.iter().enumerate() {
        out.0[sym] = depth[i].min(255) as u8;
    }
    Ok(out)
}

/// Limits `lengths` to `max_bits` while keeping the code complete.
pub fn cap_lengths(lengths: &CodeLengths, max_bits: u8) -> Result<(CodeLengths, CanonizationTrace)> {
    if max_bits == 0 || max_bits > 15 {
        return Err(Error::CapInfeasible);
    }
    let mut out = *lengths;
    let mut trace = CanonizationTrace::default();

    // stage 1: scan & cap
    let mut kraft = 0u64;
    let mut per_level = [0u32; 16];
    for len in out.0.iter_mut() {
        trace.scan_cycles += 1;
        if *len == 0 {
            continue;
        }
        trace.n_leaves += 1;
        if *len > max_bits {
            *len = max_bits;
        }
        per_level[*len as usize] += 1;
        kraft += 1u64 << (max_bits - *len);
    }
    if trace.n_leaves == 0 {
        return Err(Error::EmptyHistogram);
    }
    if u64::from(trace.n_leaves) > 1u64 << max_bits {
        return Err(Error::CapInfeasible);
    }
    if trace.n_leaves == 1 {
        let sym = out.0.iter().position(|&l| l > 0).unwrap();
        out.0[sym] = 1;
        return Ok((out, trace));
    }
    if !lengths.is_complete() {
        return Err(Error::InvalidLengths);
    }

    let full = 1i64 << max_bits;
    let mut excess = kraft as i64 - full;
    trace.deficit = excess as u32;

    // stage 2: demote leaves, deepest levels first
    for level in (1..max_bits).rev() {
        if excess <= 0 {
            break;
        }
        trace.redistribute_cycles += 1;
        let shift = u32::from(max_bits - level - 1);
        let needed = ((excess + (1 << shift) - 1) >> shift) as u32;
        let moved = needed.min(per_level[level as usize]);
        shift_leaves(&mut out, level, level + 1, moved);
        per_level[level as usize] -= moved;
        per_level[level as usize + 1] += moved;
        excess -= i64::from(moved) << shift;
    }
    if excess > 0 {
        return Err(Error::CapInfeasible);
    }

    // stage 3: fill holes, lifting from the cap upward
    let mut holes = -excess;
    for depth in (2..=max_bits).rev() {
        if holes == 0 {
            break;
        }
        trace.repair_cycles += 1;
        let shift = u32::from(max_bits - depth);
        let moved = ((holes >> shift) as u32).min(per_level[depth as usize]);
        shift_leaves(&mut out, depth, depth - 1, moved);
        per_level[depth as usize] -= moved;
        per_level[depth as usize - 1] += moved;
        holes -= i64::from(moved) << shift;
    }
    if holes != 0 {
        return Err(Error::CapInfeasible);
    }
    Ok((out, trace))
}

/// Moves `count` leaves from `from` to `to`, lowest symbol values first.
fn shift_leaves(lengths: &mut CodeLengths, from: u8, to: u8, count: u32) {
    let mut left = count;
    for len in lengths.0.iter_mut() {
        if left == 0 {
            break;
        }
        if *len == from {
            *len = to;
            left -= 1;
        }
    }
}

/// Full build: optimal lengths, then the depth cap.
pub fn build_code(hist: &Histogram) -> Result<(CodeLengths, CanonizationTrace)> {
    cap_lengths(&build_lengths(hist)?, MAX_BITS)
}

fn lengths_are_valid(lengths: &CodeLengths) -> bool {
    match lengths.used() {
        0 => false,
        1 => lengths.max_len() == 1,
        _ => lengths.max_len() <= MAX_BITS && lengths.kraft_units(MAX_BITS) == 1 << MAX_BITS,
    }
}

/// Canonical codes: shorter codes first, equal lengths ordered by symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalCodeTable {
    lengths: CodeLengths,
    codes: [u16; ALPHABET],
}

impl CanonicalCodeTable {
    pub fn lengths(&self) -> &CodeLengths {
        &self.lengths
    }

    /// `(length, code)` for a symbol, if it is in the code.
    pub fn code(&self, symbol: u8) -> Option<(u8, u16)> {
        let len = self.lengths.0[symbol as usize];
        (len > 0).then(|| (len, self.codes[symbol as usize]))
    }
}

pub fn canonicalize(lengths: &CodeLengths) -> Result<CanonicalCodeTable> {
    if !lengths_are_valid(lengths) {
        return Err(Error::InvalidLengths);
    }
    let mut per_len = [0u16; MAX_BITS as usize + 1];
    for &l in &lengths.0 {
        per_len[l as usize] += 1;
    }
    per_len[0] = 0;
    let mut next = [0u16; MAX_BITS as usize + 1];
    let mut code = 0u16;
    for len in 1..=MAX_BITS as usize {
        code = (code + per_len[len - 1]) << 1;
        next[len] = code;
    }
    let mut codes = [0u16; ALPHABET];
    for (sym, &l) in lengths.0.iter().enumerate() {
        if l > 0 {
            codes[sym] = next[l as usize];
            next[l as usize] += 1;
        }
    }
    Ok(CanonicalCodeTable {
        lengths: *lengths,
        codes,
    })
}

pub fn huff_encode(bytes: &[u8], table: &CanonicalCodeTable) -> Result<Vec<u8>> {
    let mut w = BitWriter::with_capacity(bytes.len());
    for &b in bytes {
        let (len, code) = table.code(b).ok_or(Error::SymbolNotInCode(b))?;
        w.write(u32::from(code), u32::from(len));
    }
    Ok(w.finish())
}

/// Bits needed to code `bytes`; `None` if a byte is not in the code.
pub fn encoded_bits(bytes: &[u8], lengths: &CodeLengths) -> Option<u64> {
    bytes.iter().try_fold(0u64, |acc, &b| {
        let l = lengths.0[b as usize];
        (l > 0).then_some(acc + u64::from(l))
    })
}

const NO_SYMBOL: u16 = u16::MAX;

/// Single-lookup decode table indexed by the next `MAX_BITS` bits.
#[derive(Debug, Clone)]
pub struct DecodeTable {
    /// symbol in the low byte, length in the high byte
    entries: Vec<u16>,
}

impl DecodeTable {
    pub fn new(lengths: &CodeLengths) -> Result<Self> {
        let table = canonicalize(lengths)?;
        let mut entries = vec![NO_SYMBOL; 1 << MAX_BITS];
        for sym in 0..ALPHABET {
            if let Some((len, code)) = table.code(sym as u8) {
                let shift = MAX_BITS - len;
                let start = (code as usize) << shift;
                let entry = (u16::from(len) << 8) | sym as u16;
                entries[start..start + (1 << shift)].fill(entry);
            }
        }
        Ok(DecodeTable { entries })
    }

    pub fn decode(&self, bits: &[u8], n: usize) -> Result<Vec<u8>> {
        let mut r = BitReader::new(bits);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let e = self.entries[r.peek(u32::from(MAX_BITS)) as usize];
            if e == NO_SYMBOL {
                return Err(Corruption::MalformedSequence.into());
            }
            if !r.skip(u32::from(e >> 8)) {
                return Err(Corruption::Truncated.into());
            }
            out.push(e as u8);
        }
        if r.bits_left() >= 8 {
            return Err(Corruption::TrailingBytes.into());
        }
        Ok(out)
    }
}

pub fn huff_decode(bits: &[u8], lengths: &CodeLengths, n: usize) -> Result<Vec<u8>> {
    DecodeTable::new(lengths)?.decode(bits, n)
}

/// Packs 256 lengths as nibbles, even symbol in the high nibble.
pub fn serialize_lengths(lengths: &CodeLengths) -> [u8; LENGTH_HEADER_BYTES] {
    let mut out = [0u8; LENGTH_HEADER_BYTES];
    for (i, pair) in lengths.0.chunks_exact(2).enumerate() {
        out[i] = ((pair[0] & 0x0f) << 4) | (pair[1] & 0x0f);
    }
    out
}

pub fn deserialize_lengths(bytes: &[u8]) -> Result<CodeLengths> {
    if bytes.len() < LENGTH_HEADER_BYTES {
        return Err(Corruption::Truncated.into());
    }
    let mut out = CodeLengths::default();
    for (i, &b) in bytes[..LENGTH_HEADER_BYTES].iter().enumerate() {
        let (hi, lo) = (b >> 4, b & 0x0f);
        if hi > MAX_BITS || lo > MAX_BITS {
            return Err(Error::InvalidLengthHeader);
        }
        out.0[2 * i] = hi;
        out.0[2 * i + 1] = lo;
    }
    Ok(out)
}
