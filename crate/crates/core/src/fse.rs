//! Table-based ANS (finite state entropy) for the literal stream.
//!
//! Symbols are encoded last to first and the decoder walks forward. The
//! encoder's bit chunks are buffered and emitted in reverse, so the stream
//! reads front to back: the final encoder state (`table_log` bits) followed
//! by each transition's low state bits.

use crate::bits::{BitReader, BitWriter};
use crate::error::{Corruption, Error, Result};
use crate::huffman::{Histogram, ALPHABET};

pub const MIN_TABLE_LOG: u8 = 4;
pub const MAX_TABLE_LOG: u8 = 12;
pub const DEFAULT_TABLE_LOG: u8 = 11;
/// One byte of table log plus 256 packed 12-bit weights.
pub const NORM_HEADER_BYTES: usize = 1 + ALPHABET * 12 / 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedCounts {
    table_log: u8,
    norm: [u16; ALPHABET],
}

impl NormalizedCounts {
    pub fn table_log(&self) -> u8 {
        self.table_log
    }

    pub fn weights(&self) -> &[u16; ALPHABET] {
        &self.norm
    }

    pub fn table_size(&self) -> usize {
        1 << self.table_log
    }

    /// Validates hand-built weights.
    pub fn from_weights(table_log: u8, norm: [u16; ALPHABET]) -> Result<Self> {
        if !(MIN_TABLE_LOG..=MAX_TABLE_LOG).contains(&table_log) {
            return Err(Error::InvalidTableLog(table_log));
        }
        let sum: u32 = norm.iter().map(|&w| u32::from(w)).sum();
        let distinct = norm.iter().filter(|&&w| w > 0).count();
        if sum != 1 << table_log || distinct < 2 {
            return Err(Corruption::BadTable.into());
        }
        Ok(NormalizedCounts { table_log, norm })
    }

    pub fn serialize(&self) -> [u8; NORM_HEADER_BYTES] {
        let mut w = BitWriter::with_capacity(NORM_HEADER_BYTES);
        w.write(u32::from(self.table_log), 8);
        for &n in &self.norm {
            w.write(u32::from(n), 12);
        }
        let bytes = w.finish();
        let mut out = [0u8; NORM_HEADER_BYTES];
        out.copy_from_slice(&bytes);
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < NORM_HEADER_BYTES {
            return Err(Corruption::Truncated.into());
        }
        let mut r = BitReader::new(&bytes[..NORM_HEADER_BYTES]);
        let table_log = r.read(8).unwrap_or(0) as u8;
        let mut norm = [0u16; ALPHABET];
        for n in norm.iter_mut() {
            *n = r.read(12).unwrap_or(0) as u16;
        }
        Self::from_weights(table_log, norm).map_err(|e| match e {
            Error::InvalidTableLog(_) => Corruption::BadTable.into(),
            other => other,
        })
    }
}

/// Scales `hist` to sum to `2^table_log`.
///
/// Floors are taken first, every present symbol keeps at least weight 1,
/// leftover slots go to the largest fractional remainders and any excess
/// is taken back from the most frequent symbols.
pub fn normalize_counts(hist: &Histogram, table_log: u8) -> Result<NormalizedCounts> {
    if !(MIN_TABLE_LOG..=MAX_TABLE_LOG).contains(&table_log) {
        return Err(Error::InvalidTableLog(table_log));
    }
    let distinct = hist.distinct();
    if distinct == 0 {
        return Err(Error::EmptyHistogram);
    }
    if distinct == 1 {
        return Err(Error::SingleSymbol);
    }
    let target = 1u64 << table_log;
    if distinct as u64 > target {
        return Err(Error::InvalidTableLog(table_log));
    }
    let total = hist.total();
    let mut norm = [0u16; ALPHABET];
    let mut remainders: Vec<(u64, usize)> = Vec::new();
    let mut sum = 0u64;
    for (s, &c) in hist.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let scaled = u64::from(c) * target;
        let floor = scaled / total;
        if floor == 0 {
            norm[s] = 1;
        } else {
            norm[s] = floor as u16;
            remainders.push((scaled % total, s));
        }
        sum += u64::from(norm[s]);
    }

    if sum < target {
        remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut short = target - sum;
        for &(_, s) in remainders.iter().cycle() {
            if short == 0 {
                break;
            }
            norm[s] += 1;
            short -= 1;
        }
    } else {
        let mut excess = sum - target;
        while excess > 0 {
            let (s, &w) = norm
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .unwrap();
            let take = excess.min(u64::from(w) - 1).max(1);
            norm[s] -= take as u16;
            excess -= take;
        }
    }
    Ok(NormalizedCounts { table_log, norm })
}

#[derive(Debug, Clone, Copy, Default)]
struct DecodeEntry {
    symbol: u8,
    nb_bits: u8,
    new_state_base: u16,
}

#[derive(Debug, Clone, Copy, Default)]
struct SymbolTransform {
    delta_nb_bits: u32,
    delta_find_state: i32,
}

/// Matching encode and decode tables for one set of weights.
#[derive(Debug, Clone)]
pub struct FseTables {
    table_log: u8,
    norm: [u16; ALPHABET],
    decode: Vec<DecodeEntry>,
    next_state: Vec<u16>,
    transforms: [SymbolTransform; ALPHABET],
}

fn spread_step(size: usize) -> usize {
    (size >> 1) + (size >> 3) + 3
}

fn high_bit(x: u32) -> u32 {
    31 - x.leading_zeros()
}

impl FseTables {
    pub fn new(counts: &NormalizedCounts) -> Self {
        let table_log = counts.table_log;
        let size = 1usize << table_log;
        let mask = size - 1;
        let step = spread_step(size);

        let mut symbol_at = vec![0u8; size];
        let mut pos = 0usize;
        for (s, &n) in counts.norm.iter().enumerate() {
            for _ in 0..n {
                symbol_at[pos] = s as u8;
                pos = (pos + step) & mask;
            }
        }
        debug_assert_eq!(pos, 0, "spread step must visit every cell");

        let mut next = counts.norm.map(u32::from);
        let decode = symbol_at
            .iter()
            .map(|&s| {
                let state = next[s as usize];
                next[s as usize] += 1;
                let nb_bits = u32::from(table_log) - high_bit(state);
                DecodeEntry {
                    symbol: s,
                    nb_bits: nb_bits as u8,
                    new_state_base: ((state << nb_bits) as usize - size) as u16,
                }
            })
            .collect();

        let mut cumul = [0u32; ALPHABET + 1];
        for s in 0..ALPHABET {
            cumul[s + 1] = cumul[s] + u32::from(counts.norm[s]);
        }
        let mut fill = cumul;
        let mut next_state = vec![0u16; size];
        for (u, &s) in symbol_at.iter().enumerate() {
            next_state[fill[s as usize] as usize] = (size + u) as u16;
            fill[s as usize] += 1;
        }

        let mut transforms = [SymbolTransform::default(); ALPHABET];
        for (s, &n) in counts.norm.iter().enumerate() {
            let n = u32::from(n);
            if n == 0 {
                continue;
            }
            let tl = u32::from(table_log);
            transforms[s] = if n == 1 {
                SymbolTransform {
                    delta_nb_bits: (tl << 16) - (1 << tl),
                    delta_find_state: cumul[s] as i32 - 1,
                }
            } else {
                let max_bits_out = tl - high_bit(n - 1);
                let min_state_plus = n << max_bits_out;
                SymbolTransform {
                    delta_nb_bits: (max_bits_out << 16) - min_state_plus,
                    delta_find_state: cumul[s] as i32 - n as i32,
                }
            };
        }

        FseTables {
            table_log,
            norm: counts.norm,
            decode,
            next_state,
            transforms,
        }
    }

    pub fn table_log(&self) -> u8 {
        self.table_log
    }

    fn contains(&self, symbol: u8) -> bool {
        self.norm[symbol as usize] > 0
    }

    /// Encoder state (in `[size, 2*size)`) that starts a stream ending in `symbol`.
    fn initial_state(&self, symbol: u8) -> u32 {
        let tt = self.transforms[symbol as usize];
        let nb_bits_out = (tt.delta_nb_bits + (1 << 15)) >> 16;
        let value = (nb_bits_out << 16) - tt.delta_nb_bits;
        let idx = (value >> nb_bits_out) as i32 + tt.delta_find_state;
        u32::from(self.next_state[idx as usize])
    }

    /// Decoder state index for every cell, used by invariant checks.
    pub fn decode_symbols(&self) -> Vec<u8> {
        self.decode.iter().map(|e| e.symbol).collect()
    }
}

pub fn build_tables(counts: &NormalizedCounts) -> FseTables {
    FseTables::new(counts)
}

pub fn fse_encode(bytes: &[u8], tables: &FseTables) -> Result<Vec<u8>> {
    let Some((&last, rest)) = bytes.split_last() else {
        return Ok(Vec::new());
    };
    if let Some(&bad) = bytes.iter().find(|&&b| !tables.contains(b)) {
        return Err(Error::SymbolNotInTable(bad));
    }
    let mut state = tables.initial_state(last);
    let mut chunks: Vec<(u32, u32)> = Vec::with_capacity(rest.len());
    for &s in rest.iter().rev() {
        let tt = tables.transforms[s as usize];
        let nb = (state + tt.delta_nb_bits) >> 16;
        chunks.push((state, nb));
        let idx = (state >> nb) as i32 + tt.delta_find_state;
        state = u32::from(tables.next_state[idx as usize]);
    }

    let tl = u32::from(tables.table_log);
    let mut w = BitWriter::with_capacity(bytes.len());
    w.write(state - (1 << tl), tl);
    for &(value, nb) in chunks.iter().rev() {
        w.write(value, nb);
    }
    Ok(w.finish())
}

pub fn fse_decode(bits: &[u8], tables: &FseTables, n: usize) -> Result<Vec<u8>> {
    if n == 0 {
        return if bits.is_empty() {
            Ok(Vec::new())
        } else {
            Err(Corruption::TrailingBytes.into())
        };
    }
    let size = 1u32 << tables.table_log;
    let mut r = BitReader::new(bits);
    let mut state = r
        .read(u32::from(tables.table_log))
        .ok_or(Corruption::Truncated)? as usize;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let e = tables.decode[state];
        out.push(e.symbol);
        if i + 1 < n {
            let low = r.read(u32::from(e.nb_bits)).ok_or(Corruption::Truncated)?;
            state = usize::from(e.new_state_base) + low as usize;
        }
    }
    if state as u32 + size != tables.initial_state(out[n - 1]) {
        return Err(Corruption::BadFinalState.into());
    }
    if r.bits_left() >= 8 {
        return Err(Corruption::TrailingBytes.into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn entropy_bits(data: &[u8]) -> f64 {
        let h = Histogram::from_bytes(data);
        let n = data.len() as f64;
        h.counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum::<f64>()
            * n
    }

    fn tables_for(data: &[u8], tl: u8) -> FseTables {
        build_tables(&normalize_counts(&Histogram::from_bytes(data), tl).unwrap())
    }

    #[test]
    fn exact_ratios_normalize_exactly() {
        let n = normalize_counts(&Histogram::from_counts(&[50, 50]), 6).unwrap();
        assert_eq!(&n.weights()[..2], &[32, 32]);
            }

    #[test]
    fn three_to_one_at_small_log() {
        let n = normalize_counts(&Histogram::from_counts(&[3, 1]), 4).unwrap();
        assert_eq!(&n.weights()[..2], &[12, 4]);
        assert!(matches!(
            normalize_counts(&Histogram::from_counts(&[3, 1]), 3),
            Err(Error::InvalidTableLog(3))
        ));
    }

    #[test]
    fn single_symbol_goes_elsewhere() {
        assert!(matches!(
            normalize_counts(&Histogram::from_counts(&[9]), 11),
            Err(Error::SingleSymbol)
        ));
    }

    #[test]
    fn too_many_symbols_for_table() {
        let h = Histogram::from_counts(&[1; 256]);
        assert!(matches!(normalize_counts(&h, 7), Err(Error::InvalidTableLog(7))));
        assert!(normalize_counts(&h, 8).is_ok());
    }

    #[test]
    fn spread_visits_every_cell() {
        for tl in MIN_TABLE_LOG..=MAX_TABLE_LOG {
            let size = 1usize << tl;
            let step = spread_step(size);
            let mut seen = vec![false; size];
            let mut pos = 0;
            for _ in 0..size {
                assert!(!seen[pos]);
                seen[pos] = true;
                pos = (pos + step) & (size - 1);
            }
        }
    }

    #[test]
    fn uniform_four_symbols_cost_two_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<u8> = (0..8192).map(|_| rng.random_range(0..4u8)).collect();
        let t = build_tables(&normalize_counts(&Histogram::from_counts(&[1, 1, 1, 1]), 11).unwrap());
        let bits = fse_encode(&data, &t).unwrap();
        let ideal = data.len() * 2 / 8;
        assert!(bits.len().abs_diff(ideal) <= 2, "{} vs {}", bits.len(), ideal);
        assert_eq!(fse_decode(&bits, &t, data.len()).unwrap(), data);
    }

    #[test]
    fn alternating_pairs() {
        let data: Vec<u8> = b"AB".repeat(1000);
        let t = tables_for(&data, 6);
        let bits = fse_encode(&data, &t).unwrap();
        assert_eq!(fse_decode(&bits, &t, data.len()).unwrap(), data);
    }

    #[test]
    fn errors() {
        let t = tables_for(b"ABAB", 6);
        assert!(matches!(fse_encode(b"ABC", &t), Err(Error::SymbolNotInTable(b'C'))));
        let data: Vec<u8> = b"ABBBAABABBBBA".repeat(20);
        let t = tables_for(&data, 8);
        let mut bits = fse_encode(&data, &t).unwrap();
        assert!(fse_decode(&bits[..bits.len() / 2], &t, data.len()).is_err());
        bits[3] ^= 0x10;
        assert!(fse_decode(&bits, &t, data.len()).map(|d| d != data).unwrap_or(true));
    }

    #[test]
    fn near_entropy_on_iid_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let k = rng.random_range(2..200usize);
            let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0f64).powi(2)).collect();
            let total: f64 = weights.iter().sum();
            let data: Vec<u8> = (0..4096)
                .map(|_| {
                    let mut x = rng.random::<f64>() * total;
                    weights.iter().position(|&w| { x -= w; x < 0.0 }).unwrap_or(k - 1) as u8
                })
                .collect();
            let t = tables_for(&data, DEFAULT_TABLE_LOG);
            let bits = fse_encode(&data, &t).unwrap();
            let per_symbol = (bits.len() * 8) as f64 / data.len() as f64;
            let h = entropy_bits(&data) / data.len() as f64;
            assert!(per_symbol <= h + 0.1, "k={k}: {per_symbol} vs {h}");
            assert_eq!(fse_decode(&bits, &t, data.len()).unwrap(), data);
        }
    }

    #[test]
    fn round_trip_fuzz_10k() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xf5e);
        for _ in 0..10_000 {
            let len = rng.random_range(1..=4096usize);
            let alphabet = rng.random_range(2..=256u32);
            let skew = rng.random_range(1..4);
            let mut data: Vec<u8> = (0..len)
                .map(|_| (0..skew).map(|_| rng.random_range(0..alphabet)).min().unwrap() as u8)
                .collect();
            data.push(0);
            data.push(1);
            let tl = rng.random_range(MIN_TABLE_LOG.max(9)..=MAX_TABLE_LOG);
            let t = tables_for(&data, tl);
            let bits = fse_encode(&data, &t).unwrap();
            assert_eq!(fse_decode(&bits, &t, data.len()).unwrap(), data);
        }
    }

    proptest! {
        #[test]
        fn normalization_sums(counts in proptest::collection::vec(0u32..100_000, 2..256), tl in 8u8..=12) {
            let mut h = Histogram::from_counts(&counts);
            h.counts[0] += 1;
            h.counts[1] += 1;
            let n = normalize_counts(&h, tl).unwrap();
            prop_assert_eq!(n.weights().iter().map(|&w| u32::from(w)).sum::<u32>(), 1 << tl);
            for s in 0..ALPHABET {
                prop_assert_eq!(h.counts[s] > 0, n.weights()[s] > 0);
            }
            prop_assert_eq!(NormalizedCounts::deserialize(&n.serialize()).unwrap(), n.clone());
            let t = build_tables(&n);
            let mut cells = t.decode_symbols();
            cells.sort_unstable();
            let mut expected: Vec<u8> = (0..ALPHABET).flat_map(|s| std::iter::repeat_n(s as u8, n.weights()[s] as usize)).collect();
            expected.sort_unstable();
            prop_assert_eq!(cells, expected);
        }
    }
}
