//! Block-local LZ77 modeled on a small-SRAM hardware matcher.
//!
//! Each block (at most [`BLOCK_SIZE`] bytes) is encoded independently. The
//! match finder hashes every examined 4-byte group twice into one table of
//! 256 buckets, each a 4-slot circular FIFO of block positions. Candidates
//! are verified byte by byte and the first one reaching [`MIN_MATCH`] is
//! taken without looking further (first-fit). A miss emits the group as
//! literals and skips ahead four bytes.

use crate::error::{Corruption, Error, Result};

/// Largest block the encoder accepts; offsets never leave the block.
pub const BLOCK_SIZE: usize = 4096;
pub const MIN_MATCH: usize = 4;
pub const MAX_OFFSET: usize = BLOCK_SIZE - 1;
pub const HASH_BUCKETS: usize = 256;
pub const BUCKET_SLOTS: usize = 4;
/// Bytes the cursor advances after a group with no usable candidate.
pub const MISS_STEP: usize = 4;
/// Window served by the decoder's register-backed buffer.
pub const RECENT_WINDOW: usize = 256;

const HASH_MULTIPLIER: u32 = 2_654_435_761;

/// One sequence: `literal_len` literal bytes followed by a back-reference.
///
/// The literal bytes themselves live in the owning [`TokenStream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub literal_len: u16,
    pub match_len: u16,
    pub offset: u16,
}

/// Tokens of one block plus their concatenated literal bytes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
    pub literals: Vec<u8>,
}

impl TokenStream {
    /// Pairs each token with its literal run.
    pub fn iter(&self) -> impl Iterator<Item = (&Token, &[u8])> {
        let mut cursor = 0usize;
        self.tokens.iter().map(move |tok| {
            let start = cursor.min(self.literals.len());
            let end = (cursor + tok.literal_len as usize).min(self.literals.len());
            cursor += tok.literal_len as usize;
            (tok, &self.literals[start..end])
        })
    }

    /// Number of bytes the stream expands to.
    pub fn expanded_len(&self) -> usize {
        self.tokens
            .iter()
            .map(|t| t.literal_len as usize + t.match_len as usize)
            .sum()
    }

    pub fn match_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.match_len > 0).count()
    }
}

/// Bucket indices for a 4-byte little-endian word.
///
/// `h0` is the top byte of a 32-bit multiplicative hash, `h1` the xor of the
/// four bytes.
pub fn hash_pair(word: u32) -> (u8, u8) {
    let h0 = (word.wrapping_mul(HASH_MULTIPLIER) >> 24) as u8;
    let [a, b, c, d] = word.to_le_bytes();
    (h0, a ^ b ^ c ^ d)
}

#[derive(Debug, Clone, Copy, Default)]
struct Bucket {
    slots: [u16; BUCKET_SLOTS],
    len: u8,
    cursor: u8,
}

impl Bucket {
    fn push(&mut self, pos: u16) {
        self.slots[self.cursor as usize] = pos;
        self.cursor = (self.cursor + 1) % BUCKET_SLOTS as u8;
        if (self.len as usize) < BUCKET_SLOTS {
            self.len += 1;
        }
    }

    /// Stored positions, oldest first.
    fn oldest_first(&self) -> impl Iterator<Item = u16> + '_ {
        let len = self.len as usize;
        let start = if len < BUCKET_SLOTS { 0 } else { self.cursor as usize };
        (0..len).map(move |i| self.slots[(start + i) % BUCKET_SLOTS])
    }
}

/// Fixed 256 x 4 position table used for one encode call.
#[derive(Debug, Clone)]
pub struct MatchTable {
    buckets: [Bucket; HASH_BUCKETS],
}

impl Default for MatchTable {
    fn default() -> Self {
        Self::new()
    }
}

impl MatchTable {
    pub fn new() -> Self {
        MatchTable {
            buckets: [Bucket::default(); HASH_BUCKETS],
        }
    }

    /// Candidate positions in probe order: `h0` bucket then `h1` bucket,
    /// oldest first within each.
    pub fn candidates(&self, h0: u8, h1: u8) -> impl Iterator<Item = u16> + '_ {
        let first = self.buckets[h0 as usize].oldest_first();
        let second = (h1 != h0)
            .then(|| self.buckets[h1 as usize].oldest_first())
            .into_iter()
            .flatten();
        first.chain(second)
    }

    pub fn insert(&mut self, h0: u8, h1: u8, pos: u16) {
        self.buckets[h0 as usize].push(pos);
        if h1 != h0 {
            self.buckets[h1 as usize].push(pos);
        }
    }

    pub fn bucket_len(&self, index: u8) -> usize {
        self.buckets[index as usize].len as usize
    }

    /// Total stored positions across all buckets.
    pub fn occupancy(&self) -> usize {
        self.buckets.iter().map(|b| b.len as usize).sum()
    }

    pub fn positions(&self) -> impl Iterator<Item = u16> + '_ {
        self.buckets.iter().flat_map(|b| b.oldest_first())
    }
}

fn read_word(block: &[u8], pos: usize) -> u32 {
    u32::from_le_bytes([block[pos], block[pos + 1], block[pos + 2], block[pos + 3]])
}

fn common_prefix(block: &[u8], candidate: usize, pos: usize) -> usize {
    block[pos..]
        .iter()
        .zip(&block[candidate..])
        .take_while(|(a, b)| a == b)
        .count()
}

/// Encodes one block. See the module docs for the matching policy.
pub fn lz77_encode(block: &[u8]) -> Result<TokenStream> {
    let mut table = MatchTable::new();
    encode_with_table(block, &mut table)
}

pub(crate) fn encode_with_table(block: &[u8], table: &mut MatchTable) -> Result<TokenStream> {
    if block.is_empty() {
        return Err(Error::EmptyInput);
    }
    if block.len() > BLOCK_SIZE {
        return Err(Error::InputTooLarge(block.len()));
    }

    let n = block.len();
    let mut out = TokenStream {
        tokens: Vec::new(),
        literals: Vec::with_capacity(n),
    };
    let mut pos = 0usize;
    let mut literal_start = 0usize;

    while pos + MIN_MATCH <= n {
        let (h0, h1) = hash_pair(read_word(block, pos));
        let found = table.candidates(h0, h1).find_map(|cand| {
            let cand = cand as usize;
            if cand >= pos || pos - cand > MAX_OFFSET {
                return None;
            }
            let len = common_prefix(block, cand, pos);
            (len >= MIN_MATCH).then_some((pos - cand, len))
        });
        table.insert(h0, h1, pos as u16);

        match found {
            Some((offset, len)) => {
                out.literals.extend_from_slice(&block[literal_start..pos]);
                out.tokens.push(Token {
                    literal_len: (pos - literal_start) as u16,
                    match_len: len as u16,
                    offset: offset as u16,
                });
                pos += len;
                literal_start = pos;
            }
            None => pos += MISS_STEP,
        }
    }

    if literal_start < n {
        out.literals.extend_from_slice(&block[literal_start..]);
        out.tokens.push(Token {
            literal_len: (n - literal_start) as u16,
            match_len: 0,
            offset: 0,
        });
    }
    Ok(out)
}

/// Decoder state: full history plus the short-offset window.
#[derive(Debug, Clone)]
pub struct DecoderBuffers {
    history: Vec<u8>,
    recent: [u8; RECENT_WINDOW],
    recent_head: usize,
}

impl DecoderBuffers {
    pub fn with_capacity(cap: usize) -> Self {
        DecoderBuffers {
            history: Vec::with_capacity(cap),
            recent: [0; RECENT_WINDOW],
            recent_head: 0,
        }
    }

    #[inline]
    fn push(&mut self, byte: u8) {
        self.history.push(byte);
        self.recent[self.recent_head] = byte;
        self.recent_head = (self.recent_head + 1) % RECENT_WINDOW;
    }

    pub fn extend_literals(&mut self, literals: &[u8]) {
        for &b in literals {
            self.push(b);
        }
    }

    /// Copies `len` bytes starting `offset` back, one byte at a time so that
    /// overlapping copies replicate the period.
    pub fn copy_match(&mut self, offset: usize, len: usize, use_recent: bool) -> Result<()> {
        if offset == 0 || offset > self.history.len() {
            return Err(Corruption::OffsetOutOfRange.into());
        }
        if use_recent && offset <= RECENT_WINDOW {
            for _ in 0..len {
                let idx = (self.recent_head + RECENT_WINDOW - offset) % RECENT_WINDOW;
                let b = self.recent[idx];
                self.push(b);
            }
        } else {
            for _ in 0..len {
                let b = self.history[self.history.len() - offset];
                self.push(b);
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// The short-offset window in age order; always the tail of the history.
    pub fn recent(&self) -> Vec<u8> {
        let k = self.history.len().min(RECENT_WINDOW);
        (0..k)
            .map(|i| self.recent[(self.recent_head + RECENT_WINDOW - k + i) % RECENT_WINDOW])
            .collect()
    }

    pub fn history(&self) -> &[u8] {
        &self.history
    }

    pub fn into_output(self) -> Vec<u8> {
        self.history
    }
}

pub fn lz77_decode(tokens: &TokenStream, expected_len: usize) -> Result<Vec<u8>> {
    decode_with(tokens, expected_len, true)
}

/// Decodes with the short-offset window enabled or disabled; output is the
/// same either way.
pub fn decode_with(tokens: &TokenStream, expected_len: usize, use_recent: bool) -> Result<Vec<u8>> {
    let mut bufs = DecoderBuffers::with_capacity(expected_len);
    let mut lit = 0usize;
    for tok in &tokens.tokens {
        let ll = tok.literal_len as usize;
        let run = tokens
            .literals
            .get(lit..lit + ll)
            .ok_or(Corruption::LengthMismatch)?;
        bufs.extend_literals(run);
        lit += ll;
        if tok.match_len > 0 {
            if bufs.len() + tok.match_len as usize > expected_len {
                return Err(Corruption::LengthMismatch.into());
            }
            bufs.copy_match(tok.offset as usize, tok.match_len as usize, use_recent)?;
        }
        if bufs.len() > expected_len {
            return Err(Corruption::LengthMismatch.into());
        }
    }
    if bufs.len() != expected_len || lit != tokens.literals.len() {
        return Err(Corruption::LengthMismatch.into());
    }
    Ok(bufs.into_output())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Plain reference expansion, independent of `DecoderBuffers`.
    fn reference_expand(ts: &TokenStream) -> Vec<u8> {
        let mut out = Vec::new();
        for (tok, lits) in ts.iter() {
            out.extend_from_slice(lits);
            for _ in 0..tok.match_len {
                out.push(out[out.len() - tok.offset as usize]);
            }
        }
        out
    }

    /// Greedy longest-match parse over every earlier position.
    fn brute_force_longest(block: &[u8]) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        let (mut pos, mut lit_start) = (0, 0);
        while pos < block.len() {
            let best = (0..pos)
                .map(|c| (pos - c, common_prefix(block, c, pos)))
                .max_by_key(|&(off, len)| (len, std::cmp::Reverse(off)))
                .filter(|&(_, len)| len >= MIN_MATCH);
            match best {
                Some((off, len)) => {
                    out.push((pos - lit_start, len, off));
                    pos += len;
                    lit_start = pos;
                }
                None => pos += 1,
            }
        }
        if lit_start < block.len() {
            out.push((block.len() - lit_start, 0, 0));
        }
        out
    }

    #[test]
    fn zero_word_hashes_to_zero_xor() {
        assert_eq!(hash_pair(0).1, 0);
        let w = u32::from_le_bytes(*b"abcd");
        assert_eq!(hash_pair(w), hash_pair(w));
    }

    #[test]
    fn h0_spreads_two_varying_bytes() {
        // exhaustive over every pair of varying byte lanes
        for (i, j) in [(0, 1), (0, 2), (1, 2), (2, 3), (0, 3), (1, 3)] {
            let mut hits = [0u32; 256];
            for x in 0..=0xffffu32 {
                let mut bytes = [0x5au8; 4];
                bytes[i] = x as u8;
                bytes[j] = (x >> 8) as u8;
                hits[hash_pair(u32::from_le_bytes(bytes)).0 as usize] += 1;
            }
            for (bucket, &h) in hits.iter().enumerate() {
                assert!((128..=384).contains(&h), "lanes {i},{j} bucket {bucket}: {h}");
            }
        }
    }

    #[test]
    fn bucket_is_fifo_with_eviction() {
        let mut table = MatchTable::new();
        for p in 0..6u16 {
            table.insert(7, 7, p);
        }
        assert_eq!(table.bucket_len(7), BUCKET_SLOTS);
        assert_eq!(table.candidates(7, 7).collect::<Vec<_>>(), vec![2, 3, 4, 5]);
    }

    #[test]
    fn empty_block_is_rejected() {
        assert!(matches!(lz77_encode(&[]), Err(Error::EmptyInput)));
        assert!(matches!(
            lz77_encode(&vec![0; BLOCK_SIZE + 1]),
            Err(Error::InputTooLarge(_))
        ));
    }

    #[test]
    fn no_repeat_block_is_all_literals() {
        // every 4-byte window distinct: consecutive byte pairs never repeat
        let mut block = Vec::with_capacity(BLOCK_SIZE);
        'outer: for a in 0u8..=255 {
            for b in 0u8..=255 {
                if block.len() == BLOCK_SIZE {
                    break 'outer;
                }
                block.push(a);
                block.push(b);
            }
        }
        block.truncate(BLOCK_SIZE);
        let ts = lz77_encode(&block).unwrap();
        assert_eq!(
            ts.tokens,
            vec![Token { literal_len: 4096, match_len: 0, offset: 0 }]
        );
    }

    #[test]
    fn period_four_text() {
        let block = b"abcdabcdabcd";
        let ts = lz77_encode(block).unwrap();
        let oracle = brute_force_longest(block);
        assert_eq!(oracle, vec![(4, 8, 4)]);
        let ours: Vec<_> = ts
            .tokens
            .iter()
            .map(|t| (t.literal_len as usize, t.match_len as usize, t.offset as usize))
            .collect();
        assert_eq!(ours, oracle);
        assert_eq!(ts.literals, b"abcd");
    }

    #[test]
    fn zero_block() {
        let block = vec![0u8; BLOCK_SIZE];
        let ts = lz77_encode(&block).unwrap();
        assert!(ts.tokens[0].literal_len <= 4);
        assert!(ts.tokens.iter().all(|t| t.match_len == 0 || (1..=4).contains(&t.offset)));
        assert_eq!(reference_expand(&ts), block);
    }

    #[test]
    fn rle_and_period_fill() {
        let ts = TokenStream {
            tokens: vec![Token { literal_len: 1, match_len: 5, offset: 1 }],
            literals: b"a".to_vec(),
        };
        assert_eq!(lz77_decode(&ts, 6).unwrap(), b"aaaaaa");
        let ts = TokenStream {
            tokens: vec![Token { literal_len: 2, match_len: 4, offset: 2 }],
            literals: b"ab".to_vec(),
        };
        assert_eq!(lz77_decode(&ts, 6).unwrap(), b"ababab");
    }

    #[test]
    fn decode_errors() {
        let ts = TokenStream {
            tokens: vec![Token { literal_len: 2, match_len: 4, offset: 3 }],
            literals: b"ab".to_vec(),
        };
        assert!(matches!(
            lz77_decode(&ts, 6),
            Err(Error::Corrupt(Corruption::OffsetOutOfRange))
        ));
        let ts = TokenStream {
            tokens: vec![Token { literal_len: 2, match_len: 4, offset: 2 }],
            literals: b"ab".to_vec(),
        };
        assert!(matches!(
            lz77_decode(&ts, 7),
            Err(Error::Corrupt(Corruption::LengthMismatch))
        ));
    }

    fn mixed_block(rng: &mut ChaCha8Rng) -> Vec<u8> {
        let len = rng.random_range(1..=BLOCK_SIZE);
        let alphabet = rng.random_range(1..=256u32);
        let mut block = Vec::with_capacity(len);
        while block.len() < len {
            if !block.is_empty() && rng.random_bool(0.3) {
                let off = rng.random_range(1..=block.len());
                let run = rng.random_range(1..64);
                for _ in 0..run {
                    block.push(block[block.len() - off]);
                }
            } else {
                block.push((rng.next_u32() % alphabet) as u8);
            }
        }
        block.truncate(len);
        block
    }

    #[test]
    fn round_trip_fuzz_10k() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x1277);
        for _ in 0..10_000 {
            let block = mixed_block(&mut rng);
            let ts = lz77_encode(&block).unwrap();
            assert_eq!(lz77_decode(&ts, block.len()).unwrap(), block);
        }
    }

    proptest! {
        #[test]
        fn tokens_respect_invariants(block in proptest::collection::vec(0u8..4, 1..=BLOCK_SIZE)) {
            let ts = lz77_encode(&block).unwrap();
            let mut pos = 0usize;
            for (i, tok) in ts.tokens.iter().enumerate() {
                pos += tok.literal_len as usize;
                if tok.match_len == 0 {
                    prop_assert_eq!(i, ts.tokens.len() - 1);
                } else {
                    prop_assert!(tok.match_len as usize >= MIN_MATCH);
                    prop_assert!(tok.offset as usize >= 1 && tok.offset as usize <= pos);
                    prop_assert!(tok.offset as usize <= MAX_OFFSET);
                }
                pos += tok.match_len as usize;
            }
            prop_assert_eq!(reference_expand(&ts), block.clone());
            prop_assert_eq!(lz77_encode(&block).unwrap(), ts);
        }

        #[test]
        fn recent_window_path_matches_history_path(block in proptest::collection::vec(0u8..8, 1..=BLOCK_SIZE)) {
            let ts = lz77_encode(&block).unwrap();
            let fast = decode_with(&ts, block.len(), true).unwrap();
            let slow = decode_with(&ts, block.len(), false).unwrap();
            prop_assert_eq!(&fast, &slow);
            prop_assert_eq!(fast, block);
        }

        #[test]
        fn table_stays_bounded(block in proptest::collection::vec(any::<u8>(), 4..=BLOCK_SIZE)) {
            let mut table = MatchTable::new();
            encode_with_table(&block, &mut table).unwrap();
            prop_assert!(table.occupancy() <= HASH_BUCKETS * BUCKET_SLOTS);
            prop_assert!(table.positions().all(|p| (p as usize) < block.len()));
        }
    }

    #[test]
    fn recent_window_tracks_history_tail() {
        let mut bufs = DecoderBuffers::with_capacity(600);
        bufs.extend_literals(&(0..=255u8).collect::<Vec<_>>());
        bufs.extend_literals(b"xyz");
        bufs.copy_match(3, 300, true).unwrap();
        let h = bufs.history();
        assert_eq!(bufs.recent(), &h[h.len() - RECENT_WINDOW..]);
        let mut short = DecoderBuffers::with_capacity(4);
        short.extend_literals(b"ab");
        assert_eq!(short.recent(), b"ab");
    }
}
