//! Chunk framing and the `.dpz` stream container. Byte layouts are
//! documented in `FORMAT.md` at the repository root.
//!
//! A chunk is split into 4 KiB pages that are compressed independently, so
//! larger chunk sizes change framing overhead but not what the matcher sees.
//! Compressed pages carry an optional entropy table, the sequence fields as
//! LEB128 varints, and the literal stream.

use std::io::{self, Read, Write};

use rayon::prelude::*;

use crate::error::{Corruption, Error, Result};
use crate::fse::{self, NormalizedCounts, DEFAULT_TABLE_LOG, NORM_HEADER_BYTES};
use crate::huffman::{self, CanonizationTrace, CodeLengths, Histogram, LENGTH_HEADER_BYTES};
use crate::lz77::{self, Token, TokenStream, MIN_MATCH};

pub const PAGE_SIZE: usize = lz77::BLOCK_SIZE;
pub const MAGIC: [u8; 4] = *b"DPZ1";
pub const VERSION: u8 = 1;
pub const CRC_FLAG: u8 = 0x10;
pub const STREAM_HEADER_BYTES: usize = 6;
pub const MIN_CHUNK_LOG: u8 = 12;
pub const MAX_CHUNK_LOG: u8 = 16;
pub const DEFAULT_CHUNK_LOG: u8 = 12;
pub const MAX_CHUNK_SIZE: usize = 1 << MAX_CHUNK_LOG;
const PAGE_FRAME_BYTES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[repr(u8)]
pub enum Mode {
    Raw = 0,
    LzHuf = 1,
    LzFse = 2,
    LzOnly = 3,
}

impl TryFrom<u8> for Mode {
    type Error = Corruption;

    fn try_from(v: u8) -> Result<Self, Corruption> {
        Ok(match v {
            0 => Mode::Raw,
            1 => Mode::LzHuf,
            2 => Mode::LzFse,
            3 => Mode::LzOnly,
            other => return Err(Corruption::BadMode(other)),
        })
    }
}

/// Which encodings the framer may pick from. Every policy falls back to
/// [`Mode::Raw`] when the encoding would not shrink the page.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Smallest of Huffman, LZ-only and raw.
    #[default]
    Auto,
    Raw,
    /// Huffman literals; LZ-only when there are no literals.
    Huffman,
    /// tANS literals; LZ-only when the literals use fewer than two symbols.
    Fse,
    LzOnly,
}

impl Policy {
    fn nominal_mode(self) -> Mode {
        match self {
            Policy::Auto | Policy::Huffman => Mode::LzHuf,
            Policy::Raw => Mode::Raw,
            Policy::Fse => Mode::LzFse,
            Policy::LzOnly => Mode::LzOnly,
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Policy::Auto),
            "raw" => Ok(Policy::Raw),
            "huf" | "huffman" => Ok(Policy::Huffman),
            "fse" => Ok(Policy::Fse),
            "lz" | "lz-only" => Ok(Policy::LzOnly),
            other => Err(format!("unknown mode `{other}` (expected auto, raw, huf, fse or lz)")),
        }
    }
}

/// One framed chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkRecord {
    pub mode: Mode,
    pub orig_len: u32,
    pub payload: Vec<u8>,
    /// CRC32 of the original bytes, present when the stream enables it.
    pub crc: Option<u32>,
}

/// Bytes of the per-chunk header for a given chunk size.
pub fn record_header_len(chunk_log: u8) -> usize {
    1 + 2 * length_width(chunk_log)
}

fn length_width(chunk_log: u8) -> usize {
    if chunk_log > MIN_CHUNK_LOG {
        3
    } else {
        2
    }
}

impl ChunkRecord {
    pub fn comp_len(&self) -> usize {
        self.payload.len()
    }

    /// Header plus payload, excluding the optional checksum.
    pub fn stored_len(&self, chunk_log: u8) -> usize {
        record_header_len(chunk_log) + self.payload.len()
    }

    /// Stored size over original size; lower is better.
    pub fn ratio(&self, chunk_log: u8) -> f64 {
        self.stored_len(chunk_log) as f64 / f64::from(self.orig_len)
    }

    pub fn write_to<W: Write>(&self, w: &mut W, chunk_log: u8) -> io::Result<()> {
        let width = length_width(chunk_log);
        w.write_all(&[self.mode as u8])?;
        w.write_all(&self.orig_len.to_le_bytes()[..width])?;
        w.write_all(&(self.payload.len() as u32).to_le_bytes()[..width])?;
        w.write_all(&self.payload)?;
        if let Some(crc) = self.crc {
            w.write_all(&crc.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self, chunk_log: u8) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.stored_len(chunk_log) + 4);
        self.write_to(&mut out, chunk_log).expect("writing to a Vec cannot fail");
        out
    }

    /// Reads one record; `Ok(None)` on a clean end of stream.
    pub fn read_from<R: Read>(r: &mut R, chunk_log: u8, with_crc: bool) -> Result<Option<Self>> {
        let mut mode = [0u8; 1];
        if read_full(r, &mut mode)? == 0 {
            return Ok(None);
        }
        let mode = Mode::try_from(mode[0])?;
        let width = length_width(chunk_log);
        let mut lens = [0u8; 6];
        read_exact_or_truncated(r, &mut lens[..2 * width])?;
        let orig_len = le_uint(&lens[..width]);
        let comp_len = le_uint(&lens[width..2 * width]);
        if orig_len == 0 || orig_len as usize > 1 << chunk_log || comp_len > orig_len {
            return Err(Corruption::LengthMismatch.into());
        }
        let mut payload = vec![0u8; comp_len as usize];
        read_exact_or_truncated(r, &mut payload)?;
        let crc = if with_crc {
            let mut c = [0u8; 4];
            read_exact_or_truncated(r, &mut c)?;
            Some(u32::from_le_bytes(c))
        } else {
            None
        };
        Ok(Some(ChunkRecord { mode, orig_len, payload, crc }))
    }

    pub fn from_bytes(bytes: &[u8], chunk_log: u8, with_crc: bool) -> Result<Self> {
        let mut cursor = bytes;
        let rec = Self::read_from(&mut cursor, chunk_log, with_crc)?.ok_or(Corruption::Truncated)?;
        if !cursor.is_empty() {
            return Err(Corruption::TrailingBytes.into());
        }
        Ok(rec)
    }
}

fn le_uint(bytes: &[u8]) -> u32 {
    bytes.iter().rev().fold(0u32, |acc, &b| (acc << 8) | u32::from(b))
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    if read_full(r, buf)? < buf.len() {
        return Err(Corruption::Truncated.into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// varints

fn put_varint(out: &mut Vec<u8>, mut v: u32) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn get_varint(input: &mut &[u8]) -> Result<u32> {
    let mut v = 0u32;
    for shift in (0..35).step_by(7) {
        let (&b, rest) = input.split_first().ok_or(Corruption::Truncated)?;
        *input = rest;
        v |= u32::from(b & 0x7f).checked_shl(shift).unwrap_or(0);
        if b & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(Corruption::MalformedSequence.into())
}

fn put_sequences(out: &mut Vec<u8>, tokens: &[Token]) {
    put_varint(out, tokens.len() as u32);
    for t in tokens {
        put_varint(out, u32::from(t.literal_len));
        put_varint(out, u32::from(t.match_len));
        if t.match_len > 0 {
            put_varint(out, u32::from(t.offset));
        }
    }
}

fn get_sequences(input: &mut &[u8], orig_len: usize) -> Result<Vec<Token>> {
    let count = get_varint(input)? as usize;
    if count > orig_len {
        return Err(Corruption::MalformedSequence.into());
    }
    let mut tokens = Vec::with_capacity(count);
    let mut produced = 0usize;
    for i in 0..count {
        let literal_len = get_varint(input)? as usize;
        let match_len = get_varint(input)? as usize;
        let offset = if match_len > 0 { get_varint(input)? as usize } else { 0 };
        produced += literal_len + match_len;
        let last = i + 1 == count;
        if produced > orig_len
            || (match_len == 0 && !last)
            || (match_len > 0 && match_len < MIN_MATCH)
            || offset > u16::MAX as usize
        {
            return Err(Corruption::MalformedSequence.into());
        }
        tokens.push(Token {
            literal_len: literal_len as u16,
            match_len: match_len as u16,
            offset: offset as u16,
        });
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// pages

/// How one page was encoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageEncoding {
    pub mode: Mode,
    pub payload: Vec<u8>,
    /// Present when a Huffman code was built for the page.
    pub trace: Option<CanonizationTrace>,
    pub literal_count: usize,
}

fn huffman_candidate(seq: &[u8], literals: &[u8]) -> Result<Option<(Vec<u8>, CanonizationTrace)>> {
    if literals.is_empty() {
        return Ok(None);
    }
    let (lengths, trace) = huffman::build_code(&Histogram::from_bytes(literals))?;
    let table = huffman::canonicalize(&lengths)?;
    let bits = huffman::huff_encode(literals, &table)?;
    let mut out = Vec::with_capacity(LENGTH_HEADER_BYTES + seq.len() + bits.len());
    out.extend_from_slice(&huffman::serialize_lengths(&lengths));
    out.extend_from_slice(seq);
    out.extend_from_slice(&bits);
    Ok(Some((out, trace)))
}

fn fse_candidate(seq: &[u8], literals: &[u8]) -> Result<Option<Vec<u8>>> {
    let hist = Histogram::from_bytes(literals);
    if hist.distinct() < 2 {
        return Ok(None);
    }
    let norm = fse::normalize_counts(&hist, DEFAULT_TABLE_LOG)?;
    let bits = fse::fse_encode(literals, &fse::build_tables(&norm))?;
    let mut out = Vec::with_capacity(NORM_HEADER_BYTES + seq.len() + bits.len());
    out.extend_from_slice(&norm.serialize());
    out.extend_from_slice(seq);
    out.extend_from_slice(&bits);
    Ok(Some(out))
}

fn lz_only_candidate(seq: &[u8], literals: &[u8]) -> Vec<u8> {
    [seq, literals].concat()
}

/// Encodes one page of at most [`PAGE_SIZE`] bytes.
pub fn encode_page(data: &[u8], policy: Policy) -> Result<PageEncoding> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    if data.len() > PAGE_SIZE {
        return Err(Error::InputTooLarge(data.len()));
    }
    let raw = || PageEncoding {
        mode: Mode::Raw,
        payload: data.to_vec(),
        trace: None,
        literal_count: data.len(),
    };
    if policy == Policy::Raw {
        return Ok(raw());
    }

    let tokens = lz77::lz77_encode(data)?;
    let mut seq = Vec::with_capacity(tokens.tokens.len() * 4 + 4);
    put_sequences(&mut seq, &tokens.tokens);
    let literals = &tokens.literals;
    let lz_only = |trace| PageEncoding {
        mode: Mode::LzOnly,
        payload: lz_only_candidate(&seq, literals),
        trace,
        literal_count: literals.len(),
    };

    let chosen = match policy {
        Policy::Raw => unreachable!(),
        Policy::LzOnly => lz_only(None),
        Policy::Huffman => match huffman_candidate(&seq, literals)? {
            Some((payload, trace)) => PageEncoding {
                mode: Mode::LzHuf,
                payload,
                trace: Some(trace),
                literal_count: literals.len(),
            },
            None => lz_only(None),
        },
        Policy::Fse => match fse_candidate(&seq, literals)? {
            Some(payload) => PageEncoding {
                mode: Mode::LzFse,
                payload,
                trace: None,
                literal_count: literals.len(),
            },
            None => lz_only(None),
        },
        Policy::Auto => {
            let plain = lz_only(None);
            match huffman_candidate(&seq, literals)? {
                Some((payload, trace)) if payload.len() < plain.payload.len() => PageEncoding {
                    mode: Mode::LzHuf,
                    payload,
                    trace: Some(trace),
                    literal_count: literals.len(),
                },
                Some((_, trace)) => PageEncoding { trace: Some(trace), ..plain },
                None => plain,
            }
        }
    };
    if chosen.payload.len() >= data.len() {
        return Ok(PageEncoding { trace: chosen.trace, ..raw() });
    }
    Ok(chosen)
}

/// Inverse of [`encode_page`].
pub fn decode_page(mode: Mode, payload: &[u8], orig_len: usize) -> Result<Vec<u8>> {
    let mut input = payload;
    let lengths: Option<CodeLengths>;
    let norm: Option<NormalizedCounts>;
    match mode {
        Mode::Raw => {
            if payload.len() != orig_len {
                return Err(Corruption::LengthMismatch.into());
            }
            return Ok(payload.to_vec());
        }
        Mode::LzHuf => {
            lengths = Some(huffman::deserialize_lengths(input).map_err(|e| match e {
                Error::InvalidLengthHeader => Error::Corrupt(Corruption::BadTable),
                other => other,
            })?);
            input = &input[LENGTH_HEADER_BYTES..];
            norm = None;
        }
        Mode::LzFse => {
            norm = Some(NormalizedCounts::deserialize(input)?);
            input = &input[NORM_HEADER_BYTES..];
            lengths = None;
        }
        Mode::LzOnly => {
            lengths = None;
            norm = None;
        }
    }
    let tokens = get_sequences(&mut input, orig_len)?;
    let literal_count: usize = tokens.iter().map(|t| t.literal_len as usize).sum();
    let literals = if let Some(lengths) = lengths {
        huffman::huff_decode(input, &lengths, literal_count).map_err(|e| match e {
            Error::InvalidLengths => Error::Corrupt(Corruption::BadTable),
            other => other,
        })?
    } else if let Some(norm) = norm {
        fse::fse_decode(input, &fse::build_tables(&norm), literal_count)?
    } else {
        if input.len() != literal_count {
            return Err(Corruption::LengthMismatch.into());
        }
        input.to_vec()
    };
    lz77::lz77_decode(&TokenStream { tokens, literals }, orig_len)
}

// ---------------------------------------------------------------------------
// chunks

/// Per-page detail from [`compress_chunk_detailed`].
#[derive(Debug, Clone, Default)]
pub struct ChunkStats {
    pub page_modes: Vec<Mode>,
    pub traces: Vec<Option<CanonizationTrace>>,
}

pub fn compress_chunk(data: &[u8], policy: Policy) -> Result<ChunkRecord> {
    compress_chunk_detailed(data, policy).map(|(rec, _)| rec)
}

pub fn compress_chunk_detailed(data: &[u8], policy: Policy) -> Result<(ChunkRecord, ChunkStats)> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    if data.len() > MAX_CHUNK_SIZE {
        return Err(Error::InputTooLarge(data.len()));
    }
    let raw_record = || ChunkRecord {
        mode: Mode::Raw,
        orig_len: data.len() as u32,
        payload: data.to_vec(),
        crc: None,
    };
    let mut stats = ChunkStats::default();

    if data.len() <= PAGE_SIZE {
        let page = encode_page(data, policy)?;
        stats.page_modes.push(page.mode);
        stats.traces.push(page.trace);
        let rec = ChunkRecord {
            mode: page.mode,
            orig_len: data.len() as u32,
            payload: page.payload,
            crc: None,
        };
        return Ok((rec, stats));
    }

    let mut payload = Vec::with_capacity(data.len());
    for page_data in data.chunks(PAGE_SIZE) {
        let page = encode_page(page_data, policy)?;
        payload.push(page.mode as u8);
        payload.extend_from_slice(&(page.payload.len() as u16).to_le_bytes());
        payload.extend_from_slice(&page.payload);
        stats.page_modes.push(page.mode);
        stats.traces.push(page.trace);
    }
    let all_raw = stats.page_modes.iter().all(|&m| m == Mode::Raw);
    if all_raw || payload.len() >= data.len() {
        return Ok((raw_record(), stats));
    }
    let rec = ChunkRecord {
        mode: policy.nominal_mode(),
        orig_len: data.len() as u32,
        payload,
        crc: None,
    };
    Ok((rec, stats))
}

pub fn decompress_chunk(rec: &ChunkRecord) -> Result<Vec<u8>> {
    let orig_len = rec.orig_len as usize;
    if orig_len == 0 || orig_len > MAX_CHUNK_SIZE {
        return Err(Corruption::LengthMismatch.into());
    }
    let out = if rec.mode == Mode::Raw || orig_len <= PAGE_SIZE {
        decode_page(rec.mode, &rec.payload, orig_len)?
    } else {
        let mut out = Vec::with_capacity(orig_len);
        let mut input = rec.payload.as_slice();
        while out.len() < orig_len {
            if input.len() < PAGE_FRAME_BYTES {
                return Err(Corruption::Truncated.into());
            }
            let mode = Mode::try_from(input[0])?;
            let len = u16::from_le_bytes([input[1], input[2]]) as usize;
            input = &input[PAGE_FRAME_BYTES..];
            let body = input.get(..len).ok_or(Corruption::Truncated)?;
            input = &input[len..];
            let page_len = PAGE_SIZE.min(orig_len - out.len());
            out.extend_from_slice(&decode_page(mode, body, page_len)?);
        }
        if !input.is_empty() {
            return Err(Corruption::TrailingBytes.into());
        }
        out
    };
    if let Some(expected) = rec.crc {
        if crc32fast::hash(&out) != expected {
            return Err(Corruption::ChecksumMismatch.into());
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// streams

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub chunk_log: u8,
    pub crc: bool,
}

impl StreamHeader {
    pub fn new(chunk_log: u8, crc: bool) -> Result<Self> {
        if !(MIN_CHUNK_LOG..=MAX_CHUNK_LOG).contains(&chunk_log) {
            return Err(Error::InvalidChunkLog(chunk_log));
        }
        Ok(StreamHeader { chunk_log, crc })
    }

    pub fn chunk_size(&self) -> usize {
        1 << self.chunk_log
    }

    pub fn to_bytes(&self) -> [u8; STREAM_HEADER_BYTES] {
        let flags = if self.crc { CRC_FLAG } else { 0 };
        let [a, b, c, d] = MAGIC;
        [a, b, c, d, VERSION | flags, self.chunk_log]
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < STREAM_HEADER_BYTES || bytes[..4] != MAGIC {
            return Err(Error::UnsupportedContainer);
        }
        let version = bytes[4];
        if version & 0x0f != VERSION || version & 0xf0 & !CRC_FLAG != 0 {
            return Err(Error::UnsupportedContainer);
        }
        Self::new(bytes[5], version & CRC_FLAG != 0).map_err(|_| Error::UnsupportedContainer)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StreamOptions {
    pub chunk_log: u8,
    pub policy: Policy,
    pub crc: bool,
    pub jobs: usize,
}

impl Default for StreamOptions {
    fn default() -> Self {
        StreamOptions {
            chunk_log: DEFAULT_CHUNK_LOG,
            policy: Policy::Auto,
            crc: false,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamSummary {
    pub chunks: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
}

const CHUNKS_PER_BATCH: usize = 64;

/// Reads up to `max` chunks from `r`; the final one may be short.
fn read_chunks<R: Read>(r: &mut R, chunk_size: usize, max: usize) -> io::Result<Vec<Vec<u8>>> {
    let mut chunks = Vec::new();
    while chunks.len() < max {
        let mut buf = vec![0u8; chunk_size];
        let n = read_full(r, &mut buf)?;
        if n == 0 {
            break;
        }
        buf.truncate(n);
        let short = n < chunk_size;
        chunks.push(buf);
        if short {
            break;
        }
    }
    Ok(chunks)
}

pub fn compress_stream<R: Read, W: Write>(mut r: R, mut w: W, opts: &StreamOptions) -> Result<StreamSummary> {
    let header = StreamHeader::new(opts.chunk_log, opts.crc)?;
    w.write_all(&header.to_bytes())?;
    let mut summary = StreamSummary {
        bytes_out: STREAM_HEADER_BYTES as u64,
        ..Default::default()
    };
    let pool = (opts.jobs > 1)
        .then(|| rayon::ThreadPoolBuilder::new().num_threads(opts.jobs).build())
        .transpose()
        .map_err(|e| io::Error::other(e.to_string()))?;
    let batch = CHUNKS_PER_BATCH * opts.jobs.max(1);

    let compress_one = |chunk: &Vec<u8>| -> Result<ChunkRecord> {
        let mut rec = compress_chunk(chunk, opts.policy)?;
        if opts.crc {
            rec.crc = Some(crc32fast::hash(chunk));
        }
        Ok(rec)
    };

    loop {
        let chunks = read_chunks(&mut r, header.chunk_size(), batch)?;
        if chunks.is_empty() {
            break;
        }
        let records: Vec<ChunkRecord> = match &pool {
            Some(pool) => pool.install(|| chunks.par_iter().map(compress_one).collect::<Result<_>>())?,
            None => chunks.iter().map(compress_one).collect::<Result<_>>()?,
        };
        for (chunk, rec) in chunks.iter().zip(&records) {
            rec.write_to(&mut w, header.chunk_log)?;
            summary.chunks += 1;
            summary.bytes_in += chunk.len() as u64;
            summary.bytes_out += (rec.stored_len(header.chunk_log) + if opts.crc { 4 } else { 0 }) as u64;
        }
        if chunks.last().is_some_and(|c| c.len() < header.chunk_size()) {
            break;
        }
    }
    w.flush()?;
    Ok(summary)
}

pub fn decompress_stream<R: Read, W: Write>(mut r: R, mut w: W) -> Result<StreamSummary> {
    let mut hdr = [0u8; STREAM_HEADER_BYTES];
    if read_full(&mut r, &mut hdr)? < STREAM_HEADER_BYTES {
        return Err(Error::UnsupportedContainer);
    }
    let header = StreamHeader::parse(&hdr)?;
    let mut summary = StreamSummary {
        bytes_in: STREAM_HEADER_BYTES as u64,
        ..Default::default()
    };
    while let Some(rec) = ChunkRecord::read_from(&mut r, header.chunk_log, header.crc)? {
        let data = decompress_chunk(&rec)?;
        w.write_all(&data)?;
        summary.chunks += 1;
        summary.bytes_in += (rec.stored_len(header.chunk_log) + if header.crc { 4 } else { 0 }) as u64;
        summary.bytes_out += data.len() as u64;
    }
    w.flush()?;
    Ok(summary)
}

/// In-memory convenience over [`compress_stream`].
pub fn compress_bytes(data: &[u8], opts: &StreamOptions) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(data.len() / 2 + STREAM_HEADER_BYTES);
    compress_stream(data, &mut out, opts)?;
    Ok(out)
}

pub fn decompress_bytes(data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(data.len() * 2);
    decompress_stream(data, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn text(len: usize, seed: u64) -> Vec<u8> {
        let words = ["storage ", "flash ", "page ", "compress ", "the ", "of ", "latency ", "block "];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            out.extend_from_slice(words[rng.random_range(0..words.len())].as_bytes());
        }
        out.truncate(len);
        out
    }

    fn random(len: usize, seed: u64) -> Vec<u8> {
        let mut v = vec![0u8; len];
        ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut v);
        v
    }

    #[test]
    fn zero_page_is_tiny() {
        let rec = compress_chunk(&[0u8; 4096], Policy::Auto).unwrap();
        assert_ne!(rec.mode, Mode::Raw);
        assert!(rec.ratio(12) < 0.02, "{}", rec.ratio(12));
        assert_eq!(decompress_chunk(&rec).unwrap(), vec![0u8; 4096]);
    }

    #[test]
    fn random_page_falls_back_to_raw() {
        for policy in [Policy::Auto, Policy::Huffman, Policy::Fse, Policy::LzOnly] {
            let data = random(4096, 1);
            let rec = compress_chunk(&data, policy).unwrap();
            assert_eq!(rec.mode, Mode::Raw);
            assert_eq!(rec.comp_len(), 4096);
            assert_eq!(rec.ratio(12), 4101.0 / 4096.0);
            assert_eq!(decompress_chunk(&rec).unwrap(), data);
        }
    }

    #[test]
    fn policies_pick_their_modes() {
        let data = text(4096, 2);
        assert_eq!(compress_chunk(&data, Policy::Huffman).unwrap().mode, Mode::LzHuf);
        assert_eq!(compress_chunk(&data, Policy::Fse).unwrap().mode, Mode::LzFse);
        assert_eq!(compress_chunk(&data, Policy::LzOnly).unwrap().mode, Mode::LzOnly);
        assert_eq!(compress_chunk(&data, Policy::Raw).unwrap().mode, Mode::Raw);
        for p in [Policy::Auto, Policy::Huffman, Policy::Fse, Policy::LzOnly, Policy::Raw] {
            let rec = compress_chunk(&data, p).unwrap();
            assert_eq!(decompress_chunk(&rec).unwrap(), data, "{p:?}");
            if rec.mode != Mode::Raw {
                assert!(rec.comp_len() < rec.orig_len as usize);
            }
        }
    }

    #[test]
    fn empty_chunk_is_an_error() {
        assert!(matches!(compress_chunk(&[], Policy::Auto), Err(Error::EmptyInput)));
    }

    #[test]
    fn raw_record_is_verbatim() {
        let rec = ChunkRecord { mode: Mode::Raw, orig_len: 3, payload: b"xyz".to_vec(), crc: None };
        assert_eq!(decompress_chunk(&rec).unwrap(), b"xyz");
    }

    #[test]
    fn corrupted_offset_is_detected() {
        let data = b"abcdabcdabcdabcd".to_vec();
        let rec = compress_chunk(&data, Policy::LzOnly).unwrap();
        assert_eq!(rec.mode, Mode::LzOnly);
        // [count=1][LL=4][ML=12][Off=4] then "abcd"
        assert_eq!(&rec.payload[..4], &[1, 4, 12, 4]);
        let mut bad = rec.clone();
        bad.payload[3] = 9;
        let err = decompress_chunk(&bad).unwrap_err();
        assert!(matches!(err, Error::Corrupt(Corruption::OffsetOutOfRange)));
        assert_eq!(err.to_string(), "corrupt stream: offset out of range");
    }

    #[test]
    fn corrupt_records() {
        let data = text(4096, 3);
        let mut rec = compress_chunk(&data, Policy::Huffman).unwrap();
        rec.crc = Some(crc32fast::hash(&data) ^ 1);
        assert!(matches!(decompress_chunk(&rec), Err(Error::Corrupt(Corruption::ChecksumMismatch))));
        let mut bytes = compress_chunk(&data, Policy::Huffman).unwrap().to_bytes(12);
        bytes[0] = 7;
        assert!(matches!(
            ChunkRecord::from_bytes(&bytes, 12, false),
            Err(Error::Corrupt(Corruption::BadMode(7)))
        ));
        let bytes = compress_chunk(&data, Policy::Huffman).unwrap().to_bytes(12);
        assert!(matches!(
            ChunkRecord::from_bytes(&bytes[..bytes.len() - 1], 12, false),
            Err(Error::Corrupt(Corruption::Truncated))
        ));
        let mut rec = compress_chunk(&data, Policy::Huffman).unwrap();
        rec.payload.truncate(rec.payload.len() - 10);
        assert!(decompress_chunk(&rec).is_err());
    }

    #[test]
    fn large_chunks_are_paged() {
        let mut data = text(40_000, 4);
        data.extend(random(9000, 5));
        let rec = compress_chunk(&data, Policy::Auto).unwrap();
        assert_eq!(rec.mode, Mode::LzHuf);
        assert_eq!(decompress_chunk(&rec).unwrap(), data);
        let rnd = random(65536, 6);
        let rec = compress_chunk(&rnd, Policy::Auto).unwrap();
        assert_eq!(rec.mode, Mode::Raw);
        assert_eq!(rec.stored_len(16), 65536 + 7);
    }

    #[test]
    fn stream_edge_cases() {
        let empty = compress_bytes(&[], &StreamOptions::default()).unwrap();
        assert_eq!(empty, StreamHeader { chunk_log: 12, crc: false }.to_bytes());
        assert!(decompress_bytes(&empty).unwrap().is_empty());

        let data = text(10_000, 7);
        let packed = compress_bytes(&data, &StreamOptions::default()).unwrap();
        let mut cursor = &packed[STREAM_HEADER_BYTES..];
        let lens: Vec<u32> = std::iter::from_fn(|| ChunkRecord::read_from(&mut cursor, 12, false).unwrap())
            .map(|r| r.orig_len)
            .collect();
        assert_eq!(lens, vec![4096, 4096, 1808]);

        let mut bad = packed.clone();
        bad[0] = b'X';
        assert!(matches!(decompress_bytes(&bad), Err(Error::UnsupportedContainer)));
        let mut bad = packed.clone();
        bad[4] = 2;
        assert!(matches!(decompress_bytes(&bad), Err(Error::UnsupportedContainer)));
    }

    #[test]
    fn parallel_output_matches_serial() {
        let mut data = text(300_000, 8);
        data.extend(random(50_000, 9));
        for chunk_log in [12, 14, 16] {
            let serial = StreamOptions { chunk_log, crc: true, ..Default::default() };
            let parallel = StreamOptions { jobs: 4, ..serial };
            let a = compress_bytes(&data, &serial).unwrap();
            let b = compress_bytes(&data, &parallel).unwrap();
            assert_eq!(a, b);
            assert_eq!(decompress_bytes(&a).unwrap(), data);
        }
    }

    proptest! {
        #[test]
        fn stream_round_trip(
            seed in any::<u64>(),
            len in 0usize..20_000,
            chunk_log in MIN_CHUNK_LOG..=MAX_CHUNK_LOG,
            policy in prop_oneof![Just(Policy::Auto), Just(Policy::Raw), Just(Policy::Huffman), Just(Policy::Fse), Just(Policy::LzOnly)],
            crc in any::<bool>(),
        ) {
            let mut data = text(len / 2, seed);
            data.extend(random(len - len / 2, seed));
            let opts = StreamOptions { chunk_log, policy, crc, jobs: 1 };
            let packed = compress_bytes(&data, &opts).unwrap();
            prop_assert_eq!(decompress_bytes(&packed).unwrap(), data);
        }

        #[test]
        fn ratio_is_bounded(data in proptest::collection::vec(any::<u8>(), 1..=4096)) {
            let rec = compress_chunk(&data, Policy::Auto).unwrap();
            prop_assert!(rec.stored_len(12) <= data.len() + record_header_len(12));
        }

        #[test]
        fn varint_round_trip(v in any::<u32>()) {
            let mut buf = Vec::new();
            put_varint(&mut buf, v);
            let mut s = buf.as_slice();
            prop_assert_eq!(get_varint(&mut s).unwrap(), v);
            prop_assert!(s.is_empty());
        }
    }
}
