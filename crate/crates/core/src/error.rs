use std::io;

/// Ways a compressed stream can fail to decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum Corruption {
    #[error("offset out of range")]
    OffsetOutOfRange,
    #[error("length mismatch")]
    LengthMismatch,
    #[error("truncated")]
    Truncated,
    #[error("bad mode byte {0}")]
    BadMode(u8),
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("bad final state")]
    BadFinalState,
    #[error("malformed sequence")]
    MalformedSequence,
    #[error("trailing bytes")]
    TrailingBytes,
    #[error("invalid entropy table")]
    BadTable,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("input of {0} bytes exceeds the block size")]
    InputTooLarge(usize),
    #[error("empty histogram")]
    EmptyHistogram,
    #[error("cap infeasible")]
    CapInfeasible,
    #[error("invalid lengths")]
    InvalidLengths,
    #[error("symbol not in code: {0:#04x}")]
    SymbolNotInCode(u8),
    #[error("invalid length header")]
    InvalidLengthHeader,
    #[error("use RLE/raw path")]
    SingleSymbol,
    #[error("symbol not in table: {0:#04x}")]
    SymbolNotInTable(u8),
    #[error("table log {0} outside 4..=12 or too small for the alphabet")]
    InvalidTableLog(u8),
    #[error("chunk log {0} outside 12..=16")]
    InvalidChunkLog(u8),
    #[error("corrupt stream: {0}")]
    Corrupt(#[from] Corruption),
    #[error("unsupported container")]
    UnsupportedContainer,
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn is_corruption(&self) -> bool {
        matches!(self, Error::Corrupt(_) | Error::UnsupportedContainer)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
