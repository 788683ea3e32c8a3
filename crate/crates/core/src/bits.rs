//! MSB-first bit packing shared by the entropy coders.

#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    nbits: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bytes: usize) -> Self {
        BitWriter {
            bytes: Vec::with_capacity(bytes),
            ..Self::default()
        }
    }

    /// Appends the low `count` bits of `value`, most significant first.
    #[inline]
    pub fn write(&mut self, value: u32, count: u32) {
        debug_assert!(count <= 32);
        if count == 0 {
            return;
        }
        let masked = u64::from(value) & ((1u64 << count) - 1);
        self.acc = (self.acc << count) | masked;
        self.nbits += count;
        while self.nbits >= 8 {
            self.nbits -= 8;
            self.bytes.push((self.acc >> self.nbits) as u8);
        }
        self.acc &= (1u64 << self.nbits) - 1;
    }

    pub fn bit_len(&self) -> usize {
        self.bytes.len() * 8 + self.nbits as usize
    }

    /// Pads the final partial byte with zero bits.
    pub fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            self.bytes.push((self.acc << (8 - self.nbits)) as u8);
        }
        self.bytes
    }
}

#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0 }
    }

    /// Next `count` bits without consuming them; reads past the end as zero.
    #[inline]
    pub fn peek(&self, count: u32) -> u32 {
        debug_assert!(count <= 24);
        let byte = self.pos / 8;
        let mut window = 0u32;
        for i in 0..4 {
            window = (window << 8) | u32::from(*self.bytes.get(byte + i).unwrap_or(&0));
        }
        let shifted = window << (self.pos % 8);
        if count == 0 {
            0
        } else {
            shifted >> (32 - count)
        }
    }

    /// Consumes `count` bits; `None` if that runs past the end.
    #[inline]
    pub fn read(&mut self, count: u32) -> Option<u32> {
        let v = self.peek(count);
        self.skip(count).then_some(v)
    }

    #[inline]
    pub fn skip(&mut self, count: u32) -> bool {
        self.pos += count as usize;
        self.pos <= self.bytes.len() * 8
    }

    pub fn bit_pos(&self) -> usize {
        self.pos
    }

    pub fn bits_left(&self) -> usize {
        (self.bytes.len() * 8).saturating_sub(self.pos)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn msb_first_packing() {
        let mut w = BitWriter::new();
        w.write(0b1, 1);
        w.write(0b011, 3);
        assert_eq!(w.finish(), vec![0b1011_0000]);
    }

    proptest! {
        #[test]
        fn write_then_read(fields in proptest::collection::vec((any::<u32>(), 0u32..=24), 0..200)) {
            let mut w = BitWriter::new();
            for &(v, n) in &fields {
                w.write(v, n);
            }
            let total = w.bit_len();
            let bytes = w.finish();
            prop_assert_eq!(bytes.len(), total.div_ceil(8));
            let mut r = BitReader::new(&bytes);
            for &(v, n) in &fields {
                let mask = if n == 0 { 0 } else { (1u32 << n) - 1 };
                prop_assert_eq!(r.read(n), Some(v & mask));
            }
            prop_assert_eq!(r.bit_pos(), total);
        }
    }
}
