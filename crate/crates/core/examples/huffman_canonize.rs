//! Cap an over-deep Huffman tree at 11 bits and print the limiter's trace.
//!
//! `cargo run --example huffman_canonize`

use dpzip::huffman::{self, Histogram, MAX_BITS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Fibonacci weights produce the deepest possible Huffman tree.
    let mut counts = [0u32; 256];
    let (mut a, mut b) = (1u32, 1u32);
    for c in counts.iter_mut().take(20) {
        *c = a;
        (a, b) = (b, a + b);
    }
    let hist = Histogram::from_counts(&counts);

    let unbounded = huffman::build_lengths(&hist)?;
    let (capped, trace) = huffman::cap_lengths(&unbounded, MAX_BITS)?;
    println!("unbounded depth {} -> capped depth {}", unbounded.max_len(), capped.max_len());
    println!(
        "cost {} bits -> {} bits ({:+.2}%)",
        unbounded.cost(&hist),
        capped.cost(&hist),
        (capped.cost(&hist) as f64 / unbounded.cost(&hist) as f64 - 1.0) * 100.0
    );
    println!(
        "trace: scan {} + redistribute {} + repair {} = {} cycles (bound {})",
        trace.scan_cycles,
        trace.redistribute_cycles,
        trace.repair_cycles,
        trace.total_cycles(),
        huffman::CANONIZATION_CYCLES_MAX
    );

    let table = huffman::canonicalize(&capped)?;
    for symbol in 0..6u8 {
        if let Some((len, code)) = table.code(symbol) {
            println!("  symbol {symbol:>2} weight {:>5}: {:0width$b}", counts[symbol as usize], code, width = len as usize);
        }
    }

    let message: Vec<u8> = (0..20u8).flat_map(|s| std::iter::repeat_n(s, counts[s as usize] as usize)).collect();
    let bits = huffman::huff_encode(&message, &table)?;
    assert_eq!(huffman::huff_decode(&bits, &capped, message.len())?, message);
    println!("{} symbols coded into {} bytes and decoded", message.len(), bits.len());
    Ok(())
}
