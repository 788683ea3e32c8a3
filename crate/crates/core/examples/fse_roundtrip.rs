//! Code a skewed byte stream with tANS and compare against its entropy.
//!
//! `cargo run --example fse_roundtrip`

use dpzip::bench;
use dpzip::fse;
use dpzip::huffman::Histogram;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<u8> = (0..4096)
        .map(|_| {
            let u: f64 = rng.random();
            (-(u.ln()) * 3.0) as u8
        })
        .collect();

    let counts = fse::normalize_counts(&Histogram::from_bytes(&data), fse::DEFAULT_TABLE_LOG)?;
    let tables = fse::build_tables(&counts);
    let bits = fse::fse_encode(&data, &tables)?;
    let restored = fse::fse_decode(&bits, &tables, data.len())?;
    assert_eq!(restored, data);

    let entropy = bench::shannon_entropy(&data)?.entropy;
    println!("table_log {} ({} states)", counts.table_log(), counts.table_size());
    println!("entropy      {entropy:.4} bits/symbol");
    println!("tANS payload {:.4} bits/symbol", bits.len() as f64 * 8.0 / data.len() as f64);
    println!("header       {} bytes", counts.serialize().len());
    Ok(())
}
