//! Frame a buffer into a container, inspect its records, and restore it.
//!
//! `cargo run --example stream_container`

use dpzip::bench;
use dpzip::format::{self, ChunkRecord, Policy, StreamHeader, StreamOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut data = bench::gen_data(0.35, 3 * 4096, 1);
    data.extend(bench::gen_data(1.0, 4096, 2));
    data.extend(vec![0u8; 4096]);

    for (policy, chunk_log) in [(Policy::Auto, 12), (Policy::Fse, 12), (Policy::Auto, 16)] {
        let opts = StreamOptions { chunk_log, policy, crc: true, jobs: 2 };
        let packed = format::compress_bytes(&data, &opts)?;
        let header = StreamHeader::parse(&packed)?;
        println!("{policy:?} with {} byte chunks: {} -> {} bytes", header.chunk_size(), data.len(), packed.len());

        let mut rest = &packed[format::STREAM_HEADER_BYTES..];
        while let Some(rec) = ChunkRecord::read_from(&mut rest, header.chunk_log, header.crc)? {
            println!("  record {:?}: {} -> {} bytes", rec.mode, rec.orig_len, rec.comp_len());
        }
        assert_eq!(format::decompress_bytes(&packed)?, data);
    }
    Ok(())
}
