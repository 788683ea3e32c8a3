use dpzip::format::{self, ChunkRecord, Mode, Policy, StreamHeader, StreamOptions, MAGIC};
use dpzip::{Corruption, Error};
use proptest::prelude::*;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts(chunk_log: u8, policy: Policy, crc: bool) -> StreamOptions {
    StreamOptions { chunk_log, policy, crc, jobs: 1 }
}

#[test]
fn header_layout() {
    let packed = format::compress_bytes(b"hello hello hello hello", &opts(13, Policy::Auto, true)).unwrap();
    assert_eq!(&packed[..4], &MAGIC);
    let header = StreamHeader::parse(&packed).unwrap();
    assert_eq!(header.chunk_log, 13);
    assert!(header.crc);
    assert_eq!(header.chunk_size(), 8192);
}

#[test]
fn empty_stream_is_just_a_header() {
    let packed = format::compress_bytes(&[], &StreamOptions::default()).unwrap();
    assert_eq!(packed.len(), format::STREAM_HEADER_BYTES);
    assert!(format::decompress_bytes(&packed).unwrap().is_empty());
}

#[test]
fn bad_magic_and_truncation_are_corruption() {
    let data = dpzip::bench::gen_data(0.5, 30_000, 1);
    let packed = format::compress_bytes(&data, &StreamOptions::default()).unwrap();
    let mut wrong = packed.clone();
    wrong[0] = b'X';
    assert!(format::decompress_bytes(&wrong).unwrap_err().is_corruption());
    for cut in [5, 7, packed.len() / 2, packed.len() - 1] {
        let err = format::decompress_bytes(&packed[..cut]).unwrap_err();
        assert!(err.is_corruption(), "cut {cut}: {err}");
    }
}

#[test]
fn crc_guards_the_original_bytes() {
    let data = dpzip::bench::gen_data(0.5, 4096, 2);
    let mut rec = format::compress_chunk(&data, Policy::Auto).unwrap();
    rec.crc = Some(crc32fast::hash(&data));
    let wire = rec.to_bytes(12);
    assert_eq!(format::decompress_chunk(&ChunkRecord::from_bytes(&wire, 12, true).unwrap()).unwrap(), data);

    let mut bad_crc = wire.clone();
    *bad_crc.last_mut().unwrap() ^= 1;
    let parsed = ChunkRecord::from_bytes(&bad_crc, 12, true).unwrap();
    assert!(matches!(
        format::decompress_chunk(&parsed),
        Err(Error::Corrupt(Corruption::ChecksumMismatch))
    ));

    let mut bad_payload = wire;
    let mid = bad_payload.len() / 2;
    bad_payload[mid] ^= 1;
    let parsed = ChunkRecord::from_bytes(&bad_payload, 12, true).unwrap();
    assert!(format::decompress_chunk(&parsed).unwrap_err().is_corruption());
}

#[test]
fn random_chunk_falls_back_to_raw() {
    let mut data = vec![0u8; 4096];
    ChaCha8Rng::seed_from_u64(5).fill_bytes(&mut data);
    let rec = format::compress_chunk(&data, Policy::Auto).unwrap();
    assert_eq!(rec.mode, Mode::Raw);
    assert_eq!(rec.stored_len(12), 4096 + 5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_bytes_round_trip(
        data in prop::collection::vec(any::<u8>(), 0..20_000),
        chunk_log in 12u8..=16,
        crc in any::<bool>(),
        policy in prop::sample::select(vec![Policy::Auto, Policy::Raw, Policy::Huffman, Policy::Fse, Policy::LzOnly]),
        jobs in 1usize..4,
    ) {
        let o = StreamOptions { chunk_log, policy, crc, jobs };
        let packed = format::compress_bytes(&data, &o).unwrap();
        prop_assert_eq!(format::decompress_bytes(&packed).unwrap(), data);
    }

    #[test]
    fn decoder_never_panics_on_garbage(tail in prop::collection::vec(any::<u8>(), 0..600), crc in any::<bool>()) {
        let mut bytes = StreamHeader::new(12, crc).unwrap().to_bytes().to_vec();
        bytes.extend(tail);
        let _ = format::decompress_bytes(&bytes);
    }
}
