//! Tokenize one 4 KiB page and decode it back.
//!
//! `cargo run --example lz77_tokens`

use dpzip::lz77;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = "the quick brown fox jumps over the lazy dog; the quick brown fox naps. ";
    let page: Vec<u8> = text.bytes().cycle().take(lz77::BLOCK_SIZE).collect();

    let tokens = lz77::lz77_encode(&page)?;
    println!(
        "{} bytes -> {} tokens, {} matches, {} literal bytes",
        page.len(),
        tokens.tokens.len(),
        tokens.match_count(),
        tokens.literals.len()
    );
    for (token, literals) in tokens.iter().take(8) {
        println!(
            "  literals {:>3} {:?}  match len {:>4} offset {:>4}",
            token.literal_len,
            String::from_utf8_lossy(literals),
            token.match_len,
            token.offset
        );
    }

    let restored = lz77::lz77_decode(&tokens, page.len())?;
    assert_eq!(restored, page);
    println!("decoded {} bytes, identical to input", restored.len());
    Ok(())
}
