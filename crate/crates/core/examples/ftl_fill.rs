//! Expose twice the physical capacity and fill it with half-compressible data,
//! then show where incompressible data runs out of room.
//!
//! `cargo run --release --example ftl_fill`

use dpzip::bench::DataGen;
use dpzip::ftl::{Ftl, NandGeometry, Pattern, PatternRenderer, LOGICAL_PAGE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let geometry = NandGeometry { pages_per_block: 64, block_count: 64, ..NandGeometry::default() };
    let half = DataGen::new(0.5, 1);

    let mut ftl = Ftl::new(geometry)?;
    let exposed = ftl.configure_capacity(2.0)?;
    for lpn in 0..exposed {
        ftl.host_write(lpn, &half.page(u64::from(lpn), LOGICAL_PAGE))?;
    }
    for lpn in (0..exposed).step_by(7) {
        assert_eq!(ftl.host_read(lpn)?, half.page(u64::from(lpn), LOGICAL_PAGE));
    }
    ftl.check_invariants()?;
    let m = ftl.metrics();
    println!("filled {exposed} logical pages on {} physical user pages", geometry.user_pages());
    println!("waf {:.4}, raf {:.4}, utilization {:.4}", m.waf.unwrap_or(0.0), m.raf.unwrap_or(0.0), m.space_utilization);

    let mut ftl = Ftl::new(geometry)?;
    ftl.configure_capacity(2.0)?;
    let mut renderer = PatternRenderer::default();
    let mut written = 0;
    let err = loop {
        match ftl.host_write(written, &renderer.render(&Pattern::Random(u64::from(written)))) {
            Ok(()) => written += 1,
            Err(e) => break e,
        }
    };
    println!(
        "incompressible data: {err} after {written} of {exposed} pages ({:.1}%)",
        100.0 * f64::from(written) / f64::from(exposed)
    );
    println!("{}", serde_json::to_string_pretty(&ftl.metrics().valid_histogram)?);
    Ok(())
}
