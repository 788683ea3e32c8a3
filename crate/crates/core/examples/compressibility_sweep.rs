//! Generate data for eleven target ratios and measure what the pipeline achieves.
//!
//! `cargo run --release --example compressibility_sweep`

use dpzip::bench::{self, DataGen};
use dpzip::format::Policy;

fn main() {
    println!("{:>6} {:>9} {:>14}", "target", "achieved", "random B/page");
    for step in 0..=10 {
        let target = f64::from(step) / 10.0;
        let gen = DataGen::new(target, 42);
        let data = gen.generate(1 << 20);
        let achieved = bench::measured_ratio(&data, Policy::Auto);
        println!("{target:>6.1} {achieved:>9.4} {:>14}", gen.random_per_page());
    }
}
