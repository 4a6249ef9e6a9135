//! Normalizers and variance factors of the built-in generators.
//!
//! Run: cargo run -p radial-ot --example generators_moments

use radial_ot::generators::{normalizer, variance_factor};
use radial_ot::Generator;

fn main() -> radial_ot::Result<()> {
    let generators = [
        Generator::gauss(),
        Generator::compact(1.0)?,
        Generator::compact(3.0)?,
        Generator::imq(3.0)?,
        Generator::imq(6.0)?,
    ];
    println!("{:<16} {:>3} {:>14} {:>14}", "generator", "d", "Z(c=1)", "E|X|^2");
    for g in &generators {
        for d in 1..=3 {
            let z = normalizer(g, d, 1.0)?;
            match variance_factor(g, d) {
                Ok(vf) => println!("{:<16} {d:>3} {z:>14.6} {vf:>14.6}", g.name()),
                // IMQ tails too heavy for a second moment in this dimension.
                Err(e) => println!("{:<16} {d:>3} {z:>14.6} {:>14}  ({e})", g.name(), "-"),
            }
        }
    }
    Ok(())
}
