//! Distance between two small radial mixtures, with the component plan.
//!
//! Run: cargo run -p radial-ot --example rw2_distance

use radial_ot::rw2::rw2_distance;
use radial_ot::{Generator, RadialDistribution, RadialMixture};

fn main() -> radial_ot::Result<()> {
    let g = Generator::imq(3.0)?;
    let a = RadialMixture::new(
        vec![0.4, 0.6],
        vec![
            RadialDistribution::new(vec![0.0, 0.0], 0.5, g.clone())?,
            RadialDistribution::new(vec![3.0, 0.0], 0.8, g.clone())?,
        ],
    )?;
    let b = RadialMixture::new(
        vec![0.5, 0.3, 0.2],
        vec![
            RadialDistribution::new(vec![0.5, 1.0], 0.6, g.clone())?,
            RadialDistribution::new(vec![3.0, -1.0], 0.4, g.clone())?,
            RadialDistribution::new(vec![-1.0, 0.0], 1.0, g)?,
        ],
    )?;
    let r = rw2_distance(&a, &b)?;
    println!("RW2 = {:.6} (squared {:.6})", r.distance, r.squared());
    for (k, l, w) in r.plan.support() {
        println!("  component {k} -> {l}: mass {w:.3}");
    }
    println!("reversed: {:.6}", rw2_distance(&b, &a)?.distance);
    Ok(())
}
