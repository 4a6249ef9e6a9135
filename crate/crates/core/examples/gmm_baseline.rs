//! Gaussian mixture fit and GW2 distance on the same data.
//!
//! Run: cargo run -p radial-ot --release --example gmm_baseline

use radial_ot::gmm::{gmm_em, gw2_distance};
use radial_ot::{Generator, RadialDistribution, RadialMixture};

fn main() -> radial_ot::Result<()> {
    let g = Generator::gauss();
    let source = RadialMixture::new(
        vec![0.5, 0.5],
        vec![RadialDistribution::new(vec![0.0, 0.0], 1.0, g.clone())?, RadialDistribution::new(vec![5.0, 0.0], 0.5, g.clone())?],
    )?;
    let target = RadialMixture::single(RadialDistribution::new(vec![2.0, 3.0], 1.5, g)?);
    let a = gmm_em(&source.sample(3000, 1), 2, 0, 200, 1e-8)?;
    let b = gmm_em(&target.sample(3000, 2), 1, 0, 200, 1e-8)?;
    for (name, m) in [("source", &a), ("target", &b)] {
        println!("{name}: {} components", m.len());
        for (w, c) in m.weights().iter().zip(m.components()) {
            println!("  w {w:.3}  mean ({:+.3}, {:+.3})", c.mean()[0], c.mean()[1]);
        }
    }
    let r = gw2_distance(&a, &b)?;
    println!("GW2 = {:.4}", r.distance);
    Ok(())
}
