//! Walks the geodesic between two mixtures and checks constant speed.
//!
//! Run: cargo run -p radial-ot --example rw2_geodesic

use radial_ot::rw2::rw2_distance;
use radial_ot::{Generator, RadialDistribution, RadialMixture};

fn main() -> radial_ot::Result<()> {
    let gauss = Generator::gauss();
    let compact = Generator::compact(2.0)?;
    let a = RadialMixture::new(
        vec![0.5, 0.5],
        vec![
            RadialDistribution::new(vec![-2.0], 0.5, gauss.clone())?,
            RadialDistribution::new(vec![1.0], 0.3, gauss)?,
        ],
    )?;
    // A different generator on the far side: the path carries tabulated laws.
    let b = RadialMixture::single(RadialDistribution::new(vec![3.0], 1.0, compact)?);
    let full = rw2_distance(&a, &b)?;
    println!("RW2(a, b) = {:.6}", full.distance);
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let mid = full.geodesic(t)?;
        let from_a = rw2_distance(&a, &mid)?.distance;
        println!(
            "t = {t:.2}: {} components, mean {:+.4}, RW2 from a {:.6} (t * RW2 = {:.6})",
            mid.len(),
            mid.mean()[0],
            from_a,
            t * full.distance
        );
    }
    Ok(())
}
