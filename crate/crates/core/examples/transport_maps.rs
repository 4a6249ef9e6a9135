//! Mean and randomized transport maps between two mixtures.
//!
//! Run: cargo run -p radial-ot --example transport_maps

use radial_ot::rw2::rw2_distance;
use radial_ot::{Generator, RadialDistribution, RadialMixture};

fn mean(points: &[Vec<f64>]) -> f64 {
    points.iter().map(|p| p[0]).sum::<f64>() / points.len() as f64
}

fn main() -> radial_ot::Result<()> {
    let g = Generator::imq(2.0)?;
    let a = RadialMixture::new(
        vec![0.5, 0.5],
        vec![RadialDistribution::new(vec![-1.0], 0.2, g.clone())?, RadialDistribution::new(vec![1.0], 0.2, g.clone())?],
    )?;
    let b = RadialMixture::new(
        vec![0.5, 0.5],
        vec![RadialDistribution::new(vec![-3.0], 0.4, g.clone())?, RadialDistribution::new(vec![3.0], 0.4, g)?],
    )?;
    let maps = rw2_distance(&a, &b)?.transport()?;
    let source = a.sample(5000, 1);
    let by_mean = maps.map_mean(&source);
    let by_rand = maps.map_rand(&source, 2);
    println!("source mean {:+.4}", mean(&source));
    println!("T_mean image mean {:+.4}, T_rand image mean {:+.4}", mean(&by_mean), mean(&by_rand));
    for x in [-1.5, -1.0, 0.0, 1.0, 1.5] {
        println!("T_mean({x:+.1}) = {:+.4}", maps.t_mean_total(&[x])[0]);
    }
    Ok(())
}
