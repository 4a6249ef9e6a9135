//! Weighted barycenter of three mixtures through the multimarginal plan.
//!
//! Run: cargo run -p radial-ot --example barycenter

use radial_ot::rw2::{rw2_barycenter, rw2_distance};
use radial_ot::{Generator, RadialDistribution, RadialMixture};

fn blob(g: &Generator, points: &[([f64; 2], f64, f64)]) -> radial_ot::Result<RadialMixture> {
    let w = points.iter().map(|p| p.2).collect();
    let c = points.iter().map(|(m, c, _)| RadialDistribution::new(m.to_vec(), *c, g.clone())).collect::<Result<_, _>>()?;
    RadialMixture::new(w, c)
}

fn main() -> radial_ot::Result<()> {
    let g = Generator::compact(1.0)?;
    let inputs = [
        blob(&g, &[([0.0, 0.0], 0.3, 0.5), ([1.0, 0.0], 0.2, 0.5)])?,
        blob(&g, &[([4.0, 0.0], 0.5, 1.0)])?,
        blob(&g, &[([2.0, 3.0], 0.2, 0.7), ([2.0, 4.0], 0.4, 0.3)])?,
    ];
    let lambda = [0.5, 0.25, 0.25];
    let (bary, plan) = rw2_barycenter(&inputs, &lambda)?;
    println!("{} components, objective {:.6}", bary.len(), plan.objective);
    for (w, c) in bary.iter() {
        println!("  w {w:.3}  center ({:+.3}, {:+.3})  scale {:.3}", c.center()[0], c.center()[1], c.scale());
    }
    let check: f64 = inputs
        .iter()
        .zip(lambda)
        .map(|(m, l)| rw2_distance(&bary, m).map(|r| l * r.squared()))
        .sum::<radial_ot::Result<f64>>()?;
    println!("sum of weighted squared distances: {check:.6}");
    Ok(())
}
