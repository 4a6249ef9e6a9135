//! Entropic transport and barycenter of two bumps on a 1-D grid.
//!
//! Run: cargo run -p radial-ot --release --example sinkhorn_grid

use radial_ot::discrete_ot::{grid_barycenter, grid_sinkhorn, Grid, SinkhornOptions};

fn bump(points: &[Vec<f64>], m: f64, s: f64) -> Vec<f64> {
    let w: Vec<f64> = points.iter().map(|x| (-0.5 * ((x[0] - m) / s).powi(2)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn main() -> radial_ot::Result<()> {
    let grid = Grid::uniform(1, 0.0, 1.0, 200)?;
    let pts = grid.points();
    let a = bump(&pts, 0.25, 0.05);
    let b = bump(&pts, 0.7, 0.08);
    for eps in [1e-2, 1e-3, 2e-4] {
        let r = grid_sinkhorn(&grid, &a, &b, eps, SinkhornOptions::default())?;
        println!("eps {eps:.0e}: <P,C> {:.6} after {} iterations", r.transport_cost, r.iterations);
    }
    // Exact value for two Gaussians: (0.45)^2 + (0.03)^2.
    println!("closed form {:.6}", 0.45f64.powi(2) + 0.03f64.powi(2));
    let mid = grid_barycenter(&grid, &[a, b], &[0.5, 0.5], 2e-4, SinkhornOptions::default())?;
    let mean: f64 = mid.iter().zip(&pts).map(|(w, x)| w * x[0]).sum();
    println!("barycenter mean {mean:.4}");
    Ok(())
}
