//! Density snapshots along an RW2 geodesic next to the entropic W2 path.
//!
//! Run: cargo run -p radial-ot --release --example radial_interpolation

use radial_ot::colorlab::{demo_grid, imq_demo_pair, interpolate_demo, DEMO_EPSILON_1D};

fn main() -> radial_ot::Result<()> {
    let (a, b) = imq_demo_pair(1)?;
    let grid = demo_grid(1)?;
    let ts = [0.0, 0.25, 0.5, 0.75, 1.0];
    let demo = interpolate_demo(&a, &b, &ts, &grid, Some(DEMO_EPSILON_1D))?;
    let xs = grid.points();
    for frame in &demo.frames {
        // Grid location of each density's largest value.
        let peak = |d: &[f64]| {
            let (i, _) = d.iter().enumerate().fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            xs[i][0]
        };
        let w2_peak = frame.w2.as_deref().map(peak).unwrap_or(f64::NAN);
        println!("t = {:.2}: RW2 peak at {:.3}, W2 peak at {:.3}", frame.t, peak(&frame.rw2), w2_peak);
    }
    for (t, (rw2, w2)) in ts.iter().zip(demo.masses()) {
        println!("t = {t:.2}: mass {rw2:.4} / {}", w2.map_or("-".into(), |m| format!("{m:.4}")));
    }
    Ok(())
}
