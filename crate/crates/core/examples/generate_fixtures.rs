//! Regenerates the bundled test images in `fixtures/`.
//!
//! Three 64x64 procedural scenes with distinct palettes plus a 2x2 image
//! with known bytes.
//!
//! Run: cargo run -p radial-ot --example generate_fixtures

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use radial_ot::colorlab::{save_image, ColorCloud};

const SIZE: u32 = 64;

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i] + (b[i] - a[i]) * t)
}

fn render(seed: u64, f: impl Fn(f64, f64) -> [f64; 3]) -> ColorCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity((SIZE * SIZE) as usize);
    for row in 0..SIZE {
        for col in 0..SIZE {
            let (x, y) = ((col as f64 + 0.5) / SIZE as f64, (row as f64 + 0.5) / SIZE as f64);
            let base = f(x, y);
            // Film grain keeps each color region from being a single point.
            let px = base.map(|v| (v + rng.random_range(-0.03..0.03)).clamp(0.0, 1.0));
            pixels.push(px);
        }
    }
    ColorCloud::new(SIZE, SIZE, pixels).expect("rendered pixels are in range")
}

/// Violet sky over a dark sea with an orange sun.
fn dusk() -> ColorCloud {
    render(1, |x, y| {
        let sun = ((x - 0.7).powi(2) + (y - 0.35).powi(2)).sqrt();
        if sun < 0.12 {
            mix([1.0, 0.75, 0.3], [0.95, 0.45, 0.15], sun / 0.12)
        } else if y < 0.55 {
            mix([0.25, 0.15, 0.45], [0.85, 0.4, 0.45], y / 0.55)
        } else {
            mix([0.1, 0.12, 0.3], [0.02, 0.03, 0.1], (y - 0.55) / 0.45)
        }
    })
}

/// Pale sky over green hills with yellow flowers.
fn meadow() -> ColorCloud {
    render(2, |x, y| {
        let hill = 0.45 + 0.08 * (x * 9.0).sin();
        if y < hill {
            mix([0.55, 0.75, 0.95], [0.85, 0.92, 0.98], y / hill)
        } else if ((x * 13.0).sin() * (y * 17.0).cos()).abs() > 0.8 {
            [0.95, 0.85, 0.2]
        } else {
            mix([0.35, 0.6, 0.2], [0.12, 0.3, 0.08], (y - hill) / (1.0 - hill))
        }
    })
}

/// Red brick wall with a teal door.
fn harbor() -> ColorCloud {
    render(3, |x, y| {
        if (0.35..0.65).contains(&x) && y > 0.3 {
            mix([0.1, 0.55, 0.55], [0.05, 0.3, 0.35], y)
        } else if ((y * 16.0).fract() < 0.1) || (((x * 8.0) + 0.5 * (y * 16.0).floor()).fract() < 0.08) {
            [0.8, 0.78, 0.7]
        } else {
            mix([0.7, 0.25, 0.15], [0.5, 0.15, 0.1], x)
        }
    })
}

fn main() -> radial_ot::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir).map_err(|source| radial_ot::Error::Io { path: dir.clone(), source })?;
    for (name, img) in [("dusk", dusk()), ("meadow", meadow()), ("harbor", harbor())] {
        let path = dir.join(format!("{name}.png"));
        save_image(&img, &path)?;
        println!("wrote {}", path.display());
    }
    let quad = ColorCloud::from_rgb8(2, 2, &[0, 0, 0, 255, 0, 0, 0, 128, 255, 10, 200, 77])?;
    save_image(&quad, dir.join("quad.png"))?;
    println!("wrote {}", dir.join("quad.png").display());
    Ok(())
}
