//! Recolors one bundled image with the palette of another.
//!
//! Run: cargo run -p radial-ot --release --example color_transfer -- [out.png]

use std::path::PathBuf;

use radial_ot::colorlab::{eval_error, fit_palette, load_image, save_image, transfer, ErrorSolver, MapKind, PaletteSpec};
use radial_ot::estimation::EmConfig;

fn main() -> radial_ot::Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let source = load_image(fixtures.join("dusk.png"))?;
    let target = load_image(fixtures.join("meadow.png"))?;
    let spec = PaletteSpec::imq_preset();
    let mut cfg = EmConfig::new(spec.components());
    cfg.max_iter = 500;
    let from = fit_palette(&source, &spec, &cfg)?.palette;
    let to = fit_palette(&target, &spec, &cfg)?.palette;
    let out = transfer(&source, &from, &to, MapKind::Mean, 0)?;
    let before = eval_error(&source, &target, 500, 5, 0, ErrorSolver::Exact)?;
    let after = eval_error(&out, &target, 500, 5, 0, ErrorSolver::Exact)?;
    println!("error to target: before {:.4} +- {:.4}, after {:.4} +- {:.4}", before.error_mean, before.error_std, after.error_mean, after.error_std);
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("dusk_as_meadow.png"));
    save_image(&out, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}
