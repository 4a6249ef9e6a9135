mod common;

use radial_ot::colorlab::{
    average_with_palettes, eval_error, fit_palettes, load_image, save_image, simplex_grid, transfer, ColorCloud,
    ErrorSolver, MapKind, Palette,
};
use radial_ot::estimation::EmConfig;
use radial_ot::rw2::rw2_geodesic;
use radial_ot::Generator;

fn small_config(k: usize) -> EmConfig {
    let mut cfg = EmConfig::new(k);
    cfg.max_iter = 200;
    cfg
}

#[test]
fn quad_fixture_decodes_to_known_colors() {
    let img = load_image(common::fixture("quad.png")).unwrap();
    assert_eq!((img.width(), img.height()), (2, 2));
    let expected = [[0u8, 0, 0], [255, 0, 0], [0, 128, 255], [10, 200, 77]];
    for (px, want) in img.pixels().iter().zip(expected) {
        for c in 0..3 {
            assert_eq!(px[c], want[c] as f64 / 255.0);
        }
    }
}

#[test]
fn save_then_load_is_identity_on_quantized_images() {
    let img = load_image(common::fixture("harbor.png")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.png");
    save_image(&img, &path).unwrap();
    let back = load_image(&path).unwrap();
    assert_eq!(back.to_rgb8(), img.to_rgb8());
    assert_eq!(back.pixels(), img.pixels());
}

#[test]
fn self_distance_shrinks_with_sample_size() {
    // Two independent subsamples of one image draw closer as they grow.
    let img = load_image(common::fixture("meadow.png")).unwrap();
    let errors: Vec<f64> = [250, 500, 1000]
        .iter()
        .map(|&m| eval_error(&img, &img, m, 10, 7, ErrorSolver::Exact).unwrap().error_mean)
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "errors {errors:?}");
}

#[test]
fn vertex_weights_reproduce_the_reference() {
    let images = [load_image(common::fixture("dusk.png")).unwrap(), load_image(common::fixture("meadow.png")).unwrap()];
    let g = Generator::imq(3.0).unwrap();
    let palettes = fit_palettes(&images, &g, &small_config(4)).unwrap();
    let out = average_with_palettes(&images[0], 0, &palettes, &[vec![1.0, 0.0]]).unwrap();
    let bytes = (out[0].to_rgb8(), images[0].to_rgb8());
    let worst = bytes.0.iter().zip(&bytes.1).map(|(a, b)| a.abs_diff(*b)).max().unwrap();
    assert!(worst <= 2, "largest byte change {worst}");
}

#[test]
fn two_image_midpoint_is_the_geodesic_midpoint() {
    let images = [load_image(common::fixture("dusk.png")).unwrap(), load_image(common::fixture("harbor.png")).unwrap()];
    let g = Generator::imq(3.0).unwrap();
    let palettes = fit_palettes(&images, &g, &small_config(3)).unwrap();
    let averaged = average_with_palettes(&images[0], 0, &palettes, &[vec![0.5, 0.5]]).unwrap();
    let mid = rw2_geodesic(&palettes[0], &palettes[1], 0.5).unwrap();
    let direct = transfer(
        &images[0],
        &Palette::Radial(palettes[0].clone()),
        &Palette::Radial(mid),
        MapKind::Mean,
        0,
    )
    .unwrap();
    assert!(averaged[0].mean_abs_diff(&direct) <= 1e-6);
}

#[test]
fn triangle_grid_writes_decodable_images() {
    let images = [
        load_image(common::fixture("dusk.png")).unwrap(),
        load_image(common::fixture("meadow.png")).unwrap(),
        load_image(common::fixture("harbor.png")).unwrap(),
    ];
    let g = Generator::imq(3.0).unwrap();
    let palettes = fit_palettes(&images, &g, &small_config(3)).unwrap();
    let weights = simplex_grid(3, 2);
    let outs = average_with_palettes(&images[1], 1, &palettes, &weights).unwrap();
    assert_eq!(outs.len(), 6);
    let dir = tempfile::tempdir().unwrap();
    for (i, out) in outs.iter().enumerate() {
        let path = dir.path().join(format!("average_{i:03}.png"));
        save_image(out, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!((back.width(), back.height()), (64, 64));
    }
}

#[test]
fn out_of_range_pixels_are_rejected() {
    assert!(ColorCloud::new(1, 1, vec![[1.5, 0.0, 0.0]]).is_err());
    assert!(ColorCloud::new(2, 1, vec![[0.5, 0.0, 0.0]]).is_err());
}
