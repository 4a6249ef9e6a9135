//! Color palettes as mixture models: image I/O, palette fitting, color
//! transfer, the subsampled transfer error and color averaging.
//!
//! Colors live in the RGB cube `[0,1]^3` with no gamma handling.

pub mod cli;
mod demo;

use std::path::Path;

use image::{ExtendedColorType, ImageFormat};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::discrete_ot::{empirical_w2, empirical_w2_sinkhorn, SinkhornOptions, EXACT_EMPIRICAL_LIMIT};
use crate::estimation::{minibatch_em_traced, EmConfig};
use crate::generators::Generator;
use crate::gmm::{gmm_em_traced, gw2_distance, GaussianMixture, GaussianTransport};
use crate::mixture::RadialMixture;
use crate::rw2::{rw2_barycenter, MixtureTransport};
use crate::{Error, Result};

pub use demo::{
    demo_grid, imq_demo_pair, interpolate_demo, DemoFrame, InterpolationDemo, DEMO_EPSILON_1D, DEMO_EPSILON_2D,
};

/// Relative log-likelihood tolerance for GMM palette fits.
pub const GMM_TOLERANCE: f64 = 1e-8;

/// Default pixel subsample size for [`eval_error`].
pub const DEFAULT_SAMPLES: usize = 1000;

/// Row-major RGB pixels with channels in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorCloud {
    width: u32,
    height: u32,
    pixels: Vec<[f64; 3]>,
}

impl ColorCloud {
    pub fn new(width: u32, height: u32, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if width as usize * height as usize != pixels.len() {
            return Err(Error::domain(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width as usize * height as usize,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| p.iter().any(|v| !(0.0..=1.0).contains(v))) {
            return Err(Error::domain(format!("channel out of [0,1] in pixel {p:?}")));
        }
        Ok(ColorCloud { width, height, pixels })
    }

    /// Builds a cloud from mapped colors, clamping every channel into `[0,1]`.
    pub fn from_points_clamped(width: u32, height: u32, points: &[Vec<f64>]) -> Result<Self> {
        let pixels = points
            .iter()
            .map(|p| {
                if p.len() != 3 {
                    return Err(Error::domain(format!("color needs 3 channels, got {}", p.len())));
                }
                // NaN clamps to NaN; send it to 0 so the output stays a valid image.
                let c = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                Ok([c(p[0]), c(p[1]), c(p[2])])
            })
            .collect::<Result<Vec<_>>>()?;
        ColorCloud::new(width, height, pixels)
    }

    /// A `width x height` image of one color.
    pub fn constant(width: u32, height: u32, color: [f64; 3]) -> Result<Self> {
        ColorCloud::new(width, height, vec![color; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Pixels as points of R^3.
    pub fn points(&self) -> Vec<Vec<f64>> {
        self.pixels.iter().map(|p| p.to_vec()).collect()
    }

    /// Quantized 8-bit RGB bytes, `round(v * 255)`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)).collect()
    }

    pub fn from_rgb8(width: u32, height: u32, bytes: &[u8]) -> Result<Self> {
        if bytes.len() % 3 != 0 {
            return Err(Error::domain("RGB buffer length is not a multiple of 3"));
        }
        let pixels = bytes.chunks(3).map(|c| [c[0], c[1], c[2]].map(|v| v as f64 / 255.0)).collect();
        ColorCloud::new(width, height, pixels)
    }

    /// Mean absolute channel difference, in `[0,1]` units.
    pub fn mean_abs_diff(&self, other: &ColorCloud) -> f64 {
        let total: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (0..3).map(|i| (a[i] - b[i]).abs()).sum::<f64>())
            .sum();
        total / (3 * self.pixels.len().max(1)) as f64
    }
}

/// Reads an 8-bit RGB image (PNG or JPEG). Alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<ColorCloud> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    let rgb = img.to_rgb8();
    ColorCloud::from_rgb8(rgb.width(), rgb.height(), rgb.as_raw())
}

/// Writes the cloud as an 8-bit RGB PNG.
pub fn save_image(cloud: &ColorCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    image::save_buffer_with_format(
        path,
        &cloud.to_rgb8(),
        cloud.width,
        cloud.height,
        ExtendedColorType::Rgb8,
        ImageFormat::Png,
    )
    .map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// A fitted color palette.
#[derive(Debug, Clone)]
pub enum Palette {
    Radial(RadialMixture),
    Gaussian(GaussianMixture),
}

impl Palette {
    pub fn kind(&self) -> &'static str {
        match self {
            Palette::Radial(_) => "rmm",
            Palette::Gaussian(_) => "gmm",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Palette::Radial(m) => m.dim(),
            Palette::Gaussian(m) => m.dim(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Palette::Radial(m) => m.len(),
            Palette::Gaussian(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_json(&self) -> String {
        match self {
            Palette::Radial(m) => m.to_json(),
            Palette::Gaussian(m) => m.to_json(),
        }
    }

    /// Parses either model file format; radial files carry a
    /// `generator_default` key.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("generator_default").is_some() {
            Ok(Palette::Radial(RadialMixture::from_json(text)?))
        } else {
            Ok(Palette::Gaussian(GaussianMixture::from_json(text)?))
        }
    }

    pub fn as_radial(&self) -> Result<&RadialMixture> {
        match self {
            Palette::Radial(m) => Ok(m),
            Palette::Gaussian(_) => Err(Error::Config("expected a radial mixture model, got a GMM".into())),
        }
    }
}

/// Which model family to fit.
#[derive(Debug, Clone, PartialEq)]
pub enum PaletteSpec {
    Radial { generator: Generator, components: usize },
    Gaussian { components: usize },
}

impl PaletteSpec {
    /// IMQ generator with beta = 3 and 15 components.
    pub fn imq_preset() -> Self {
        PaletteSpec::Radial { generator: Generator::Imq { beta: 3.0 }, components: 15 }
    }

    /// 10-component GMM.
    pub fn gmm_preset() -> Self {
        PaletteSpec::Gaussian { components: 10 }
    }

    pub fn components(&self) -> usize {
        match self {
            PaletteSpec::Radial { components, .. } | PaletteSpec::Gaussian { components } => *components,
        }
    }
}

/// A palette with its training log as CSV.
#[derive(Debug, Clone)]
pub struct PaletteFit {
    pub palette: Palette,
    pub log_csv: String,
}

/// Fits a palette to the pixel colors. `config.components` is overridden by
/// `spec.components()`; GMM fits use `config.max_iter` full EM sweeps.
pub fn fit_palette(cloud: &ColorCloud, spec: &PaletteSpec, config: &EmConfig) -> Result<PaletteFit> {
    let k = spec.components();
    if k == 0 {
        return Err(Error::Config("palette needs at least one component".into()));
    }
    let data = cloud.points();
    match spec {
        PaletteSpec::Radial { generator, components } => {
            let mut cfg = config.clone();
            cfg.components = *components;
            cfg.batch_size = cfg.batch_size.min(data.len());
            let fit = minibatch_em_traced(&data, generator, &cfg)?;
            Ok(PaletteFit { log_csv: fit.log_csv(), palette: Palette::Radial(fit.model) })
        }
        PaletteSpec::Gaussian { components } => {
            let fit = gmm_em_traced(&data, *components, config.seed, config.max_iter, GMM_TOLERANCE)?;
            let mut log_csv = String::from("iter,loglik\n");
            for (i, ll) in fit.loglik.iter().enumerate() {
                log_csv.push_str(&format!("{},{}\n", i, ll / data.len() as f64));
            }
            Ok(PaletteFit { palette: Palette::Gaussian(fit.model), log_csv })
        }
    }
}

/// Deterministic barycentric map or the randomized component-pair map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Mean,
    Rand,
}

impl std::str::FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(MapKind::Mean),
            "rand" => Ok(MapKind::Rand),
            _ => Err(Error::Config(format!("map must be mean or rand, got {s}"))),
        }
    }
}

/// Maps every pixel of `source` through the transport map from `from` to
/// `to`, clamping results into the cube. `seed` only matters for
/// [`MapKind::Rand`].
pub fn transfer(source: &ColorCloud, from: &Palette, to: &Palette, kind: MapKind, seed: u64) -> Result<ColorCloud> {
    if from.dim() != 3 || to.dim() != 3 {
        return Err(Error::Config(format!("color models must be 3-dimensional, got {} and {}", from.dim(), to.dim())));
    }
    let points = source.points();
    let mapped = match (from, to) {
        (Palette::Radial(a), Palette::Radial(b)) => {
            let map = MixtureTransport::new(a, b)?;
            match kind {
                MapKind::Mean => map.map_mean(&points),
                MapKind::Rand => map.map_rand(&points, seed),
            }
        }
        (Palette::Gaussian(a), Palette::Gaussian(b)) => {
            let plan = gw2_distance(a, b)?.plan;
            let map = GaussianTransport::new(a, b, &plan)?;
            match kind {
                MapKind::Mean => map.map_mean(&points),
                MapKind::Rand => map.map_rand(&points, seed),
            }
        }
        _ => {
            return Err(Error::Config(format!("cannot transfer between a {} and a {} palette", from.kind(), to.kind())))
        }
    };
    ColorCloud::from_points_clamped(source.width, source.height, &mapped)
}

/// How each subsample distance is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorSolver {
    /// Exact assignment, limited to `EXACT_EMPIRICAL_LIMIT` samples.
    Exact,
    /// Entropic transport cost at the given regularization.
    Sinkhorn { epsilon: f64 },
}

/// Mean and spread of the subsampled squared W2 between two color clouds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferReport {
    pub error_mean: f64,
    /// Sample standard deviation over repetitions (0 for one repetition).
    pub error_std: f64,
    pub samples: usize,
    pub repetitions: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

/// Squared empirical W2 between `m`-point subsamples of `cloud` and `target`,
/// drawn uniformly without replacement, repeated `reps` times. Repetition `r`
/// draws from stream `r` of a generator seeded with `seed`.
pub fn eval_error(
    cloud: &ColorCloud,
    target: &ColorCloud,
    m: usize,
    reps: usize,
    seed: u64,
    solver: ErrorSolver,
) -> Result<TransferReport> {
    if reps == 0 {
        return Err(Error::Config("need at least one repetition".into()));
    }
    if m == 0 || m > cloud.len() || m > target.len() {
        return Err(Error::domain(format!(
            "cannot draw {m} samples from images with {} and {} pixels",
            cloud.len(),
            target.len()
        )));
    }
    if solver == ErrorSolver::Exact && m > EXACT_EMPIRICAL_LIMIT {
        return Err(Error::domain(format!(
            "exact evaluation supports at most {EXACT_EMPIRICAL_LIMIT} samples, got {m}; pass an epsilon to use Sinkhorn"
        )));
    }
    let a = cloud.points();
    let b = target.points();
    let values = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let x: Vec<Vec<f64>> = index::sample(&mut rng, a.len(), m).iter().map(|i| a[i].clone()).collect();
            let y: Vec<Vec<f64>> = index::sample(&mut rng, b.len(), m).iter().map(|i| b[i].clone()).collect();
            match solver {
                ErrorSolver::Exact => empirical_w2(&x, &y),
                ErrorSolver::Sinkhorn { epsilon } => {
                    Ok(empirical_w2_sinkhorn(&x, &y, epsilon, SinkhornOptions::default())?.transport_cost)
                }
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = values.iter().sum::<f64>() / reps as f64;
    let std = if reps > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(TransferReport {
        error_mean: mean,
        error_std: std,
        samples: m,
        repetitions: reps,
        seed,
        epsilon: match solver {
            ErrorSolver::Exact => None,
            ErrorSolver::Sinkhorn { epsilon } => Some(epsilon),
        },
    })
}

/// Fits one radial palette per image. Image `j` uses seed `config.seed + j`.
pub fn fit_palettes(images: &[ColorCloud], generator: &Generator, config: &EmConfig) -> Result<Vec<RadialMixture>> {
    let spec = PaletteSpec::Radial { generator: generator.clone(), components: config.components };
    images
        .par_iter()
        .enumerate()
        .map(|(j, img)| {
            let mut cfg = config.clone();
            cfg.seed = config.seed.wrapping_add(j as u64);
            match fit_palette(img, &spec, &cfg)?.palette {
                Palette::Radial(m) => Ok(m),
                Palette::Gaussian(_) => unreachable!("radial spec fits a radial palette"),
            }
        })
        .collect()
}

/// Recolors `reference` (whose palette is `palettes[reference_index]`) to the
/// barycenter of `palettes` under each weight vector.
pub fn average_with_palettes(
    reference: &ColorCloud,
    reference_index: usize,
    palettes: &[RadialMixture],
    weights: &[Vec<f64>],
) -> Result<Vec<ColorCloud>> {
    let source = palettes
        .get(reference_index)
        .ok_or_else(|| Error::Config(format!("reference index {reference_index} out of range")))?;
    let source = Palette::Radial(source.clone());
    weights
        .iter()
        .map(|lambda| {
            let (bary, _) = rw2_barycenter(palettes, lambda)?;
            transfer(reference, &source, &Palette::Radial(bary), MapKind::Mean, 0)
        })
        .collect()
}

/// Fits a palette per image, then recolors image `reference_index` to the
/// palette barycenter for each weight vector.
pub fn average_colors(
    images: &[ColorCloud],
    reference_index: usize,
    weights: &[Vec<f64>],
    generator: &Generator,
    config: &EmConfig,
) -> Result<Vec<ColorCloud>> {
    let reference = images
        .get(reference_index)
        .ok_or_else(|| Error::Config(format!("reference index {reference_index} out of range")))?;
    let palettes = fit_palettes(images, generator, config)?;
    average_with_palettes(reference, reference_index, &palettes, weights)
}

/// Weights on a barycentric grid of the simplex with `steps` subdivisions,
/// listed in lexicographic order of the integer coordinates.
pub fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == n {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(n, left - k, prefix, out);
            prefix.pop();
        }
    }
    if n == 0 || steps == 0 {
        return if n == 1 { vec![vec![1.0]] } else { Vec::new() };
    }
    let mut out = Vec::new();
    rec(n, steps, &mut Vec::new(), &mut out);
    out.into_iter().map(|v| v.into_iter().map(|k| k as f64 / steps as f64).collect()).collect()
}
