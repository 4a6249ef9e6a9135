//! Command-line front end. Every command prints one JSON object on stdout.
//! Exit codes: 0 on success, 1 for usage and validation errors, 2 for I/O.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use super::{
    average_with_palettes, demo_grid, eval_error, fit_palette, fit_palettes, imq_demo_pair, interpolate_demo,
    load_image, save_image, simplex_grid, ErrorSolver, MapKind, Palette, PaletteSpec, DEFAULT_SAMPLES,
    DEMO_EPSILON_1D, DEMO_EPSILON_2D,
};
use crate::estimation::EmConfig;
use crate::generators::Generator;
use crate::gmm::gw2_distance;
use crate::mixture::RadialMixture;
use crate::rw2::{rw2_barycenter, rw2_distance};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "colorlab", version, about = "Color palettes as radial mixtures: fitting, transport and transfer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a palette model to an image's colors.
    Fit(FitCmd),
    /// Distance between two model files.
    Distance(PairCmd),
    /// Optimal component coupling between two model files.
    Plan(PlanCmd),
    /// Barycenter of radial mixture model files.
    Barycenter(BarycenterCmd),
    /// Recolor an image by transporting its palette onto another.
    Transfer(TransferCmd),
    /// Recolor one image to barycenters of several images' palettes.
    Average(AverageCmd),
    /// Subsampled squared W2 between the colors of two images.
    EvalError(EvalCmd),
    /// Gridded densities along an interpolation between two mixtures.
    InterpolateDemo(DemoCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Rmm,
    Gmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorName {
    Imq,
    Compact,
    Gauss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MapArg {
    Mean,
    Rand,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "rmm")]
    pub kind: ModelKind,
    #[arg(long, value_enum, default_value = "imq")]
    pub generator: GeneratorName,
    #[arg(long, default_value_t = 3.0)]
    pub beta: f64,
    /// Defaults to 15 for radial models and 10 for GMMs.
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1500)]
    pub iterations: usize,
}

#[derive(Debug, Args)]
pub struct FitCmd {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub output: PathBuf,
    /// Training log CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PairCmd {
    #[arg(long)]
    pub model_a: PathBuf,
    #[arg(long)]
    pub model_b: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlanCmd {
    #[command(flatten)]
    pub pair: PairCmd,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BarycenterCmd {
    /// Repeat once per input model.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    /// Comma-separated weights; uniform when omitted.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransferCmd {
    #[arg(long)]
    pub input: PathBuf,
    /// Palette of the input image.
    #[arg(long)]
    pub model_a: PathBuf,
    /// Palette to transfer to.
    #[arg(long)]
    pub model_b: PathBuf,
    #[arg(long, value_enum, default_value = "mean")]
    pub map: MapArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct AverageCmd {
    /// Repeat once per image.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Index of the image to recolor.
    #[arg(long, default_value_t = 0)]
    pub reference: usize,
    /// Subdivisions of the barycentric weight grid.
    #[arg(long, default_value_t = 2)]
    pub steps: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Directory for `average_XXX.png` outputs.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalCmd {
    /// Image whose colors are compared to the target, usually a transfer output.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Untransferred source image, reported as a baseline.
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use Sinkhorn at this regularization instead of exact assignment.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DemoCmd {
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Model file for the start point; the built-in IMQ pair is used when
    /// both are omitted.
    #[arg(long, requires = "model_b")]
    pub model_a: Option<PathBuf>,
    #[arg(long, requires = "model_a")]
    pub model_b: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    pub times: Vec<f64>,
    /// Also compute entropic grid W2 barycenters.
    #[arg(long)]
    pub w2: bool,
    /// Regularization for `--w2`; 5e-4 in 1-D and 5e-3 in 2-D by default.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub output: PathBuf,
}

/// Parses `args` (including the program name), runs the command and prints
/// its result. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(v) => {
            println!("{v}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

/// Runs one command, writing its artifacts, and returns the JSON summary.
pub fn execute(command: &Command) -> Result<Value> {
    match command {
        Command::Fit(c) => fit(c),
        Command::Distance(c) => distance(c),
        Command::Plan(c) => plan(c),
        Command::Barycenter(c) => barycenter(c),
        Command::Transfer(c) => transfer(c),
        Command::Average(c) => average(c),
        Command::EvalError(c) => eval(c),
        Command::InterpolateDemo(c) => demo(c),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn read_palette(path: &Path) -> Result<Palette> {
    Palette::from_json(&read_text(path)?).map_err(|e| match e {
        Error::Json(_) | Error::Invalid(_) => Error::Invalid(format!("{}: {e}", path.display())),
        other => other,
    })
}

fn read_radial(path: &Path) -> Result<RadialMixture> {
    match read_palette(path)? {
        Palette::Radial(m) => Ok(m),
        Palette::Gaussian(_) => Err(Error::Config(format!("{} is a GMM, expected a radial mixture", path.display()))),
    }
}

fn generator(args: &ModelArgs) -> Result<Generator> {
    match args.generator {
        GeneratorName::Imq => Generator::imq(args.beta),
        GeneratorName::Compact => Generator::compact(args.beta),
        GeneratorName::Gauss => Ok(Generator::gauss()),
    }
}

fn em_config(args: &ModelArgs, components: usize) -> EmConfig {
    let mut cfg = EmConfig::new(components);
    cfg.seed = args.seed;
    cfg.batch_size = args.batch_size;
    cfg.max_iter = args.iterations;
    cfg
}

fn spec(args: &ModelArgs) -> Result<PaletteSpec> {
    Ok(match args.kind {
        ModelKind::Rmm => PaletteSpec::Radial {
            generator: generator(args)?,
            components: args.components.unwrap_or(PaletteSpec::imq_preset().components()),
        },
        ModelKind::Gmm => PaletteSpec::Gaussian {
            components: args.components.unwrap_or(PaletteSpec::gmm_preset().components()),
        },
    })
}

fn fit(c: &FitCmd) -> Result<Value> {
    let cloud = load_image(&c.input)?;
    let spec = spec(&c.model)?;
    let fit = fit_palette(&cloud, &spec, &em_config(&c.model, spec.components()))?;
    write_text(&c.output, &fit.palette.to_json())?;
    if let Some(log) = &c.log {
        write_text(log, &fit.log_csv)?;
    }
    let parameters = match &fit.palette {
        Palette::Radial(m) => m.parameter_count(),
        Palette::Gaussian(m) => m.parameter_count(),
    };
    Ok(json!({
        "kind": fit.palette.kind(),
        "components": fit.palette.len(),
        "parameters": parameters,
        "pixels": cloud.len(),
        "output": c.output,
    }))
}

fn distance(c: &PairCmd) -> Result<Value> {
    match (read_palette(&c.model_a)?, read_palette(&c.model_b)?) {
        (Palette::Radial(a), Palette::Radial(b)) => {
            let r = rw2_distance(&a, &b)?;
            Ok(json!({ "rw2": r.distance, "rw2_squared": r.squared(), "kind": "rmm" }))
        }
        (Palette::Gaussian(a), Palette::Gaussian(b)) => {
            let r = gw2_distance(&a, &b)?;
            Ok(json!({ "gw2": r.distance, "gw2_squared": r.distance * r.distance, "kind": "gmm" }))
        }
        _ => Err(Error::Config("models must both be radial mixtures or both GMMs".into())),
    }
}

fn plan(c: &PlanCmd) -> Result<Value> {
    let plan = match (read_palette(&c.pair.model_a)?, read_palette(&c.pair.model_b)?) {
        (Palette::Radial(a), Palette::Radial(b)) => rw2_distance(&a, &b)?.plan,
        (Palette::Gaussian(a), Palette::Gaussian(b)) => gw2_distance(&a, &b)?.plan,
        _ => return Err(Error::Config("models must both be radial mixtures or both GMMs".into())),
    };
    let value = serde_json::to_value(plan.to_json())?;
    if let Some(out) = &c.output {
        write_text(out, &serde_json::to_string_pretty(&value)?)?;
    }
    Ok(value)
}

fn barycenter(c: &BarycenterCmd) -> Result<Value> {
    let models = c.models.iter().map(|p| read_radial(p)).collect::<Result<Vec<_>>>()?;
    let n = models.len();
    let weights = c.weights.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);
    let (bary, plan) = rw2_barycenter(&models, &weights)?;
    write_text(&c.output, &bary.to_json())?;
    Ok(json!({
        "components": bary.len(),
        "objective": plan.objective,
        "plan": plan.to_json(),
        "output": c.output,
    }))
}

fn transfer(c: &TransferCmd) -> Result<Value> {
    let cloud = load_image(&c.input)?;
    let from = read_palette(&c.model_a)?;
    let to = read_palette(&c.model_b)?;
    let kind = match c.map {
        MapArg::Mean => MapKind::Mean,
        MapArg::Rand => MapKind::Rand,
    };
    let out = super::transfer(&cloud, &from, &to, kind, c.seed)?;
    save_image(&out, &c.output)?;
    Ok(json!({
        "width": out.width(),
        "height": out.height(),
        "map": if kind == MapKind::Mean { "mean" } else { "rand" },
        "kind": from.kind(),
        "output": c.output,
    }))
}

fn average(c: &AverageCmd) -> Result<Value> {
    if c.model.kind != ModelKind::Rmm {
        return Err(Error::Config("color averaging needs radial mixture palettes".into()));
    }
    let images = c.inputs.iter().map(load_image).collect::<Result<Vec<_>>>()?;
    let reference = images
        .get(c.reference)
        .ok_or_else(|| Error::Config(format!("reference index {} out of range", c.reference)))?;
    let k = c.model.components.unwrap_or(PaletteSpec::imq_preset().components());
    let palettes = fit_palettes(&images, &generator(&c.model)?, &em_config(&c.model, k))?;
    let weights = simplex_grid(images.len(), c.steps);
    let outputs = average_with_palettes(reference, c.reference, &palettes, &weights)?;
    std::fs::create_dir_all(&c.output).map_err(|source| Error::Io { path: c.output.clone(), source })?;
    let mut written = Vec::new();
    for (i, (img, w)) in outputs.iter().zip(&weights).enumerate() {
        let path = c.output.join(format!("average_{i:03}.png"));
        save_image(img, &path)?;
        written.push(json!({ "weights": w, "output": path }));
    }
    Ok(json!({ "images": written }))
}

fn eval(c: &EvalCmd) -> Result<Value> {
    let output = load_image(&c.input)?;
    let target = load_image(&c.target)?;
    let solver = match c.epsilon {
        Some(epsilon) => ErrorSolver::Sinkhorn { epsilon },
        None => ErrorSolver::Exact,
    };
    let report = eval_error(&output, &target, c.samples, c.reps, c.seed, solver)?;
    let mut value = serde_json::to_value(&report)?;
    if let Some(source) = &c.source {
        let source = load_image(source)?;
        let base = eval_error(&source, &target, c.samples, c.reps, c.seed, solver)?;
        value["source_error_mean"] = json!(base.error_mean);
        value["source_error_std"] = json!(base.error_std);
    }
    Ok(value)
}

fn demo(c: &DemoCmd) -> Result<Value> {
    let (a, b) = match (&c.model_a, &c.model_b) {
        (Some(pa), Some(pb)) => (read_radial(pa)?, read_radial(pb)?),
        _ => imq_demo_pair(c.dim)?,
    };
    let grid = demo_grid(a.dim())?;
    let epsilon = c.w2.then(|| c.epsilon.unwrap_or(if a.dim() == 1 { DEMO_EPSILON_1D } else { DEMO_EPSILON_2D }));
    let demo = interpolate_demo(&a, &b, &c.times, &grid, epsilon)?;
    write_text(&c.output, &demo.to_csv())?;
    let masses: Vec<Value> = demo
        .masses()
        .iter()
        .zip(&c.times)
        .map(|((rw2, w2), t)| json!({ "t": t, "rw2_mass": rw2, "w2_mass": w2 }))
        .collect();
    Ok(json!({
        "dim": a.dim(),
        "grid_points": grid.len(),
        "epsilon": epsilon,
        "frames": masses,
        "output": c.output,
    }))
}
