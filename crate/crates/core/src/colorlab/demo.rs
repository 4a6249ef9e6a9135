use std::fmt::Write;

use rayon::prelude::*;

use crate::discrete_ot::{grid_barycenter, Grid, SinkhornOptions};
use crate::generators::Generator;
use crate::mixture::RadialMixture;
use crate::radial::RadialDistribution;
use crate::rw2::rw2_distance;
use crate::{Error, Result};

/// Entropic regularization for 1-D grid barycenters.
pub const DEMO_EPSILON_1D: f64 = 5e-4;
/// Entropic regularization for 2-D grid barycenters.
pub const DEMO_EPSILON_2D: f64 = 5e-3;

/// Cell-centered grid on `[0,1]^d`: 100 points in 1-D, 50 per axis in 2-D.
pub fn demo_grid(dim: usize) -> Result<Grid> {
    match dim {
        1 => Grid::uniform(1, 0.0, 1.0, 100),
        2 => Grid::uniform(2, 0.0, 1.0, 50),
        _ => Err(Error::Unsupported(format!("interpolation demo needs d = 1 or 2, got {dim}"))),
    }
}

/// Two IMQ mixtures on the unit interval or square whose RW2 plan splits
/// mass, so intermediate densities show three bumps. Beta is 2 in 1-D and
/// 2.5 in 2-D, where beta = 2 has no second moment.
pub fn imq_demo_pair(dim: usize) -> Result<(RadialMixture, RadialMixture)> {
    let g = Generator::imq(if dim == 2 { 2.5 } else { 2.0 })?;
    let c = |center: Vec<f64>, scale: f64| RadialDistribution::new(center, scale, g.clone());
    match dim {
        1 => Ok((
            RadialMixture::new(vec![0.5, 0.5], vec![c(vec![0.25], 0.02)?, c(vec![0.5], 0.025)?])?,
            RadialMixture::new(vec![0.3, 0.7], vec![c(vec![0.55], 0.025)?, c(vec![0.78], 0.015)?])?,
        )),
        2 => Ok((
            RadialMixture::new(
                vec![0.5, 0.5],
                vec![c(vec![0.35, 0.35], 0.045)?, c(vec![0.35, 0.65], 0.045)?],
            )?,
            RadialMixture::new(
                vec![0.3, 0.7],
                vec![c(vec![0.65, 0.4], 0.04)?, c(vec![0.62, 0.62], 0.055)?],
            )?,
        )),
        _ => Err(Error::Unsupported(format!("interpolation demo needs d = 1 or 2, got {dim}"))),
    }
}

/// Densities on the grid at one interpolation time.
#[derive(Debug, Clone)]
pub struct DemoFrame {
    pub t: f64,
    pub rw2: Vec<f64>,
    pub w2: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct InterpolationDemo {
    pub grid: Grid,
    pub frames: Vec<DemoFrame>,
}

impl InterpolationDemo {
    /// Long format: `t,x[,y],rw2_density[,w2_density]`, one row per grid
    /// point and time.
    pub fn to_csv(&self) -> String {
        let coords = ["x", "y"];
        let mut out = String::from("t");
        for name in &coords[..self.grid.dim()] {
            let _ = write!(out, ",{name}");
        }
        out.push_str(",rw2_density");
        let with_w2 = self.frames.iter().any(|f| f.w2.is_some());
        if with_w2 {
            out.push_str(",w2_density");
        }
        out.push('\n');
        let points = self.grid.points();
        for f in &self.frames {
            for (i, p) in points.iter().enumerate() {
                let _ = write!(out, "{}", f.t);
                for v in p {
                    let _ = write!(out, ",{v}");
                }
                let _ = write!(out, ",{}", f.rw2[i]);
                if with_w2 {
                    let _ = write!(out, ",{}", f.w2.as_ref().map_or(f64::NAN, |w| w[i]));
                }
                out.push('\n');
            }
        }
        out
    }

    /// Riemann sums of each frame's densities, `(rw2, w2)`.
    pub fn masses(&self) -> Vec<(f64, Option<f64>)> {
        let h = self.grid.cell_volume();
        self.frames
            .iter()
            .map(|f| (f.rw2.iter().sum::<f64>() * h, f.w2.as_ref().map(|w| w.iter().sum::<f64>() * h)))
            .collect()
    }
}

/// Densities of the RW2 geodesic from `a` to `b` on `grid` at each `t`, and
/// with `epsilon` set, entropic W2 barycenters of the two gridded densities
/// with weights `(1 - t, t)`.
pub fn interpolate_demo(
    a: &RadialMixture,
    b: &RadialMixture,
    ts: &[f64],
    grid: &Grid,
    epsilon: Option<f64>,
) -> Result<InterpolationDemo> {
    let dim = a.dim();
    if dim > 2 || dim == 0 {
        return Err(Error::Unsupported(format!("interpolation demo needs d = 1 or 2, got {dim}")));
    }
    if b.dim() != dim || grid.dim() != dim {
        return Err(Error::domain("mixtures and grid must share a dimension"));
    }
    if let Some(t) = ts.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::domain(format!("interpolation time must lie in [0, 1], got {t}")));
    }
    let points = grid.points();
    let on_grid = |m: &RadialMixture| -> Vec<f64> { points.par_iter().map(|x| m.density(x)).collect() };
    let plan = rw2_distance(a, b)?;
    let measures = if epsilon.is_some() {
        let h = grid.cell_volume();
        [a, b]
            .iter()
            .map(|m| {
                let w: Vec<f64> = on_grid(m).iter().map(|v| v * h).collect();
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    return Err(Error::domain("a mixture has no mass on the grid"));
                }
                Ok(w.iter().map(|v| v / total).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?
    } else {
        Vec::new()
    };
    let frames = ts
        .iter()
        .map(|&t| {
            let rw2 = on_grid(&plan.geodesic(t)?);
            let w2 = match epsilon {
                Some(eps) => {
                    let bary = grid_barycenter(grid, &measures, &[1.0 - t, t], eps, SinkhornOptions::default())?;
                    let h = grid.cell_volume();
                    Some(bary.iter().map(|v| v / h).collect())
                }
                None => None,
            };
            Ok(DemoFrame { t, rw2, w2 })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InterpolationDemo { grid: grid.clone(), frames })
}
