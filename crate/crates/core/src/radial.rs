//! Optimal transport between single radially contoured distributions.
//!
//! For `mu_j = R_d(m_j, c_j, rho_j)` the problem reduces to the 1-D monotone
//! rearrangement `C = F_1^{-1} o F_0` of the radial laws. The Monge map is
//! `T(x) = m_1 + C(|x - m_0|) (x - m_0) / |x - m_0|`, and when both
//! generators agree everything collapses to affine closed forms.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{Generator, MomentCache};
use crate::quadrature;

/// Number of equal-CDF radii in the default profile grid.
pub const DEFAULT_GRID: usize = 1024;

/// Tail refinement of interpolation tables: nodes per decade of survival
/// probability, and the smallest survival probability tabulated.
const TAIL_NODES_PER_DECADE: f64 = 50.0;
const TAIL_SURVIVAL_FLOOR: f64 = 1e-60;
/// Equal-CDF and even-radius nodes per interpolation table.
const INTERPOLATION_GRID: usize = 2048;

/// `R_d(m, c, rho)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawRadial", into = "RawRadial")]
pub struct RadialDistribution {
    center: Vec<f64>,
    scale: f64,
    moments: Arc<MomentCache>,
}

#[derive(Serialize, Deserialize)]
struct RawRadial {
    center: Vec<f64>,
    scale: f64,
    generator: Generator,
}

impl TryFrom<RawRadial> for RadialDistribution {
    type Error = Error;
    fn try_from(raw: RawRadial) -> Result<Self> {
        RadialDistribution::new(raw.center, raw.scale, raw.generator)
    }
}

impl From<RadialDistribution> for RawRadial {
    fn from(r: RadialDistribution) -> Self {
        RawRadial { generator: r.generator().clone(), center: r.center, scale: r.scale }
    }
}

impl PartialEq for RadialDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.center == other.center
            && self.scale == other.scale
            && self.generator() == other.generator()
    }
}

impl RadialDistribution {
    /// Builds a component with finite second moment.
    pub fn new(center: Vec<f64>, scale: f64, generator: Generator) -> Result<Self> {
        Self::build(center, scale, generator, true)
    }

    /// Builds a component that only needs a finite normalizer (densities and
    /// sampling); distances involving it fail with a divergence error.
    pub fn heavy_tailed(center: Vec<f64>, scale: f64, generator: Generator) -> Result<Self> {
        Self::build(center, scale, generator, false)
    }

    fn build(center: Vec<f64>, scale: f64, generator: Generator, strict: bool) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::domain("center must have at least one coordinate"));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("center must be finite"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain(format!("scale must be positive, got {scale}")));
        }
        let moments = MomentCache::shared(&generator, center.len(), strict)?;
        Ok(RadialDistribution { center, scale, moments })
    }

    fn with_moments(center: Vec<f64>, scale: f64, moments: Arc<MomentCache>) -> Self {
        RadialDistribution { center, scale, moments }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn generator(&self) -> &Generator {
        self.moments.generator()
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn moments(&self) -> &Arc<MomentCache> {
        &self.moments
    }

    pub fn variance_factor(&self) -> Result<f64> {
        self.moments.variance_factor()
    }

    /// Per-coordinate variance `(c^2 / d) * variance_factor`.
    pub fn coordinate_variance(&self) -> Result<f64> {
        Ok(self.scale * self.scale * self.variance_factor()? / self.dim() as f64)
    }

    /// `Z = c^d |S^{d-1}| M_{d-1}`.
    pub fn normalizer(&self) -> f64 {
        self.scale.powi(self.dim() as i32) * self.moments.unit_normalizer()
    }

    pub fn log_normalizer(&self) -> f64 {
        self.dim() as f64 * self.scale.ln() + self.moments.unit_normalizer().ln()
    }

    pub fn distance_to_center(&self, x: &[f64]) -> f64 {
        dist(x, &self.center)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.generator().value(self.distance_to_center(x) / self.scale) / self.normalizer()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.generator().log_value(self.distance_to_center(x) / self.scale) - self.log_normalizer()
    }

    /// CDF of `|X - m|`.
    pub fn radial_cdf(&self, r: f64) -> f64 {
        self.moments.radial_cdf(r / self.scale)
    }

    /// Survival function of `|X - m|`, accurate deep in the tail.
    pub fn radial_sf(&self, r: f64) -> f64 {
        self.moments.radial_sf(r / self.scale)
    }

    pub fn radial_quantile(&self, u: f64) -> f64 {
        self.scale * self.moments.radial_quantile(u)
    }

    /// Radius whose survival probability is `s`.
    pub fn radial_isf(&self, s: f64) -> f64 {
        self.scale * self.moments.radial_isf(s)
    }

    /// Density of `|X - m|`.
    pub fn radial_density(&self, r: f64) -> f64 {
        self.moments.radial_density(r / self.scale) / self.scale
    }

    /// True when both describe the same law up to `tol` in center and scale.
    pub fn same_component(&self, other: &Self, tol: f64) -> bool {
        self.dim() == other.dim()
            && dist(&self.center, &other.center) <= tol
            && (self.scale - other.scale).abs() <= tol
            && self.generator() == other.generator()
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        let center = self.center.iter().zip(shift).map(|(a, b)| a + b).collect();
        Self::with_moments(center, self.scale, self.moments.clone())
    }

    /// Draws `n` points: inverse-CDF radius times a uniform direction.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample_one(&mut rng)).collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let r = if u < 0.5 {
            self.radial_quantile(u)
        } else {
            self.radial_isf(1.0 - u)
        };
        let dir = random_direction(self.dim(), rng);
        self.center.iter().zip(&dir).map(|(m, e)| m + r * e).collect()
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn random_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    if dim == 1 {
        return vec![if rng.random::<bool>() { 1.0 } else { -1.0 }];
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Tabulated radial CDF `F(r)` of one component.
#[derive(Debug, Clone)]
pub struct ProfileCdf {
    pub radii: Vec<f64>,
    pub cdf: Vec<f64>,
    pub dim: usize,
    pub generator: Generator,
    pub scale: f64,
}

impl ProfileCdf {
    /// Linear interpolation of the tabulated CDF.
    pub fn interpolate(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let last = self.radii.len() - 1;
        if r >= self.radii[last] {
            return self.cdf[last];
        }
        let i = self.radii.partition_point(|&v| v <= r) - 1;
        let t = (r - self.radii[i]) / (self.radii[i + 1] - self.radii[i]);
        self.cdf[i] + t * (self.cdf[i + 1] - self.cdf[i])
    }
}

/// Radial CDF on `n_grid` radii placed at equal CDF increments, ending at
/// the scaled truncation radius.
pub fn profile_cdf(nu: &RadialDistribution, n_grid: usize) -> Result<ProfileCdf> {
    if n_grid < 64 {
        return Err(Error::domain(format!("profile grid needs at least 64 radii, got {n_grid}")));
    }
    let end = nu.scale * nu.moments.truncation_radius();
    let mut radii = Vec::with_capacity(n_grid);
    radii.push(0.0);
    for i in 1..n_grid - 1 {
        let u = i as f64 / (n_grid - 1) as f64;
        let r = if u < 0.5 { nu.radial_quantile(u) } else { nu.radial_isf(1.0 - u) };
        if r > *radii.last().unwrap() && r < end {
            radii.push(r);
        }
    }
    radii.push(end);
    let cdf = radii.iter().map(|&r| nu.radial_cdf(r)).collect();
    Ok(ProfileCdf {
        radii,
        cdf,
        dim: nu.dim(),
        generator: nu.generator().clone(),
        scale: nu.scale,
    })
}

/// The radial rearrangement `C` between two components.
#[derive(Debug, Clone)]
pub enum RadialRearrangement {
    /// Shared generator: `C(r) = (c_1 / c_0) r`.
    Scaling(f64),
    Numeric { source: RadialDistribution, target: RadialDistribution },
}

impl RadialRearrangement {
    pub fn new(nu0: &RadialDistribution, nu1: &RadialDistribution) -> Result<Self> {
        if nu0.dim() != nu1.dim() {
            return Err(Error::domain(format!(
                "dimension mismatch: {} vs {}",
                nu0.dim(),
                nu1.dim()
            )));
        }
        if nu0.generator() == nu1.generator() {
            Ok(Self::Scaling(nu1.scale / nu0.scale))
        } else {
            Ok(Self::numeric(nu0, nu1))
        }
    }

    /// Forces the CDF-inversion path even for identical generators.
    pub fn numeric(nu0: &RadialDistribution, nu1: &RadialDistribution) -> Self {
        let recenter = |nu: &RadialDistribution| {
            RadialDistribution::with_moments(vec![0.0; nu.dim()], nu.scale, nu.moments.clone())
        };
        Self::Numeric { source: recenter(nu0), target: recenter(nu1) }
    }

    /// `C(r) = F_1^{-1}(F_0(r))`, switching to survival functions in the
    /// upper half so deep tails keep their precision.
    pub fn apply(&self, r: f64) -> f64 {
        match self {
            Self::Scaling(k) => k * r,
            Self::Numeric { source, target } => {
                if r <= 0.0 {
                    return 0.0;
                }
                let u = source.radial_cdf(r);
                if u <= 0.5 {
                    target.radial_quantile(u)
                } else {
                    target.radial_isf(source.radial_sf(r))
                }
            }
        }
    }

    /// `C'(r)` as the ratio of radial densities `p_0(r) / p_1(C(r))`.
    pub fn derivative(&self, r: f64) -> f64 {
        match self {
            Self::Scaling(k) => *k,
            Self::Numeric { source, target } => {
                if r <= 0.0 {
                    return self.derivative_at_zero();
                }
                let p1 = target.radial_density(self.apply(r));
                let p0 = source.radial_density(r);
                if p1 > 0.0 {
                    p0 / p1
                } else if p0 > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
        }
    }

    /// Both radial CDFs behave like `rho(0) r^d / (d c^d M_{d-1})` at the
    /// origin, so `C'(0) = (rho_0(0) c_1^d M_1 / (rho_1(0) c_0^d M_0))^{1/d}`.
    fn derivative_at_zero(&self) -> f64 {
        match self {
            Self::Scaling(k) => *k,
            Self::Numeric { source, target } => {
                let d = source.dim() as i32;
                let r0 = source.generator().value(0.0);
                let r1 = target.generator().value(0.0);
                if r1 <= 0.0 || r0 <= 0.0 {
                    return f64::NAN;
                }
                let ratio = r0 * target.scale.powi(d) * target.moments.m_lo()
                    / (r1 * source.scale.powi(d) * source.moments.m_lo());
                ratio.powf(1.0 / d as f64)
            }
        }
    }
}

/// Tabulated 1-D Monge map between radial profiles.
#[derive(Debug, Clone)]
pub struct MongeMap1D {
    pub radii: Vec<f64>,
    pub mapped: Vec<f64>,
    pub derivative: Vec<f64>,
}

/// Tabulates `C`, `C'` on the source's equal-CDF grid.
pub fn radial_monge_1d(nu0: &RadialDistribution, nu1: &RadialDistribution) -> Result<MongeMap1D> {
    let rearr = RadialRearrangement::new(nu0, nu1)?;
    let grid = profile_cdf(nu0, DEFAULT_GRID)?;
    let mapped = grid.radii.iter().map(|&r| rearr.apply(r)).collect();
    let derivative = grid.radii.iter().map(|&r| rearr.derivative(r)).collect();
    Ok(MongeMap1D { radii: grid.radii, mapped, derivative })
}

/// Monge map between two components, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct RadialMap {
    from: Vec<f64>,
    to: Vec<f64>,
    rearrangement: RadialRearrangement,
}

impl RadialMap {
    pub fn new(nu0: &RadialDistribution, nu1: &RadialDistribution) -> Result<Self> {
        Ok(RadialMap {
            from: nu0.center.clone(),
            to: nu1.center.clone(),
            rearrangement: RadialRearrangement::new(nu0, nu1)?,
        })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        if let RadialRearrangement::Scaling(k) = self.rearrangement {
            if k == 1.0 && self.from == self.to {
                return x.to_vec();
            }
            return x
                .iter()
                .zip(&self.from)
                .zip(&self.to)
                .map(|((xi, a), b)| b + k * (xi - a))
                .collect();
        }
        let r = dist(x, &self.from);
        if r == 0.0 {
            // Continuity limit: C(0) = 0 for every continuous generator.
            return self.to.clone();
        }
        let ratio = self.rearrangement.apply(r) / r;
        x.iter()
            .zip(&self.from)
            .zip(&self.to)
            .map(|((xi, a), b)| b + ratio * (xi - a))
            .collect()
    }
}

/// `T(x)` transporting `nu0` onto `nu1`.
pub fn monge_map(nu0: &RadialDistribution, nu1: &RadialDistribution, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != nu0.dim() {
        return Err(Error::domain("point dimension does not match the distribution"));
    }
    Ok(RadialMap::new(nu0, nu1)?.apply(x))
}

/// Squared W2 between two components.
pub fn pairwise_w2_squared(nu0: &RadialDistribution, nu1: &RadialDistribution) -> Result<f64> {
    if nu0.dim() != nu1.dim() {
        return Err(Error::domain("dimension mismatch"));
    }
    let shift = dist2(&nu0.center, &nu1.center);
    if nu0.generator() == nu1.generator() {
        let dc = nu0.scale - nu1.scale;
        if dc == 0.0 {
            return Ok(shift);
        }
        return Ok(shift + dc * dc * nu0.variance_factor()?);
    }
    Ok(shift + radial_cost_numeric(nu0, nu1)?)
}

/// W2 between two components.
pub fn pairwise_w2(nu0: &RadialDistribution, nu1: &RadialDistribution) -> Result<f64> {
    Ok(pairwise_w2_squared(nu0, nu1)?.sqrt())
}

/// Squared W2 through CDF inversion regardless of the generators.
pub fn pairwise_w2_squared_numeric(
    nu0: &RadialDistribution,
    nu1: &RadialDistribution,
) -> Result<f64> {
    if nu0.dim() != nu1.dim() {
        return Err(Error::domain("dimension mismatch"));
    }
    Ok(dist2(&nu0.center, &nu1.center) + radial_cost_numeric(nu0, nu1)?)
}

/// `int_0^inf (C(r) - r)^2 p_0(r) dr` with `p_0` the normalized radial law.
fn radial_cost_numeric(nu0: &RadialDistribution, nu1: &RadialDistribution) -> Result<f64> {
    let cost = radial_cost_from(nu0, nu1)?;
    if cost.is_finite() {
        return Ok(cost);
    }
    // A light-tailed source can push its last sliver of mass past the
    // resolution of a heavy-tailed target's inverse survival function.
    // The cost is symmetric, so integrate from the other side.
    radial_cost_from(nu1, nu0)
}

fn radial_cost_from(nu0: &RadialDistribution, nu1: &RadialDistribution) -> Result<f64> {
    nu0.variance_factor()?;
    nu1.variance_factor()?;
    let rearr = RadialRearrangement::numeric(nu0, nu1);
    let c0 = nu0.scale;
    let knots = nu0.moments.knots();
    let f = |x: f64| {
        // At the edge of a compact support the target quantile is infinite.
        let p = nu0.moments.radial_density(x);
        if p == 0.0 {
            return 0.0;
        }
        let r = c0 * x;
        let gap = rearr.apply(r) - r;
        gap * gap * p
    };
    Ok(quadrature::integrate_breakpoints(f, knots, 1e-300, 1e-11).value)
}

/// McCann interpolation between two components.
///
/// Shared generators give `R_d(m_t, c_t, rho)`; otherwise the result carries
/// a tabulated generator whose radial law is the pushforward of the source
/// radial law by `C_t(r) = (1 - t) r + t C(r)`.
pub fn interpolate(
    nu0: &RadialDistribution,
    nu1: &RadialDistribution,
    t: f64,
) -> Result<RadialDistribution> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("interpolation time must lie in [0, 1], got {t}")));
    }
    if nu0.dim() != nu1.dim() {
        return Err(Error::domain("dimension mismatch"));
    }
    if t == 0.0 {
        return Ok(nu0.clone());
    }
    if t == 1.0 {
        return Ok(nu1.clone());
    }
    let center: Vec<f64> =
        nu0.center.iter().zip(&nu1.center).map(|(a, b)| (1.0 - t) * a + t * b).collect();
    if nu0.generator() == nu1.generator() {
        let scale = (1.0 - t) * nu0.scale + t * nu1.scale;
        return Ok(RadialDistribution::with_moments(center, scale, nu0.moments.clone()));
    }
    let table = interpolation_table(nu0, nu1, t);
    let generator = Generator::tabulated(table.0, table.1)?;
    RadialDistribution::new(center, 1.0, generator)
}

/// Source radii for interpolation tables: equal CDF increments, an even
/// radial grid over the bulk (the CDF grid alone is coarse near the origin
/// in higher dimensions), and a geometric refinement of the upper tail in
/// survival probability.
fn source_nodes(nu: &RadialDistribution) -> Vec<f64> {
    let n = INTERPOLATION_GRID;
    let mut candidates = Vec::with_capacity(3 * n);
    for i in 1..n {
        let u = i as f64 / n as f64;
        candidates.push(if u < 0.5 { nu.radial_quantile(u) } else { nu.radial_isf(1.0 - u) });
    }
    let bulk = nu.radial_isf(1.0 / n as f64);
    candidates.extend((1..n).map(|i| bulk * i as f64 / n as f64));
    let mut s = 1.0 / n as f64;
    let step = 10f64.powf(-1.0 / TAIL_NODES_PER_DECADE);
    loop {
        s *= step;
        if s < TAIL_SURVIVAL_FLOOR {
            break;
        }
        candidates.push(nu.radial_isf(s));
    }
    if let Some(end) = nu.generator().support_end() {
        candidates.push(end * nu.scale);
    }
    candidates.retain(|r| r.is_finite() && *r > 0.0);
    candidates.sort_by(f64::total_cmp);
    let mut radii = vec![0.0];
    for r in candidates {
        if r > radii.last().unwrap() * (1.0 + 1e-12) {
            radii.push(r);
        }
    }
    radii
}

fn interpolation_table(nu0: &RadialDistribution, nu1: &RadialDistribution, t: f64) -> (Vec<f64>, Vec<f64>) {
    let rearr = RadialRearrangement::numeric(nu0, nu1);
    let d = nu0.dim() as i32;
    let mut radii = Vec::new();
    let mut values = Vec::new();
    for r in source_nodes(nu0) {
        let s = (1.0 - t) * r + t * rearr.apply(r);
        let slope = (1.0 - t) + t * rearr.derivative(r);
        let rho0 = nu0.generator().value(r / nu0.scale);
        // rho_t(s) s^{d-1} C_t'(r) = rho_0(r) r^{d-1}, up to a constant.
        let ratio = if r == 0.0 { 1.0 / slope } else { r / s };
        let mut v = if slope.is_finite() && slope > 0.0 {
            rho0 * ratio.powi(d - 1) / slope
        } else {
            0.0
        };
        if !v.is_finite() {
            v = 0.0;
        }
        if radii.is_empty() {
            radii.push(0.0);
            values.push(v);
            continue;
        }
        if s.is_finite() && s > *radii.last().unwrap() {
            radii.push(s);
            values.push(v);
        }
    }
    if values[0] == 0.0 && values.len() > 1 {
        values[0] = values[1];
    }
    (radii, values)
}

/// Barycenter of components sharing one generator:
/// `R_d(sum lambda_j m_j, sum lambda_j c_j, rho)`.
pub fn barycenter_shared_generator(
    components: &[RadialDistribution],
    weights: &[f64],
) -> Result<RadialDistribution> {
    check_simplex(weights, components.len())?;
    let first = &components[0];
    if components.iter().any(|c| c.generator() != first.generator()) {
        return Err(Error::Unsupported(
            "barycenters of components with different generators".into(),
        ));
    }
    if components.iter().any(|c| c.dim() != first.dim()) {
        return Err(Error::domain("dimension mismatch"));
    }
    let mut center = vec![0.0; first.dim()];
    let mut scale = 0.0;
    for (c, &w) in components.iter().zip(weights) {
        for (m, x) in center.iter_mut().zip(&c.center) {
            *m += w * x;
        }
        scale += w * c.scale;
    }
    Ok(RadialDistribution::with_moments(center, scale, first.moments.clone()))
}

pub(crate) fn check_simplex(weights: &[f64], expected: usize) -> Result<()> {
    if weights.len() != expected || expected == 0 {
        return Err(Error::domain(format!(
            "expected {expected} weights, got {}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::domain("weights must be nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("weights must sum to 1, got {total}")));
    }
    Ok(())
}
