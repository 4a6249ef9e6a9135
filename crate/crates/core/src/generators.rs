//! Radial generators `rho` and their moment integrals.
//!
//! Every closed form in the radial module is assembled from two integrals of
//! the generator, `M_{d-1} = int_0^inf r^{d-1} rho(r) dr` (the normalizer) and
//! `M_{d+1}` (the second moment). [`MomentCache`] computes them once per
//! `(generator, dim)` pair together with the unit-scale radial CDF table used
//! for quantiles and sampling.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::quadrature;

/// Relative tail mass of `r^{d+1} rho` allowed beyond the truncation radius.
pub const TAIL_TOLERANCE: f64 = 1e-12;

/// A generator sampled on a grid starting at 0, interpolated as a power law
/// between positive nodes and linearly elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    radii: Vec<f64>,
    values: Vec<f64>,
    /// Per-segment power-law exponent; NaN marks a linear segment.
    powers: Vec<f64>,
}

impl Table {
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn new(radii: Vec<f64>, values: Vec<f64>) -> Self {
        let powers = (0..radii.len() - 1)
            .map(|i| {
                let (r0, r1) = (radii[i], radii[i + 1]);
                let (v0, v1) = (values[i], values[i + 1]);
                if r0 > 0.0 && v0 > 0.0 && v1 > 0.0 {
                    (v1 / v0).ln() / (r1 / r0).ln()
                } else {
                    f64::NAN
                }
            })
            .collect();
        Table { radii, values, powers }
    }

    fn segment(&self, x: f64) -> usize {
        (self.radii.partition_point(|&v| v <= x) - 1).min(self.radii.len() - 2)
    }

    fn eval_in(&self, i: usize, x: f64) -> f64 {
        let p = self.powers[i];
        if p.is_nan() {
            let t = (x - self.radii[i]) / (self.radii[i + 1] - self.radii[i]);
            self.values[i] + t * (self.values[i + 1] - self.values[i])
        } else {
            self.values[i] * (x / self.radii[i]).powf(p)
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let last = self.radii.len() - 1;
        if x > self.radii[last] {
            return 0.0;
        }
        if x == self.radii[last] {
            return self.values[last];
        }
        self.eval_in(self.segment(x), x)
    }

    fn slope(&self, x: f64) -> f64 {
        if x >= *self.radii.last().unwrap() {
            return 0.0;
        }
        let i = self.segment(x);
        let p = self.powers[i];
        if p.is_nan() {
            (self.values[i + 1] - self.values[i]) / (self.radii[i + 1] - self.radii[i])
        } else {
            p * self.eval_in(i, x) / x
        }
    }

    /// `int_a^b s^k rho(s) ds` for `0 <= a <= b`: closed form on power-law
    /// segments, a Kronrod rule (exact for polynomials) on linear ones.
    fn integral(&self, k: i32, a: f64, b: f64) -> f64 {
        let end = *self.radii.last().unwrap();
        let b = b.min(end);
        if !(b > a) {
            return 0.0;
        }
        let mut total = 0.0;
        let mut i = self.segment(a);
        let mut lo = a;
        while lo < b {
            let hi = self.radii[i + 1].min(b);
            let p = self.powers[i];
            total += if p.is_nan() {
                let f = |s: f64| s.powi(k) * self.eval_in(i, s);
                quadrature::gk15(&f, lo, hi).value
            } else {
                // v_i (s / r_i)^p s^k integrates to v_i (lo/r_i)^p lo^(k+1) (exp(q L) - 1) / q.
                let q = p + k as f64 + 1.0;
                let l = (hi / lo).ln();
                let factor = if (q * l).abs() < 1e-12 { l } else { (q * l).exp_m1() / q };
                self.values[i] * (lo / self.radii[i]).powf(p) * lo.powi(k + 1) * factor
            };
            lo = hi;
            i += 1;
        }
        total
    }
}

/// A radial profile function on `[0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGenerator", into = "RawGenerator")]
pub enum Generator {
    /// Inverse multi-quadratic `(1 + x^2)^(-beta)`.
    Imq { beta: f64 },
    /// `(1 - x^2)^(1/beta)` on `[0, 1]`, zero outside.
    Compact { beta: f64 },
    /// `exp(-x^2 / 2)`.
    Gauss,
    /// Piecewise-linear interpolation of tabulated values, zero past the grid.
    Tabulated(Arc<Table>),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawGenerator {
    Imq { beta: f64 },
    Compact { beta: f64 },
    Gauss,
    Tabulated { radii: Vec<f64>, values: Vec<f64> },
}

impl TryFrom<RawGenerator> for Generator {
    type Error = Error;

    fn try_from(raw: RawGenerator) -> Result<Self> {
        match raw {
            RawGenerator::Imq { beta } => Generator::imq(beta),
            RawGenerator::Compact { beta } => Generator::compact(beta),
            RawGenerator::Gauss => Ok(Generator::Gauss),
            RawGenerator::Tabulated { radii, values } => Generator::tabulated(radii, values),
        }
    }
}

impl From<Generator> for RawGenerator {
    fn from(g: Generator) -> Self {
        match g {
            Generator::Imq { beta } => RawGenerator::Imq { beta },
            Generator::Compact { beta } => RawGenerator::Compact { beta },
            Generator::Gauss => RawGenerator::Gauss,
            Generator::Tabulated(t) => RawGenerator::Tabulated {
                radii: t.radii.clone(),
                values: t.values.clone(),
            },
        }
    }
}

impl Generator {
    pub fn imq(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::domain(format!("IMQ beta must be positive, got {beta}")));
        }
        Ok(Generator::Imq { beta })
    }

    pub fn compact(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::domain(format!("compact beta must be positive, got {beta}")));
        }
        Ok(Generator::Compact { beta })
    }

    pub fn gauss() -> Self {
        Generator::Gauss
    }

    pub fn tabulated(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() < 2 || radii.len() != values.len() {
            return Err(Error::domain(
                "tabulated generator needs at least two radii and one value per radius",
            ));
        }
        if radii[0] != 0.0 {
            return Err(Error::domain("tabulated grid must start at 0"));
        }
        if radii.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::domain("tabulated grid must be strictly increasing and finite"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("tabulated values must be finite and nonnegative"));
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(Error::domain("tabulated generator is identically zero"));
        }
        Ok(Generator::Tabulated(Arc::new(Table::new(radii, values))))
    }

    /// `rho(x)`; negative arguments are rejected.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::domain(format!("generator argument must be >= 0, got {x}")));
        }
        Ok(self.value(x))
    }

    /// `rho(x)` for `x >= 0` without argument checks.
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Generator::Imq { beta } => (1.0 + x * x).powf(-beta),
            Generator::Compact { beta } => {
                if x >= 1.0 {
                    0.0
                } else {
                    ((1.0 - x) * (1.0 + x)).powf(1.0 / beta)
                }
            }
            Generator::Gauss => (-0.5 * x * x).exp(),
            Generator::Tabulated(t) => t.eval(x),
        }
    }

    /// `log rho(x)`, `-inf` outside the support.
    pub fn log_value(&self, x: f64) -> f64 {
        match self {
            Generator::Imq { beta } => -beta * (x * x).ln_1p(),
            Generator::Compact { beta } => {
                if x >= 1.0 {
                    f64::NEG_INFINITY
                } else {
                    ((-x).ln_1p() + x.ln_1p()) / beta
                }
            }
            Generator::Gauss => -0.5 * x * x,
            Generator::Tabulated(t) => t.eval(x).ln(),
        }
    }

    /// `d/dx log rho(x)` inside the support.
    pub fn log_derivative(&self, x: f64) -> f64 {
        match self {
            Generator::Imq { beta } => -2.0 * beta * x / (1.0 + x * x),
            Generator::Compact { beta } => {
                if x >= 1.0 {
                    f64::NEG_INFINITY
                } else {
                    -2.0 * x / (beta * (1.0 - x) * (1.0 + x))
                }
            }
            Generator::Gauss => -x,
            Generator::Tabulated(t) => {
                let v = t.eval(x);
                if v > 0.0 {
                    t.slope(x) / v
                } else {
                    0.0
                }
            }
        }
    }

    /// Right end of the support, if bounded.
    pub fn support_end(&self) -> Option<f64> {
        match self {
            Generator::Compact { .. } => Some(1.0),
            Generator::Tabulated(t) => Some(*t.radii.last().unwrap()),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Generator::Imq { beta } => format!("imq(beta={beta})"),
            Generator::Compact { beta } => format!("compact(beta={beta})"),
            Generator::Gauss => "gauss".to_string(),
            Generator::Tabulated(t) => format!("tabulated({} knots)", t.radii.len()),
        }
    }

    /// Checks that `M_k` converges.
    fn check_moment(&self, k: u32) -> Result<()> {
        if let Generator::Imq { beta } = self {
            if 2.0 * beta - k as f64 <= 1.0 {
                return Err(Error::Divergence(format!(
                    "moment M_{k} of imq(beta={beta}) diverges: needs 2*beta - {k} > 1"
                )));
            }
        }
        Ok(())
    }

    /// `int_r^inf s^k rho(s) ds`, analytic for unbounded generators.
    fn tail(&self, k: u32, r: f64) -> f64 {
        match self {
            Generator::Imq { beta } => imq_tail(*beta, k, r),
            Generator::Gauss => {
                let a = 0.5 * (k as f64 + 1.0);
                2f64.powf(0.5 * (k as f64 - 1.0)) * gamma(a) * gamma_ur(a, 0.5 * r * r)
            }
            _ => 0.0,
        }
    }

    /// Smallest radius past which the `k`-th moment tail is below
    /// `tol * total`. Bounded generators return their support end.
    fn truncation_radius(&self, k: u32, total: f64, tol: f64) -> f64 {
        match self {
            Generator::Imq { beta } => {
                // tail <= R^{k+1-2beta} / (2beta-k-1)
                let p = 2.0 * beta - k as f64 - 1.0;
                let r = (tol * total * p).powf(-1.0 / p);
                r.max(imq_series_radius(*beta))
            }
            Generator::Gauss => {
                let mut r = 1.0;
                while self.tail(k, r) > tol * total {
                    r += 0.25;
                }
                r
            }
            _ => self.support_end().unwrap(),
        }
    }

    /// Panel boundaries on `[0, radius]` across which the integrand is smooth.
    fn knots(&self, radius: f64) -> Vec<f64> {
        match self {
            Generator::Compact { .. } => {
                let mut k: Vec<f64> = (0..4).map(|i| i as f64 * 0.25).collect();
                let mut gap = 0.25;
                while gap > 1e-9 {
                    gap *= 0.5;
                    k.push(1.0 - gap);
                }
                k.push(1.0);
                k
            }
            Generator::Tabulated(t) => t.radii.clone(),
            _ => {
                let mut k: Vec<f64> = (0..16).map(|i| i as f64 * 0.25).collect();
                let mut x = 4.0;
                while x < radius {
                    k.push(x);
                    x *= 1.25;
                }
                k.push(radius);
                k
            }
        }
    }

    /// `int_a^b s^k rho(s) ds` on one smooth panel.
    fn panel_integral(&self, k: u32, a: f64, b: f64) -> f64 {
        if let Generator::Tabulated(t) = self {
            return t.integral(k as i32, a, b);
        }
        let f = |s: f64| s.powi(k as i32) * self.value(s);
        quadrature::integrate(f, a, b, 1e-300, 1e-14).value
    }

    /// `M_k = int_0^inf r^k rho(r) dr`: adaptive quadrature up to the
    /// truncation radius plus the analytic tail.
    pub fn moment(&self, k: u32) -> Result<f64> {
        self.check_moment(k)?;
        // Rough total for the truncation rule; refined by the quadrature below.
        let scale = match self {
            Generator::Imq { beta } => imq_moment_closed_form(*beta, k),
            _ => 1.0,
        };
        let radius = self.truncation_radius(k, scale, TAIL_TOLERANCE);
        let knots = self.knots(radius);
        let body: f64 = knots
            .windows(2)
            .map(|w| self.panel_integral(k, w[0], w[1]))
            .sum();
        Ok(body + self.tail(k, radius))
    }
}

/// Splits knot panels until one Kronrod rule integrates `s^k rho(s)` on each
/// to near machine precision, so partial-panel integrals need no adaptivity.
fn refine_knots(g: &Generator, k: u32, knots: &[f64], floor: f64) -> Vec<f64> {
    let split = |a: f64, b: f64, out: &mut Vec<f64>| split_panel(g, k, a, b, floor, 0, out);
    let mut out = vec![knots[0]];
    for w in knots.windows(2) {
        split(w[0], w[1], &mut out);
    }
    out
}

fn split_panel(g: &Generator, k: u32, a: f64, b: f64, floor: f64, depth: u32, out: &mut Vec<f64>) {
    let f = |s: f64| s.powi(k as i32) * g.value(s);
    let est = quadrature::gk15(&f, a, b);
    let fine = est.error <= (1e-14 * est.value.abs()).max(floor);
    if fine || depth >= 40 || b - a <= 1e-12 * b {
        out.push(b);
        return;
    }
    let mid = 0.5 * (a + b);
    split_panel(g, k, a, mid, floor, depth + 1, out);
    split_panel(g, k, mid, b, floor, depth + 1, out);
}

fn imq_series_radius(beta: f64) -> f64 {
    2f64.max(2.0 * (beta + 1.0).sqrt())
}

/// `int_r^inf s^k (1+s^2)^{-beta} ds` via the binomial expansion of
/// `(1 + s^{-2})^{-beta}`; converges geometrically for `r^2 >= 4(beta+1)`.
fn imq_tail(beta: f64, k: u32, r: f64) -> f64 {
    let r = r.max(imq_series_radius(beta));
    let mut coef = 1.0;
    let mut sum = 0.0;
    for j in 0..1000 {
        let p = 2.0 * beta + 2.0 * j as f64 - k as f64 - 1.0;
        let term = coef * r.powf(-p) / p;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
        coef *= -(beta + j as f64) / (j as f64 + 1.0);
    }
    sum
}

/// `M_k` of the IMQ generator as a Beta integral; only used to size the
/// truncation radius.
fn imq_moment_closed_form(beta: f64, k: u32) -> f64 {
    let a = 0.5 * (k as f64 + 1.0);
    0.5 * gamma(a) * gamma(beta - a) / gamma(beta)
}

/// `|S^{d-1}| = 2 pi^{d/2} / Gamma(d/2)`.
pub fn unit_sphere_area(dim: usize) -> f64 {
    let h = 0.5 * dim as f64;
    2.0 * PI.powf(h) / gamma(h)
}

/// Normalizing constant of `R_d(m, c, rho)`: `c^d |S^{d-1}| M_{d-1}`.
pub fn normalizer(g: &Generator, dim: usize, scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::domain(format!("scale must be positive, got {scale}")));
    }
    check_dim(dim)?;
    Ok(scale.powi(dim as i32) * unit_sphere_area(dim) * g.moment(dim as u32 - 1)?)
}

/// `M_{d+1} / M_{d-1}`; the covariance of `R_d(m, c, rho)` is
/// `(c^2 / d) * variance_factor * I`.
pub fn variance_factor(g: &Generator, dim: usize) -> Result<f64> {
    check_dim(dim)?;
    Ok(g.moment(dim as u32 + 1)? / g.moment(dim as u32 - 1)?)
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    Ok(())
}

/// Moments and the unit-scale radial CDF of `(generator, dim)`.
///
/// The radial law of `R_d(0, 1, rho)` has density
/// `p(r) = r^{d-1} rho(r) / M_{d-1}`; its CDF is stored at panel knots and
/// refined inside a panel by quadrature.
#[derive(Debug)]
pub struct MomentCache {
    generator: Generator,
    dim: usize,
    m_lo: f64,
    m_hi: f64,
    truncation_radius: f64,
    knots: Vec<f64>,
    cum: Vec<f64>,
    surv: Vec<f64>,
}

type CacheKey = (usize, bool, u8, u64);

static SHARED: Lazy<Mutex<HashMap<CacheKey, Arc<MomentCache>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

impl MomentCache {
    /// Requires finite `M_{d-1}` and `M_{d+1}`; IMQ therefore needs
    /// `beta > d/2 + 1`.
    pub fn new(generator: Generator, dim: usize) -> Result<Self> {
        Self::build(generator, dim, true)
    }

    /// Only requires a finite normalizer (IMQ `beta > d/2`). Operations that
    /// need second moments fail with a divergence error.
    pub fn heavy_tailed(generator: Generator, dim: usize) -> Result<Self> {
        Self::build(generator, dim, false)
    }

    /// Process-wide cached instance; tabulated generators are never cached.
    pub fn shared(generator: &Generator, dim: usize, second_moment: bool) -> Result<Arc<Self>> {
        let key = match generator {
            Generator::Imq { beta } => Some((dim, second_moment, 0, beta.to_bits())),
            Generator::Compact { beta } => Some((dim, second_moment, 1, beta.to_bits())),
            Generator::Gauss => Some((dim, second_moment, 2, 0)),
            Generator::Tabulated(_) => None,
        };
        let Some(key) = key else {
            return Ok(Arc::new(Self::build(generator.clone(), dim, second_moment)?));
        };
        if let Some(hit) = SHARED.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let built = Arc::new(Self::build(generator.clone(), dim, second_moment)?);
        SHARED.lock().unwrap().insert(key, built.clone());
        Ok(built)
    }

    fn build(generator: Generator, dim: usize, second_moment: bool) -> Result<Self> {
        check_dim(dim)?;
        let lo_k = dim as u32 - 1;
        let hi_k = dim as u32 + 1;
        let m_lo = generator.moment(lo_k)?;
        if !(m_lo > 0.0 && m_lo.is_finite()) {
            return Err(Error::domain(format!(
                "{} has no positive finite normalizer in dimension {dim}",
                generator.name()
            )));
        }
        let m_hi = if second_moment {
            generator.moment(hi_k)?
        } else {
            match generator.check_moment(hi_k) {
                Ok(()) => generator.moment(hi_k)?,
                Err(_) => f64::INFINITY,
            }
        };
        let truncation_radius = if m_hi.is_finite() {
            generator.truncation_radius(hi_k, m_hi, TAIL_TOLERANCE)
        } else {
            generator.truncation_radius(lo_k, m_lo, TAIL_TOLERANCE)
        };
        let knots =
            refine_knots(&generator, lo_k, &generator.knots(truncation_radius), 1e-16 * m_lo);
        let pieces: Vec<f64> =
            knots.windows(2).map(|w| generator.panel_integral(lo_k, w[0], w[1])).collect();
        let tail = generator.tail(lo_k, truncation_radius);
        // Bounded support: the knots already carry all the mass.
        let total = match generator.support_end() {
            Some(_) => pieces.iter().sum::<f64>(),
            None => m_lo,
        };
        let mut cum = vec![0.0];
        let mut acc = 0.0;
        for p in &pieces {
            acc += p;
            cum.push(acc / total);
        }
        let mut surv = vec![tail / total];
        let mut acc = tail;
        for p in pieces.iter().rev() {
            acc += p;
            surv.push(acc / total);
        }
        surv.reverse();
        surv[0] = 1.0;
        Ok(MomentCache { generator, dim, m_lo, m_hi, truncation_radius, knots, cum, surv })
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `M_{d-1}`.
    pub fn m_lo(&self) -> f64 {
        self.m_lo
    }

    /// `M_{d+1}`, infinite for heavy-tailed caches.
    pub fn m_hi(&self) -> f64 {
        self.m_hi
    }

    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
    }

    pub fn has_second_moment(&self) -> bool {
        self.m_hi.is_finite()
    }

    pub fn variance_factor(&self) -> Result<f64> {
        if !self.m_hi.is_finite() {
            return Err(Error::Divergence(format!(
                "second moment of {} diverges in dimension {}",
                self.generator.name(),
                self.dim
            )));
        }
        Ok(self.m_hi / self.m_lo)
    }

    /// Normalizer of the unit-scale density, `|S^{d-1}| M_{d-1}`.
    pub fn unit_normalizer(&self) -> f64 {
        unit_sphere_area(self.dim) * self.m_lo
    }

    /// Radial density `r^{d-1} rho(r) / M_{d-1}` at unit scale.
    pub fn radial_density(&self, r: f64) -> f64 {
        if r < 0.0 {
            return 0.0;
        }
        r.powi(self.dim as i32 - 1) * self.generator.value(r) / self.m_lo
    }

    /// Radial mass between `a` and `b`, both inside one knot panel where a
    /// single Kronrod rule is accurate.
    fn partial(&self, a: f64, b: f64) -> f64 {
        let k = self.dim as i32 - 1;
        if let Generator::Tabulated(t) = &self.generator {
            return t.integral(k, a, b) / self.m_lo;
        }
        let f = |s: f64| s.powi(k) * self.generator.value(s);
        quadrature::gk15(&f, a, b).value / self.m_lo
    }

    /// Radial CDF at unit scale.
    pub fn radial_cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let last = *self.knots.last().unwrap();
        if r >= last {
            return match self.generator.support_end() {
                Some(_) => 1.0,
                None => 1.0 - self.generator.tail(self.dim as u32 - 1, r) / self.m_lo,
            };
        }
        let i = self.knots.partition_point(|&k| k <= r) - 1;
        (self.cum[i] + self.partial(self.knots[i], r)).min(1.0)
    }

    /// Survival function `1 - F(r)` at unit scale, computed from the right
    /// so it keeps relative precision in the tail.
    pub fn radial_sf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 1.0;
        }
        let last = *self.knots.last().unwrap();
        if r >= last {
            return match self.generator.support_end() {
                Some(_) => 0.0,
                None => self.generator.tail(self.dim as u32 - 1, r) / self.m_lo,
            };
        }
        let i = self.knots.partition_point(|&k| k <= r) - 1;
        (self.surv[i + 1] + self.partial(r, self.knots[i + 1])).min(1.0)
    }

    /// Inverse of [`radial_cdf`](Self::radial_cdf).
    pub fn radial_quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u > 0.5 {
            return self.radial_isf(1.0 - u);
        }
        let i = self.cum.partition_point(|&c| c <= u) - 1;
        let i = i.min(self.knots.len() - 2);
        let (a, b, base) = (self.knots[i], self.knots[i + 1], self.cum[i]);
        let frac = (u - base) / (self.cum[i + 1] - base);
        let x0 = a + frac.clamp(0.0, 1.0) * (b - a);
        self.solve(|x| base + self.partial(a, x) - u, a, b, x0, 1e-15)
    }

    /// Radius whose survival probability is `s`.
    pub fn radial_isf(&self, s: f64) -> f64 {
        if s >= 0.5 {
            return self.radial_quantile(1.0 - s);
        }
        let end = self.generator.support_end();
        if s <= 0.0 {
            return end.unwrap_or(f64::INFINITY);
        }
        let n = self.knots.len();
        if s > self.surv[n - 1] {
            // surv is nonincreasing; segment i has surv[i] >= s > surv[i + 1]
            let j = self.surv.partition_point(|&v| v >= s);
            let i = j.max(1) - 1;
            let b = self.knots[i + 1];
            let (a, base) = (self.knots[i], self.surv[i + 1]);
            let frac = (self.surv[i] - s) / (self.surv[i] - base);
            let x0 = a + frac.clamp(0.0, 1.0) * (b - a);
            return self.solve(|x| s - base - self.partial(x, b), a, b, x0, 1e-14 * s);
        }
        if let Some(end) = end {
            return end;
        }
        let lo = self.knots[n - 1];
        let mut hi = 2.0 * lo;
        let k = self.dim as u32 - 1;
        while self.generator.tail(k, hi) / self.m_lo > s {
            hi *= 2.0;
        }
        self.solve(|x| s - self.generator.tail(k, x) / self.m_lo, lo, hi, 0.5 * (lo + hi), 1e-14 * s)
    }

    /// Root of the increasing function `g` (slope = radial density) inside
    /// `[lo, hi]` by bisection-safeguarded Newton.
    fn solve<G: Fn(f64) -> f64>(&self, g: G, mut lo: f64, mut hi: f64, x0: f64, tol: f64) -> f64 {
        let mut x = if x0 > lo && x0 < hi { x0 } else { 0.5 * (lo + hi) };
        for _ in 0..300 {
            let f = g(x);
            if f.abs() <= tol {
                break;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let dens = self.radial_density(x);
            let newton = if dens > 0.0 { x - f / dens } else { f64::NAN };
            x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 1e-15 * hi.max(1e-300) {
                break;
            }
        }
        x
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Independent oracle: composite Simpson on a mapped interval.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn eval_examples() {
        let imq = Generator::imq(2.0).unwrap();
        assert_eq!(imq.eval(0.0).unwrap(), 1.0);
        assert_eq!(imq.eval(1.0).unwrap(), 0.25);
        assert_eq!(Generator::compact(2.0).unwrap().eval(1.5).unwrap(), 0.0);
        assert_eq!(Generator::compact(2.0).unwrap().eval(1.0).unwrap(), 0.0);
        assert!(matches!(imq.eval(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn imq_moments_match_beta_integral_and_brute_force() {
        let g = Generator::imq(2.0).unwrap();
        let m0 = g.moment(0).unwrap();
        assert_relative_eq!(m0, PI / 4.0, max_relative = 1e-10);
        // brute force with x = tan(theta)
        let oracle = simpson(|t: f64| t.cos().powi(2), 0.0, PI / 2.0, 2000);
        assert_relative_eq!(m0, oracle, max_relative = 1e-10);
        for (beta, k) in [(3.0, 2u32), (2.5, 3), (4.0, 1)] {
            let g = Generator::imq(beta).unwrap();
            assert_relative_eq!(
                g.moment(k).unwrap(),
                imq_moment_closed_form(beta, k),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn compact_and_gauss_moments() {
        let c = Generator::compact(1.0).unwrap();
        assert_relative_eq!(c.moment(0).unwrap(), 2.0 / 3.0, max_relative = 1e-12);
        let g = Generator::gauss();
        assert_relative_eq!(g.moment(0).unwrap(), (PI / 2.0).sqrt(), max_relative = 1e-10);
        let oracle = simpson(|r: f64| (-0.5 * r * r).exp(), 0.0, 40.0, 20000);
        assert_relative_eq!(g.moment(0).unwrap(), oracle, max_relative = 1e-10);
        // compact beta = 2: int_0^1 sqrt(1-x^2) dx = pi/4, singular slope at 1
        let c2 = Generator::compact(2.0).unwrap();
        assert_relative_eq!(c2.moment(0).unwrap(), PI / 4.0, max_relative = 1e-10);
    }

    #[test]
    fn divergent_moments_are_reported() {
        let g = Generator::imq(1.0).unwrap();
        match g.moment(1) {
            Err(Error::Divergence(msg)) => assert!(msg.contains("beta=1")),
            other => panic!("expected divergence, got {other:?}"),
        }
        assert!(MomentCache::new(Generator::imq(2.0).unwrap(), 2).is_err());
        assert!(MomentCache::heavy_tailed(Generator::imq(2.0).unwrap(), 2).is_ok());
    }

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(unit_sphere_area(1), 2.0, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_area(2), 2.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_area(3), 4.0 * PI, max_relative = 1e-14);
    }

    #[test]
    fn normalizer_examples_and_scaling() {
        let imq = Generator::imq(2.0).unwrap();
        assert_relative_eq!(normalizer(&imq, 1, 1.0).unwrap(), PI / 2.0, max_relative = 1e-10);
        let c = Generator::compact(1.0).unwrap();
        assert_relative_eq!(normalizer(&c, 1, 1.0).unwrap(), 4.0 / 3.0, max_relative = 1e-12);
        for g in [imq.clone(), c, Generator::gauss()] {
            for d in 1..=3 {
                let unit = normalizer(&g, d, 1.0).unwrap();
                for c in [0.01, 0.3, 2.0, 17.0] {
                    assert_relative_eq!(
                        normalizer(&g, d, c).unwrap(),
                        c.powi(d as i32) * unit,
                        max_relative = 1e-12
                    );
                }
            }
        }
        assert!(normalizer(&imq, 1, 0.0).is_err());
    }

    #[test]
    fn variance_factor_examples() {
        assert_relative_eq!(
            variance_factor(&Generator::imq(2.0).unwrap(), 1).unwrap(),
            1.0,
            max_relative = 1e-10
        );
        assert_relative_eq!(variance_factor(&Generator::gauss(), 1).unwrap(), 1.0, max_relative = 1e-10);
        assert_relative_eq!(
            variance_factor(&Generator::compact(1.0).unwrap(), 1).unwrap(),
            0.2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn tabulated_imq_moments_track_analytic() {
        // Fine log-spaced sampling of IMQ(beta=4) out to r = 2000.
        let beta = 4.0;
        let mut radii = vec![0.0];
        let mut r: f64 = 1e-4;
        while r < 2000.0 {
            radii.push(r);
            r *= 1.0005;
        }
        let values: Vec<f64> = radii.iter().map(|r| (1.0 + r * r).powf(-beta)).collect();
        let t = Generator::tabulated(radii, values).unwrap();
        for k in [0u32, 1, 2] {
            assert_relative_eq!(
                t.moment(k).unwrap(),
                imq_moment_closed_form(beta, k),
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn tabulated_validation() {
        assert!(Generator::tabulated(vec![0.1, 1.0], vec![1.0, 0.0]).is_err());
        assert!(Generator::tabulated(vec![0.0, 1.0, 1.0], vec![1.0, 0.5, 0.0]).is_err());
        assert!(Generator::tabulated(vec![0.0, 1.0], vec![1.0, -0.5]).is_err());
        let t = Generator::tabulated(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.0]).unwrap();
        assert_eq!(t.value(0.5), 0.75);
        assert_eq!(t.value(3.0), 0.0);
    }

    #[test]
    fn tabulated_reproduces_power_laws_between_nodes() {
        let radii = vec![0.0, 1.0, 2.0, 10.0, 100.0];
        let values: Vec<f64> = radii.iter().map(|&r: &f64| if r == 0.0 { 1.0 } else { r.powf(-6.0) }).collect();
        let g = Generator::tabulated(radii, values).unwrap();
        for x in [1.5, 3.0, 7.0, 42.0] {
            assert!((g.value(x) / x.powf(-6.0) - 1.0).abs() < 1e-12, "x={x}");
        }
        // Linear on the segment starting at zero.
        assert_eq!(g.value(0.5), 1.0);
        assert_eq!(g.value(100.5), 0.0);
    }

    #[test]
    fn json_encoding() {
        let g: Generator = serde_json::from_str(r#"{"kind":"imq","beta":3.0}"#).unwrap();
        assert_eq!(g, Generator::Imq { beta: 3.0 });
        assert_eq!(serde_json::to_string(&g).unwrap(), r#"{"kind":"imq","beta":3.0}"#);
        let g: Generator = serde_json::from_str(r#"{"kind":"gauss"}"#).unwrap();
        assert_eq!(g, Generator::Gauss);
        let g: Generator =
            serde_json::from_str(r#"{"kind":"tabulated","radii":[0,1],"values":[1,0]}"#).unwrap();
        assert!(matches!(g, Generator::Tabulated(_)));
        assert!(serde_json::from_str::<Generator>(r#"{"kind":"compact","beta":-1}"#).is_err());
    }

    #[test]
    fn radial_cdf_and_quantile_invert() {
        for (g, d) in [
            (Generator::imq(2.5).unwrap(), 2),
            (Generator::compact(2.0).unwrap(), 2),
            (Generator::gauss(), 3),
            (Generator::imq(2.0).unwrap(), 1),
        ] {
            let mc = MomentCache::new(g, d).unwrap();
            for u in [1e-9, 0.01, 0.3, 0.5, 0.9, 0.999, 1.0 - 1e-9] {
                let r = mc.radial_quantile(u);
                assert!((mc.radial_cdf(r) - u).abs() < 1e-12, "u={u} r={r}");
            }
        }
    }

    #[test]
    fn truncation_keeps_second_moment_tail_small() {
        for (g, d) in [(Generator::imq(2.5).unwrap(), 2), (Generator::gauss(), 3)] {
            let mc = MomentCache::new(g.clone(), d).unwrap();
            let tail = g.tail(d as u32 + 1, mc.truncation_radius());
            assert!(tail <= 1.0001e-12 * mc.m_hi(), "{tail}");
        }
    }
}
