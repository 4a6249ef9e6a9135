//! Finite mixtures of radial components.

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::Generator;
use crate::radial::{dist, RadialDistribution};

/// Two components closer than this in center and scale, with equal
/// generators, are treated as the same component.
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

/// Allowed deviation of the weight sum from one.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// `sum_k pi_k R_d(m_k, c_k, rho_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureFile", into = "MixtureFile")]
pub struct RadialMixture {
    weights: Vec<f64>,
    components: Vec<RadialDistribution>,
}

/// A problem reported by [`RadialMixture::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    LengthMismatch { weights: usize, components: usize },
    NegativeWeight { index: usize, weight: f64 },
    WeightSum { sum: f64 },
    NonpositiveScale { index: usize, scale: f64 },
    DimensionMismatch { index: usize, dim: usize, expected: usize },
    Duplicate { first: usize, second: usize },
    Inadmissible { index: usize, generator: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "mixture has no components"),
            Violation::LengthMismatch { weights, components } => {
                write!(f, "{weights} weights for {components} components")
            }
            Violation::NegativeWeight { index, weight } => {
                write!(f, "component {index} has negative weight {weight}")
            }
            Violation::WeightSum { sum } => write!(f, "weights sum to {sum}, not 1"),
            Violation::NonpositiveScale { index, scale } => {
                write!(f, "component {index} has nonpositive scale {scale}")
            }
            Violation::DimensionMismatch { index, dim, expected } => {
                write!(f, "component {index} has dimension {dim}, expected {expected}")
            }
            Violation::Duplicate { first, second } => {
                write!(f, "components {first} and {second} are identical")
            }
            Violation::Inadmissible { index, generator } => write!(
                f,
                "component {index}: {generator} has no finite second moment in this dimension"
            ),
        }
    }
}

fn violations_error(v: &[Violation]) -> Error {
    let msgs: Vec<String> = v.iter().map(|v| v.to_string()).collect();
    Error::Invalid(msgs.join("; "))
}

impl RadialMixture {
    /// Validates the parts, renormalizes weights that are within 1e-9 of
    /// the simplex, and merges duplicate components.
    pub fn new(weights: Vec<f64>, components: Vec<RadialDistribution>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        // Sums within a few ulps of one are left alone so that rebuilding a
        // mixture from its own weights reproduces them bit for bit.
        let drift = (sum - 1.0).abs();
        let weights = if drift <= 1e-9 && drift > 4.0 * f64::EPSILON * weights.len() as f64 {
            weights.into_iter().map(|w| w / sum).collect()
        } else {
            weights
        };
        let raw = RadialMixture { weights, components };
        let problems: Vec<Violation> = raw
            .validate()
            .into_iter()
            .filter(|v| !matches!(v, Violation::Duplicate { .. }))
            .collect();
        if !problems.is_empty() {
            return Err(violations_error(&problems));
        }
        Ok(raw.merged())
    }

    /// Builds a mixture without any checks; useful for diagnostics through
    /// [`validate`](Self::validate).
    pub fn unchecked(weights: Vec<f64>, components: Vec<RadialDistribution>) -> Self {
        RadialMixture { weights, components }
    }

    /// A single component with weight one.
    pub fn single(component: RadialDistribution) -> Self {
        RadialMixture { weights: vec![1.0], components: vec![component] }
    }

    /// Lists every violated invariant; empty when the mixture is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.components.is_empty() {
            out.push(Violation::Empty);
            return out;
        }
        if self.weights.len() != self.components.len() {
            out.push(Violation::LengthMismatch {
                weights: self.weights.len(),
                components: self.components.len(),
            });
        }
        for (index, &weight) in self.weights.iter().enumerate() {
            if !(weight >= 0.0) {
                out.push(Violation::NegativeWeight { index, weight });
            }
        }
        let sum: f64 = self.weights.iter().sum();
        if !((sum - 1.0).abs() <= SIMPLEX_TOLERANCE) {
            out.push(Violation::WeightSum { sum });
        }
        let expected = self.components[0].dim();
        for (index, c) in self.components.iter().enumerate() {
            if !(c.scale() > 0.0) {
                out.push(Violation::NonpositiveScale { index, scale: c.scale() });
            }
            if c.dim() != expected {
                out.push(Violation::DimensionMismatch { index, dim: c.dim(), expected });
            }
            if !c.moments().has_second_moment() {
                out.push(Violation::Inadmissible { index, generator: c.generator().name() });
            }
        }
        for i in 0..self.components.len() {
            for j in i + 1..self.components.len() {
                if self.components[i].same_component(&self.components[j], DUPLICATE_TOLERANCE) {
                    out.push(Violation::Duplicate { first: i, second: j });
                }
            }
        }
        out
    }

    /// Sums the weights of identical components, keeping the first copy.
    pub fn merged(&self) -> Self {
        let mut weights: Vec<f64> = Vec::with_capacity(self.weights.len());
        let mut components: Vec<RadialDistribution> = Vec::with_capacity(self.components.len());
        for (w, c) in self.weights.iter().zip(&self.components) {
            match components.iter().position(|k| k.same_component(c, DUPLICATE_TOLERANCE)) {
                Some(i) => weights[i] += w,
                None => {
                    weights.push(*w);
                    components.push(c.clone());
                }
            }
        }
        RadialMixture { weights, components }
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Free parameters: a weight, a center and a scale per component,
    /// `(d + 2) n`.
    pub fn parameter_count(&self) -> usize {
        self.len() * (self.dim() + 2)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[RadialDistribution] {
        &self.components
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &RadialDistribution)> {
        self.weights.iter().copied().zip(&self.components)
    }

    /// The generator shared by every component, if there is one.
    pub fn shared_generator(&self) -> Option<&Generator> {
        let g = self.components[0].generator();
        self.components.iter().all(|c| c.generator() == g).then_some(g)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (w, c) in self.iter() {
            for (mi, ci) in m.iter_mut().zip(c.center()) {
                *mi += w * ci;
            }
        }
        m
    }

    /// `sum_k pi_k f_k(x)` with normalized component densities.
    pub fn density(&self, x: &[f64]) -> f64 {
        self.iter().map(|(w, c)| if w > 0.0 { w * c.density(x) } else { 0.0 }).sum()
    }

    /// `log sum_k pi_k f_k(x)`, stable for points far from every center.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .iter()
            .map(|(w, c)| if w > 0.0 { w.ln() + c.log_density(x) } else { f64::NEG_INFINITY })
            .collect();
        log_sum_exp(&terms)
    }

    /// Index of the component minimizing `|x - m_k| / c_k`.
    pub fn nearest_component(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (k, c) in self.components.iter().enumerate() {
            let score = dist(x, c.center()) / c.scale();
            if score < best.1 {
                best = (k, score);
            }
        }
        best.0
    }

    /// Draws a component index from `pi`, then a point from that component.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        self.sample_labeled(n, seed).into_iter().map(|(_, x)| x).collect()
    }

    pub fn sample_labeled(&self, n: usize, seed: u64) -> Vec<(usize, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<(usize, Vec<f64>)> {
        if self.len() == 1 {
            return (0..n).map(|_| (0, self.components[0].sample_one(rng))).collect();
        }
        let pick = WeightedIndex::new(&self.weights).expect("validated weights");
        (0..n)
            .map(|_| {
                let k = pick.sample(rng);
                (k, self.components[k].sample_one(rng))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mixtures always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[derive(Serialize, Deserialize)]
struct MixtureFile {
    dim: usize,
    generator_default: Generator,
    components: Vec<ComponentEntry>,
}

#[derive(Serialize, Deserialize)]
struct ComponentEntry {
    weight: f64,
    center: Vec<f64>,
    scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<Generator>,
}

impl TryFrom<MixtureFile> for RadialMixture {
    type Error = Error;
    fn try_from(file: MixtureFile) -> Result<Self> {
        let mut weights = Vec::with_capacity(file.components.len());
        let mut components = Vec::with_capacity(file.components.len());
        for (i, entry) in file.components.into_iter().enumerate() {
            if entry.center.len() != file.dim {
                return Err(Error::Invalid(format!(
                    "component {i} has dimension {}, expected {}",
                    entry.center.len(),
                    file.dim
                )));
            }
            let g = entry.generator.unwrap_or_else(|| file.generator_default.clone());
            let c = RadialDistribution::new(entry.center, entry.scale, g)
                .map_err(|e| Error::Invalid(format!("component {i}: {e}")))?;
            weights.push(entry.weight);
            components.push(c);
        }
        RadialMixture::new(weights, components)
    }
}

impl From<RadialMixture> for MixtureFile {
    fn from(m: RadialMixture) -> Self {
        let default = m.components[0].generator().clone();
        let components = m
            .weights
            .iter()
            .zip(&m.components)
            .map(|(w, c)| ComponentEntry {
                weight: *w,
                center: c.center().to_vec(),
                scale: c.scale(),
                generator: (c.generator() != &default).then(|| c.generator().clone()),
            })
            .collect();
        MixtureFile { dim: m.dim(), generator_default: default, components }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature;
    use approx::assert_relative_eq;

    fn imq(beta: f64) -> Generator {
        Generator::imq(beta).unwrap()
    }

    fn comp(m: &[f64], c: f64, g: &Generator) -> RadialDistribution {
        RadialDistribution::new(m.to_vec(), c, g.clone()).unwrap()
    }

    #[test]
    fn single_component_density() {
        let c = comp(&[0.5, -1.0], 0.7, &imq(3.0));
        let mix = RadialMixture::single(c.clone());
        for x in [[0.0, 0.0], [0.5, -1.0], [3.0, 2.0]] {
            assert_eq!(mix.density(&x), c.density(&x));
            assert_relative_eq!(mix.log_density(&x), c.log_density(&x), max_relative = 1e-14);
        }
    }

    #[test]
    fn duplicates_are_merged() {
        let g = imq(3.0);
        let c = comp(&[1.0], 2.0, &g);
        let mix = RadialMixture::new(vec![0.3, 0.7], vec![c.clone(), c.clone()]).unwrap();
        assert_eq!(mix.len(), 1);
        assert_eq!(mix.weights(), &[1.0]);
        let raw = RadialMixture::unchecked(vec![0.3, 0.7], vec![c.clone(), c.clone()]);
        for x in [-1.0, 0.0, 1.5, 4.0] {
            assert_relative_eq!(mix.density(&[x]), raw.density(&[x]), max_relative = 1e-14);
        }
        assert_eq!(raw.validate(), vec![Violation::Duplicate { first: 0, second: 1 }]);
    }

    #[test]
    fn one_dimensional_density_integrates_to_one() {
        let g = Generator::compact(2.0).unwrap();
        let mix = RadialMixture::new(
            vec![0.2, 0.5, 0.3],
            vec![comp(&[-1.0], 0.5, &g), comp(&[0.3], 1.2, &g), comp(&[2.0], 0.8, &g)],
        )
        .unwrap();
        let mut points: Vec<f64> = Vec::new();
        for c in mix.components() {
            points.extend([c.center()[0] - c.scale(), c.center()[0], c.center()[0] + c.scale()]);
        }
        points.sort_by(f64::total_cmp);
        let total =
            quadrature::integrate_breakpoints(|x| mix.density(&[x]), &points, 1e-13, 1e-12).value;
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn validation_reports() {
        let g = imq(3.0);
        let a = comp(&[0.0], 1.0, &g);
        let b = comp(&[1.0], 1.0, &g);
        let ok = RadialMixture::unchecked(vec![0.5, 0.5], vec![a.clone(), b.clone()]);
        assert!(ok.validate().is_empty());
        let bad = RadialMixture::unchecked(vec![0.6, 0.6], vec![a.clone(), b.clone()]);
        assert!(matches!(bad.validate()[..], [Violation::WeightSum { .. }]));
        assert!(RadialMixture::new(vec![0.6, 0.6], vec![a.clone(), b]).is_err());
        let heavy = RadialDistribution::heavy_tailed(vec![0.0], 1.0, imq(1.2)).unwrap();
        let inad = RadialMixture::unchecked(vec![1.0], vec![heavy]);
        assert!(matches!(inad.validate()[..], [Violation::Inadmissible { index: 0, .. }]));
    }

    #[test]
    fn sampling_frequencies_and_reproducibility() {
        let g = imq(3.0);
        let mix = RadialMixture::new(
            vec![0.5, 0.5],
            vec![comp(&[-3.0, 0.0], 1.0, &g), comp(&[3.0, 0.0], 1.0, &g)],
        )
        .unwrap();
        let s = mix.sample_labeled(10_000, 42);
        let first = s.iter().filter(|(k, _)| *k == 0).count();
        // 4 binomial standard errors: 4 * sqrt(10^4 / 4) = 200
        assert!((4800..=5200).contains(&first), "{first}");
        assert_eq!(mix.sample(50, 9), mix.sample(50, 9));
    }

    #[test]
    fn single_component_sampling_matches_component() {
        let c = comp(&[1.0, 1.0], 0.3, &imq(2.5));
        let mix = RadialMixture::single(c.clone());
        assert_eq!(mix.sample(20, 5), c.sample(20, 5));
    }

    #[test]
    fn monte_carlo_mean() {
        let g = imq(3.0);
        let mix = RadialMixture::new(
            vec![0.25, 0.75],
            vec![comp(&[-2.0], 0.5, &g), comp(&[1.0], 1.0, &g)],
        )
        .unwrap();
        let n = 100_000;
        let xs: Vec<f64> = mix.sample(n, 1).into_iter().map(|p| p[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - mix.mean()[0]).abs() <= 4.0 * se);
    }

    #[test]
    fn json_round_trip() {
        let g = imq(3.0);
        let other = Generator::compact(2.0).unwrap();
        let mix = RadialMixture::new(
            vec![0.1, 0.9],
            vec![comp(&[0.1, 0.2, 0.3], 0.05, &g), comp(&[0.7, 0.2, 0.1], 0.1, &other)],
        )
        .unwrap();
        let text = mix.to_json();
        let back = RadialMixture::from_json(&text).unwrap();
        assert_eq!(back, mix);
        assert_eq!(back.to_json(), text);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["dim"], 3);
        assert_eq!(v["generator_default"]["kind"], "imq");
        assert!(v["components"][0].get("generator").is_none());
        assert_eq!(v["components"][1]["generator"]["kind"], "compact");
    }

    #[test]
    fn json_rejects_bad_components() {
        let text = r#"{"dim":1,"generator_default":{"kind":"gauss"},
            "components":[{"weight":1.0,"center":[0.0],"scale":-1.0}]}"#;
        assert!(RadialMixture::from_json(text).is_err());
        let text = r#"{"dim":2,"generator_default":{"kind":"gauss"},
            "components":[{"weight":1.0,"center":[0.0],"scale":1.0}]}"#;
        assert!(RadialMixture::from_json(text).is_err());
    }
}
