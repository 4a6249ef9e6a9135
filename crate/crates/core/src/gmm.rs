//! Gaussian mixtures: Bures distance, affine Monge maps, the GW2 distance
//! over component couplings, and EM fitting.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand::{Rng, distr::Distribution, distr::weighted::WeightedIndex};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrete_ot::{self, TransportPlan};
use crate::error::{Error, Result};
use crate::estimation;
use crate::mixture::log_sum_exp;

/// Eigenvalue floor for covariances and their square roots.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Relative diagonal loading added to fitted covariances.
pub const COVARIANCE_REGULARIZATION: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Symmetric square root and inverse square root with clamped eigenvalues.
fn sqrt_pair(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let v = &eig.eigenvectors;
    let s = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR).sqrt());
    let root = v * DMatrix::from_diagonal(&s) * v.transpose();
    let inv = v * DMatrix::from_diagonal(&s.map(|x| 1.0 / x)) * v.transpose();
    (root, inv)
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let v = &eig.eigenvectors;
    let s = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    v * DMatrix::from_diagonal(&s) * v.transpose()
}

/// One Gaussian `N(mean, cov)` with cached factorizations.
#[derive(Debug, Clone)]
pub struct GaussianComponent {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    cov_sqrt: DMatrix<f64>,
    cov_inv_sqrt: DMatrix<f64>,
    log_det: f64,
}

impl PartialEq for GaussianComponent {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl GaussianComponent {
    /// Fails unless `cov` is symmetric (to 1e-12 relative) and positive
    /// definite; eigenvalues below [`EIGEN_FLOOR`] are raised to it.
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::domain(format!("covariance must be {d}x{d}")));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("Gaussian parameters must be finite"));
        }
        let scale = cov.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        let asym = (&cov - cov.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::domain(format!("covariance is not symmetric (asymmetry {asym:e})")));
        }
        let sym = (&cov + cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::domain("covariance is not positive definite"));
        }
        let lambda = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR));
        let v = &eig.eigenvectors;
        let cov = v * DMatrix::from_diagonal(&lambda) * v.transpose();
        let root = lambda.map(f64::sqrt);
        Ok(GaussianComponent {
            mean: DVector::from_vec(mean),
            cov_sqrt: v * DMatrix::from_diagonal(&root) * v.transpose(),
            cov_inv_sqrt: v * DMatrix::from_diagonal(&root.map(|x| 1.0 / x)) * v.transpose(),
            log_det: lambda.iter().map(|l| l.ln()).sum(),
            cov,
        })
    }

    /// `N(mean, sigma^2 I)`.
    pub fn isotropic(mean: Vec<f64>, sigma: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, DMatrix::identity(d, d) * (sigma * sigma))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(x) - &self.mean;
        let z = &self.cov_inv_sqrt * diff;
        -0.5 * (self.dim() as f64 * LN_2PI + self.log_det + z.norm_squared())
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.mean + &self.cov_sqrt * z).as_slice().to_vec()
    }
}

/// Squared Bures-Wasserstein distance.
pub fn gaussian_w2_squared(a: &GaussianComponent, b: &GaussianComponent) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::domain("dimension mismatch"));
    }
    let shift = (&a.mean - &b.mean).norm_squared();
    let cross = sqrt_psd(&(&a.cov_sqrt * &b.cov * &a.cov_sqrt));
    let bures = a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    Ok(shift + bures.max(0.0))
}

pub fn gaussian_w2(a: &GaussianComponent, b: &GaussianComponent) -> Result<f64> {
    Ok(gaussian_w2_squared(a, b)?.sqrt())
}

/// Affine Monge map `x -> m1 + A (x - m0)` between two Gaussians.
#[derive(Debug, Clone)]
pub struct GaussianMap {
    from: DVector<f64>,
    to: DVector<f64>,
    linear: DMatrix<f64>,
}

impl GaussianMap {
    pub fn new(a: &GaussianComponent, b: &GaussianComponent) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::domain("dimension mismatch"));
        }
        let linear = if a.cov == b.cov {
            DMatrix::identity(a.dim(), a.dim())
        } else {
            let mid = sqrt_pair(&(&a.cov_sqrt * &b.cov * &a.cov_sqrt)).0;
            &a.cov_inv_sqrt * mid * &a.cov_inv_sqrt
        };
        Ok(GaussianMap { from: a.mean.clone(), to: b.mean.clone(), linear })
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let y = &self.to + &self.linear * (DVector::from_column_slice(x) - &self.from);
        y.as_slice().to_vec()
    }
}

pub fn gaussian_monge(a: &GaussianComponent, b: &GaussianComponent, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != a.dim() {
        return Err(Error::domain("point dimension does not match the distribution"));
    }
    Ok(GaussianMap::new(a, b)?.apply(x))
}

/// Finite Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GmmFile", into = "GmmFile")]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    /// Checks the weights (renormalizing within 1e-9 of the simplex) and
    /// dimensions, then merges identical components.
    pub fn new(weights: Vec<f64>, components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() || weights.len() != components.len() {
            return Err(Error::Invalid("need one weight per component".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Invalid("weights must be nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("weights sum to {sum}, not 1")));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(Error::Invalid("components have different dimensions".into()));
        }
        let mut w: Vec<f64> = Vec::new();
        let mut comps: Vec<GaussianComponent> = Vec::new();
        for (wi, c) in weights.into_iter().zip(components) {
            let dup = comps.iter().position(|k| {
                (&k.mean - &c.mean).amax() <= 1e-12 && (&k.cov - &c.cov).amax() <= 1e-12
            });
            match dup {
                Some(i) => w[i] += wi / sum,
                None => {
                    w.push(wi / sum);
                    comps.push(c);
                }
            }
        }
        Ok(GaussianMixture { weights: w, components: comps })
    }

    pub fn single(c: GaussianComponent) -> Self {
        GaussianMixture { weights: vec![1.0], components: vec![c] }
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

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// Fitted scalars: weight, mean and the upper triangle of the
    /// covariance per component, `(1 + 1.5 d + 0.5 d^2) n` in total.
    pub fn parameter_count(&self) -> usize {
        let d = self.dim();
        self.len() * (2 + 3 * d + d * d) / 2
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| if *w > 0.0 { w.ln() + c.log_density(x) } else { f64::NEG_INFINITY })
            .collect();
        log_sum_exp(&terms)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pick = WeightedIndex::new(&self.weights).expect("validated weights");
        (0..n).map(|_| self.components[pick.sample(&mut rng)].sample_one(&mut rng)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mixtures always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GmmFile {
    dim: usize,
    components: Vec<GmmEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GmmEntry {
    weight: f64,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl TryFrom<GmmFile> for GaussianMixture {
    type Error = Error;

    fn try_from(f: GmmFile) -> Result<Self> {
        let mut weights = Vec::new();
        let mut comps = Vec::new();
        for e in f.components {
            if e.mean.len() != f.dim || e.cov.len() != f.dim || e.cov.iter().any(|r| r.len() != f.dim) {
                return Err(Error::Invalid(format!("component shapes must match dim {}", f.dim)));
            }
            let cov = DMatrix::from_fn(f.dim, f.dim, |i, j| e.cov[i][j]);
            weights.push(e.weight);
            comps.push(GaussianComponent::new(e.mean, cov)?);
        }
        GaussianMixture::new(weights, comps)
    }
}

impl From<GaussianMixture> for GmmFile {
    fn from(m: GaussianMixture) -> Self {
        let dim = m.dim();
        GmmFile {
            dim,
            components: m
                .weights
                .iter()
                .zip(&m.components)
                .map(|(&weight, c)| GmmEntry {
                    weight,
                    mean: c.mean.as_slice().to_vec(),
                    cov: (0..dim).map(|i| (0..dim).map(|j| c.cov[(i, j)]).collect()).collect(),
                })
                .collect(),
        }
    }
}

/// GW2 distance with its plan and component costs.
#[derive(Debug, Clone)]
pub struct Gw2Result {
    pub distance: f64,
    pub plan: TransportPlan,
    pub component_costs: Vec<Vec<f64>>,
}

fn precedes(a: &GaussianMixture, b: &GaussianMixture) -> bool {
    let key = |m: &GaussianMixture| -> Vec<f64> {
        let mut k = vec![m.len() as f64];
        for (w, c) in m.weights.iter().zip(&m.components) {
            k.push(*w);
            k.extend(c.mean.iter());
            k.extend(c.cov.iter());
        }
        k
    };
    let (ka, kb) = (key(a), key(b));
    for (x, y) in ka.iter().zip(&kb) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    ka.len() <= kb.len()
}

fn costs(mu0: &GaussianMixture, mu1: &GaussianMixture) -> Result<Vec<Vec<f64>>> {
    mu0.components
        .par_iter()
        .map(|a| mu1.components.iter().map(|b| gaussian_w2_squared(a, b)).collect())
        .collect()
}

/// Transportation LP over component weights with Bures costs.
pub fn gw2_distance(mu0: &GaussianMixture, mu1: &GaussianMixture) -> Result<Gw2Result> {
    if mu0.dim() != mu1.dim() {
        return Err(Error::domain("dimension mismatch"));
    }
    let (plan, component_costs) = if precedes(mu0, mu1) {
        let c = costs(mu0, mu1)?;
        (discrete_ot::solve_transport(&mu0.weights, &mu1.weights, &c)?, c)
    } else {
        let c = costs(mu1, mu0)?;
        let plan = discrete_ot::solve_transport(&mu1.weights, &mu0.weights, &c)?;
        let ct = (0..mu0.len()).map(|k| c.iter().map(|row| row[k]).collect()).collect();
        (plan.transpose(), ct)
    };
    Ok(Gw2Result { distance: plan.objective.max(0.0).sqrt(), plan, component_costs })
}

/// Plan-induced maps between two Gaussian mixtures.
#[derive(Debug, Clone)]
pub struct GaussianTransport {
    source: GaussianMixture,
    pairs: Vec<(usize, f64, GaussianMap)>,
}

impl GaussianTransport {
    pub fn new(mu0: &GaussianMixture, mu1: &GaussianMixture, plan: &TransportPlan) -> Result<Self> {
        if plan.rows() != mu0.len() || plan.cols() != mu1.len() {
            return Err(Error::domain("plan shape does not match the mixtures"));
        }
        let mut pairs = Vec::new();
        for (k, l, w) in plan.support() {
            pairs.push((k, w, GaussianMap::new(&mu0.components[k], &mu1.components[l])?));
        }
        Ok(GaussianTransport { source: mu0.clone(), pairs })
    }

    /// Conditional probabilities of the support pairs given `x`.
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let logf: Vec<f64> = self.source.components.iter().map(|c| c.log_density(x)).collect();
        let log_den = self.source.log_density(x);
        self.pairs.iter().map(|(k, w, _)| (w.ln() + logf[*k] - log_den).exp()).collect()
    }

    pub fn t_mean(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (p, (_, _, map)) in self.probabilities(x).iter().zip(&self.pairs) {
            if *p > 0.0 {
                for (o, y) in out.iter_mut().zip(map.apply(x)) {
                    *o += p * y;
                }
            }
        }
        out
    }

    pub fn t_rand_with<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let p = self.probabilities(x);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = 0;
        for (i, q) in p.iter().enumerate() {
            if *q > 0.0 {
                acc += q;
                chosen = i;
                if u < acc {
                    break;
                }
            }
        }
        self.pairs[chosen].2.apply(x)
    }

    pub fn map_mean(&self, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
        points.par_iter().map(|x| self.t_mean(x)).collect()
    }

    /// Point `i` draws from stream `i` of a generator seeded with `seed`.
    pub fn map_rand(&self, points: &[Vec<f64>], seed: u64) -> Vec<Vec<f64>> {
        points
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                self.t_rand_with(x, &mut rng)
            })
            .collect()
    }
}

/// `sum_kl p_kl(x) T_kl(x)` for Gaussian mixtures.
pub fn gmm_t_mean(
    mu0: &GaussianMixture,
    mu1: &GaussianMixture,
    plan: &TransportPlan,
    x: &[f64],
) -> Result<Vec<f64>> {
    Ok(GaussianTransport::new(mu0, mu1, plan)?.t_mean(x))
}

/// EM fit with its per-iteration log-likelihood (summed over the data).
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GaussianMixture,
    pub loglik: Vec<f64>,
}

/// Standard EM from a k-means++ start; stops when the relative
/// log-likelihood gain falls below `tol` or after `max_iter` iterations.
pub fn gmm_em(data: &[Vec<f64>], k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<GaussianMixture> {
    Ok(gmm_em_traced(data, k, seed, max_iter, tol)?.model)
}

pub fn gmm_em_traced(data: &[Vec<f64>], k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<GmmFit> {
    let n = data.len();
    if k == 0 || n < k {
        return Err(Error::domain(format!("need at least {k} points to fit {k} components, got {n}")));
    }
    let d = data[0].len();
    let km = estimation::kmeans(data, k, seed)?;
    let mut weights = vec![0.0; k];
    let mut resp = vec![vec![0.0; k]; n];
    for (i, &l) in km.labels.iter().enumerate() {
        resp[i][l] = 1.0;
        weights[l] += 1.0 / n as f64;
    }
    let mut comps = m_step(data, &resp, d)?;
    let mut loglik = Vec::new();
    for _ in 0..max_iter {
        let model = GaussianMixture { weights: weights.clone(), components: comps.clone() };
        let (r, ll) = e_step(&model, data);
        let improved = loglik.last().map(|prev: &f64| (ll - prev).abs() <= tol * ll.abs().max(1.0));
        loglik.push(ll);
        if improved == Some(true) {
            break;
        }
        resp = r;
        weights = (0..k).map(|j| resp.iter().map(|row| row[j]).sum::<f64>() / n as f64).collect();
        comps = m_step(data, &resp, d)?;
        reseed_empty(data, &mut weights, &mut comps, &model)?;
    }
    let total: f64 = weights.iter().sum();
    let weights = weights.into_iter().map(|w| w / total).collect();
    Ok(GmmFit { model: GaussianMixture::new(weights, comps)?, loglik })
}

fn e_step(model: &GaussianMixture, data: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let rows: Vec<(Vec<f64>, f64)> = data
        .par_iter()
        .map(|x| {
            let terms: Vec<f64> = model
                .weights
                .iter()
                .zip(&model.components)
                .map(|(w, c)| if *w > 0.0 { w.ln() + c.log_density(x) } else { f64::NEG_INFINITY })
                .collect();
            let lse = log_sum_exp(&terms);
            (terms.iter().map(|t| (t - lse).exp()).collect(), lse)
        })
        .collect();
    let ll = rows.iter().map(|r| r.1).sum();
    (rows.into_iter().map(|r| r.0).collect(), ll)
}

fn m_step(data: &[Vec<f64>], resp: &[Vec<f64>], d: usize) -> Result<Vec<GaussianComponent>> {
    let k = resp[0].len();
    (0..k)
        .into_par_iter()
        .map(|j| {
            let nk: f64 = resp.iter().map(|r| r[j]).sum();
            if nk <= 1e-12 {
                // Placeholder; `reseed_empty` replaces it.
                return GaussianComponent::isotropic(data[0].clone(), 1.0);
            }
            let mut mean = vec![0.0; d];
            for (x, r) in data.iter().zip(resp) {
                for (m, xi) in mean.iter_mut().zip(x) {
                    *m += r[j] * xi;
                }
            }
            mean.iter_mut().for_each(|m| *m /= nk);
            let mut cov = DMatrix::zeros(d, d);
            for (x, r) in data.iter().zip(resp) {
                if r[j] == 0.0 {
                    continue;
                }
                for a in 0..d {
                    let da = x[a] - mean[a];
                    for b in 0..=a {
                        cov[(a, b)] += r[j] * da * (x[b] - mean[b]);
                    }
                }
            }
            for a in 0..d {
                for b in 0..a {
                    cov[(b, a)] = cov[(a, b)];
                }
            }
            cov /= nk;
            let load = (COVARIANCE_REGULARIZATION * cov.trace() / d as f64).max(EIGEN_FLOOR);
            for a in 0..d {
                cov[(a, a)] += load;
            }
            GaussianComponent::new(mean, cov)
        })
        .collect()
}

/// Moves components with no responsibility to the point farthest from
/// every current mean.
fn reseed_empty(
    data: &[Vec<f64>],
    weights: &mut [f64],
    comps: &mut [GaussianComponent],
    previous: &GaussianMixture,
) -> Result<()> {
    let n = data.len() as f64;
    for j in 0..weights.len() {
        if weights[j] * n > 1e-12 {
            continue;
        }
        let far = data
            .iter()
            .max_by(|a, b| {
                let da = comps.iter().map(|c| crate::radial::dist2(a, c.mean())).fold(f64::INFINITY, f64::min);
                let db = comps.iter().map(|c| crate::radial::dist2(b, c.mean())).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db)
            })
            .expect("nonempty data");
        comps[j] = GaussianComponent::new(far.clone(), previous.components[j].cov.clone())?;
        weights[j] = 1.0 / n;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::Generator;
    use crate::mixture::RadialMixture;
    use crate::radial::RadialDistribution;
    use approx::assert_relative_eq;

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(d, d) * 0.1
    }

    #[test]
    fn bures_examples() {
        let a = GaussianComponent::new(vec![1.0], DMatrix::from_element(1, 1, 4.0)).unwrap();
        let b = GaussianComponent::new(vec![-1.0], DMatrix::from_element(1, 1, 0.25)).unwrap();
        assert_relative_eq!(gaussian_w2_squared(&a, &b).unwrap(), 4.0 + 1.5 * 1.5, max_relative = 1e-12);
        assert_eq!(gaussian_w2_squared(&a, &a).unwrap(), 0.0);
        let c = GaussianComponent::isotropic(vec![0.0, 0.0, 0.0], 0.5).unwrap();
        let e = GaussianComponent::isotropic(vec![1.0, 0.0, 0.0], 2.0).unwrap();
        assert_relative_eq!(gaussian_w2_squared(&c, &e).unwrap(), 1.0 + 3.0 * 1.5 * 1.5, max_relative = 1e-12);
    }

    #[test]
    fn isotropic_gaussians_match_gaussian_generator() {
        let g = Generator::gauss();
        let r0 = RadialDistribution::new(vec![0.0, 1.0], 0.5, g.clone()).unwrap();
        let r1 = RadialDistribution::new(vec![2.0, 0.0], 1.5, g).unwrap();
        let g0 = GaussianComponent::isotropic(vec![0.0, 1.0], 0.5).unwrap();
        let g1 = GaussianComponent::isotropic(vec![2.0, 0.0], 1.5).unwrap();
        assert_relative_eq!(
            gaussian_w2_squared(&g0, &g1).unwrap(),
            crate::radial::pairwise_w2_squared(&r0, &r1).unwrap(),
            max_relative = 1e-10
        );
        assert_relative_eq!(g0.density(&[0.3, 0.2]), r0.density(&[0.3, 0.2]), max_relative = 1e-10);
    }

    #[test]
    fn monge_pushes_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 1..=4 {
            let a = GaussianComponent::new(vec![0.0; d], random_spd(&mut rng, d)).unwrap();
            let b = GaussianComponent::new(vec![1.0; d], random_spd(&mut rng, d)).unwrap();
            let map = GaussianMap::new(&a, &b).unwrap();
            let pushed = map.linear() * a.cov() * map.linear().transpose();
            assert!((pushed - b.cov()).amax() <= 1e-8);
            assert!((map.linear() - map.linear().transpose()).amax() <= 1e-10);
        }
    }

    #[test]
    fn monge_diagonal_and_identity() {
        let a = GaussianComponent::new(vec![0.0, 0.0], DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]))).unwrap();
        let b = GaussianComponent::new(vec![1.0, 1.0], DMatrix::from_diagonal(&DVector::from_vec(vec![9.0, 1.0]))).unwrap();
        let y = gaussian_monge(&a, &b, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(y[0], 1.0 + 3.0, max_relative = 1e-12);
        assert_relative_eq!(y[1], 1.0 + 0.5, max_relative = 1e-12);
        assert_eq!(gaussian_monge(&a, &a, &[0.3, 0.7]).unwrap(), vec![0.3, 0.7]);
    }

    #[test]
    fn rejects_non_spd() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianComponent::new(vec![0.0, 0.0], bad).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(GaussianComponent::new(vec![0.0, 0.0], asym).is_err());
    }

    #[test]
    fn gw2_matches_rw2_for_isotropic_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = Generator::gauss();
        let mut gm = Vec::new();
        let mut rm = Vec::new();
        for _ in 0..2 {
            let k = 3;
            let w: Vec<f64> = vec![0.2, 0.3, 0.5];
            let mut gc = Vec::new();
            let mut rc = Vec::new();
            for _ in 0..k {
                let m: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * 4.0).collect();
                let s = 0.2 + rng.random::<f64>();
                gc.push(GaussianComponent::isotropic(m.clone(), s).unwrap());
                rc.push(RadialDistribution::new(m, s, g.clone()).unwrap());
            }
            gm.push(GaussianMixture::new(w.clone(), gc).unwrap());
            rm.push(RadialMixture::new(w, rc).unwrap());
        }
        let gw = gw2_distance(&gm[0], &gm[1]).unwrap().distance;
        let rw = crate::rw2::rw2_distance(&rm[0], &rm[1]).unwrap().distance;
        assert!((gw - rw).abs() <= 1e-6);
    }

    #[test]
    fn gw2_permutation_and_single() {
        let a = GaussianComponent::isotropic(vec![0.0], 1.0).unwrap();
        let b = GaussianComponent::isotropic(vec![3.0], 0.5).unwrap();
        let m0 = GaussianMixture::new(vec![0.4, 0.6], vec![a.clone(), b.clone()]).unwrap();
        let m1 = GaussianMixture::new(vec![0.6, 0.4], vec![b.clone(), a.clone()]).unwrap();
        assert_eq!(gw2_distance(&m0, &m1).unwrap().distance, 0.0);
        let single = gw2_distance(&GaussianMixture::single(a.clone()), &GaussianMixture::single(b.clone())).unwrap();
        assert_relative_eq!(single.distance, gaussian_w2(&a, &b).unwrap(), max_relative = 1e-15);
    }

    #[test]
    fn t_mean_examples() {
        let a = GaussianComponent::isotropic(vec![0.0], 1.0).unwrap();
        let up = GaussianComponent::isotropic(vec![2.0], 1.0).unwrap();
        let down = GaussianComponent::isotropic(vec![-2.0], 1.0).unwrap();
        let m0 = GaussianMixture::single(a.clone());
        let m1 = GaussianMixture::new(vec![0.5, 0.5], vec![up, down]).unwrap();
        let res = gw2_distance(&m0, &m1).unwrap();
        assert_relative_eq!(res.distance, 2.0, max_relative = 1e-12);
        for x in [-2.0, 0.0, 1.5] {
            let y = gmm_t_mean(&m0, &m1, &res.plan, &[x]).unwrap();
            assert!((y[0] - x).abs() <= 1e-10);
        }
        let b = GaussianComponent::isotropic(vec![1.0], 2.0).unwrap();
        let single = gw2_distance(&m0, &GaussianMixture::single(b.clone())).unwrap();
        let y = gmm_t_mean(&m0, &GaussianMixture::single(b.clone()), &single.plan, &[0.5]).unwrap();
        assert_relative_eq!(y[0], gaussian_monge(&a, &b, &[0.5]).unwrap()[0], max_relative = 1e-12);
    }

    #[test]
    fn parameter_counts() {
        let c = GaussianComponent::isotropic(vec![0.0; 3], 1.0).unwrap();
        let c2 = GaussianComponent::isotropic(vec![1.0; 3], 1.0).unwrap();
        let m = GaussianMixture::new(vec![0.5, 0.5], vec![c, c2]).unwrap();
        assert_eq!(m.parameter_count(), 20);
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = GaussianComponent::new(vec![0.1, 0.2], random_spd(&mut rng, 2)).unwrap();
        let m = GaussianMixture::single(c);
        let back = GaussianMixture::from_json(&m.to_json()).unwrap();
        assert_eq!(back.weights(), m.weights());
        assert!((back.components()[0].cov() - m.components()[0].cov()).amax() <= 1e-15);
        assert!(m.to_json().contains("\"cov\""));
    }

    #[test]
    fn em_single_component_is_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.random::<f64>(), 2.0 * rng.random::<f64>()]).collect();
        let fit = gmm_em(&data, 1, 0, 50, 1e-10).unwrap();
        let n = data.len() as f64;
        let mean: Vec<f64> = (0..2).map(|a| data.iter().map(|x| x[a]).sum::<f64>() / n).collect();
        let c = &fit.components()[0];
        for a in 0..2 {
            assert_relative_eq!(c.mean()[a], mean[a], max_relative = 1e-9);
        }
        let var = |a: usize| data.iter().map(|x| (x[a] - mean[a]).powi(2)).sum::<f64>() / n;
        let load = COVARIANCE_REGULARIZATION * (var(0) + var(1)) / 2.0;
        assert_relative_eq!(c.cov()[(0, 0)], var(0) + load, max_relative = 1e-9);
    }

    #[test]
    fn em_separates_blobs_monotonically() {
        let truth = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![
                GaussianComponent::isotropic(vec![0.0, 0.0], 0.3).unwrap(),
                GaussianComponent::isotropic(vec![4.0, 4.0], 0.3).unwrap(),
            ],
        )
        .unwrap();
        let data = truth.sample(2000, 5);
        let fit = gmm_em_traced(&data, 2, 1, 100, 1e-12).unwrap();
        for w in fit.loglik.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
        let mut means: Vec<Vec<f64>> = fit.model.components().iter().map(|c| c.mean().to_vec()).collect();
        means.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!(crate::radial::dist(&means[0], &[0.0, 0.0]) < 0.1);
        assert!(crate::radial::dist(&means[1], &[4.0, 4.0]) < 0.1);
        let again = gmm_em(&data, 2, 1, 100, 1e-12).unwrap();
        assert_eq!(again.to_json(), fit.model.to_json());
    }
}
