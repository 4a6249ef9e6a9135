//! The RW2 distance between radial mixtures: optimal component couplings,
//! geodesics, transport maps and barycenters.

use once_cell::sync::OnceCell;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::discrete_ot::{self, CostTensor, MultimarginalPlan, TransportPlan};
use crate::error::{Error, Result};
use crate::mixture::{log_sum_exp, RadialMixture};
use crate::radial::{self, RadialDistribution, RadialMap};

/// Distance, optimal component plan and the component-level costs behind it.
#[derive(Debug)]
pub struct Rw2Result {
    pub distance: f64,
    pub plan: TransportPlan,
    /// Squared W2 between every source and target component.
    pub component_costs: Vec<Vec<f64>>,
    source: RadialMixture,
    target: RadialMixture,
    maps: Vec<Vec<OnceCell<RadialMap>>>,
}

impl Rw2Result {
    pub fn squared(&self) -> f64 {
        self.distance * self.distance
    }

    pub fn source(&self) -> &RadialMixture {
        &self.source
    }

    pub fn target(&self) -> &RadialMixture {
        &self.target
    }

    /// Monge map from source component `k` to target component `l`, built
    /// on first use.
    pub fn component_map(&self, k: usize, l: usize) -> Result<&RadialMap> {
        self.maps[k][l].get_or_try_init(|| {
            RadialMap::new(&self.source.components()[k], &self.target.components()[l])
        })
    }

    /// Point on the geodesic at time `t`, reusing this plan.
    pub fn geodesic(&self, t: f64) -> Result<RadialMixture> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("geodesic time must lie in [0, 1], got {t}")));
        }
        let support = self.plan.support();
        let parts: Vec<Result<RadialDistribution>> = support
            .par_iter()
            .map(|&(k, l, _)| {
                radial::interpolate(&self.source.components()[k], &self.target.components()[l], t)
            })
            .collect();
        let mut components = Vec::with_capacity(parts.len());
        for p in parts {
            components.push(p?);
        }
        let total: f64 = support.iter().map(|s| s.2).sum();
        let weights = support.iter().map(|s| s.2 / total).collect();
        RadialMixture::new(weights, components)
    }

    /// Map evaluator for the whole plan.
    pub fn transport(&self) -> Result<MixtureTransport> {
        let mut pairs = Vec::new();
        for (k, l, w) in self.plan.support() {
            pairs.push(Pair { source: k, weight: w, map: self.component_map(k, l)?.clone() });
        }
        Ok(MixtureTransport { source: self.source.clone(), pairs })
    }
}

fn check_admissible(mu: &RadialMixture, role: &str) -> Result<()> {
    for (k, c) in mu.components().iter().enumerate() {
        if !c.moments().has_second_moment() {
            return Err(Error::Divergence(format!(
                "{role} component {k} ({}) has no finite second moment",
                c.generator().name()
            )));
        }
    }
    Ok(())
}

/// Total order used to pick a canonical orientation, which makes the
/// distance bitwise symmetric in its arguments.
fn precedes(a: &RadialMixture, b: &RadialMixture) -> bool {
    fn key(mu: &RadialMixture) -> Vec<f64> {
        let mut k = vec![mu.len() as f64];
        for (w, c) in mu.iter() {
            k.push(w);
            k.push(c.scale());
            k.extend_from_slice(c.center());
        }
        k
    }
    let (ka, kb) = (key(a), key(b));
    for (x, y) in ka.iter().zip(&kb) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    if ka.len() != kb.len() {
        return ka.len() < kb.len();
    }
    let ga: Vec<String> = a.components().iter().map(|c| format!("{:?}", c.generator())).collect();
    let gb: Vec<String> = b.components().iter().map(|c| format!("{:?}", c.generator())).collect();
    ga <= gb
}

fn cost_matrix(mu0: &RadialMixture, mu1: &RadialMixture) -> Result<Vec<Vec<f64>>> {
    mu0.components()
        .par_iter()
        .map(|a| mu1.components().iter().map(|b| radial::pairwise_w2_squared(a, b)).collect())
        .collect()
}

/// RW2 distance: the transportation LP over component weights with squared
/// component W2 costs.
pub fn rw2_distance(mu0: &RadialMixture, mu1: &RadialMixture) -> Result<Rw2Result> {
    if mu0.is_empty() || mu1.is_empty() {
        return Err(Error::domain("mixtures must have at least one component"));
    }
    if mu0.dim() != mu1.dim() {
        return Err(Error::domain(format!("dimension mismatch: {} vs {}", mu0.dim(), mu1.dim())));
    }
    check_admissible(mu0, "source")?;
    check_admissible(mu1, "target")?;
    let (plan, costs) = if precedes(mu0, mu1) {
        let costs = cost_matrix(mu0, mu1)?;
        (discrete_ot::solve_transport(mu0.weights(), mu1.weights(), &costs)?, costs)
    } else {
        let costs = cost_matrix(mu1, mu0)?;
        let plan = discrete_ot::solve_transport(mu1.weights(), mu0.weights(), &costs)?;
        let costs = (0..mu0.len()).map(|k| costs.iter().map(|row| row[k]).collect()).collect();
        (plan.transpose(), costs)
    };
    let maps = (0..mu0.len()).map(|_| (0..mu1.len()).map(|_| OnceCell::new()).collect()).collect();
    Ok(Rw2Result {
        distance: plan.objective.max(0.0).sqrt(),
        plan,
        component_costs: costs,
        source: mu0.clone(),
        target: mu1.clone(),
        maps,
    })
}

/// Displacement interpolation `mu_t = sum_kl w*_kl nu_t^kl`.
pub fn rw2_geodesic(mu0: &RadialMixture, mu1: &RadialMixture, t: f64) -> Result<RadialMixture> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("geodesic time must lie in [0, 1], got {t}")));
    }
    rw2_distance(mu0, mu1)?.geodesic(t)
}

#[derive(Debug, Clone)]
struct Pair {
    source: usize,
    weight: f64,
    map: RadialMap,
}

/// Evaluates the plan-induced maps at many points. Holds one Monge map per
/// support entry of the plan.
#[derive(Debug, Clone)]
pub struct MixtureTransport {
    source: RadialMixture,
    pairs: Vec<Pair>,
}

impl MixtureTransport {
    pub fn new(mu0: &RadialMixture, mu1: &RadialMixture) -> Result<Self> {
        rw2_distance(mu0, mu1)?.transport()
    }

    /// Number of (source, target) pairs carrying mass.
    pub fn pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Conditional probabilities of the support pairs given `x`.
    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let logf: Vec<f64> = self.source.components().iter().map(|c| c.log_density(x)).collect();
        let terms: Vec<f64> = self
            .source
            .weights()
            .iter()
            .zip(&logf)
            .map(|(w, f)| if *w > 0.0 { w.ln() + f } else { f64::NEG_INFINITY })
            .collect();
        let log_den = log_sum_exp(&terms);
        if log_den == f64::NEG_INFINITY {
            return Err(Error::UndefinedConditional);
        }
        Ok(self.pairs.iter().map(|p| (p.weight.ln() + logf[p.source] - log_den).exp()).collect())
    }

    /// Like [`probabilities`](Self::probabilities), but points outside every
    /// support use the plan row of the nearest component.
    pub fn probabilities_or_nearest(&self, x: &[f64]) -> Vec<f64> {
        match self.probabilities(x) {
            Ok(p) => p,
            Err(_) => {
                let k = self.source.nearest_component(x);
                let row: f64 = self.pairs.iter().filter(|p| p.source == k).map(|p| p.weight).sum();
                self.pairs
                    .iter()
                    .map(|p| if p.source == k { p.weight / row } else { 0.0 })
                    .collect()
            }
        }
    }

    fn mean_with(&self, x: &[f64], probs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (p, pair) in probs.iter().zip(&self.pairs) {
            if *p > 0.0 {
                for (o, y) in out.iter_mut().zip(pair.map.apply(x)) {
                    *o += p * y;
                }
            }
        }
        out
    }

    fn draw_with<R: Rng + ?Sized>(&self, x: &[f64], probs: &[f64], rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, p) in probs.iter().enumerate() {
            if *p > 0.0 {
                acc += p;
                chosen = Some(i);
                if u < acc {
                    break;
                }
            }
        }
        let i = chosen.expect("probabilities have positive mass");
        self.pairs[i].map.apply(x)
    }

    /// Conditional expectation of the target point given `x`.
    pub fn t_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.probabilities(x)?;
        Ok(self.mean_with(x, &p))
    }

    /// [`t_mean`](Self::t_mean) with the nearest-component fallback.
    pub fn t_mean_total(&self, x: &[f64]) -> Vec<f64> {
        let p = self.probabilities_or_nearest(x);
        self.mean_with(x, &p)
    }

    /// Image of `x` under a pair map drawn from the conditional law.
    pub fn t_rand_with<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let p = self.probabilities(x)?;
        Ok(self.draw_with(x, &p, rng))
    }

    /// [`t_rand_with`](Self::t_rand_with) with the nearest-component fallback.
    pub fn t_rand_total<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let p = self.probabilities_or_nearest(x);
        self.draw_with(x, &p, rng)
    }

    /// Applies `t_mean_total` to every point in parallel.
    pub fn map_mean(&self, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
        points.par_iter().map(|x| self.t_mean_total(x)).collect()
    }

    /// Applies `t_rand_total` to every point; point `i` draws from stream
    /// `i` of a generator seeded with `seed`, so the output does not depend
    /// on the thread count.
    pub fn map_rand(&self, points: &[Vec<f64>], seed: u64) -> Vec<Vec<f64>> {
        points
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                self.t_rand_total(x, &mut rng)
            })
            .collect()
    }
}

fn transport_for(mu0: &RadialMixture, mu1: &RadialMixture, plan: &TransportPlan) -> Result<MixtureTransport> {
    if plan.rows() != mu0.len() || plan.cols() != mu1.len() {
        return Err(Error::domain("plan shape does not match the mixtures"));
    }
    let mut pairs = Vec::new();
    for (k, l, w) in plan.support() {
        let map = RadialMap::new(&mu0.components()[k], &mu1.components()[l])?;
        pairs.push(Pair { source: k, weight: w, map });
    }
    Ok(MixtureTransport { source: mu0.clone(), pairs })
}

/// `p_kl(x) = w_kl f_k(x) / sum_j pi_j f_j(x)` as a `K0 x K1` matrix.
pub fn assignment_probabilities(
    mu0: &RadialMixture,
    plan: &TransportPlan,
    x: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if plan.rows() != mu0.len() {
        return Err(Error::domain("plan rows do not match the source mixture"));
    }
    let logf: Vec<f64> = mu0.components().iter().map(|c| c.log_density(x)).collect();
    let log_den = mu0.log_density(x);
    if log_den == f64::NEG_INFINITY {
        return Err(Error::UndefinedConditional);
    }
    Ok(plan
        .weights
        .iter()
        .zip(&logf)
        .map(|(row, f)| {
            row.iter()
                .map(|&w| if w > 0.0 { (w.ln() + f - log_den).exp() } else { 0.0 })
                .collect()
        })
        .collect())
}

/// `E[Y | X = x]` under the plan-induced coupling.
pub fn t_mean(mu0: &RadialMixture, mu1: &RadialMixture, plan: &TransportPlan, x: &[f64]) -> Result<Vec<f64>> {
    transport_for(mu0, mu1, plan)?.t_mean(x)
}

/// `T_kl(x)` with `(k, l)` drawn from `p_kl(x)` by a generator seeded with `seed`.
pub fn t_rand(
    mu0: &RadialMixture,
    mu1: &RadialMixture,
    plan: &TransportPlan,
    x: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    transport_for(mu0, mu1, plan)?.t_rand_with(x, &mut rng)
}

/// Additive slack `sum_j sqrt(2 sum_k pi_j^k (c_j^k)^2 v_j^k)` in
/// `RW2 <= W2 + slack`, with `v` the generator variance factor.
pub fn rw2_upper_bound_gap(mu0: &RadialMixture, mu1: &RadialMixture) -> Result<f64> {
    check_admissible(mu0, "source")?;
    check_admissible(mu1, "target")?;
    let mut gap = 0.0;
    for mu in [mu0, mu1] {
        let mut s = 0.0;
        for (w, c) in mu.iter() {
            s += w * c.scale() * c.scale() * c.variance_factor()?;
        }
        gap += (2.0 * s).sqrt();
    }
    Ok(gap)
}

/// RW2 barycenter of mixtures sharing one generator, from the
/// multimarginal LP over component tuples.
pub fn rw2_barycenter(
    mixtures: &[RadialMixture],
    lambda: &[f64],
) -> Result<(RadialMixture, MultimarginalPlan)> {
    if mixtures.is_empty() {
        return Err(Error::domain("barycenter of an empty list"));
    }
    radial::check_simplex(lambda, mixtures.len())?;
    let dim = mixtures[0].dim();
    if mixtures.iter().any(|m| m.dim() != dim) {
        return Err(Error::domain("dimension mismatch"));
    }
    let generator = mixtures[0].components()[0].generator();
    if mixtures.iter().any(|m| m.components().iter().any(|c| c.generator() != generator)) {
        return Err(Error::Unsupported(
            "barycenters need one generator shared by every component".into(),
        ));
    }
    for (j, m) in mixtures.iter().enumerate() {
        check_admissible(m, &format!("input {j}"))?;
    }
    if mixtures.len() == 1 {
        let mu = mixtures[0].clone();
        let entries = (0..mu.len()).map(|k| (vec![k], mu.weights()[k])).collect();
        let plan = MultimarginalPlan { entries, marginals: vec![mu.weights().to_vec()], objective: 0.0 };
        return Ok((mu, plan));
    }
    let shape: Vec<usize> = mixtures.iter().map(|m| m.len()).collect();
    let tuple = |idx: &[usize]| -> Vec<RadialDistribution> {
        idx.iter().zip(mixtures).map(|(&k, m)| m.components()[k].clone()).collect()
    };
    let size: usize = shape.iter().product();
    if size > discrete_ot::DEFAULT_VARIABLE_CAP {
        return Err(Error::Capacity(format!(
            "{size} component tuples exceed the cap of {}",
            discrete_ot::DEFAULT_VARIABLE_CAP
        )));
    }
    let mut failure = None;
    let cost = CostTensor::from_fn(shape, |idx| {
        let parts = tuple(idx);
        match barycenter_cost(&parts, lambda) {
            Ok(c) => c,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let marginals: Vec<Vec<f64>> = mixtures.iter().map(|m| m.weights().to_vec()).collect();
    let plan = discrete_ot::solve_multimarginal(&marginals, &cost)?;
    let mut weights = Vec::with_capacity(plan.entries.len());
    let mut components = Vec::with_capacity(plan.entries.len());
    for (idx, w) in &plan.entries {
        components.push(radial::barycenter_shared_generator(&tuple(idx), lambda)?);
        weights.push(*w);
    }
    let total: f64 = weights.iter().sum();
    let weights = weights.into_iter().map(|w| w / total).collect();
    Ok((RadialMixture::new(weights, components)?, plan))
}

/// `sum_j lambda_j W2(nu_j, nu*)^2` with `nu*` the component barycenter.
fn barycenter_cost(parts: &[RadialDistribution], lambda: &[f64]) -> Result<f64> {
    let center = radial::barycenter_shared_generator(parts, lambda)?;
    let mut total = 0.0;
    for (p, &l) in parts.iter().zip(lambda) {
        if l > 0.0 {
            total += l * radial::pairwise_w2_squared(p, &center)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::Generator;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn imq(beta: f64) -> Generator {
        Generator::imq(beta).unwrap()
    }

    fn comp(center: Vec<f64>, scale: f64, g: &Generator) -> RadialDistribution {
        RadialDistribution::new(center, scale, g.clone()).unwrap()
    }

    fn random_mixture(rng: &mut ChaCha8Rng, k: usize, d: usize, g: &Generator) -> RadialMixture {
        let mut w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.1).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let comps = (0..k)
            .map(|_| comp((0..d).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect(), 0.2 + rng.random::<f64>(), g))
            .collect();
        RadialMixture::new(w, comps).unwrap()
    }

    fn counterexample(a: f64) -> (RadialMixture, RadialMixture) {
        let g = imq(2.0);
        let mu0 = RadialMixture::single(comp(vec![0.0], 1.0, &g));
        let mu1 = RadialMixture::new(vec![0.5, 0.5], vec![comp(vec![a], 1.0, &g), comp(vec![-a], 1.0, &g)]).unwrap();
        (mu0, mu1)
    }

    #[test]
    fn permuted_mixture_is_at_distance_zero() {
        let g = imq(2.5);
        let a = comp(vec![0.0, 0.0], 1.0, &g);
        let b = comp(vec![3.0, 1.0], 0.5, &g);
        let mu0 = RadialMixture::new(vec![0.3, 0.7], vec![a.clone(), b.clone()]).unwrap();
        let mu1 = RadialMixture::new(vec![0.7, 0.3], vec![b, a]).unwrap();
        let res = rw2_distance(&mu0, &mu1).unwrap();
        assert_eq!(res.distance, 0.0);
        assert_eq!(res.plan.weights, vec![vec![0.0, 0.3], vec![0.7, 0.0]]);
    }

    #[test]
    fn single_components_reduce_to_pairwise() {
        let g = imq(2.5);
        let a = comp(vec![0.0, 1.0], 1.0, &g);
        let b = comp(vec![3.0, 1.0], 0.5, &g);
        let res = rw2_distance(&RadialMixture::single(a.clone()), &RadialMixture::single(b.clone())).unwrap();
        assert_relative_eq!(res.distance, radial::pairwise_w2(&a, &b).unwrap(), max_relative = 1e-15);
    }

    #[test]
    fn counterexample_distance_and_plan() {
        let (mu0, mu1) = counterexample(2.0);
        let res = rw2_distance(&mu0, &mu1).unwrap();
        assert_relative_eq!(res.squared(), 4.0, max_relative = 1e-14);
        assert_eq!(res.plan.weights, vec![vec![0.5, 0.5]]);
    }

    #[test]
    fn symmetric_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = imq(3.0);
        for _ in 0..20 {
            let mu0 = random_mixture(&mut rng, 3, 2, &g);
            let mu1 = random_mixture(&mut rng, 2, 2, &g);
            let d01 = rw2_distance(&mu0, &mu1).unwrap();
            let d10 = rw2_distance(&mu1, &mu0).unwrap();
            assert_eq!(d01.distance.to_bits(), d10.distance.to_bits());
            assert_eq!(d01.plan.weights, d10.plan.transpose().weights);
        }
    }

    #[test]
    fn result_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = imq(3.0);
        let mu0 = random_mixture(&mut rng, 4, 3, &g);
        let mu1 = random_mixture(&mut rng, 3, 3, &g);
        let res = rw2_distance(&mu0, &mu1).unwrap();
        let sum: f64 = res.plan.support().iter().map(|&(k, l, w)| w * res.component_costs[k][l]).sum();
        assert!((res.squared() - sum).abs() <= 1e-10);
        for k in 0..4 {
            for l in 0..3 {
                let c = radial::pairwise_w2(&mu0.components()[k], &mu1.components()[l]).unwrap();
                assert_relative_eq!(res.component_costs[k][l], c * c, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn inadmissible_component_is_named() {
        let heavy = RadialDistribution::heavy_tailed(vec![0.0], 1.0, imq(1.2)).unwrap();
        let mu0 = RadialMixture::unchecked(vec![1.0], vec![heavy]);
        let mu1 = RadialMixture::single(comp(vec![0.0], 1.0, &imq(2.0)));
        let err = rw2_distance(&mu0, &mu1).unwrap_err();
        assert!(matches!(err, Error::Divergence(ref m) if m.contains("component 0")), "{err}");
    }

    #[test]
    fn geodesic_endpoints_and_shared_generator_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = imq(2.5);
        let mu0 = random_mixture(&mut rng, 3, 2, &g);
        let mu1 = random_mixture(&mut rng, 2, 2, &g);
        let res = rw2_distance(&mu0, &mu1).unwrap();
        let start = res.geodesic(0.0).unwrap();
        assert_eq!(start.len(), mu0.len());
        for (w, c) in start.iter() {
            let k = mu0.components().iter().position(|x| x == c).unwrap();
            assert_relative_eq!(w, mu0.weights()[k], max_relative = 1e-12);
        }
        let t = 0.3;
        let mid = res.geodesic(t).unwrap();
        for (k, l, _) in res.plan.support() {
            let (a, b) = (&mu0.components()[k], &mu1.components()[l]);
            let center: Vec<f64> = a.center().iter().zip(b.center()).map(|(x, y)| (1.0 - t) * x + t * y).collect();
            let scale = (1.0 - t) * a.scale() + t * b.scale();
            assert!(mid.components().iter().any(|c| c.center() == center.as_slice() && c.scale() == scale));
        }
        assert!(rw2_geodesic(&mu0, &mu1, 1.5).is_err());
    }

    #[test]
    fn geodesic_law_shared_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = imq(3.0);
        let mu0 = random_mixture(&mut rng, 3, 2, &g);
        let mu1 = random_mixture(&mut rng, 3, 2, &g);
        let res = rw2_distance(&mu0, &mu1).unwrap();
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        let path: Vec<RadialMixture> = grid.iter().map(|&t| res.geodesic(t).unwrap()).collect();
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                let d = rw2_distance(&path[i], &path[j]).unwrap().distance;
                let expected = (grid[j] - grid[i]) * res.distance;
                assert!((d - expected).abs() <= 1e-8 * res.distance, "{d} vs {expected}");
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = imq(2.5);
        let mu0 = random_mixture(&mut rng, 4, 2, &g);
        let mu1 = random_mixture(&mut rng, 3, 2, &g);
        let res = rw2_distance(&mu0, &mu1).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            let p = assignment_probabilities(&mu0, &res.plan, &x).unwrap();
            let s: f64 = p.iter().flatten().sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_pair_maps_are_monge() {
        let g = imq(2.5);
        let a = comp(vec![0.0, 1.0], 1.0, &g);
        let b = comp(vec![3.0, 1.0], 0.5, &g);
        let (mu0, mu1) = (RadialMixture::single(a.clone()), RadialMixture::single(b.clone()));
        let res = rw2_distance(&mu0, &mu1).unwrap();
        let x = [0.4, -0.2];
        let p = assignment_probabilities(&mu0, &res.plan, &x).unwrap();
        assert_eq!(p, vec![vec![1.0]]);
        let monge = radial::monge_map(&a, &b, &x).unwrap();
        assert_eq!(t_mean(&mu0, &mu1, &res.plan, &x).unwrap(), monge);
        assert_eq!(t_rand(&mu0, &mu1, &res.plan, &x, 9).unwrap(), monge);
    }

    #[test]
    fn t_mean_is_identity_on_counterexample() {
        let (mu0, mu1) = counterexample(2.0);
        let res = rw2_distance(&mu0, &mu1).unwrap();
        let tr = res.transport().unwrap();
        for x in [-3.0, -0.5, 0.0, 0.25, 4.0] {
            let p = tr.probabilities(&[x]).unwrap();
            assert!(p.iter().all(|q| (q - 0.5).abs() <= 1e-15));
            let y = tr.t_mean(&[x]).unwrap();
            assert!((y[0] - x).abs() <= 1e-10);
        }
    }

    #[test]
    fn t_rand_is_reproducible_and_lands_on_pair_images() {
        let (mu0, mu1) = counterexample(2.0);
        let res = rw2_distance(&mu0, &mu1).unwrap();
        let a = t_rand(&mu0, &mu1, &res.plan, &[0.3], 42).unwrap();
        let b = t_rand(&mu0, &mu1, &res.plan, &[0.3], 42).unwrap();
        assert_eq!(a, b);
        assert!((a[0] - 2.3).abs() < 1e-12 || (a[0] + 1.7).abs() < 1e-12);
        let tr = res.transport().unwrap();
        let pts: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 100.0 - 1.0]).collect();
        let out = tr.map_rand(&pts, 7);
        assert_eq!(out, tr.map_rand(&pts, 7));
        let up = out.iter().zip(&pts).filter(|(y, x)| y[0] > x[0]).count();
        assert!((60..=140).contains(&up), "{up}");
    }

    #[test]
    fn compact_support_fallback() {
        let g = Generator::compact(1.0).unwrap();
        let mu0 = RadialMixture::new(vec![0.5, 0.5], vec![comp(vec![0.0], 1.0, &g), comp(vec![5.0], 1.0, &g)]).unwrap();
        let mu1 = RadialMixture::single(comp(vec![1.0], 2.0, &g));
        let res = rw2_distance(&mu0, &mu1).unwrap();
        assert!(matches!(assignment_probabilities(&mu0, &res.plan, &[3.5]), Err(Error::UndefinedConditional)));
        let tr = res.transport().unwrap();
        assert!(tr.t_mean(&[3.5]).is_err());
        // Nearest center is 5.0; its map sends 3.5 to 1 + 2 (3.5 - 5).
        assert_eq!(tr.t_mean_total(&[3.5]), vec![-2.0]);
    }

    #[test]
    fn gap_examples() {
        let g = imq(2.0);
        let mu = RadialMixture::single(comp(vec![0.0], 1.0, &g));
        assert_relative_eq!(rw2_upper_bound_gap(&mu, &mu).unwrap(), 2.0 * 2f64.sqrt(), max_relative = 1e-9);
        let tiny = RadialMixture::single(comp(vec![0.0], 1e-9, &g));
        assert!(rw2_upper_bound_gap(&tiny, &tiny).unwrap() < 1e-8);
    }

    #[test]
    fn two_input_barycenter_matches_geodesic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = imq(2.5);
        let mu0 = random_mixture(&mut rng, 3, 2, &g);
        let mu1 = random_mixture(&mut rng, 2, 2, &g);
        let t = 0.4;
        let (bary, plan) = rw2_barycenter(&[mu0.clone(), mu1.clone()], &[1.0 - t, t]).unwrap();
        let geo = rw2_geodesic(&mu0, &mu1, t).unwrap();
        assert_eq!(bary.len(), geo.len());
        assert!(rw2_distance(&bary, &geo).unwrap().distance <= 1e-7);
        let res = rw2_distance(&mu0, &mu1).unwrap();
        assert_relative_eq!(plan.objective, t * (1.0 - t) * res.squared(), max_relative = 1e-9);
    }

    #[test]
    fn vertex_weights_return_the_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = imq(2.5);
        let inputs: Vec<RadialMixture> = (0..3).map(|_| random_mixture(&mut rng, 2, 2, &g)).collect();
        let (bary, _) = rw2_barycenter(&inputs, &[0.0, 1.0, 0.0]).unwrap();
        assert!(rw2_distance(&bary, &inputs[1]).unwrap().distance <= 1e-12);
    }

    #[test]
    fn barycenter_objective_equals_weighted_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = imq(2.5);
        for _ in 0..5 {
            let inputs: Vec<RadialMixture> = (0..3).map(|_| random_mixture(&mut rng, 2, 2, &g)).collect();
            let lambda = [0.2, 0.5, 0.3];
            let (bary, plan) = rw2_barycenter(&inputs, &lambda).unwrap();
            assert!(bary.len() <= 2 + 2 + 2 - 3 + 1);
            let lhs: f64 = inputs.iter().zip(lambda).map(|(m, l)| l * rw2_distance(m, &bary).unwrap().squared()).sum();
            assert!((lhs - plan.objective).abs() <= 1e-8, "{lhs} vs {}", plan.objective);
        }
    }

    #[test]
    fn barycenter_rejects_mixed_generators() {
        let a = RadialMixture::single(comp(vec![0.0], 1.0, &imq(2.0)));
        let b = RadialMixture::single(comp(vec![0.0], 1.0, &Generator::gauss()));
        assert!(matches!(rw2_barycenter(&[a, b], &[0.5, 0.5]), Err(Error::Unsupported(_))));
    }
}
