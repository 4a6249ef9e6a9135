//! Fitting radial mixtures to point clouds by (mini-batch) EM.
//!
//! The M-step maximizes, per component,
//! `Q_k(m, c) = sum_i tau_ik [log rho(|x_i - m| / c) - d log c]`
//! by preconditioned gradient ascent with backtracking, warm-started from
//! the previous parameters.

use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generators::Generator;
use crate::mixture::{log_sum_exp, RadialMixture};
use crate::radial::{dist, dist2, RadialDistribution};

/// Lloyd iterations after k-means++ seeding.
pub const LLOYD_ITERATIONS: usize = 50;

/// Inner gradient iterations per M-step.
pub const MAX_INNER_ITERATIONS: usize = 200;

/// Clustering result.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centers: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub counts: Vec<usize>,
}

fn check_data(data: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::domain("need at least one component"));
    }
    if data.len() < k {
        return Err(Error::domain(format!(
            "cannot fit {k} components to {} points",
            data.len()
        )));
    }
    let d = data[0].len();
    if d == 0 || data.iter().any(|x| x.len() != d || x.iter().any(|v| !v.is_finite())) {
        return Err(Error::domain("data points must be finite with a common dimension"));
    }
    Ok(d)
}

fn nearest(x: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d2 = dist2(x, c);
        if d2 < best.1 {
            best = (j, d2);
        }
    }
    best
}

/// k-means++ seeding followed by at most [`LLOYD_ITERATIONS`] Lloyd steps.
/// Empty clusters restart at the point farthest from its center.
pub fn kmeans(data: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    let d = check_data(data, k)?;
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![data[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| dist2(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, v) in d2.iter().enumerate() {
                acc += v;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(data[next].clone());
        for (v, x) in d2.iter_mut().zip(data) {
            *v = v.min(dist2(x, &centers[centers.len() - 1]));
        }
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..LLOYD_ITERATIONS {
        let assign: Vec<(usize, f64)> = data.par_iter().map(|x| nearest(x, &centers)).collect();
        let changed = assign.iter().zip(&labels).any(|(a, l)| a.0 != *l);
        labels = assign.iter().map(|a| a.0).collect();
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in data.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| assign[a].1.total_cmp(&assign[b].1))
                    .expect("nonempty data");
                centers[j] = data[far].clone();
            } else {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    let mut counts = vec![0usize; k];
    for &l in &labels {
        counts[l] += 1;
    }
    Ok(KMeans { centers, labels, counts })
}

/// Starting parameters derived from a k-means clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialModel {
    pub weights: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
}

/// Cluster fractions, cluster centers, and scales matching the cluster
/// spread: `c_k = rms_k / sqrt(variance_factor)`, at least `c_floor`.
pub fn kmeans_init(
    data: &[Vec<f64>],
    k: usize,
    seed: u64,
    generator: &Generator,
    c_floor: f64,
) -> Result<InitialModel> {
    let d = check_data(data, k)?;
    let vf = crate::generators::variance_factor(generator, d)?;
    let km = kmeans(data, k, seed)?;
    let n = data.len() as f64;
    let mut sq = vec![0.0; k];
    for (x, &l) in data.iter().zip(&km.labels) {
        sq[l] += dist2(x, &km.centers[l]);
    }
    let scales = (0..k)
        .map(|j| {
            let ms = if km.counts[j] > 0 { sq[j] / km.counts[j] as f64 } else { 0.0 };
            (ms / vf).sqrt().max(c_floor)
        })
        .collect();
    Ok(InitialModel {
        weights: km.counts.iter().map(|&c| c as f64 / n).collect(),
        centers: km.centers,
        scales,
    })
}

/// Row-stochastic responsibility matrix, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    rows: Vec<Vec<f64>>,
}

impl Responsibilities {
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Column sums.
    pub fn totals(&self) -> Vec<f64> {
        let k = self.rows.first().map_or(0, |r| r.len());
        (0..k).map(|j| self.rows.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// `tau_ik proportional to pi_k f_k(x_i)` with normalized component
/// densities; points with zero density everywhere get uniform rows.
pub fn e_step(model: &RadialMixture, batch: &[Vec<f64>]) -> Responsibilities {
    let k = model.len();
    let rows = batch
        .par_iter()
        .map(|x| {
            let terms: Vec<f64> = model
                .iter()
                .map(|(w, c)| if w > 0.0 { w.ln() + c.log_density(x) } else { f64::NEG_INFINITY })
                .collect();
            let lse = log_sum_exp(&terms);
            if lse == f64::NEG_INFINITY {
                vec![1.0 / k as f64; k]
            } else {
                terms.iter().map(|t| (t - lse).exp()).collect()
            }
        })
        .collect();
    Responsibilities { rows }
}

/// `Q_k` for one component, without the constant `log Z(1)`.
pub fn component_objective(
    batch: &[Vec<f64>],
    tau: &[f64],
    generator: &Generator,
    center: &[f64],
    scale: f64,
) -> f64 {
    let d = center.len() as f64;
    let log_c = scale.ln();
    let mut q = 0.0;
    for (x, &t) in batch.iter().zip(tau) {
        if t > 0.0 {
            q += t * (generator.log_value(dist(x, center) / scale) - d * log_c);
        }
    }
    q
}

/// IRLS weight `-(log rho)'(u) / u`, finite at the origin.
fn irls_weight(generator: &Generator, u: f64) -> f64 {
    let u = u.max(1e-8);
    -generator.log_derivative(u) / u
}

/// Outcome of one component's M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentFit {
    pub center: Vec<f64>,
    pub scale: f64,
    pub objective_before: f64,
    pub objective_after: f64,
    pub iterations: usize,
}

/// Maximizes `Q_k` from `(center, scale)`. Steps use the IRLS scaling of
/// the gradient (exact for the Gaussian generator) and are halved until
/// `Q_k` increases, so the result never does worse than the start.
pub fn m_step_component(
    batch: &[Vec<f64>],
    tau: &[f64],
    generator: &Generator,
    center: &[f64],
    scale: f64,
    c_floor: f64,
    tol: f64,
) -> ComponentFit {
    let d = center.len();
    let total: f64 = tau.iter().sum();
    let mut m = center.to_vec();
    let mut c = scale.max(c_floor);
    let q0 = component_objective(batch, tau, generator, center, scale);
    let mut q = component_objective(batch, tau, generator, &m, c);
    if q < q0 {
        // Raising c to the floor lost ground; stay at the input.
        m = center.to_vec();
        c = scale;
        q = q0;
    }
    let mut iterations = 0;
    if total <= 0.0 {
        return ComponentFit { center: m, scale: c, objective_before: q0, objective_after: q, iterations };
    }
    while iterations < MAX_INNER_ITERATIONS {
        iterations += 1;
        let mut grad_m = vec![0.0; d];
        let mut weight_sum = 0.0;
        let mut weighted_sq = 0.0;
        for (x, &t) in batch.iter().zip(tau) {
            if t <= 0.0 {
                continue;
            }
            let r = dist(x, &m);
            let w = irls_weight(generator, r / c);
            if !w.is_finite() {
                continue;
            }
            weight_sum += t * w;
            weighted_sq += t * w * r * r;
            for (g, (xi, mi)) in grad_m.iter_mut().zip(x.iter().zip(&m)) {
                *g += t * w * (xi - mi);
            }
        }
        // grad_m holds c^2 dQ/dm; grad_s = dQ/dlog c.
        let grad_s = weighted_sq / (c * c) - d as f64 * total;
        let at_floor = c <= c_floor && grad_s < 0.0;
        let gm_norm = grad_m.iter().map(|g| g * g).sum::<f64>().sqrt() / (c * total);
        let gs_norm = if at_floor { 0.0 } else { grad_s.abs() / total };
        if gm_norm.hypot(gs_norm) <= tol || weight_sum <= 0.0 {
            break;
        }
        let dm: Vec<f64> = grad_m.iter().map(|g| g / weight_sum).collect();
        let ds = 0.5 * (weighted_sq / (d as f64 * total * c * c)).ln();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand_m: Vec<f64> = m.iter().zip(&dm).map(|(a, b)| a + alpha * b).collect();
            let cand_c = (c.ln() + alpha * ds).exp().max(c_floor);
            let cand_q = component_objective(batch, tau, generator, &cand_m, cand_c);
            if cand_q > q {
                m = cand_m;
                c = cand_c;
                q = cand_q;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    ComponentFit { center: m, scale: c, objective_before: q0, objective_after: q, iterations }
}

/// Runs [`m_step_component`] for every component in parallel.
pub fn m_step(
    batch: &[Vec<f64>],
    tau: &Responsibilities,
    generator: &Generator,
    previous: &[(Vec<f64>, f64)],
    c_floor: f64,
    tol: f64,
) -> Vec<ComponentFit> {
    previous
        .par_iter()
        .enumerate()
        .map(|(j, (m, c))| {
            let col = tau.column(j);
            m_step_component(batch, &col, generator, m, *c, c_floor, tol)
        })
        .collect()
}

/// EM settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub components: usize,
    pub batch_size: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// M-step gradient tolerance.
    pub tol: f64,
    /// Lower bound on scales; defaults to 1e-4 of the data's bounding-box
    /// diagonal.
    pub c_floor: Option<f64>,
    /// Stop once the largest relative parameter change is below this.
    pub param_tol: Option<f64>,
    /// Iterations between training-log records (mini-batch runs).
    pub log_every: usize,
}

impl EmConfig {
    /// Batch 100 and 1500 iterations.
    pub fn new(components: usize) -> Self {
        EmConfig {
            components,
            batch_size: 100,
            max_iter: 1500,
            seed: 0,
            tol: 1e-6,
            c_floor: None,
            param_tol: None,
            log_every: 50,
        }
    }
}

/// One training-log row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmRecord {
    pub iteration: usize,
    /// Mean log-likelihood per point on the evaluation set.
    pub loglik: f64,
    pub scales: Vec<f64>,
}

/// Fitted model with its training log.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: RadialMixture,
    pub log: Vec<EmRecord>,
}

impl EmFit {
    /// CSV with columns `iter,loglik,c_0,...`.
    pub fn log_csv(&self) -> String {
        let k = self.log.first().map_or(0, |r| r.scales.len());
        let mut out = String::from("iter,loglik");
        for j in 0..k {
            let _ = write!(out, ",c_{j}");
        }
        out.push('\n');
        for r in &self.log {
            let _ = write!(out, "{},{}", r.iteration, r.loglik);
            for c in &r.scales {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

/// Mean log-likelihood per point.
pub fn mean_log_likelihood(model: &RadialMixture, data: &[Vec<f64>]) -> f64 {
    // Collect first so the summation order does not depend on thread scheduling.
    let terms: Vec<f64> = data.par_iter().map(|x| model.log_density(x)).collect();
    terms.iter().sum::<f64>() / data.len() as f64
}

/// Diagonal of the bounding box, a cheap upper bound on the diameter.
fn bounding_diagonal(data: &[Vec<f64>]) -> f64 {
    let d = data[0].len();
    let mut sq = 0.0;
    for a in 0..d {
        let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x[a]), hi.max(x[a]))
        });
        sq += (hi - lo) * (hi - lo);
    }
    sq.sqrt()
}

fn default_floor(data: &[Vec<f64>]) -> f64 {
    let diag = bounding_diagonal(data);
    1e-4 * if diag > 0.0 { diag } else { 1.0 }
}

fn build_model(
    generator: &Generator,
    weights: &[f64],
    params: &[(Vec<f64>, f64)],
) -> Result<RadialMixture> {
    let comps = params
        .iter()
        .map(|(m, c)| RadialDistribution::new(m.clone(), *c, generator.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(RadialMixture::unchecked(weights.to_vec(), comps))
}

/// Mini-batch stochastic EM: each iteration draws a batch without
/// replacement, updates weights from the responsibilities and runs the
/// M-step warm-started from the current parameters.
///
/// When batches are strictly smaller than the data set the returned model
/// averages the iterates of the second half of the run, which damps the
/// batch-to-batch noise of the final iterate.
pub fn minibatch_em(data: &[Vec<f64>], generator: &Generator, config: &EmConfig) -> Result<RadialMixture> {
    Ok(minibatch_em_traced(data, generator, config)?.model)
}

/// [`minibatch_em`] with the training log.
pub fn minibatch_em_traced(data: &[Vec<f64>], generator: &Generator, config: &EmConfig) -> Result<EmFit> {
    let k = config.components;
    check_data(data, k)?;
    let n = data.len();
    if config.batch_size == 0 || config.batch_size > n {
        return Err(Error::Config(format!(
            "batch size must lie in 1..={n}, got {}",
            config.batch_size
        )));
    }
    let full = config.batch_size == n;
    let c_floor = config.c_floor.unwrap_or_else(|| default_floor(data));
    if !(c_floor > 0.0) {
        return Err(Error::Config("scale floor must be positive".into()));
    }
    let init = kmeans_init(data, k, config.seed, generator, c_floor)?;
    let mut weights = init.weights;
    let mut params: Vec<(Vec<f64>, f64)> = init.centers.into_iter().zip(init.scales).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let eval: Vec<Vec<f64>> = if full || n <= 2000 {
        data.to_vec()
    } else {
        index::sample(&mut rng, n, 2000).into_iter().map(|i| data[i].clone()).collect()
    };
    let mut log = Vec::new();
    let record = |iteration: usize, weights: &[f64], params: &[(Vec<f64>, f64)], log: &mut Vec<EmRecord>| -> Result<()> {
        let model = build_model(generator, weights, params)?;
        log.push(EmRecord {
            iteration,
            loglik: mean_log_likelihood(&model, &eval),
            scales: params.iter().map(|p| p.1).collect(),
        });
        Ok(())
    };
    record(0, &weights, &params, &mut log)?;
    let average_from = if full { usize::MAX } else { config.max_iter / 2 + 1 };
    let mut sum_w = vec![0.0; k];
    let mut sum_p: Vec<(Vec<f64>, f64)> = params.iter().map(|(m, _)| (vec![0.0; m.len()], 0.0)).collect();
    let mut averaged = 0usize;
    for it in 1..=config.max_iter {
        let batch: Vec<Vec<f64>> = if full {
            data.to_vec()
        } else {
            index::sample(&mut rng, n, config.batch_size).into_iter().map(|i| data[i].clone()).collect()
        };
        let model = build_model(generator, &weights, &params)?;
        let tau = e_step(&model, &batch);
        let totals = tau.totals();
        let nb = batch.len() as f64;
        weights = totals.iter().map(|t| t / nb).collect();
        let dead: Vec<usize> = (0..k).filter(|&j| totals[j] <= 0.0).collect();
        if !dead.is_empty() {
            // Restart each dead component at a different badly explained
            // batch point, with the median scale and one point's weight.
            let mut order: Vec<(f64, usize)> =
                batch.iter().enumerate().map(|(i, x)| (model.log_density(x), i)).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut scales: Vec<f64> = params.iter().map(|p| p.1).collect();
            scales.sort_by(f64::total_cmp);
            let median = scales[k / 2];
            for (slot, &j) in dead.iter().enumerate() {
                params[j] = (batch[order[slot % order.len()].1].clone(), median);
                weights[j] = 1.0 / nb;
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
        }
        let fits = m_step(&batch, &tau, generator, &params, c_floor, config.tol);
        // A component carrying less than d + 1 points of a partial batch
        // cannot pin down a center and a scale; re-maximizing on it drives
        // the scale to the floor, so it keeps its parameters this round.
        let min_mass = (data[0].len() + 1) as f64;
        let updated: Vec<(Vec<f64>, f64)> = fits
            .into_iter()
            .zip(&totals)
            .zip(&params)
            .map(|((f, &t), old)| if full || t >= min_mass { (f.center, f.scale) } else { old.clone() })
            .collect();
        let previous = std::mem::replace(&mut params, updated);
        if full || it % config.log_every.max(1) == 0 || it == config.max_iter {
            record(it, &weights, &params, &mut log)?;
        }
        if it >= average_from {
            averaged += 1;
            for j in 0..k {
                sum_w[j] += weights[j];
                for (s, v) in sum_p[j].0.iter_mut().zip(&params[j].0) {
                    *s += v;
                }
                sum_p[j].1 += params[j].1;
            }
        }
        if let Some(ptol) = config.param_tol {
            let change = params
                .iter()
                .zip(&previous)
                .map(|((m, c), (m0, c0))| (dist(m, m0) + (c - c0).abs()) / c0)
                .fold(0.0, f64::max);
            if change <= ptol {
                break;
            }
        }
    }
    if averaged > 0 {
        let a = averaged as f64;
        weights = sum_w.iter().map(|w| w / a).collect();
        params = sum_p.into_iter().map(|(m, c)| (m.iter().map(|v| v / a).collect(), c / a)).collect();
    }
    let total: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let comps = params
        .into_iter()
        .map(|(m, c)| RadialDistribution::new(m, c, generator.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(EmFit { model: RadialMixture::new(weights, comps)?, log })
}

/// EM with the whole data set as the batch; the log records the mean
/// log-likelihood after every iteration.
pub fn fullbatch_em(data: &[Vec<f64>], generator: &Generator, config: &EmConfig) -> Result<RadialMixture> {
    Ok(fullbatch_em_traced(data, generator, config)?.model)
}

pub fn fullbatch_em_traced(data: &[Vec<f64>], generator: &Generator, config: &EmConfig) -> Result<EmFit> {
    let config = EmConfig { batch_size: data.len(), ..config.clone() };
    minibatch_em_traced(data, generator, &config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let g = Generator::gauss();
        let truth = RadialMixture::new(
            vec![0.5, 0.5],
            vec![
                RadialDistribution::new(vec![0.0, 0.0], 0.2, g.clone()).unwrap(),
                RadialDistribution::new(vec![3.0, 1.0], 0.2, g).unwrap(),
            ],
        )
        .unwrap();
        (truth.sample(600, seed), vec![vec![0.0, 0.0], vec![3.0, 1.0]])
    }

    #[test]
    fn kmeans_single_cluster_is_mean() {
        let data = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, -1.0]];
        let init = kmeans_init(&data, 1, 0, &Generator::gauss(), 1e-6).unwrap();
        assert_eq!(init.weights, vec![1.0]);
        assert_relative_eq!(init.centers[0][0], 2.0);
        assert_relative_eq!(init.centers[0][1], 1.0);
        assert!(kmeans(&data, 4, 0).is_err());
    }

    #[test]
    fn kmeans_separates_blobs_deterministically() {
        let (data, truth) = blobs(1);
        let a = kmeans(&data, 2, 7).unwrap();
        assert_eq!(a, kmeans(&data, 2, 7).unwrap());
        let mut c = a.centers.clone();
        c.sort_by(|x, y| x[0].total_cmp(&y[0]));
        for (got, want) in c.iter().zip(&truth) {
            assert!(dist(got, want) < 0.1);
        }
    }

    #[test]
    fn e_step_rows_are_stochastic() {
        let g = Generator::imq(3.0).unwrap();
        let model = RadialMixture::new(
            vec![0.3, 0.7],
            vec![
                RadialDistribution::new(vec![-1.0, 0.0], 1.0, g.clone()).unwrap(),
                RadialDistribution::new(vec![1.0, 0.0], 1.0, g.clone()).unwrap(),
            ],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.random::<f64>() * 20.0 - 10.0, rng.random()]).collect();
        for row in e_step(&model, &batch).rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        let sym = RadialMixture::new(
            vec![0.5, 0.5],
            vec![
                RadialDistribution::new(vec![-1.0, 0.0], 1.0, g.clone()).unwrap(),
                RadialDistribution::new(vec![1.0, 0.0], 1.0, g).unwrap(),
            ],
        )
        .unwrap();
        let tau = e_step(&sym, &[vec![0.0, 0.0]]);
        assert!(tau.rows()[0].iter().all(|p| (p - 0.5).abs() <= 1e-15));
    }

    #[test]
    fn e_step_outside_compact_supports_is_uniform() {
        let g = Generator::compact(1.0).unwrap();
        let model = RadialMixture::new(
            vec![0.5, 0.5],
            vec![
                RadialDistribution::new(vec![0.0], 1.0, g.clone()).unwrap(),
                RadialDistribution::new(vec![5.0], 1.0, g).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(e_step(&model, &[vec![3.0]]).rows()[0], vec![0.5, 0.5]);
    }

    #[test]
    fn gaussian_m_step_is_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.random::<f64>(), rng.random::<f64>() * 3.0]).collect();
        let tau: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let fit = m_step_component(&batch, &tau, &Generator::gauss(), &[0.0, 0.0], 1.0, 1e-6, 1e-10);
        let w: f64 = tau.iter().sum();
        let mean: Vec<f64> = (0..2).map(|a| batch.iter().zip(&tau).map(|(x, t)| t * x[a]).sum::<f64>() / w).collect();
        let msd = batch.iter().zip(&tau).map(|(x, t)| t * dist2(x, &mean)).sum::<f64>() / w;
        assert!(dist(&fit.center, &mean) <= 1e-6);
        assert_relative_eq!(fit.scale * fit.scale, msd / 2.0, max_relative = 1e-6);
        assert!(fit.objective_after >= fit.objective_before);
    }

    #[test]
    fn single_point_collapses_to_floor() {
        let fit = m_step_component(&[vec![0.3, 0.4]], &[1.0], &Generator::imq(3.0).unwrap(), &[0.0, 0.0], 1.0, 1e-3, 1e-9);
        assert!(dist(&fit.center, &[0.3, 0.4]) < 1e-6);
        assert_eq!(fit.scale, 1e-3);
    }

    #[test]
    fn imq_parameters_are_recovered() {
        let g = Generator::imq(3.0).unwrap();
        let truth = RadialDistribution::new(vec![1.0, -2.0], 0.7, g.clone()).unwrap();
        let data = truth.sample(10_000, 5);
        let tau = vec![1.0; data.len()];
        let fit = m_step_component(&data, &tau, &g, &[0.0, 0.0], 1.0, 1e-6, 1e-8);
        assert!(dist(&fit.center, truth.center()) < 0.05 * 0.7);
        assert!((fit.scale - 0.7).abs() < 0.05 * 0.7);
    }

    #[test]
    fn fullbatch_is_monotone_and_matches_minibatch_with_full_batches() {
        let (data, _) = blobs(6);
        let g = Generator::imq(3.0).unwrap();
        let config = EmConfig { max_iter: 30, ..EmConfig::new(2) };
        let fit = fullbatch_em_traced(&data, &g, &config).unwrap();
        for w in fit.log.windows(2) {
            assert!(w[1].loglik >= w[0].loglik - 1e-9, "{} -> {}", w[0].loglik, w[1].loglik);
        }
        let same = minibatch_em(&data, &g, &EmConfig { batch_size: data.len(), ..config }).unwrap();
        assert_eq!(same.to_json(), fit.model.to_json());
    }

    #[test]
    fn fullbatch_gaussian_single_component_is_closed_form() {
        let (data, _) = blobs(7);
        let fit = fullbatch_em(&data, &Generator::gauss(), &EmConfig { max_iter: 20, ..EmConfig::new(1) }).unwrap();
        let n = data.len() as f64;
        let mean: Vec<f64> = (0..2).map(|a| data.iter().map(|x| x[a]).sum::<f64>() / n).collect();
        let msd = data.iter().map(|x| dist2(x, &mean)).sum::<f64>() / n;
        let c = &fit.components()[0];
        assert!(dist(c.center(), &mean) <= 1e-6);
        assert_relative_eq!(c.scale() * c.scale(), msd / 2.0, max_relative = 1e-6);
    }

    #[test]
    fn minibatch_is_reproducible_and_finds_blobs() {
        let (data, truth) = blobs(8);
        let g = Generator::imq(3.0).unwrap();
        let config = EmConfig { max_iter: 300, seed: 3, ..EmConfig::new(2) };
        let fit = minibatch_em_traced(&data, &g, &config).unwrap();
        assert_eq!(fit.model.to_json(), minibatch_em(&data, &g, &config).unwrap().to_json());
        let mut centers: Vec<Vec<f64>> = fit.model.components().iter().map(|c| c.center().to_vec()).collect();
        centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for (got, want) in centers.iter().zip(&truth) {
            assert!(dist(got, want) < 0.1, "{got:?}");
        }
        assert!(fit.log_csv().starts_with("iter,loglik,c_0,c_1\n0,"));
        assert!((fit.model.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_configs() {
        let (data, _) = blobs(9);
        let g = Generator::gauss();
        assert!(minibatch_em(&data, &g, &EmConfig { batch_size: 10_000, ..EmConfig::new(2) }).is_err());
        assert!(minibatch_em(&data[..1], &g, &EmConfig { batch_size: 1, ..EmConfig::new(2) }).is_err());
    }
}
