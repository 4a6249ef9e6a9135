#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use radial_ot::{Generator, RadialDistribution, RadialMixture};

pub fn weights(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| 0.2 + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|w| w / s).collect()
}

/// Random mixture with centers in `[lo, hi]^d` and scales in `[c_lo, c_hi]`.
pub fn mixture_in(
    rng: &mut ChaCha8Rng,
    g: &Generator,
    d: usize,
    k: usize,
    (lo, hi): (f64, f64),
    (c_lo, c_hi): (f64, f64),
) -> RadialMixture {
    let w = weights(rng, k);
    let comps = (0..k)
        .map(|_| {
            let m = (0..d).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
            let c = c_lo + (c_hi - c_lo) * rng.random::<f64>();
            RadialDistribution::new(m, c, g.clone()).unwrap()
        })
        .collect();
    RadialMixture::new(w, comps).unwrap()
}

pub fn mixture(rng: &mut ChaCha8Rng, g: &Generator, d: usize, k: usize) -> RadialMixture {
    mixture_in(rng, g, d, k, (-2.0, 2.0), (0.3, 1.5))
}

/// Same components, reversed order.
pub fn reversed(m: &RadialMixture) -> RadialMixture {
    let w: Vec<f64> = m.weights().iter().rev().copied().collect();
    let c: Vec<RadialDistribution> = m.components().iter().rev().cloned().collect();
    RadialMixture::new(w, c).unwrap()
}

/// Distance between closest centers of two lists after the best matching,
/// by brute force over permutations.
pub fn matched_center_error(found: &[Vec<f64>], truth: &[Vec<f64>]) -> Vec<f64> {
    fn perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(n - 1) {
            for i in 0..n {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    perms(truth.len())
        .into_iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| dist(&found[j], &truth[i])).collect::<Vec<f64>>())
        .min_by(|a, b| a.iter().sum::<f64>().total_cmp(&b.iter().sum::<f64>()))
        .unwrap()
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}
