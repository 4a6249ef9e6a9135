//! Fits a radial mixture to synthetic data with full- and mini-batch EM.
//!
//! Run: cargo run -p radial-ot --release --example fit_mixture

use radial_ot::estimation::{fullbatch_em, mean_log_likelihood, minibatch_em, EmConfig};
use radial_ot::{Generator, RadialDistribution, RadialMixture};

fn main() -> radial_ot::Result<()> {
    let g = Generator::imq(2.5)?;
    let truth = RadialMixture::new(
        vec![0.3, 0.3, 0.4],
        vec![
            RadialDistribution::new(vec![0.0, 0.0], 1.0, g.clone())?,
            RadialDistribution::new(vec![8.0, 0.0], 0.7, g.clone())?,
            RadialDistribution::new(vec![4.0, 7.0], 1.3, g.clone())?,
        ],
    )?;
    let data = truth.sample(5000, 11);
    println!("truth loglik {:.4}", mean_log_likelihood(&truth, &data));

    let mut cfg = EmConfig::new(3);
    cfg.max_iter = 100;
    let full = fullbatch_em(&data, &g, &cfg)?;
    println!("full batch loglik {:.4}", mean_log_likelihood(&full, &data));

    cfg.max_iter = 600;
    let mini = minibatch_em(&data, &g, &cfg)?;
    println!("mini-batch loglik {:.4}", mean_log_likelihood(&mini, &data));
    for (w, c) in mini.iter() {
        println!("  w {w:.3}  center ({:+.3}, {:+.3})  scale {:.3}", c.center()[0], c.center()[1], c.scale());
    }
    Ok(())
}
