//! Optimal transport between radial mixture models.
//!
//! A radial mixture is a finite convex combination of radially contoured
//! distributions `R_d(m, c, rho)` with density proportional to
//! `rho(|x - m| / c)`. Treating a mixture as a discrete measure over its
//! components gives the relaxed Wasserstein distance RW2, whose optimal plan
//! is a small transportation LP over component-pair costs. On top of it this
//! crate builds geodesics, barycenters, transport maps, EM fitting and an
//! image color-transfer pipeline with a Gaussian-mixture baseline.

pub mod colorlab;
pub mod discrete_ot;
pub mod error;
pub mod estimation;
pub mod generators;
pub mod gmm;
pub mod mixture;
pub mod quadrature;
pub mod radial;
pub mod rw2;

pub use error::{Error, Result};
pub use generators::Generator;
pub use mixture::RadialMixture;
pub use radial::RadialDistribution;
