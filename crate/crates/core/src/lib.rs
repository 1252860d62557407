//! # dgeo-core
//!
//! Numerical machinery for (h,τ)-divergences and the deformed exponential
//! families they induce.
//!
//! The crate is `no_std` (it needs `alloc`) and does no IO. File formats,
//! the CLI and parallel orchestration live in the `dgeo` crate.
//!
//! ## Layout
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`gauge`] | gauge triples (h, τ, I), the divergence kernel d_{h,τ}, exp_{h,τ}, equivalence transforms, Legendre conjugation |
//! | [`discrete`] | deformed exponential families on finite sample spaces: ψ, metric, connection, Hessian potential, projections |
//! | [`qgauss`] | q-Gaussian families on ℝ^d, repetition laws ρ_{q,k}, exact sampling, escort moments, MLE |
//! | [`lln`] | dependent law-of-large-numbers simulation and Chebyshev bound verification |
//! | [`quad`], [`roots`], [`diff`] | adaptive Gauss–Kronrod quadrature, safeguarded Newton, finite differences |
//!
//! ## Conventions
//!
//! - Intervals are open. `f64::INFINITY` marks an unbounded end.
//! - Densities on finite spaces are weighted: Σ_x p(x) μ(x) = 1.
//! - Every stochastic routine takes its RNG from the caller; [`rng::stream`]
//!   fixes how streams are split across replications.

#![no_std]

extern crate alloc;

pub mod diff;
pub mod discrete;
pub mod error;
pub mod gauge;
pub mod linalg;
pub mod lln;
pub mod num;
pub mod qgauss;
pub mod quad;
pub mod rng;
pub mod roots;

pub use error::{Error, Result};
pub use gauge::{GaugeDescriptor, GaugeKind, GaugeTriple, Interval, ScalarFn};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
