//! Desk-scale simulation of log-correlated Gaussian fields, their spherical
//! averages, Gaussian multiplicative chaos and Liouville Brownian motion.

// Guards such as `!(x > 0.0)` are written negated on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cone;
pub mod fftnd;
pub mod gmc;
pub mod langevin;
pub mod lbm;
pub mod params;
pub mod quad;
pub mod sphavg;
pub mod stats;
pub mod stochastic;
