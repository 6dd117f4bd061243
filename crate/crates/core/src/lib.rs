//! Stochastic Amari neural fields realized as gradient flows in the nonlocal
//! Hilbert space `H₋₁` induced by a nonnegative definite connectivity kernel.
//!
//! Layers, bottom up: [`kernel`] (families, Fourier densities, positivity),
//! [`grid`] and [`operator`] (discretized `K`, spectrum, nonlocal norms),
//! [`energy`] (`Φ`, `Ψ`, `Θ` and the gradient), [`sde`] (integrators and
//! diagnostics), [`ergodic`] (Gibbs measure and moment comparison), and
//! [`config`] / [`cli`] for the command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod energy;
pub mod ergodic;
pub mod error;
pub mod fig1;
pub mod grid;
pub mod kernel;
pub mod operator;
pub mod rng;
pub mod sde;

pub use error::{Error, Result};

/// Shortest decimal that round-trips to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
