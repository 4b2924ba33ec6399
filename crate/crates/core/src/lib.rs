//! Galerkin simulation of the fractional stochastic p-Laplace equation on a
//! bounded interval.
//!
//! The crate is organised bottom-up:
//!
//! * [`domain`] – operator parameters, the kernel constant `C(n,p,s)` and the
//!   discrete Poincaré constant.
//! * [`galerkin`] – the finite-element space `H_n`, its L²-orthonormal basis
//!   and the projections `P_k`.
//! * [`quadrature`] / [`operator`] – singular quadrature for the Gagliardo
//!   double integral and the weak form of `A₁ = −(−Δ)ˢ_p`.
//! * [`coefficients`] – drift, Lipschitz perturbation, superlinear noise and
//!   transport noise families.
//! * [`hypotheses`] – exponents κ_j, the gap condition and the per-theorem
//!   coefficient checks.
//! * [`solver`] – tamed Euler–Maruyama integration of the Galerkin SDE.
//! * [`harness`] – Monte Carlo studies (moments, Galerkin convergence,
//!   pathwise stability, time-seminorm).
//! * [`config`] / [`cli`] – experiment configuration and the command line.

pub mod cli;
pub mod coefficients;
pub mod config;
pub mod domain;
pub mod error;
pub mod galerkin;
pub mod harness;
pub mod hypotheses;
pub mod operator;
pub mod quadrature;
pub mod rng;
pub mod selftest;
pub mod setup;
pub mod solver;
pub mod special;

pub use error::{Error, Result};
