//! Bayesian multi-parameter quantum metrology with limited data.
//!
//! The crate computes the single-shot Bayesian quantum bound
//! `Σ_mse ≥ Σ_c ≥ Σ_q = ∫p θθᵀ − 𝒦` for phase-encoding models with a flat
//! prior, builds the optimal projective measurement when the quantum
//! estimators commute, and simulates repeated measurements with
//! posterior-mean estimators.
//!
//! A typical run goes through the modules in order:
//!
//! 1. [`models`] describes the problem (prior, probe, generators, weights),
//! 2. [`moments`] integrates `ρ = ∫p ρ(θ)` and `ρ̄ᵢ = ∫p ρ(θ) θᵢ`,
//! 3. [`bound`] solves `Sᵢρ + ρSᵢ = 2ρ̄ᵢ` and assembles the bound,
//! 4. [`measurement`] derives or validates a POVM,
//! 5. [`simulate`] evaluates the μ-shot mean square error.

pub mod bound;
mod codec;
pub mod error;
pub mod measurement;
pub mod models;
pub mod moments;
pub mod operators;
pub mod parallel;
pub mod simulate;

pub use error::{Error, Result};
pub use num_complex::Complex64;
