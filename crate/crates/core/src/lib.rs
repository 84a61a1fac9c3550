//! Trainability analysis for IQP quantum circuit Born machines trained with a
//! spectral maximum-mean-discrepancy loss.
//!
//! The circuit applies `exp(iθ_j Z^{s_j})` for generators `s_j ∈ F_2^n`
//! between two Hadamard layers. Its characteristic values
//! `C^a_θ = E_x (-1)^{a·x}` depend only on the generators that anticommute
//! with `a`, and their variance over random initial angles is set by GF(2)
//! linear algebra on that set.
//!
//! - [`gf2`]: bit vectors, row spaces and null spaces over GF(2).
//! - [`arch`]: generator sets (product, lattice, Erdős–Rényi, complete).
//! - [`kernel`]: spectral distributions `Λ` of stationary kernels.
//! - [`charfn`]: exact and Monte-Carlo characteristic values, gradients and
//!   closed-form variances.
//! - [`oracle`]: dense statevector simulation for `n <= 20`.
//! - [`bplab`]: variance experiments, scaling scans and bounds.
//! - [`trainer`]: targets, MMD estimators and SGD.
//!
//! ```
//! use iqpbp::arch::complete;
//! use iqpbp::charfn::{var_grad_closed, InitScheme};
//! use iqpbp::gf2::{BitVec, DEFAULT_CAP};
//!
//! let g = complete(6)?;
//! let a = BitVec::unit(6, 0);
//! let v = var_grad_closed(&g, &a, 0, &InitScheme::Uniform, DEFAULT_CAP)?;
//! assert_eq!(v, 2f64.powi(2 - 6));
//! # Ok::<(), iqpbp::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arch;
pub mod bplab;
pub mod charfn;
pub mod error;
pub mod gf2;
pub mod kernel;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod trainer;

pub use arch::{ArchSpec, GeneratorSet, RankReport};
pub use charfn::{CharEvaluator, InitScheme, Moments, ThetaVector};
pub use error::{Error, Result};
pub use gf2::BitVec;
pub use kernel::{KernelSpec, SpectralPmf};
pub use oracle::OutputDistribution;
pub use stats::Estimate;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/critical-rank.md")]
    pub struct CriticalRank;
    #[doc = include_str!("../../../book/src/characteristic-functions.md")]
    pub struct CharacteristicFunctions;
    #[doc = include_str!("../../../book/src/kernels-and-mmd.md")]
    pub struct KernelsAndMmd;
    #[doc = include_str!("../../../book/src/oracle.md")]
    pub struct Oracle;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
    #[doc = include_str!("../../../book/src/training.md")]
    pub struct Training;
}
