//! Computational laboratory for contractive Markov systems.
//!
//! A contractive Markov system is a finite directed graph whose edges carry
//! affine maps `w_e: K_{i(e)} -> K_{t(e)}` and place-dependent probabilities
//! `p_e`. This crate builds the coding map of such a system, tabulates the
//! cylinder measures of its equilibrium state `M` against the reference
//! measure `Φ₀(λ')`, evaluates explicit Kullback–Leibler bounds and the lower
//! bound they give on the dynamically defined measure, and searches shifted
//! cylinder covers for matching upper bounds.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`model`] | config schema, validation, [`MarkovSystem`] |
//! | [`constants`] | `a`, `δ`, `d`, `b`, `Ĉ` and the Dini sums |
//! | [`sim`] | the chain, [`EmpiricalMeasure`], average contraction |
//! | [`coding`] | backward orbits, coding points, the `f(σ)` sum |
//! | [`cylinder`] | word enumeration, `P¹_x`, `Φ₀(λ')`, `M`, [`CylinderTable`] |
//! | [`divergence`] | `K_n`, the bound evaluators, `K*` diagnostics |
//! | [`cover`] | cover search and certificate verification |
//! | [`pipeline`] | experiment plans and the artifact-writing `run` |
//!
//! The guide in `book/` walks through each of these; its code listings are
//! compiled and run as doctests of this crate.
//!
//! ```
//! use cmslab::{catalog, MarkovSystem};
//!
//! let sys = MarkovSystem::from_config(&catalog::sys_b()).unwrap();
//! assert_eq!(sys.contraction_rate(), 0.5);
//! assert!((sys.modulus().eval(0.3) - 0.1).abs() < 1e-15);
//! ```

pub mod catalog;
pub mod coding;
pub mod constants;
pub mod cover;
pub mod cylinder;
pub mod divergence;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod sim;
pub mod stats;
pub mod word;

pub use constants::{derive_constants, ConstantSet};
pub use cylinder::{CylinderSet, CylinderTable, MeasureSource};
pub use error::{Error, Result, Violation};
pub use model::{MarkovSystem, SystemConfig};
pub use sim::EmpiricalMeasure;
pub use stats::Estimate;
pub use word::{PastWord, Word};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/systems.md")]
    mod systems {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/coding.md")]
    mod coding {}
    #[doc = include_str!("../../../book/src/cylinders.md")]
    mod cylinders {}
    #[doc = include_str!("../../../book/src/divergence.md")]
    mod divergence {}
    #[doc = include_str!("../../../book/src/covers.md")]
    mod covers {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
