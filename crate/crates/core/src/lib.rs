//! Onsager–Machlup functionals, small-ball ratios, Γ-convergence probes and
//! MAP estimators for Gaussian and Besov-1 measures on truncated sequence
//! spaces, together with closed-form counterexamples.

pub mod bip;
pub mod counterexamples;
pub mod error;
pub mod gamma;
pub mod measures;
pub mod numerics;
pub mod om;
pub mod report;
pub mod spaces;

pub use error::{Error, Result};
