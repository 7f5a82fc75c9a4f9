//! Null space property toolkit.
//!
//! Certifies the (stable) null space property of dictionaries and of sensing
//! compositions `Phi * D`, estimates Gaussian widths of the NSP-violating set
//! `S_gamma`, evaluates small-ball measurement-count bounds and runs seeded
//! experiment campaigns around l1-synthesis recovery.
//!
//! Module map:
//!
//! * [`numerics`]: dense linear algebra helpers, soft thresholding, a
//!   two-phase simplex LP solver, special functions and the seeded RNG.
//! * [`dictionary`]: dictionaries with cached column-norm bound and
//!   operator norm, plus full-spark checks.
//! * [`subgaussian`]: row distributions tagged with their `(alpha, sigma)`
//!   parameters and measurement-matrix sampling.
//! * [`nsp`]: exact NSP certification by linear programming, `eta`
//!   estimation and the stable-recovery error bound.
//! * [`width`]: Monte Carlo Gaussian width estimators and closed-form bounds.
//! * [`smallball`]: small-ball quantities and measurement-count calculators.
//! * [`solver`]: basis pursuit and l1-synthesis decoders.
//! * [`harness`]: config-driven experiments emitting CSV.

pub mod dictionary;
pub mod error;
pub mod harness;
pub mod nsp;
pub mod numerics;
pub mod smallball;
pub mod solver;
pub mod subgaussian;
pub mod width;

pub use dictionary::{Dictionary, DictionaryKind};
pub use error::{Error, Result};
pub use nsp::{NspCertificate, SgammaParams, Verdict};
pub use numerics::{Matrix, RngStream, Vector};
pub use smallball::{BoundInputs, FormulaId};
pub use subgaussian::{SpecKind, SubgaussianSpec};
pub use width::{ConeParams, WidthEstimate};
