//! Coefficient-shape transfer learning for scalar-on-function linear regression.
//!
//! Curves live on a shared grid ([`curves`]). The target domain's covariance
//! is decomposed by FPCA ([`fpca`]), every domain is projected onto the
//! leading eigenfunctions, and the target coefficient is estimated by pooling
//! the shapes of informative source fits and rescaling on the target
//! ([`regress`]). Informative sources are found by penalizing the shape
//! misalignment between coefficient vectors ([`shape`], [`select`]).

pub mod bootstrap;
pub mod curves;
pub mod error;
pub mod fpca;
pub mod io;
mod par;
pub mod regress;
pub mod rng;
pub mod select;
pub mod shape;
pub mod simgen;

#[cfg(feature = "cli")]
pub mod cli;

pub use curves::{center, inner_product, l2_norm, Curve, DomainDataset, Grid};
pub use error::{Error, Result};
pub use fpca::{BasisSystem, ScoreMatrix};
pub use regress::{transfer_estimate, DimChoice, TransferFit, TransferProblem};
pub use select::{select_informative, PenaltyConfig, PenaltyKind, Scorer, SelectionConfig};
pub use shape::{misalignment, normalized_misalignment, MisalignmentReport};
