//! Numerical toolkit for (α, β) partial rough paths: index sets, anchored
//! path storage with Chen-based reconstruction, the rough-volatility lift,
//! the compensated-sum rough integral, a step-2 RDE solver, the short-maturity
//! rate function, and Monte Carlo consistency checks.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod index;
pub mod integrate;
pub mod lift;
pub mod mc;
pub mod path;
pub mod quadrature;
pub mod rate;
pub mod rde;

pub use error::{Error, Result};
pub use grid::Grid;
pub use index::{build_index_sets, multiindex_enumerate_leq, IndexConfig, MultiIndex};
pub use path::{Increments, PartialRoughPath};
