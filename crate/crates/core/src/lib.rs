//! Watatani indices, Pimsner–Popa quasi-bases, reduced basic constructions
//! and interior/exterior angles between compatible intermediate subalgebras,
//! for finite-dimensional *-algebras realized inside matrix algebras.

pub mod algebra;
pub mod angle;
pub mod basic;
pub mod error;
pub mod expectation;
pub mod groups;
pub mod linalg;
pub mod pimsner;

pub use error::{Error, Result};
pub use linalg::{Matrix, Tolerances};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
