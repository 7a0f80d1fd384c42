//! Gliding-hump witnesses for the inclusion of `l_p` into weak `l_p`.
//!
//! Given a concretely generated infinite-dimensional subspace `X` of `l_p`,
//! the crate builds vectors `z_N` in `X` whose `l_p` norm grows like
//! `N^{1/p}` while their weak `l_p` quasinorm stays below a fixed constant,
//! and certifies every intermediate inequality numerically.

pub mod error;
pub mod humpbuilder;
pub mod seqcore;
pub mod subspace;
pub mod verifier;
pub mod cli;

pub use error::{Error, Result};
pub use seqcore::{Exponent, RearrangedProfile, SparseSeq};
