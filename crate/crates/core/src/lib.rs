//! Feature-direction knowledge distillation with a locality-sensitive
//! hashing loss.
//!
//! The student mimics the teacher's penultimate feature through two terms:
//! a plain MSE, and a binary cross-entropy that asks the student's soft
//! random-hyperplane codes to match the teacher's hard codes. The second term
//! only cares about direction, which [`theory`] checks numerically.
//!
//! See the guide in `book/` for a walk-through.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod io;
pub mod losses;
pub mod lsh;
pub mod model;
pub mod numerics;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/lsh-loss.md")]
    mod lsh_loss {}
    #[doc = include_str!("../../../book/src/embedding.md")]
    mod embedding {}
    #[doc = include_str!("../../../book/src/theory.md")]
    mod theory {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
