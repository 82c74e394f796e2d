// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use openblas_src as _;

pub mod benchmark;
pub mod config;
pub mod error;
pub mod galerkin;
pub mod oracle;
pub mod orthopoly;
pub mod par;
pub mod plant;
pub mod sdp;
pub mod simulate;
pub mod synthesis;
pub mod validate;

pub use error::{Error, Result};
