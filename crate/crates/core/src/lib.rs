//! Actor-critic learning for mean field control games.
//!
//! The crate couples three pieces: a small MLP with reverse and
//! forward-mode differentiation ([`net`]), a linear-quadratic benchmark
//! with a closed-form solution ([`lq`]), and score-based sampling of the
//! population distributions ([`score`]). [`agents`] and [`train`] combine them
//! into the training loops, [`eval`] scores a trained run against the
//! benchmark.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::large_enum_variant)]

pub mod agents;
pub mod cli;
pub mod error;
pub mod eval;
pub mod lq;
pub mod net;
pub mod rng;
pub mod score;
pub mod train;

pub use error::{Error, Result};
pub use lq::{AnalyticalSolution, LqParams};
pub use net::{adam_step, AdamState, Architecture, MlpNet};
pub use score::{EmpiricalMeasure, LangevinConfig};
pub use train::{train, Algorithm, TrainConfig, Trainer};
