//! Teacher/student knowledge distillation for action recognition in dark video.
//!
//! A teacher classifier sees light-enhanced clips, a student of the same
//! architecture sees the raw dark clips and is trained on ground-truth labels
//! plus the teacher's softened predictions. Only the student runs at inference.
//!
//! The crate is `no_std` (with `alloc`). File formats, configuration parsing and
//! the command-line driver live in the `dlkd` companion crate.

#![no_std]

extern crate alloc;

pub mod adamw;
pub mod conv;
pub mod data;
pub mod enhance;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod gradcheck_suite;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod real;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use real::Real;
pub use tensor::Tensor;
