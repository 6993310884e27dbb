//! Learned construction heuristics for routing problems.
//!
//! An attention encoder-decoder policy builds TSP, CVRP and MRPFF solutions
//! one node at a time. It is trained with entropy-regularized policy
//! gradients (a multi-trajectory shared-baseline trainer and an actor-critic
//! trainer) and evaluated against classical insertion heuristics, with
//! greedy, sampling, beam-search and 2-opt inference.

pub mod error;
pub mod heuristics;
pub mod policy;
pub mod routing;
pub mod search;
pub mod training;

pub use error::{Error, Result};
