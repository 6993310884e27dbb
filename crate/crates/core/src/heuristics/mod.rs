//! Non-learned TSP baselines and the 2-opt improver.

mod insertion;
mod two_opt;

pub use insertion::{farthest_insertion, nearest_insertion, nearest_neighbor, random_insertion};
pub use two_opt::{two_opt, two_opt_with_stats, TwoOptConfig, TwoOptStats, TwoOptStrategy};
