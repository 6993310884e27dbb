//! Problem definitions, instance generation, cost evaluation and
//! feasibility validation for TSP, CVRP and MRPFF.

mod instance;
pub mod io;
mod solution;

pub use instance::{
    default_capacity, generate_instance, generate_instances, Instance, Point, ProblemKind,
    DEFAULT_MRPFF_ROUTES, DEPOT, MAX_DEMAND, MIN_DEMAND,
};
pub use solution::{tour_length, validate, Solution, ValidationReport, Violation};
