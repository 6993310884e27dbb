use std::fmt;

use crate::error::{Error, Result};

use super::instance::{Instance, ProblemKind, DEPOT};

/// A complete decoded solution: the action sequence plus its route split.
///
/// For depot problems the route boundaries are depot visits in `actions`;
/// the departure from and final return to the depot are implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    actions: Vec<usize>,
    routes: Vec<Vec<usize>>,
    total_length: f64,
    feasible: bool,
}

impl Solution {
    /// Builds a solution, deriving routes and length and running the validator.
    pub fn from_actions(inst: &Instance, actions: Vec<usize>) -> Result<Self> {
        check_indices(inst, &actions)?;
        let routes = split_routes(inst.kind(), &actions);
        let total_length = routes_length(inst, &routes);
        let mut sol = Solution {
            actions,
            routes,
            total_length,
            feasible: false,
        };
        sol.feasible = validate(inst, &sol).feasible;
        Ok(sol)
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn routes(&self) -> &[Vec<usize>] {
        &self.routes
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn feasible(&self) -> bool {
        self.feasible
    }

    pub fn into_actions(self) -> Vec<usize> {
        self.actions
    }

    /// Rebuilds a depot solution from explicit routes.
    pub fn from_routes(inst: &Instance, routes: &[Vec<usize>]) -> Result<Self> {
        if !inst.kind().has_depot() {
            return match routes {
                [tour] => Self::from_actions(inst, tour.clone()),
                _ => Err(Error::Structural("a TSP solution is a single tour".into())),
            };
        }
        let mut actions = Vec::new();
        for (i, r) in routes.iter().enumerate() {
            if i > 0 {
                actions.push(DEPOT);
            }
            actions.extend_from_slice(r);
        }
        Self::from_actions(inst, actions)
    }
}

fn check_indices(inst: &Instance, actions: &[usize]) -> Result<()> {
    match actions.iter().find(|&&a| a >= inst.len()) {
        Some(a) => Err(Error::Structural(format!(
            "node index {a} out of range for {} nodes",
            inst.len()
        ))),
        None => Ok(()),
    }
}

fn split_routes(kind: ProblemKind, actions: &[usize]) -> Vec<Vec<usize>> {
    if kind == ProblemKind::Tsp {
        return if actions.is_empty() {
            Vec::new()
        } else {
            vec![actions.to_vec()]
        };
    }
    let mut body = actions;
    if let [DEPOT, rest @ ..] = body {
        body = rest;
    }
    if let [rest @ .., DEPOT] = body {
        body = rest;
    }
    if body.is_empty() {
        return Vec::new();
    }
    body.split(|&a| a == DEPOT).map(<[usize]>::to_vec).collect()
}

fn routes_length(inst: &Instance, routes: &[Vec<usize>]) -> f64 {
    let closed = |seq: &[usize], anchor: Option<usize>| -> f64 {
        let Some((&first, _)) = seq.split_first() else {
            return 0.0;
        };
        let last = *seq.last().unwrap();
        let inner: f64 = seq.windows(2).map(|w| inst.dist(w[0], w[1])).sum();
        match anchor {
            Some(d) => inst.dist(d, first) + inner + inst.dist(last, d),
            None => inner + inst.dist(last, first),
        }
    };
    let anchor = inst.depot();
    routes.iter().map(|r| closed(r, anchor)).sum()
}

/// Euclidean length of an action sequence: the closed tour for TSP, or the
/// sum of depot-closed routes for depot problems.
pub fn tour_length(inst: &Instance, actions: &[usize]) -> Result<f64> {
    check_indices(inst, actions)?;
    Ok(routes_length(inst, &split_routes(inst.kind(), actions)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NodeOutOfRange(usize),
    /// Customer never visited.
    Missing(usize),
    /// Customer visited more than once.
    Duplicate { node: usize, times: usize },
    /// The depot appears inside a TSP tour or a route is otherwise malformed.
    DepotInTour,
    EmptyRoute(usize),
    CapacityExceeded {
        route: usize,
        load: u32,
        capacity: u32,
    },
    RouteCount { expected: usize, found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NodeOutOfRange(i) => write!(f, "node {i} out of range"),
            Violation::Missing(i) => write!(f, "customer {i} not visited"),
            Violation::Duplicate { node, times } => write!(f, "customer {node} visited {times} times"),
            Violation::DepotInTour => write!(f, "depot visited inside a tour"),
            Violation::EmptyRoute(r) => write!(f, "route {r} is empty"),
            Violation::CapacityExceeded {
                route,
                load,
                capacity,
            } => write!(f, "route {route} carries {load} > capacity {capacity}"),
            Violation::RouteCount { expected, found } => {
                write!(f, "{found} routes, expected {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

/// Checks a solution against the routing constraints of its instance.
///
/// Degree constraints become "every customer exactly once", the depot
/// constraints become the route count for MRPFF, and capacity cuts are
/// checked per route: a constructed route is connected, so the subset
/// form reduces to each route's load not exceeding the capacity.
pub fn validate(inst: &Instance, sol: &Solution) -> ValidationReport {
    let mut violations = Vec::new();
    let mut visits = vec![0usize; inst.len()];
    for &a in sol.actions() {
        match visits.get_mut(a) {
            Some(v) => *v += 1,
            None => violations.push(Violation::NodeOutOfRange(a)),
        }
    }
    for c in inst.customers() {
        match visits[c] {
            0 => violations.push(Violation::Missing(c)),
            1 => {}
            times => violations.push(Violation::Duplicate { node: c, times }),
        }
    }

    match inst.kind() {
        ProblemKind::Tsp => {
            if sol.routes().len() > 1 {
                violations.push(Violation::DepotInTour);
            }
        }
        ProblemKind::Cvrp | ProblemKind::Mrpff => {
            for (i, r) in sol.routes().iter().enumerate() {
                if r.is_empty() {
                    violations.push(Violation::EmptyRoute(i));
                }
            }
        }
    }

    if let Some(capacity) = inst.capacity() {
        for (i, r) in sol.routes().iter().enumerate() {
            let load: u32 = r.iter().filter(|&&a| a < inst.len()).map(|&a| inst.demand(a)).sum();
            if load > capacity {
                violations.push(Violation::CapacityExceeded {
                    route: i,
                    load,
                    capacity,
                });
            }
        }
    }

    if let Some(expected) = inst.num_routes() {
        let found = sol.routes().len();
        if found != expected {
            violations.push(Violation::RouteCount { expected, found });
        }
    }

    ValidationReport {
        feasible: violations.is_empty(),
        violations,
    }
}
