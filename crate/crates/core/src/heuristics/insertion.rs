use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::routing::{Instance, ProblemKind, Solution};

fn require_tsp(inst: &Instance, operation: &'static str) -> Result<()> {
    match inst.kind() {
        ProblemKind::Tsp => Ok(()),
        kind => Err(Error::UnsupportedKind { operation, kind }),
    }
}

/// Starts at node 0 and repeatedly moves to the closest unvisited node.
pub fn nearest_neighbor(inst: &Instance) -> Result<Solution> {
    require_tsp(inst, "nearest_neighbor")?;
    let n = inst.len();
    let mut visited = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let mut cur = 0;
    visited[0] = true;
    tour.push(0);
    for _ in 1..n {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for j in 0..n {
            if !visited[j] {
                let d = inst.dist(cur, j);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
        }
        visited[best] = true;
        tour.push(best);
        cur = best;
    }
    Solution::from_actions(inst, tour)
}

/// Inserts `node` into `tour` at the position with the least added length.
fn cheapest_insert(inst: &Instance, tour: &mut Vec<usize>, node: usize) {
    if tour.len() < 2 {
        tour.push(node);
        return;
    }
    let mut best_pos = 0;
    let mut best_cost = f64::INFINITY;
    for i in 0..tour.len() {
        let a = tour[i];
        let b = tour[(i + 1) % tour.len()];
        let cost = inst.dist(a, node) + inst.dist(node, b) - inst.dist(a, b);
        if cost < best_cost {
            best_cost = cost;
            best_pos = i + 1;
        }
    }
    tour.insert(best_pos, node);
}

#[derive(Clone, Copy)]
enum Selection {
    Nearest,
    Farthest,
}

/// Insertion driver shared by nearest and farthest insertion.
///
/// `closest[j]` tracks the distance from unvisited node `j` to the tour; the
/// selection rule picks the unvisited node minimizing (nearest) or
/// maximizing (farthest) it, ties to the lowest index.
fn select_and_insert(inst: &Instance, first: usize, rule: Selection) -> Vec<usize> {
    let n = inst.len();
    let mut in_tour = vec![false; n];
    let mut closest = vec![f64::INFINITY; n];
    let mut tour = Vec::with_capacity(n);
    let add = |node: usize, tour: &mut Vec<usize>, in_tour: &mut Vec<bool>, closest: &mut Vec<f64>| {
        in_tour[node] = true;
        cheapest_insert(inst, tour, node);
        for j in 0..n {
            if !in_tour[j] {
                closest[j] = closest[j].min(inst.dist(node, j));
            }
        }
    };
    add(first, &mut tour, &mut in_tour, &mut closest);
    for _ in 1..n {
        let mut pick = usize::MAX;
        let mut key = match rule {
            Selection::Nearest => f64::INFINITY,
            Selection::Farthest => f64::NEG_INFINITY,
        };
        for j in 0..n {
            if in_tour[j] {
                continue;
            }
            let better = match rule {
                Selection::Nearest => closest[j] < key,
                Selection::Farthest => closest[j] > key,
            };
            if better {
                key = closest[j];
                pick = j;
            }
        }
        add(pick, &mut tour, &mut in_tour, &mut closest);
    }
    tour
}

/// Starts from node 0; repeatedly inserts the unvisited node closest to the tour.
pub fn nearest_insertion(inst: &Instance) -> Result<Solution> {
    require_tsp(inst, "nearest_insertion")?;
    let tour = select_and_insert(inst, 0, Selection::Nearest);
    Solution::from_actions(inst, tour)
}

/// Starts from the node with the largest distance to any other node; repeatedly
/// inserts the unvisited node whose distance to the tour is largest.
pub fn farthest_insertion(inst: &Instance) -> Result<Solution> {
    require_tsp(inst, "farthest_insertion")?;
    let n = inst.len();
    let mut first = 0;
    let mut far = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            let d = inst.dist(i, j);
            if d > far {
                far = d;
                first = i;
            }
        }
    }
    let tour = select_and_insert(inst, first, Selection::Farthest);
    Solution::from_actions(inst, tour)
}

/// Inserts nodes in a seeded random order, each at its cheapest position.
pub fn random_insertion(inst: &Instance, seed: u64) -> Result<Solution> {
    require_tsp(inst, "random_insertion")?;
    let mut order: Vec<usize> = (0..inst.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut tour = Vec::with_capacity(order.len());
    for node in order {
        cheapest_insert(inst, &mut tour, node);
    }
    Solution::from_actions(inst, tour)
}
