use crate::error::{Error, Result};
use crate::routing::{Instance, ProblemKind, Solution};

/// Largest TSP the exhaustive search accepts.
pub const MAX_EXACT_NODES: usize = 10;

/// Optimal TSP tour by depth-first enumeration of every permutation with
/// node 0 fixed, pruning partial tours that are already too long.
pub fn exact_tsp(inst: &Instance) -> Result<Solution> {
    if inst.kind() != ProblemKind::Tsp {
        return Err(Error::UnsupportedKind {
            operation: "exact_tsp",
            kind: inst.kind(),
        });
    }
    let n = inst.len();
    if n > MAX_EXACT_NODES {
        return Err(Error::Precondition(format!(
            "exhaustive search supports at most {MAX_EXACT_NODES} nodes, got {n}"
        )));
    }
    let mut search = Search {
        inst,
        n,
        path: vec![0],
        used: vec![false; n],
        best_len: f64::INFINITY,
        best: Vec::new(),
    };
    search.used[0] = true;
    search.dfs(0.0);
    Solution::from_actions(inst, search.best)
}

struct Search<'a> {
    inst: &'a Instance,
    n: usize,
    path: Vec<usize>,
    used: Vec<bool>,
    best_len: f64,
    best: Vec<usize>,
}

impl Search<'_> {
    fn dfs(&mut self, len: f64) {
        let last = *self.path.last().expect("path starts at node 0");
        if self.path.len() == self.n {
            let total = len + self.inst.dist(last, 0);
            if total < self.best_len {
                self.best_len = total;
                self.best = self.path.clone();
            }
            return;
        }
        for next in 1..self.n {
            if self.used[next] {
                continue;
            }
            let l = len + self.inst.dist(last, next);
            if l >= self.best_len {
                continue;
            }
            self.used[next] = true;
            self.path.push(next);
            self.dfs(l);
            self.path.pop();
            self.used[next] = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::generate_instance;

    #[test]
    fn square_optimum_is_perimeter() {
        let inst = Instance::tsp(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let sol = exact_tsp(&inst).unwrap();
        assert!((sol.total_length() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_large_and_non_tsp() {
        assert!(exact_tsp(&generate_instance(ProblemKind::Tsp, 11, 0).unwrap()).is_err());
        assert!(exact_tsp(&generate_instance(ProblemKind::Cvrp, 4, 0).unwrap()).is_err());
    }
}
