use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::routing::{validate, Instance, ProblemKind, Solution, DEPOT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwoOptStrategy {
    /// Apply the single best move of each sweep.
    BestImprovement,
    /// Apply every improving move as soon as it is found.
    FirstImprovement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoOptConfig {
    pub max_passes: usize,
    pub strategy: TwoOptStrategy,
    /// A move must shorten the tour by more than this.
    pub epsilon: f64,
}

impl Default for TwoOptConfig {
    fn default() -> Self {
        TwoOptConfig {
            max_passes: 1000,
            strategy: TwoOptStrategy::BestImprovement,
            epsilon: 1e-10,
        }
    }
}

impl TwoOptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_passes == 0 {
            return Err(Error::Config("two-opt max_passes must be at least 1".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config("two-opt epsilon must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Statistics of one 2-opt run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TwoOptStats {
    pub passes: usize,
    pub moves: usize,
}

/// 2-opt on the closed cycle `seq`; position 0 never moves.
///
/// Removing edges (a, b) and (c, d) and reconnecting as (a, c), (b, d)
/// reverses the segment b..=c.
fn improve_cycle(
    inst: &Instance,
    seq: &mut [usize],
    cfg: &TwoOptConfig,
    stats: &mut TwoOptStats,
) {
    let len = seq.len();
    if len < 4 {
        return;
    }
    let gain = |seq: &[usize], i: usize, j: usize| {
        let (a, b) = (seq[i], seq[i + 1]);
        let (c, d) = (seq[j], seq[(j + 1) % len]);
        inst.dist(a, b) + inst.dist(c, d) - inst.dist(a, c) - inst.dist(b, d)
    };
    for _ in 0..cfg.max_passes {
        stats.passes += 1;
        let mut improved = false;
        match cfg.strategy {
            TwoOptStrategy::BestImprovement => {
                let mut best = (cfg.epsilon, 0, 0);
                for i in 0..len - 2 {
                    // j = len - 1 with i = 0 would remove two adjacent edges.
                    let j_end = if i == 0 { len - 1 } else { len };
                    for j in i + 2..j_end {
                        let g = gain(seq, i, j);
                        if g > best.0 {
                            best = (g, i, j);
                        }
                    }
                }
                if best.0 > cfg.epsilon {
                    seq[best.1 + 1..=best.2].reverse();
                    stats.moves += 1;
                    improved = true;
                }
            }
            TwoOptStrategy::FirstImprovement => {
                for i in 0..len - 2 {
                    let j_end = if i == 0 { len - 1 } else { len };
                    for j in i + 2..j_end {
                        if gain(seq, i, j) > cfg.epsilon {
                            seq[i + 1..=j].reverse();
                            stats.moves += 1;
                            improved = true;
                        }
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Improves a feasible solution with 2-opt moves.
///
/// TSP tours are optimized as one cycle. For depot problems each route is
/// optimized separately as the cycle depot -> route -> depot, so route
/// membership, loads and route count are unchanged.
pub fn two_opt(inst: &Instance, sol: &Solution, cfg: &TwoOptConfig) -> Result<Solution> {
    two_opt_with_stats(inst, sol, cfg).map(|(s, _)| s)
}

pub fn two_opt_with_stats(
    inst: &Instance,
    sol: &Solution,
    cfg: &TwoOptConfig,
) -> Result<(Solution, TwoOptStats)> {
    cfg.validate()?;
    let report = validate(inst, sol);
    if !report.feasible {
        let list: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
        return Err(Error::Precondition(format!(
            "two_opt needs a feasible solution: {}",
            list.join("; ")
        )));
    }
    let mut stats = TwoOptStats::default();
    let out = match inst.kind() {
        ProblemKind::Tsp => {
            let mut tour = sol.actions().to_vec();
            improve_cycle(inst, &mut tour, cfg, &mut stats);
            Solution::from_actions(inst, tour)?
        }
        ProblemKind::Cvrp | ProblemKind::Mrpff => {
            let mut routes = Vec::with_capacity(sol.routes().len());
            for r in sol.routes() {
                let mut cycle = Vec::with_capacity(r.len() + 1);
                cycle.push(DEPOT);
                cycle.extend_from_slice(r);
                improve_cycle(inst, &mut cycle, cfg, &mut stats);
                routes.push(cycle[1..].to_vec());
            }
            Solution::from_routes(inst, &routes)?
        }
    };
    // Reversals are exact but the recomputed sum can differ in the last ulp.
    if out.total_length() > sol.total_length() {
        return Ok((sol.clone(), stats));
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::generate_instance;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn square() -> Instance {
        Instance::tsp(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    #[test]
    fn uncrosses_square() {
        let inst = square();
        let sol = Solution::from_actions(&inst, vec![0, 2, 1, 3]).unwrap();
        let out = two_opt(&inst, &sol, &TwoOptConfig::default()).unwrap();
        assert_eq!(out.actions(), &[0, 1, 2, 3]);
        assert_eq!(out.total_length(), 4.0);
    }

    #[test]
    fn fixed_point_unchanged() {
        let inst = square();
        let sol = Solution::from_actions(&inst, vec![0, 1, 2, 3]).unwrap();
        let (out, stats) = two_opt_with_stats(&inst, &sol, &TwoOptConfig::default()).unwrap();
        assert_eq!(out, sol);
        assert_eq!(stats.moves, 0);
    }

    #[test]
    fn infeasible_input_rejected() {
        let inst = square();
        let sol = Solution::from_actions(&inst, vec![0, 1, 2]).unwrap();
        assert!(matches!(
            two_opt(&inst, &sol, &TwoOptConfig::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = TwoOptConfig {
            max_passes: 0,
            ..TwoOptConfig::default()
        };
        let inst = square();
        let sol = Solution::from_actions(&inst, vec![0, 1, 2, 3]).unwrap();
        assert!(matches!(two_opt(&inst, &sol, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn monotone_and_idempotent_on_random_tours() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for strategy in [TwoOptStrategy::BestImprovement, TwoOptStrategy::FirstImprovement] {
            let cfg = TwoOptConfig {
                strategy,
                ..TwoOptConfig::default()
            };
            for seed in 0..100 {
                let inst = generate_instance(ProblemKind::Tsp, 20, seed).unwrap();
                let mut tour: Vec<usize> = (0..20).collect();
                tour.shuffle(&mut rng);
                let sol = Solution::from_actions(&inst, tour).unwrap();
                let once = two_opt(&inst, &sol, &cfg).unwrap();
                assert!(once.total_length() <= sol.total_length());
                assert!(once.feasible());
                let twice = two_opt(&inst, &once, &cfg).unwrap();
                assert_eq!(twice.total_length(), once.total_length());
            }
        }
    }

    #[test]
    fn routes_keep_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..50 {
            let inst = generate_instance(ProblemKind::Cvrp, 20, seed).unwrap();
            // Split a random customer order into capacity-respecting routes.
            let mut order: Vec<usize> = inst.customers().collect();
            order.shuffle(&mut rng);
            let cap = inst.capacity().unwrap();
            let mut routes: Vec<Vec<usize>> = vec![Vec::new()];
            let mut load = 0;
            for c in order {
                if load + inst.demand(c) > cap {
                    routes.push(Vec::new());
                    load = 0;
                }
                load += inst.demand(c);
                routes.last_mut().unwrap().push(c);
            }
            let sol = Solution::from_routes(&inst, &routes).unwrap();
            assert!(sol.feasible());
            let out = two_opt(&inst, &sol, &TwoOptConfig::default()).unwrap();
            assert!(out.feasible());
            assert!(out.total_length() <= sol.total_length());
            assert_eq!(out.routes().len(), routes.len());
            for (a, b) in out.routes().iter().zip(&routes) {
                let (mut a, mut b) = (a.clone(), b.clone());
                a.sort_unstable();
                b.sort_unstable();
                assert_eq!(a, b);
            }
        }
    }
}
