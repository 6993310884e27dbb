use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of the depot for every depot-based problem.
pub const DEPOT: usize = 0;

/// Default number of routes for MRPFF instances.
pub const DEFAULT_MRPFF_ROUTES: usize = 2;

pub const MIN_DEMAND: u32 = 1;
pub const MAX_DEMAND: u32 = 9;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Tsp,
    Cvrp,
    Mrpff,
}

impl ProblemKind {
    pub fn has_depot(self) -> bool {
        !matches!(self, ProblemKind::Tsp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Tsp => "tsp",
            ProblemKind::Cvrp => "cvrp",
            ProblemKind::Mrpff => "mrpff",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsp" => Ok(ProblemKind::Tsp),
            "cvrp" | "vrp" => Ok(ProblemKind::Cvrp),
            "mrpff" => Ok(ProblemKind::Mrpff),
            other => Err(Error::Config(format!("unknown problem kind '{other}'"))),
        }
    }
}

/// Vehicle capacity used for a CVRP instance with `customers` customers.
///
/// 30/40/50 for 20/50/100 customers, 20 for 10 or fewer; sizes in between
/// take the capacity of the next listed size.
pub fn default_capacity(customers: usize) -> u32 {
    match customers {
        0..=10 => 20,
        11..=20 => 30,
        21..=50 => 40,
        _ => 50,
    }
}

/// A routing problem on the unit square.
///
/// For depot problems node 0 is the depot and nodes `1..` are customers.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    kind: ProblemKind,
    nodes: Vec<Point>,
    demands: Vec<u32>,
    capacity: Option<u32>,
    num_routes: Option<usize>,
    seed: u64,
}

impl Instance {
    pub fn tsp(nodes: Vec<Point>) -> Result<Self> {
        Self::new(ProblemKind::Tsp, nodes, Vec::new(), None, None, 0)
    }

    pub fn cvrp(nodes: Vec<Point>, demands: Vec<u32>, capacity: u32) -> Result<Self> {
        Self::new(ProblemKind::Cvrp, nodes, demands, Some(capacity), None, 0)
    }

    pub fn mrpff(nodes: Vec<Point>, num_routes: usize) -> Result<Self> {
        Self::new(ProblemKind::Mrpff, nodes, Vec::new(), None, Some(num_routes), 0)
    }

    /// Builds an instance and checks every invariant of its kind.
    pub fn new(
        kind: ProblemKind,
        nodes: Vec<Point>,
        demands: Vec<u32>,
        capacity: Option<u32>,
        num_routes: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let inst = Instance {
            kind,
            nodes,
            demands,
            capacity,
            num_routes,
            seed,
        };
        inst.check()?;
        Ok(inst)
    }

    fn check(&self) -> Result<()> {
        let size_err = |detail: String| Error::Size {
            kind: self.kind,
            detail,
        };
        for (i, p) in self.nodes.iter().enumerate() {
            if !p.iter().all(|c| (0.0..=1.0).contains(c)) {
                return Err(Error::Structural(format!(
                    "node {i} at ({}, {}) lies outside the unit square",
                    p[0], p[1]
                )));
            }
        }
        match self.kind {
            ProblemKind::Tsp => {
                if self.nodes.len() < 2 {
                    return Err(size_err(format!("{} nodes, need at least 2", self.nodes.len())));
                }
                if !self.demands.is_empty() || self.capacity.is_some() || self.num_routes.is_some() {
                    return Err(Error::Structural(
                        "TSP instances carry no demands, capacity or route count".into(),
                    ));
                }
            }
            ProblemKind::Cvrp => {
                let customers = self.nodes.len().saturating_sub(1);
                if customers < 2 {
                    return Err(size_err(format!("{customers} customers, need at least 2")));
                }
                if self.demands.len() != self.nodes.len() {
                    return Err(Error::Structural(format!(
                        "{} demands for {} nodes",
                        self.demands.len(),
                        self.nodes.len()
                    )));
                }
                if self.demands[DEPOT] != 0 {
                    return Err(Error::Structural("depot demand must be 0".into()));
                }
                if let Some(i) = self.demands[1..]
                    .iter()
                    .position(|d| !(MIN_DEMAND..=MAX_DEMAND).contains(d))
                {
                    return Err(Error::Structural(format!(
                        "customer {} has demand {} outside {MIN_DEMAND}..={MAX_DEMAND}",
                        i + 1,
                        self.demands[i + 1]
                    )));
                }
                let cap = self
                    .capacity
                    .ok_or_else(|| Error::Structural("CVRP instance without capacity".into()))?;
                if cap <= MAX_DEMAND {
                    return Err(Error::Structural(format!(
                        "capacity {cap} must exceed the maximum demand {MAX_DEMAND}"
                    )));
                }
                if self.num_routes.is_some() {
                    return Err(Error::Structural("CVRP instances carry no route count".into()));
                }
            }
            ProblemKind::Mrpff => {
                let customers = self.nodes.len().saturating_sub(1);
                let k = self
                    .num_routes
                    .ok_or_else(|| Error::Structural("MRPFF instance without route count".into()))?;
                if k == 0 {
                    return Err(Error::Structural("MRPFF route count must be positive".into()));
                }
                if customers < 2 || customers < k {
                    return Err(size_err(format!(
                        "{customers} customers for {k} routes, need at least max(2, routes)"
                    )));
                }
                if !self.demands.is_empty() || self.capacity.is_some() {
                    return Err(Error::Structural("MRPFF instances carry no demands".into()));
                }
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    /// Total number of nodes, depot included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depot(&self) -> Option<usize> {
        self.kind.has_depot().then_some(DEPOT)
    }

    /// Indices of the nodes that must be visited exactly once.
    pub fn customers(&self) -> std::ops::Range<usize> {
        if self.kind.has_depot() {
            1..self.nodes.len()
        } else {
            0..self.nodes.len()
        }
    }

    pub fn num_customers(&self) -> usize {
        self.customers().len()
    }

    /// Per-node demands (CVRP only; empty otherwise).
    pub fn demands(&self) -> &[u32] {
        &self.demands
    }

    pub fn demand(&self, node: usize) -> u32 {
        self.demands.get(node).copied().unwrap_or(0)
    }

    pub fn capacity(&self) -> Option<u32> {
        self.capacity
    }

    pub fn num_routes(&self) -> Option<usize> {
        self.num_routes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn dist(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.nodes[a], self.nodes[b]);
        let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
        (dx * dx + dy * dy).sqrt()
    }

    /// Reorders nodes by `perm` (new node `i` is old node `perm[i]`).
    ///
    /// The depot must stay at index 0 for depot problems.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::LengthMismatch {
                left: perm.len(),
                right: self.len(),
            });
        }
        if self.kind.has_depot() && perm[0] != DEPOT {
            return Err(Error::Precondition("permutation must keep the depot first".into()));
        }
        let nodes = perm.iter().map(|&i| self.nodes[i]).collect();
        let demands = if self.demands.is_empty() {
            Vec::new()
        } else {
            perm.iter().map(|&i| self.demands[i]).collect()
        };
        Instance::new(
            self.kind,
            nodes,
            demands,
            self.capacity,
            self.num_routes,
            self.seed,
        )
    }
}

/// Draws an instance with `n` nodes (TSP) or `n` customers plus a depot.
///
/// Coordinates are i.i.d. uniform on the unit square and CVRP demands are
/// i.i.d. uniform on `{1, ..., 9}`. The output depends only on the arguments.
pub fn generate_instance(kind: ProblemKind, n: usize, seed: u64) -> Result<Instance> {
    if n < 2 {
        return Err(Error::Size {
            kind,
            detail: format!("n = {n}, need at least 2"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = if kind.has_depot() { n + 1 } else { n };
    let nodes: Vec<Point> = (0..total).map(|_| [rng.gen(), rng.gen()]).collect();
    match kind {
        ProblemKind::Tsp => Instance::new(kind, nodes, Vec::new(), None, None, seed),
        ProblemKind::Cvrp => {
            let demands = std::iter::once(0)
                .chain((0..n).map(|_| rng.gen_range(MIN_DEMAND..=MAX_DEMAND)))
                .collect();
            Instance::new(kind, nodes, demands, Some(default_capacity(n)), None, seed)
        }
        ProblemKind::Mrpff => Instance::new(
            kind,
            nodes,
            Vec::new(),
            None,
            Some(DEFAULT_MRPFF_ROUTES),
            seed,
        ),
    }
}

/// `count` instances with seeds `seed, seed + 1, ...`.
pub fn generate_instances(kind: ProblemKind, n: usize, count: usize, seed: u64) -> Result<Vec<Instance>> {
    (0..count as u64)
        .map(|i| generate_instance(kind, n, seed.wrapping_add(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cvrp_demands_within_range() {
        for seed in 0..200 {
            let inst = generate_instance(ProblemKind::Cvrp, 20, seed).unwrap();
            assert_eq!(inst.demand(DEPOT), 0);
            for c in inst.customers() {
                let d = inst.demand(c);
                assert!((1..=9).contains(&d), "demand {d}");
            }
            assert_eq!(inst.capacity(), Some(30));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_instance(ProblemKind::Tsp, 2, 7).unwrap();
        let b = generate_instance(ProblemKind::Tsp, 2, 7).unwrap();
        let bits = |i: &Instance| {
            i.nodes()
                .iter()
                .flat_map(|p| p.iter().map(|c| c.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(a, generate_instance(ProblemKind::Tsp, 2, 8).unwrap());
    }

    #[test]
    fn mean_demand_is_five() {
        // Monte Carlo over 10^4 instances; the standard error of the mean is
        // sqrt(20/3) / sqrt(2e5) ~ 0.006, so [4.9, 5.1] is a ~17 sigma band.
        let mut sum = 0u64;
        let mut count = 0u64;
        for seed in 0..10_000 {
            let inst = generate_instance(ProblemKind::Cvrp, 20, seed).unwrap();
            sum += inst.customers().map(|c| inst.demand(c) as u64).sum::<u64>();
            count += inst.num_customers() as u64;
        }
        let mean = sum as f64 / count as f64;
        assert!((4.9..=5.1).contains(&mean), "mean demand {mean}");
    }

    #[test]
    fn coordinate_mean_is_centered() {
        // 10^5 coordinate draws; each axis has sigma = sqrt(1/12)/sqrt(1e5).
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut count = 0usize;
        for seed in 0..5_000 {
            for p in generate_instance(ProblemKind::Tsp, 20, seed).unwrap().nodes() {
                sx += p[0];
                sy += p[1];
                count += 1;
            }
        }
        assert_eq!(count, 100_000);
        let sigma = (1.0f64 / 12.0).sqrt() / (count as f64).sqrt();
        assert!((sx / count as f64 - 0.5).abs() < 3.0 * sigma);
        assert!((sy / count as f64 - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn rejects_small_sizes() {
        for kind in [ProblemKind::Tsp, ProblemKind::Cvrp, ProblemKind::Mrpff] {
            assert!(matches!(
                generate_instance(kind, 1, 0),
                Err(Error::Size { .. })
            ));
        }
        let mrpff = generate_instance(ProblemKind::Mrpff, 2, 0).unwrap();
        assert_eq!(mrpff.num_routes(), Some(2));
        assert_eq!(mrpff.len(), 3);
    }

    #[test]
    fn rejects_bad_cvrp_data() {
        let nodes = vec![[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]];
        assert!(Instance::cvrp(nodes.clone(), vec![0, 3, 10], 30).is_err());
        assert!(Instance::cvrp(nodes.clone(), vec![1, 3, 3], 30).is_err());
        assert!(Instance::cvrp(nodes.clone(), vec![0, 3, 3], 9).is_err());
        assert!(Instance::cvrp(nodes, vec![0, 3, 3], 30).is_ok());
        assert!(Instance::tsp(vec![[1.5, 0.0], [0.0, 0.0]]).is_err());
    }

    #[test]
    fn capacities_follow_size_table() {
        assert_eq!(default_capacity(10), 20);
        assert_eq!(default_capacity(20), 30);
        assert_eq!(default_capacity(50), 40);
        assert_eq!(default_capacity(100), 50);
    }
}
