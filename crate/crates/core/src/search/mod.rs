//! Inference-time search over the learned policy: greedy decoding,
//! best-of-K sampling, beam search and optional 2-opt refinement.

mod exact;

use std::cmp::Ordering;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristics::{two_opt, TwoOptConfig};
use crate::policy::{
    decode_on, encode_on, log_softmax, rollout, sample_action, step_logits, DecodeMode, DecodeState, PolicyParams, Tape,
    Trajectory,
};
use crate::routing::{Instance, Solution};

pub use exact::{exact_tsp, MAX_EXACT_NODES};

pub const DEFAULT_BEAM_WIDTH: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Greedy,
    /// Best of `k` sampled rollouts; rollout `j` uses seed `seed + j`.
    Sample { k: usize, seed: u64 },
    Beam { width: usize },
}

impl SearchMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SearchMode::Sample { k: 0, .. } => Err(Error::Config("sample count must be at least 1".into())),
            SearchMode::Beam { width: 0 } => Err(Error::Config("beam width must be at least 1".into())),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for SearchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SearchMode::Greedy => write!(f, "greedy"),
            SearchMode::Sample { k, .. } => write!(f, "sample:{k}"),
            SearchMode::Beam { width } => write!(f, "beam:{width}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub mode: SearchMode,
    pub post_2opt: bool,
    pub two_opt: TwoOptConfig,
}

impl SearchConfig {
    pub fn greedy() -> Self {
        SearchConfig {
            mode: SearchMode::Greedy,
            post_2opt: false,
            two_opt: TwoOptConfig::default(),
        }
    }

    pub fn with_mode(mode: SearchMode) -> Self {
        SearchConfig {
            mode,
            ..Self::greedy()
        }
    }

    pub fn with_two_opt(mut self, on: bool) -> Self {
        self.post_2opt = on;
        self
    }

    /// Short label such as `greedy+2opt` or `beam:10`.
    pub fn label(&self) -> String {
        if self.post_2opt {
            format!("{}+2opt", self.mode)
        } else {
            self.mode.to_string()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchMetrics {
    /// Complete solutions the search compared.
    pub candidates_evaluated: usize,
    /// Wall time of the search, including 2-opt.
    pub seconds: f64,
    /// Length before 2-opt.
    pub construction_length: f64,
}

/// Decodes `k` sampled rollouts of `inst` together; rollout `j` draws from
/// its own generator seeded with `seed + j`.
pub fn sample_many(inst: &Instance, params: &PolicyParams, k: usize, seed: u64) -> Result<Vec<Trajectory>> {
    let mut tape = Tape::new();
    let enc = encode_on(&mut tape, inst, params);
    let mut rngs: Vec<ChaCha8Rng> = (0..k as u64)
        .map(|j| ChaCha8Rng::seed_from_u64(seed.wrapping_add(j)))
        .collect();
    let (states, _) = decode_on(&mut tape, params, &enc, inst, k, |row, _, d| {
        Ok(sample_action(d, &mut rngs[row]))
    })?;
    states
        .into_iter()
        .map(|s| Trajectory::from_state(inst, s))
        .collect()
}

struct Beam {
    state: DecodeState,
    score: f64,
}

/// Beam search by cumulative log-probability. Ties between candidates go to
/// the earlier parent beam, then to the lower node index, so a width-1
/// search follows the greedy decode exactly.
///
/// Returns the shortest of the final beams and the number of beams.
pub fn beam_search(inst: &Instance, params: &PolicyParams, width: usize) -> Result<(Trajectory, usize)> {
    SearchMode::Beam { width }.validate()?;
    let mut tape = Tape::new();
    let enc = encode_on(&mut tape, inst, params);
    let n = inst.len();
    let mut beams = vec![Beam {
        state: DecodeState::new(inst),
        score: 0.0,
    }];
    let mut logp = vec![0.0; n];
    loop {
        let active: Vec<usize> = (0..beams.len()).filter(|&b| !beams[b].state.is_done()).collect();
        if active.is_empty() {
            break;
        }
        let refs: Vec<&DecodeState> = active.iter().map(|&b| &beams[b].state).collect();
        let (logits, _) = step_logits(&mut tape, params, &enc, inst, &refs);
        let step = refs[0].step;
        // (score, parent, action, step logp); finished beams carry over as action None
        let mut cands: Vec<(f64, usize, Option<usize>, f64)> = Vec::new();
        for (b, beam) in beams.iter().enumerate() {
            if beam.state.is_done() {
                cands.push((beam.score, b, None, 0.0));
            }
        }
        let mut row_entropy = vec![0.0; active.len()];
        for (r, &b) in active.iter().enumerate() {
            log_softmax(tape.value(logits).row(r), &mut logp).ok_or(Error::DecodeDeadEnd { step })?;
            for (a, &lp) in logp.iter().enumerate() {
                if lp > f64::NEG_INFINITY {
                    row_entropy[r] -= lp.exp() * lp;
                    cands.push((beams[b].score + lp, b, Some(a), lp));
                }
            }
        }
        cands.sort_by(|x, y| {
            y.0.partial_cmp(&x.0)
                .unwrap_or(Ordering::Equal)
                .then(x.1.cmp(&y.1))
                .then(x.2.cmp(&y.2))
        });
        cands.truncate(width);
        let next: Vec<Beam> = cands
            .iter()
            .map(|&(score, b, action, lp)| {
                let mut state = beams[b].state.clone();
                if let Some(a) = action {
                    let r = active.iter().position(|&x| x == b).expect("active parent");
                    state.apply(inst, a);
                    state.logprob_sum += lp;
                    state.entropy_sum += row_entropy[r];
                }
                Beam { state, score }
            })
            .collect();
        beams = next;
    }
    let count = beams.len();
    let mut best: Option<Trajectory> = None;
    for beam in beams {
        let t = Trajectory::from_state(inst, beam.state)?;
        if best
            .as_ref()
            .map_or(true, |b| t.solution.total_length() < b.solution.total_length())
        {
            best = Some(t);
        }
    }
    Ok((best.expect("at least one beam"), count))
}

/// Runs the configured search, then 2-opt if requested.
pub fn solve(inst: &Instance, params: &PolicyParams, cfg: &SearchConfig) -> Result<(Solution, SearchMetrics)> {
    cfg.mode.validate()?;
    cfg.two_opt.validate()?;
    let start = Instant::now();
    let (sol, candidates) = match cfg.mode {
        SearchMode::Greedy => (rollout(inst, params, DecodeMode::Greedy)?.solution, 1),
        SearchMode::Sample { k, seed } => {
            let mut best: Option<Solution> = None;
            for t in sample_many(inst, params, k, seed)? {
                if best.as_ref().map_or(true, |b| t.solution.total_length() < b.total_length()) {
                    best = Some(t.solution);
                }
            }
            (best.expect("k >= 1"), k)
        }
        SearchMode::Beam { width } => {
            let (t, count) = beam_search(inst, params, width)?;
            (t.solution, count)
        }
    };
    let construction_length = sol.total_length();
    let sol = if cfg.post_2opt {
        two_opt(inst, &sol, &cfg.two_opt)?
    } else {
        sol
    };
    Ok((
        sol,
        SearchMetrics {
            candidates_evaluated: candidates,
            seconds: start.elapsed().as_secs_f64(),
            construction_length,
        },
    ))
}

/// Mean percentage gap `(len / ref - 1) * 100` over paired lists.
pub fn evaluate_gap(lengths: &[f64], reference: &[f64]) -> Result<f64> {
    if lengths.len() != reference.len() {
        return Err(Error::LengthMismatch {
            left: lengths.len(),
            right: reference.len(),
        });
    }
    if lengths.is_empty() {
        return Err(Error::Precondition("gap of an empty list".into()));
    }
    let mut sum = 0.0;
    for (&l, &r) in lengths.iter().zip(reference) {
        if !(r > 0.0) {
            return Err(Error::Precondition(format!("reference length must be positive, got {r}")));
        }
        sum += (l / r - 1.0) * 100.0;
    }
    Ok(sum / lengths.len() as f64)
}

/// Where gap reference lengths come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// Exhaustive optimum (TSP with at most 9 nodes).
    Optimal,
    /// Shortest solution any compared method found for the instance.
    BestKnown,
}

impl ReferenceKind {
    pub fn label(self) -> &'static str {
        match self {
            ReferenceKind::Optimal => "optimal",
            ReferenceKind::BestKnown => "best-known",
        }
    }
}

/// Largest instance for which gaps use the exhaustive optimum.
pub const MAX_OPTIMAL_REFERENCE_NODES: usize = 9;

/// Per-instance reference lengths for gaps. `method_lengths[m][i]` is the
/// length method `m` found on instance `i`.
///
/// Small TSP sets use the exhaustive optimum; anything else falls back to
/// the best length found by any method.
pub fn reference_lengths(instances: &[Instance], method_lengths: &[Vec<f64>]) -> Result<(Vec<f64>, ReferenceKind)> {
    for m in method_lengths {
        if m.len() != instances.len() {
            return Err(Error::LengthMismatch {
                left: m.len(),
                right: instances.len(),
            });
        }
    }
    let optimal = !instances.is_empty()
        && instances
            .iter()
            .all(|i| i.kind() == crate::routing::ProblemKind::Tsp && i.len() <= MAX_OPTIMAL_REFERENCE_NODES);
    if optimal {
        let refs = instances
            .iter()
            .map(|i| exact_tsp(i).map(|s| s.total_length()))
            .collect::<Result<_>>()?;
        return Ok((refs, ReferenceKind::Optimal));
    }
    if method_lengths.is_empty() && !instances.is_empty() {
        return Err(Error::Precondition("best-known reference needs at least one method".into()));
    }
    let refs = (0..instances.len())
        .map(|i| method_lengths.iter().map(|m| m[i]).fold(f64::INFINITY, f64::min))
        .collect();
    Ok((refs, ReferenceKind::BestKnown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Hyper;
    use crate::routing::{generate_instance, validate, ProblemKind};

    fn params() -> PolicyParams {
        PolicyParams::init(Hyper::tiny(), 12).unwrap()
    }

    #[test]
    fn gap_values() {
        assert_eq!(evaluate_gap(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        let g = evaluate_gap(&[6.34], &[6.14]).unwrap();
        assert!((g - 3.2573).abs() < 1e-3);
        assert!(matches!(
            evaluate_gap(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        ));
        assert!(evaluate_gap(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn width_one_beam_is_greedy() {
        let p = params();
        for (kind, seed) in [(ProblemKind::Tsp, 1), (ProblemKind::Cvrp, 2), (ProblemKind::Mrpff, 3)] {
            let inst = generate_instance(kind, 12, seed).unwrap();
            let greedy = rollout(&inst, &p, DecodeMode::Greedy).unwrap();
            let (beam, _) = beam_search(&inst, &p, 1).unwrap();
            assert_eq!(beam.solution, greedy.solution);
            assert_eq!(beam.logprob.to_bits(), greedy.logprob.to_bits());
        }
    }

    #[test]
    fn single_sample_matches_rollout() {
        let p = params();
        let inst = generate_instance(ProblemKind::Cvrp, 10, 4).unwrap();
        let many = sample_many(&inst, &p, 3, 40).unwrap();
        assert_eq!(many[0], rollout(&inst, &p, DecodeMode::Sample(40)).unwrap());
        assert_eq!(many[2], rollout(&inst, &p, DecodeMode::Sample(42)).unwrap());
    }

    #[test]
    fn every_mode_returns_feasible_solutions() {
        let p = params();
        for kind in [ProblemKind::Tsp, ProblemKind::Cvrp, ProblemKind::Mrpff] {
            let inst = generate_instance(kind, 9, 6).unwrap();
            for mode in [
                SearchMode::Greedy,
                SearchMode::Sample { k: 8, seed: 1 },
                SearchMode::Beam { width: 5 },
            ] {
                for post in [false, true] {
                    let cfg = SearchConfig::with_mode(mode).with_two_opt(post);
                    let (sol, m) = solve(&inst, &p, &cfg).unwrap();
                    assert!(validate(&inst, &sol).feasible);
                    assert!(sol.total_length() <= m.construction_length + 1e-12);
                }
            }
        }
    }

    #[test]
    fn beam_logprob_matches_teacher_forced_score() {
        let p = params();
        let inst = generate_instance(ProblemKind::Cvrp, 8, 9).unwrap();
        let (t, count) = beam_search(&inst, &p, 4).unwrap();
        assert!(count <= 4);
        let (lp, _) = crate::policy::score(&inst, &p, t.solution.actions()).unwrap();
        assert!((lp - t.logprob).abs() < 1e-10);
    }

    #[test]
    fn reference_kind_depends_on_size() {
        let small: Vec<Instance> = (0..3).map(|s| generate_instance(ProblemKind::Tsp, 6, s).unwrap()).collect();
        let (refs, kind) = reference_lengths(&small, &[]).unwrap();
        assert_eq!(kind, ReferenceKind::Optimal);
        assert_eq!(refs.len(), 3);
        let big: Vec<Instance> = (0..2).map(|s| generate_instance(ProblemKind::Tsp, 12, s).unwrap()).collect();
        let (refs, kind) = reference_lengths(&big, &[vec![5.0, 4.0], vec![4.5, 4.2]]).unwrap();
        assert_eq!(kind, ReferenceKind::BestKnown);
        assert_eq!(refs, vec![4.5, 4.0]);
        assert!(reference_lengths(&big, &[vec![1.0]]).is_err());
    }

    #[test]
    fn invalid_modes_are_rejected() {
        let p = params();
        let inst = generate_instance(ProblemKind::Tsp, 5, 0).unwrap();
        assert!(solve(&inst, &p, &SearchConfig::with_mode(SearchMode::Beam { width: 0 })).is_err());
        assert!(solve(&inst, &p, &SearchConfig::with_mode(SearchMode::Sample { k: 0, seed: 0 })).is_err());
    }
}
