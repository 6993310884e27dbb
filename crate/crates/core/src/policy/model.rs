//! Attention encoder, masked autoregressive decoder and critic head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::routing::{Instance, ProblemKind, Solution, DEPOT};

use super::params::PolicyParams;
use super::tape::{RowDistribution, Tape, Var};
use super::tensor::Matrix;

/// Encoder outputs for one instance, as tape variables.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    /// `n x d` node embeddings.
    pub nodes: Var,
    /// `1 x d` mean of the node embeddings.
    pub graph: Var,
    /// Node embeddings followed by the first/last placeholders.
    context_source: Var,
    glimpse_k: Var,
    glimpse_v: Var,
    logit_k: Var,
    n: usize,
}

fn node_features(inst: &Instance) -> (Option<Matrix>, Matrix) {
    let cap = inst.capacity().map_or(1.0, f64::from);
    let feat = |i: usize| {
        let p = inst.nodes()[i];
        vec![p[0], p[1], f64::from(inst.demand(i)) / cap]
    };
    match inst.depot() {
        Some(d) => {
            let p = inst.nodes()[d];
            let depot = Matrix::from_vec(1, 2, vec![p[0], p[1]]);
            let rows: Vec<Vec<f64>> = inst.customers().map(feat).collect();
            (Some(depot), Matrix::from_rows(&rows))
        }
        None => {
            let rows: Vec<Vec<f64>> = (0..inst.len()).map(feat).collect();
            (None, Matrix::from_rows(&rows))
        }
    }
}

/// Records the encoder for `inst` on `tape`.
pub fn encode_on<'p>(tape: &mut Tape<'p>, inst: &Instance, params: &'p PolicyParams) -> Encoded {
    let ids = &params.ids;
    let theta = &params.theta;
    let hyper = params.hyper;
    let (depot_feat, node_feat) = node_features(inst);

    let x = tape.constant(node_feat);
    let w = tape.param(theta, ids.node_w);
    let b = tape.param(theta, ids.node_b);
    let customers = tape.linear(x, w, b);
    let mut h = match depot_feat {
        Some(df) => {
            let x = tape.constant(df);
            let w = tape.param(theta, ids.depot_w);
            let b = tape.param(theta, ids.depot_b);
            let depot = tape.linear(x, w, b);
            tape.concat_rows(vec![depot, customers])
        }
        None => customers,
    };

    for l in &ids.layers {
        let g = tape.param(theta, l.ln1_gain);
        let bb = tape.param(theta, l.ln1_bias);
        let x = tape.layer_norm(h, g, bb);
        let wq = tape.param(theta, l.wq);
        let wk = tape.param(theta, l.wk);
        let wv = tape.param(theta, l.wv);
        let q = tape.matmul(x, wq);
        let k = tape.matmul(x, wk);
        let v = tape.matmul(x, wv);
        let att = tape.attention(q, k, v, hyper.num_heads, None);
        let wo = tape.param(theta, l.wo);
        let att = tape.matmul(att, wo);
        h = tape.add(h, att);

        let g = tape.param(theta, l.ln2_gain);
        let bb = tape.param(theta, l.ln2_bias);
        let x = tape.layer_norm(h, g, bb);
        let w1 = tape.param(theta, l.ff1_w);
        let b1 = tape.param(theta, l.ff1_b);
        let f = tape.linear(x, w1, b1);
        let f = tape.relu(f);
        let w2 = tape.param(theta, l.ff2_w);
        let b2 = tape.param(theta, l.ff2_b);
        let f = tape.linear(f, w2, b2);
        h = tape.add(h, f);
    }

    let graph = tape.mean_rows(h);
    let first = tape.param(theta, ids.first_placeholder);
    let last = tape.param(theta, ids.last_placeholder);
    let context_source = tape.concat_rows(vec![h, first, last]);
    let wk = tape.param(theta, ids.glimpse_wk);
    let wv = tape.param(theta, ids.glimpse_wv);
    let wl = tape.param(theta, ids.logit_wk);
    let glimpse_k = tape.matmul(h, wk);
    let glimpse_v = tape.matmul(h, wv);
    let logit_k = tape.matmul(h, wl);
    Encoded {
        nodes: h,
        graph,
        context_source,
        glimpse_k,
        glimpse_v,
        logit_k,
        n: inst.len(),
    }
}

/// Node embeddings (`n x d`) and graph embedding (`1 x d`) of `inst`.
pub fn encode(inst: &Instance, params: &PolicyParams) -> Result<(Matrix, Matrix)> {
    params.check_finite()?;
    let mut tape = Tape::new();
    let enc = encode_on(&mut tape, inst, params);
    Ok((tape.value(enc.nodes).clone(), tape.value(enc.graph).clone()))
}

/// Per-trajectory decoding context.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeState {
    pub visited: Vec<bool>,
    /// Node the vehicle is at; `None` before the first TSP action.
    pub current: Option<usize>,
    pub first: Option<usize>,
    /// Remaining vehicle load (CVRP; 0 otherwise).
    pub remaining_load: u32,
    /// Routes still to be opened after the current one (MRPFF).
    pub routes_left: usize,
    pub unvisited: usize,
    pub step: usize,
    pub logprob_sum: f64,
    pub entropy_sum: f64,
    pub actions: Vec<usize>,
}

impl DecodeState {
    pub fn new(inst: &Instance) -> Self {
        let mut visited = vec![false; inst.len()];
        let (current, first) = match inst.depot() {
            Some(d) => {
                visited[d] = true;
                (Some(d), Some(d))
            }
            None => (None, None),
        };
        DecodeState {
            visited,
            current,
            first,
            remaining_load: inst.capacity().unwrap_or(0),
            routes_left: inst.num_routes().map_or(0, |k| k - 1),
            unvisited: inst.num_customers(),
            step: 0,
            logprob_sum: 0.0,
            entropy_sum: 0.0,
            actions: Vec::new(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.unvisited == 0
    }

    /// `true` marks an infeasible action.
    pub fn write_mask(&self, inst: &Instance, out: &mut [bool]) {
        match inst.kind() {
            ProblemKind::Tsp => out.copy_from_slice(&self.visited),
            ProblemKind::Cvrp => {
                for c in inst.customers() {
                    out[c] = self.visited[c] || inst.demand(c) > self.remaining_load;
                }
                out[DEPOT] = self.current == Some(DEPOT);
            }
            ProblemKind::Mrpff => {
                // Every route still to be opened needs at least one customer.
                let customer_ok = self.unvisited > self.routes_left;
                for c in inst.customers() {
                    out[c] = self.visited[c] || !customer_ok;
                }
                out[DEPOT] = self.current == Some(DEPOT) || self.routes_left == 0;
            }
        }
    }

    pub fn mask(&self, inst: &Instance) -> Vec<bool> {
        let mut m = vec![false; inst.len()];
        self.write_mask(inst, &mut m);
        m
    }

    pub fn apply(&mut self, inst: &Instance, action: usize) {
        if inst.depot() == Some(action) {
            self.remaining_load = inst.capacity().unwrap_or(0);
            self.routes_left = self.routes_left.saturating_sub(1);
        } else {
            debug_assert!(!self.visited[action]);
            self.visited[action] = true;
            self.unvisited -= 1;
            self.remaining_load = self.remaining_load.saturating_sub(inst.demand(action));
        }
        if self.first.is_none() {
            self.first = Some(action);
        }
        self.current = Some(action);
        self.actions.push(action);
        self.step += 1;
    }

    fn context_extra(&self, inst: &Instance) -> f64 {
        match inst.kind() {
            ProblemKind::Tsp => 0.0,
            ProblemKind::Cvrp => f64::from(self.remaining_load) / f64::from(inst.capacity().unwrap_or(1)),
            ProblemKind::Mrpff => self.routes_left as f64 / inst.num_routes().unwrap_or(1) as f64,
        }
    }
}

/// Logits for one decoding step of every state in `states` (one row each),
/// with the feasibility mask used.
pub fn step_logits<'p>(
    tape: &mut Tape<'p>,
    params: &'p PolicyParams,
    enc: &Encoded,
    inst: &Instance,
    states: &[&DecodeState],
) -> (Var, Vec<bool>) {
    let theta = &params.theta;
    let ids = &params.ids;
    let rows = states.len();
    let n = enc.n;
    let mut mask = vec![false; rows * n];
    let mut firsts = Vec::with_capacity(rows);
    let mut lasts = Vec::with_capacity(rows);
    let mut extra = Matrix::zeros(rows, 1);
    for (r, s) in states.iter().enumerate() {
        s.write_mask(inst, &mut mask[r * n..(r + 1) * n]);
        firsts.push(s.first.unwrap_or(n));
        lasts.push(s.current.unwrap_or(n + 1));
        extra.set(r, 0, s.context_extra(inst));
    }
    let graph = tape.gather(enc.graph, vec![0; rows]);
    let first = tape.gather(enc.context_source, firsts);
    let last = tape.gather(enc.context_source, lasts);
    let extra = tape.constant(extra);
    let ctx = tape.concat_cols(vec![graph, first, last, extra]);
    let wc = tape.param(theta, ids.context_w);
    let q = tape.matmul(ctx, wc);
    let glimpse = tape.attention(q, enc.glimpse_k, enc.glimpse_v, params.hyper.num_heads, Some(&mask));
    let wo = tape.param(theta, ids.glimpse_wo);
    let g = tape.matmul(glimpse, wo);
    let logits = tape.pointer(g, enc.logit_k, params.hyper.tanh_clip, &mask);
    (logits, mask)
}

/// Highest-probability action, ties to the lowest index.
pub fn greedy_action(dist: &RowDistribution<'_>) -> usize {
    let mut best = 0;
    let mut best_lp = f64::NEG_INFINITY;
    for (a, &lp) in dist.logp.iter().enumerate() {
        if lp > best_lp {
            best_lp = lp;
            best = a;
        }
    }
    best
}

/// Inverse-CDF draw; never returns a masked action.
pub fn sample_action<R: Rng>(dist: &RowDistribution<'_>, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last_ok = 0;
    for (a, &lp) in dist.logp.iter().enumerate() {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        last_ok = a;
        cum += lp.exp();
        if u < cum {
            return a;
        }
    }
    last_ok
}

/// Which decode steps each trajectory took part in.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// `rows x 2` output of `[log p(action), entropy]`.
    pub out: Var,
    /// Trajectory index of each output row.
    pub rows: Vec<usize>,
}

/// Decodes `count` trajectories of `inst` in lock-step.
///
/// `choose(trajectory, step, dist)` selects each action. Trajectories that
/// finish early drop out of later steps.
pub fn decode_on<'p, F>(
    tape: &mut Tape<'p>,
    params: &'p PolicyParams,
    enc: &Encoded,
    inst: &Instance,
    count: usize,
    mut choose: F,
) -> Result<(Vec<DecodeState>, Vec<StepRecord>)>
where
    F: FnMut(usize, usize, &RowDistribution<'_>) -> Result<usize>,
{
    let mut states: Vec<DecodeState> = (0..count).map(|_| DecodeState::new(inst)).collect();
    let mut records = Vec::new();
    let max_steps = 2 * inst.len() + 1;
    for step in 0.. {
        let active: Vec<usize> = (0..count).filter(|&i| !states[i].is_done()).collect();
        if active.is_empty() {
            break;
        }
        if step > max_steps {
            return Err(Error::DecodeDeadEnd { step });
        }
        let refs: Vec<&DecodeState> = active.iter().map(|&i| &states[i]).collect();
        let (logits, _) = step_logits(tape, params, enc, inst, &refs);
        let out = tape.categorical(logits, step, |r, dist| choose(active[r], step, dist))?;
        let vals = tape.value(out);
        for (r, &i) in active.iter().enumerate() {
            let a_lp = vals.get(r, 0);
            let h = vals.get(r, 1);
            // recover the chosen action from the categorical node
            let action = chosen_action(tape, out, r);
            let s = &mut states[i];
            s.apply(inst, action);
            s.logprob_sum += a_lp;
            s.entropy_sum += h;
        }
        records.push(StepRecord { out, rows: active });
    }
    Ok((states, records))
}

fn chosen_action(tape: &Tape<'_>, out: Var, row: usize) -> usize {
    tape.categorical_action(out, row)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample(u64),
}

/// One complete decoded solution with its log-probability and entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub solution: Solution,
    /// Sum of log-probabilities of the chosen actions.
    pub logprob: f64,
    /// Sum of per-step entropies (nats).
    pub entropy: f64,
    /// Number of decoding steps.
    pub steps: usize,
    /// Negative tour length.
    pub reward: f64,
}

impl Trajectory {
    pub(crate) fn from_state(inst: &Instance, state: DecodeState) -> Result<Self> {
        let steps = state.step;
        let (logprob, entropy) = (state.logprob_sum, state.entropy_sum);
        let solution = Solution::from_actions(inst, state.actions)?;
        if !solution.feasible() {
            return Err(Error::Precondition("decoder produced an infeasible solution".into()));
        }
        let reward = -solution.total_length();
        Ok(Trajectory {
            solution,
            logprob,
            entropy,
            steps,
            reward,
        })
    }

    /// Mean entropy per decoding step.
    pub fn mean_entropy(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.entropy / self.steps as f64
        }
    }
}

/// Decodes one solution greedily or by sampling.
pub fn rollout(inst: &Instance, params: &PolicyParams, mode: DecodeMode) -> Result<Trajectory> {
    let mut tape = Tape::new();
    let enc = encode_on(&mut tape, inst, params);
    let (mut states, _) = match mode {
        DecodeMode::Greedy => decode_on(&mut tape, params, &enc, inst, 1, |_, _, d| Ok(greedy_action(d)))?,
        DecodeMode::Sample(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            decode_on(&mut tape, params, &enc, inst, 1, |_, _, d| Ok(sample_action(d, &mut rng)))?
        }
    };
    Trajectory::from_state(inst, states.pop().expect("one trajectory"))
}

/// Teacher-forced log-probability and entropy sum of a given action sequence.
pub fn score(inst: &Instance, params: &PolicyParams, actions: &[usize]) -> Result<(f64, f64)> {
    let mut tape = Tape::new();
    let enc = encode_on(&mut tape, inst, params);
    let (states, _) = decode_on(&mut tape, params, &enc, inst, 1, |_, step, _| {
        actions.get(step).copied().ok_or(Error::Masking {
            step,
            action: usize::MAX,
        })
    })?;
    let s = &states[0];
    if s.actions.len() != actions.len() {
        return Err(Error::Masking {
            step: s.actions.len(),
            action: actions[s.actions.len()],
        });
    }
    Ok((s.logprob_sum, s.entropy_sum))
}

/// Records the critic head on its own tape, with the graph embedding held
/// constant. Returns the `1 x 1` value node.
pub fn critic_on<'p>(tape: &mut Tape<'p>, params: &'p PolicyParams, graph: &Matrix) -> Var {
    let phi = &params.phi;
    let c = params.critic;
    let x = tape.constant(graph.clone());
    let w1 = tape.param(phi, c.w1);
    let b1 = tape.param(phi, c.b1);
    let h = tape.linear(x, w1, b1);
    let h = tape.relu(h);
    let w2 = tape.param(phi, c.w2);
    let b2 = tape.param(phi, c.b2);
    tape.linear(h, w2, b2)
}

/// Baseline estimate `V(s)` from the graph embedding.
pub fn critic_value(inst: &Instance, params: &PolicyParams) -> Result<f64> {
    let (_, graph) = encode(inst, params)?;
    let mut tape = Tape::new();
    let v = critic_on(&mut tape, params, &graph);
    Ok(tape.value(v).get(0, 0))
}

/// One decoding step from `state`, returning the chosen action, its
/// log-probability, the step entropy and the successor state.
pub fn decode_step(
    inst: &Instance,
    params: &PolicyParams,
    state: &DecodeState,
    mode: DecodeMode,
) -> Result<(usize, f64, f64, DecodeState)> {
    if state.is_done() {
        return Err(Error::DecodeDeadEnd { step: state.step });
    }
    let mut tape = Tape::new();
    let enc = encode_on(&mut tape, inst, params);
    let (logits, _) = step_logits(&mut tape, params, &enc, inst, &[state]);
    let out = match mode {
        DecodeMode::Greedy => tape.categorical(logits, state.step, |_, d| Ok(greedy_action(d)))?,
        DecodeMode::Sample(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            tape.categorical(logits, state.step, |_, d| Ok(sample_action(d, &mut rng)))?
        }
    };
    let action = tape.categorical_action(out, 0);
    let (lp, h) = (tape.value(out).get(0, 0), tape.value(out).get(0, 1));
    let mut next = state.clone();
    next.apply(inst, action);
    next.logprob_sum += lp;
    next.entropy_sum += h;
    Ok((action, lp, h, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::params::Hyper;
    use crate::routing::generate_instance;

    fn tiny(seed: u64) -> PolicyParams {
        PolicyParams::init(Hyper::tiny(), seed).unwrap()
    }

    fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let head = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, head);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn encoder_is_permutation_equivariant() {
        let params = tiny(3);
        for kind in [ProblemKind::Tsp, ProblemKind::Cvrp] {
            let inst = generate_instance(kind, 7, 11).unwrap();
            let perm: Vec<usize> = match kind {
                ProblemKind::Tsp => vec![3, 0, 6, 1, 5, 2, 4],
                _ => vec![0, 4, 2, 7, 1, 6, 3, 5],
            };
            let other = inst.permuted(&perm).unwrap();
            let (h1, g1) = encode(&inst, &params).unwrap();
            let (h2, g2) = encode(&other, &params).unwrap();
            for (new_pos, &old) in perm.iter().enumerate() {
                for (a, b) in h2.row(new_pos).iter().zip(h1.row(old)) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
            for (a, b) in g1.data().iter().zip(g2.data()) {
                assert!((a - b).abs() < 1e-6);
            }
            let v1 = critic_value(&inst, &params).unwrap();
            let v2 = critic_value(&other, &params).unwrap();
            assert!((v1 - v2).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_residual_branches_pass_embeddings_through() {
        let mut params = PolicyParams::init(Hyper::desk(), 1).unwrap();
        params.zero_residual_branches();
        let inst = generate_instance(ProblemKind::Tsp, 6, 2).unwrap();
        let (h, _) = encode(&inst, &params).unwrap();
        let w = params.theta.get(params.ids.node_w);
        let b = params.theta.get(params.ids.node_b);
        for i in 0..inst.len() {
            let p = inst.nodes()[i];
            for c in 0..w.cols() {
                let want = p[0] * w.get(0, c) + p[1] * w.get(1, c) + b.get(0, c);
                assert!((h.get(i, c) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let params = tiny(5);
        let inst = generate_instance(ProblemKind::Cvrp, 9, 4).unwrap();
        assert_eq!(encode(&inst, &params).unwrap(), encode(&inst, &params).unwrap());
    }

    #[test]
    fn forced_moves_have_zero_logprob_and_entropy() {
        let params = tiny(2);
        let inst = generate_instance(ProblemKind::Tsp, 5, 1).unwrap();
        let mut state = DecodeState::new(&inst);
        for a in [4, 1, 3, 0] {
            state.apply(&inst, a);
        }
        let (a, lp, h, next) = decode_step(&inst, &params, &state, DecodeMode::Greedy).unwrap();
        assert_eq!(a, 2);
        assert_eq!(lp, 0.0);
        assert_eq!(h, 0.0);
        assert!(next.is_done());
    }

    #[test]
    fn categorical_entropy_values() {
        let mut tape = Tape::new();
        let logits = tape.constant(Matrix::from_vec(1, 5, vec![0.7, f64::NEG_INFINITY, 0.7, 0.7, 0.7]));
        let out = tape.categorical(logits, 0, |_, _| Ok(0)).unwrap();
        assert!((tape.value(out).get(0, 1) - 4f64.ln()).abs() < 1e-12);

        let p = [0.26f64, 0.28, 0.24, 0.22];
        let logits = tape.constant(Matrix::from_vec(1, 4, p.iter().map(|x| x.ln() + 3.0).collect()));
        let out = tape.categorical(logits, 0, |_, _| Ok(1)).unwrap();
        assert!((tape.value(out).get(0, 1) - 1.3822).abs() < 1e-4);
        assert!((tape.value(out).get(0, 0) - 0.28f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn masked_actions_are_rejected() {
        let params = tiny(2);
        let inst = generate_instance(ProblemKind::Tsp, 5, 1).unwrap();
        assert!(matches!(
            score(&inst, &params, &[0, 1, 1, 2, 3]),
            Err(Error::Masking { step: 2, action: 1 })
        ));
        assert!(score(&inst, &params, &[0, 1, 2]).is_err());
    }

    #[test]
    fn step_distributions_are_valid() {
        let params = tiny(8);
        let inst = generate_instance(ProblemKind::Cvrp, 8, 3).unwrap();
        let mut tape = Tape::new();
        let enc = encode_on(&mut tape, &inst, &params);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (states, _) = decode_on(&mut tape, &params, &enc, &inst, 4, |_, _, d| {
            let total: f64 = d.logp.iter().map(|l| l.exp()).sum();
            assert!((total - 1.0).abs() < 1e-9);
            let k = d.logp.iter().filter(|l| l.is_finite()).count();
            let h: f64 = -d.logp.iter().filter(|l| l.is_finite()).map(|l| l.exp() * l).sum::<f64>();
            assert!(h >= -1e-12 && h <= (k as f64).ln() + 1e-12);
            Ok(sample_action(d, &mut rng))
        })
        .unwrap();
        for s in states {
            assert!(s.logprob_sum <= 0.0);
        }
    }

    #[test]
    fn enumerated_probability_mass_sums_to_one() {
        let params = tiny(4);
        let inst = generate_instance(ProblemKind::Tsp, 5, 9).unwrap();
        let all = permutations(&[0, 1, 2, 3, 4]);
        assert_eq!(all.len(), 120);
        let mut total = 0.0;
        let mut best = (f64::NEG_INFINITY, Vec::new());
        for seq in all {
            let (lp, _) = score(&inst, &params, &seq).unwrap();
            total += lp.exp();
            if lp > best.0 {
                best = (lp, seq);
            }
        }
        assert!((total - 1.0).abs() < 1e-8);
        let greedy = rollout(&inst, &params, DecodeMode::Greedy).unwrap();
        assert_eq!(greedy.solution.actions(), &best.1[..]);
    }

    #[test]
    fn cvrp_enumeration_sums_to_one() {
        let params = tiny(6);
        let inst = generate_instance(ProblemKind::Mrpff, 3, 2).unwrap();
        // every interleaving of 3 customers with one depot return
        let mut total = 0.0;
        for p in permutations(&[1, 2, 3]) {
            for cut in 1..3 {
                let mut seq = p[..cut].to_vec();
                seq.push(DEPOT);
                seq.extend_from_slice(&p[cut..]);
                total += score(&inst, &params, &seq).unwrap().0.exp();
            }
        }
        assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn score_matches_sampled_rollout() {
        let params = tiny(1);
        for (kind, seed) in [(ProblemKind::Tsp, 1), (ProblemKind::Cvrp, 2), (ProblemKind::Mrpff, 3)] {
            let inst = generate_instance(kind, 10, seed).unwrap();
            let t = rollout(&inst, &params, DecodeMode::Sample(seed)).unwrap();
            let (lp, h) = score(&inst, &params, t.solution.actions()).unwrap();
            assert!((lp - t.logprob).abs() < 1e-10);
            assert!((h - t.entropy).abs() < 1e-10);
            assert!((t.reward + t.solution.total_length()).abs() < 1e-15);
        }
    }

    #[test]
    fn greedy_rollout_is_deterministic() {
        let params = tiny(1);
        let inst = generate_instance(ProblemKind::Cvrp, 12, 3).unwrap();
        assert_eq!(
            rollout(&inst, &params, DecodeMode::Greedy).unwrap(),
            rollout(&inst, &params, DecodeMode::Greedy).unwrap()
        );
    }

    #[test]
    fn sampled_cvrp_rollouts_are_feasible() {
        let params = tiny(7);
        for i in 0..1000u64 {
            let inst = generate_instance(ProblemKind::Cvrp, 10, i).unwrap();
            let t = rollout(&inst, &params, DecodeMode::Sample(i)).unwrap();
            assert!(crate::routing::validate(&inst, &t.solution).feasible);
        }
    }

    #[test]
    fn sampled_mrpff_rollouts_use_every_route() {
        let params = tiny(7);
        for i in 0..200u64 {
            let inst = generate_instance(ProblemKind::Mrpff, 6, i).unwrap();
            let t = rollout(&inst, &params, DecodeMode::Sample(i)).unwrap();
            assert_eq!(t.solution.routes().len(), inst.num_routes().unwrap());
        }
    }

    #[test]
    fn zero_critic_outputs_zero() {
        let mut params = tiny(1);
        params.zero_critic();
        let inst = generate_instance(ProblemKind::Tsp, 5, 0).unwrap();
        assert_eq!(critic_value(&inst, &params).unwrap(), 0.0);
    }

    fn objective(inst: &Instance, params: &PolicyParams, actions: &[usize], alpha: f64) -> f64 {
        let (lp, h) = score(inst, params, actions).unwrap();
        lp + alpha * h
    }

    fn check_gradient(kind: ProblemKind, seed: u64) {
        let alpha = 0.7;
        let params = tiny(seed);
        let inst = generate_instance(kind, 5, seed).unwrap();
        let actions = rollout(&inst, &params, DecodeMode::Sample(seed)).unwrap().solution.into_actions();

        let mut tape = Tape::new();
        let enc = encode_on(&mut tape, &inst, &params);
        let (_, records) = decode_on(&mut tape, &params, &enc, &inst, 1, |_, step, _| Ok(actions[step])).unwrap();
        let seeds: Vec<(Var, Matrix)> = records
            .iter()
            .map(|r| (r.out, Matrix::from_vec(1, 2, vec![1.0, alpha])))
            .collect();
        let mut grads = params.theta.zeros_like();
        tape.backward(&seeds, &mut grads);

        let eps = 1e-6;
        let (mut diff, mut norm_a, mut norm_f) = (0.0, 0.0, 0.0);
        for id in 0..params.theta.len() {
            let (mut td, mut ta, mut tf) = (0.0, 0.0, 0.0);
            for k in 0..params.theta.get(id).len() {
                let mut p = params.clone();
                p.theta.get_mut(id).data_mut()[k] += eps;
                let up = objective(&inst, &p, &actions, alpha);
                p.theta.get_mut(id).data_mut()[k] -= 2.0 * eps;
                let down = objective(&inst, &p, &actions, alpha);
                let fd = (up - down) / (2.0 * eps);
                let an = grads[id].data()[k];
                td += (an - fd).powi(2);
                ta += an * an;
                tf += fd * fd;
            }
            let scale = ta.sqrt().max(tf.sqrt());
            if scale > 1e-7 {
                assert!(
                    td.sqrt() / scale < 1e-4,
                    "{}: relative error {}",
                    params.theta.name(id),
                    td.sqrt() / scale
                );
            }
            diff += td;
            norm_a += ta;
            norm_f += tf;
        }
        assert!(diff.sqrt() / norm_a.sqrt().max(norm_f.sqrt()) < 1e-5);
    }

    #[test]
    fn policy_gradient_matches_finite_differences_tsp() {
        check_gradient(ProblemKind::Tsp, 21);
    }

    #[test]
    fn policy_gradient_matches_finite_differences_cvrp() {
        check_gradient(ProblemKind::Cvrp, 22);
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let params = tiny(9);
        let inst = generate_instance(ProblemKind::Tsp, 5, 9).unwrap();
        let (_, graph) = encode(&inst, &params).unwrap();
        let mut tape = Tape::new();
        let v = critic_on(&mut tape, &params, &graph);
        let mut grads = params.phi.zeros_like();
        tape.backward(&[(v, Matrix::filled(1, 1, 1.0))], &mut grads);
        let eps = 1e-6;
        for id in 0..params.phi.len() {
            for k in 0..params.phi.get(id).len() {
                let mut p = params.clone();
                p.phi.get_mut(id).data_mut()[k] += eps;
                let up = critic_value(&inst, &p).unwrap();
                p.phi.get_mut(id).data_mut()[k] -= 2.0 * eps;
                let down = critic_value(&inst, &p).unwrap();
                let fd = (up - down) / (2.0 * eps);
                assert!((fd - grads[id].data()[k]).abs() < 1e-7 * (1.0 + fd.abs()));
            }
        }
    }
}
