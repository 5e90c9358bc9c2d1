//! Average-cost dynamic programming: relative value iteration, exploration
//! costs and shortest-path policies, hitting times, diameter, and policy
//! evaluation.
//!
//! Value iteration runs on an aperiodicity-transformed model: transitions
//! blended with a self-loop, p~ = (1-theta)e_s + theta*p, and costs scaled to
//! theta*c. The transform leaves the bias unchanged and scales the gain by
//! theta, so the solver divides the converged gain back out. Exploration
//! solves additionally make the target absorbing at zero cost, which turns
//! the problem into a stochastic shortest path whose bias at each state is
//! the minimal expected hitting time of the target.
//!
//! `expected_hitting_times` is a deliberately independent oracle (a direct
//! linear solve); several tests pit it against value iteration.

use crate::cmdp::{induced_chain, StationaryPolicy};
use crate::exec::map_indices;
use crate::linalg;
use ndarray::{Array1, Array2, Array3};
use thiserror::Error;

/// Self-loop blend of the aperiodicity transformation.
pub const APERIODICITY_BLEND: f64 = 0.99;
/// Value iteration aborts after this many sweeps.
pub const RVI_ITERATION_CAP: usize = 1_000_000;
/// Entries above this count as support when checking reachability.
const SUPPORT_TOL: f64 = 1e-12;

/// Default stopping tolerance, scaled by the state count: bias entries grow
/// with the diameter, and per-state round-off accumulates.
pub fn default_rvi_tol(n_states: usize) -> f64 {
    1e-9 * n_states as f64
}

#[derive(Debug, Error)]
pub enum PlanningError {
    #[error("target state {target} out of range for {n_states} states")]
    TargetOutOfRange { target: usize, n_states: usize },
    #[error("value iteration did not converge after {iterations} sweeps (span {span:.3e}); the model is likely not communicating")]
    NonConvergence { iterations: usize, span: f64 },
    #[error("model is not communicating: state {to} is not reachable from state {from} under any policy")]
    NotCommunicating { from: usize, to: usize },
    #[error("target state {target} unreachable under the given policy (singular hitting-time system)")]
    UnreachableTarget { target: usize },
    #[error("induced chain is reducible; closed classes {closed_classes:?}")]
    ReducibleChain { closed_classes: Vec<Vec<usize>> },
    #[error("inconsistent planning inputs: {0}")]
    Shape(String),
}

/// Solution of the average-cost optimality equation.
#[derive(Debug, Clone)]
pub struct AvgCostSolution {
    pub gain: f64,
    /// Optimal bias, normalized so the minimum entry is exactly zero.
    pub bias: Array1<f64>,
    /// Argmin policy with lowest-index tie-breaking; rows deterministic.
    pub greedy_policy: StationaryPolicy,
}

/// Gain, bias, and stationary distribution of a fixed policy on an
/// irreducible induced chain.
#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    pub gain: f64,
    /// Bias, min-normalized.
    pub bias: Array1<f64>,
    pub stationary_distribution: Array1<f64>,
}

/// Unit cost everywhere except the target row: the average-cost problem for
/// this cost steers to `target` as fast as possible.
pub fn exploration_cost(
    n_states: usize,
    n_actions: usize,
    target: usize,
) -> Result<Array2<f64>, PlanningError> {
    if target >= n_states {
        return Err(PlanningError::TargetOutOfRange { target, n_states });
    }
    let mut cost = Array2::ones((n_states, n_actions));
    cost.row_mut(target).fill(0.0);
    Ok(cost)
}

fn check_cost_shape(transitions: &Array3<f64>, cost: &Array2<f64>) -> Result<(), PlanningError> {
    let (s, a, s2) = transitions.dim();
    if s != s2 {
        return Err(PlanningError::Shape(format!(
            "transitions shaped {s}x{a}x{s2}, expected square state axes"
        )));
    }
    if cost.dim() != (s, a) {
        return Err(PlanningError::Shape(format!(
            "cost shaped {}x{} against {s}x{a} transitions",
            cost.dim().0,
            cost.dim().1
        )));
    }
    if s == 0 || a == 0 {
        return Err(PlanningError::Shape("empty model".to_string()));
    }
    Ok(())
}

/// Greedy argmin policy for a bias vector, evaluated on the untransformed
/// model. Lowest action index wins ties.
fn greedy_policy(transitions: &Array3<f64>, cost: &Array2<f64>, bias: &Array1<f64>) -> StationaryPolicy {
    let (s_count, a_count, _) = transitions.dim();
    let mut actions = Vec::with_capacity(s_count);
    for s in 0..s_count {
        let mut best = 0usize;
        let mut best_q = f64::INFINITY;
        for a in 0..a_count {
            let mut q = cost[[s, a]];
            for s2 in 0..s_count {
                q += transitions[[s, a, s2]] * bias[s2];
            }
            if q < best_q {
                best_q = q;
                best = a;
            }
        }
        actions.push(best);
    }
    StationaryPolicy::deterministic(a_count, &actions)
}

/// Solves the average-cost optimality equation by value iteration on the
/// aperiodicity-transformed model, stopping when the span of successive
/// value differences drops below `rvi_tol`.
pub fn relative_value_iteration(
    transitions: &Array3<f64>,
    cost: &Array2<f64>,
    rvi_tol: f64,
) -> Result<AvgCostSolution, PlanningError> {
    check_cost_shape(transitions, cost)?;
    let (s_count, a_count, _) = transitions.dim();
    let theta = APERIODICITY_BLEND;

    let mut v = Array1::<f64>::zeros(s_count);
    let mut w = Array1::<f64>::zeros(s_count);
    let mut gain_transformed = 0.0;
    let mut converged = false;
    let mut last_span = f64::INFINITY;

    for _ in 0..RVI_ITERATION_CAP {
        for s in 0..s_count {
            let mut best = f64::INFINITY;
            for a in 0..a_count {
                let mut q = 0.0;
                for s2 in 0..s_count {
                    q += transitions[[s, a, s2]] * v[s2];
                }
                // One application of the transformed Bellman operator:
                // theta*c + (1-theta)*v(s) + theta*p.v, without
                // materializing the blended kernel.
                let value = theta * (cost[[s, a]] + q) + (1.0 - theta) * v[s];
                if value < best {
                    best = value;
                }
            }
            w[s] = best;
        }
        let mut min_delta = f64::INFINITY;
        let mut max_delta = f64::NEG_INFINITY;
        for s in 0..s_count {
            let d = w[s] - v[s];
            min_delta = min_delta.min(d);
            max_delta = max_delta.max(d);
        }
        last_span = max_delta - min_delta;
        // Mid-range of the differences: the transformed gain once the span
        // closes. Every component of the next difference vector lies within
        // span/2 of it, which keeps the Bellman residual under rvi_tol after
        // dividing by theta.
        gain_transformed = 0.5 * (max_delta + min_delta);
        // Renormalize by the minimum to keep values bounded; constants
        // cancel in the difference vector, so the stopping rule is unharmed.
        let shift = w.iter().cloned().fold(f64::INFINITY, f64::min);
        for s in 0..s_count {
            v[s] = w[s] - shift;
        }
        if last_span < rvi_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(PlanningError::NonConvergence {
            iterations: RVI_ITERATION_CAP,
            span: last_span,
        });
    }

    // Map back to the untransformed model: bias is preserved by the
    // transform, gain is scaled by the blend factor.
    let gain = gain_transformed / theta;
    let shift = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let bias = v.mapv(|x| x - shift);
    let policy = greedy_policy(transitions, cost, &bias);
    Ok(AvgCostSolution {
        gain,
        bias,
        greedy_policy: policy,
    })
}

/// Solves the exploration problem for `target`: the target row is made
/// absorbing at zero cost, so the optimal bias at each state is the minimal
/// expected hitting time of the target and the optimal gain is zero.
///
/// The greedy action at the target itself is chosen against the original
/// dynamics (fastest expected return to the target), since the absorbed
/// model makes all target-row actions look alike.
pub fn exploration_solution(
    transitions: &Array3<f64>,
    target: usize,
) -> Result<AvgCostSolution, PlanningError> {
    let (s_count, _, _) = transitions.dim();
    exploration_solution_with_tol(transitions, target, default_rvi_tol(s_count))
}

/// As `exploration_solution`, with an explicit value-iteration tolerance.
pub fn exploration_solution_with_tol(
    transitions: &Array3<f64>,
    target: usize,
    rvi_tol: f64,
) -> Result<AvgCostSolution, PlanningError> {
    let (s_count, a_count, _) = transitions.dim();
    let cost = exploration_cost(s_count, a_count, target)?;
    check_cost_shape(transitions, &cost)?;

    let mut absorbed = transitions.clone();
    for a in 0..a_count {
        for s2 in 0..s_count {
            absorbed[[target, a, s2]] = if s2 == target { 1.0 } else { 0.0 };
        }
    }
    let mut solution = relative_value_iteration(&absorbed, &cost, rvi_tol)?;

    let mut best = 0usize;
    let mut best_q = f64::INFINITY;
    for a in 0..a_count {
        let mut q = 0.0;
        for s2 in 0..s_count {
            q += transitions[[target, a, s2]] * solution.bias[s2];
        }
        if q < best_q {
            best_q = q;
            best = a;
        }
    }
    let mut actions: Vec<usize> = (0..s_count).map(|s| solution.greedy_policy.mode(s)).collect();
    actions[target] = best;
    solution.greedy_policy = StationaryPolicy::deterministic(a_count, &actions);
    Ok(solution)
}

/// Greedy policy steering to `target` as fast as possible.
pub fn shortest_path_policy(
    transitions: &Array3<f64>,
    target: usize,
) -> Result<StationaryPolicy, PlanningError> {
    Ok(exploration_solution(transitions, target)?.greedy_policy)
}

/// Expected hitting times of `target` under a fixed policy, by direct linear
/// solve of h(s) = 1 + sum_s' P[s,s'] h(s'), h(target) = 0. Independent of
/// value iteration by design; used as a cross-check oracle.
pub fn expected_hitting_times(
    transitions: &Array3<f64>,
    policy: &StationaryPolicy,
    target: usize,
) -> Result<Array1<f64>, PlanningError> {
    let (s_count, _, _) = transitions.dim();
    if target >= s_count {
        return Err(PlanningError::TargetOutOfRange {
            target,
            n_states: s_count,
        });
    }
    let chain = induced_chain(transitions, policy)
        .map_err(|e| PlanningError::Shape(e.to_string()))?;

    // Unknowns are the non-target states in index order.
    let others: Vec<usize> = (0..s_count).filter(|&s| s != target).collect();
    let n = others.len();
    let mut a = Array2::<f64>::zeros((n, n));
    let b = Array1::<f64>::ones(n);
    for (i, &s) in others.iter().enumerate() {
        for (j, &s2) in others.iter().enumerate() {
            a[[i, j]] = if i == j { 1.0 } else { 0.0 };
            a[[i, j]] -= chain[[s, s2]];
        }
    }
    let h = linalg::solve(&a, &b).ok_or(PlanningError::UnreachableTarget { target })?;
    let mut out = Array1::<f64>::zeros(s_count);
    for (i, &s) in others.iter().enumerate() {
        out[s] = h[i];
    }
    Ok(out)
}

/// Support digraph reachability from `start` (forward or along reversed
/// edges), with an edge wherever any action moves between two states.
fn union_reach(transitions: &Array3<f64>, start: usize, reversed: bool) -> Vec<bool> {
    let (s_count, a_count, _) = transitions.dim();
    let mut seen = vec![false; s_count];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(s) = stack.pop() {
        for s2 in 0..s_count {
            if seen[s2] {
                continue;
            }
            let (from, to) = if reversed { (s2, s) } else { (s, s2) };
            let connected = (0..a_count).any(|a| transitions[[from, a, to]] > SUPPORT_TOL);
            if connected {
                seen[s2] = true;
                stack.push(s2);
            }
        }
    }
    seen
}

/// Verifies the model is communicating: in the union-over-actions support
/// graph, reachability under some policy is exactly graph reachability.
fn check_communicating(transitions: &Array3<f64>) -> Result<(), PlanningError> {
    let forward = union_reach(transitions, 0, false);
    if let Some(to) = forward.iter().position(|&r| !r) {
        return Err(PlanningError::NotCommunicating { from: 0, to });
    }
    let backward = union_reach(transitions, 0, true);
    if let Some(from) = backward.iter().position(|&r| !r) {
        return Err(PlanningError::NotCommunicating { from, to: 0 });
    }
    Ok(())
}

/// Diameter: worst-case over ordered pairs of the minimal expected hitting
/// time, computed from the exploration solutions. Per-target subproblems run
/// in parallel when the `parallel` feature is on.
pub fn diameter(transitions: &Array3<f64>) -> Result<f64, PlanningError> {
    let (s_count, _, _) = transitions.dim();
    if s_count == 1 {
        return Ok(0.0);
    }
    check_communicating(transitions)?;
    let per_target: Vec<Result<f64, PlanningError>> = map_indices(s_count, |target| {
        let solution = exploration_solution(transitions, target)?;
        let worst = solution
            .bias
            .iter()
            .enumerate()
            .filter(|(s, _)| *s != target)
            .map(|(_, &b)| b)
            .fold(0.0f64, f64::max);
        Ok(worst)
    });
    let mut d = 0.0f64;
    for r in per_target {
        d = d.max(r?);
    }
    Ok(d)
}

/// Strongly connected components of a chain's support digraph, by Kosaraju's
/// two-pass DFS. Used to name closed classes in evaluation errors.
fn strongly_connected_components(chain: &Array2<f64>) -> Vec<Vec<usize>> {
    let n = chain.nrows();
    let edge = |s: usize, s2: usize| chain[[s, s2]] > SUPPORT_TOL;

    // Pass 1: finish order via iterative DFS.
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for root in 0..n {
        if seen[root] {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        seen[root] = true;
        while let Some(&mut (s, ref mut next)) = stack.last_mut() {
            if *next < n {
                let s2 = *next;
                *next += 1;
                if !seen[s2] && edge(s, s2) {
                    seen[s2] = true;
                    stack.push((s2, 0));
                }
            } else {
                order.push(s);
                stack.pop();
            }
        }
    }

    // Pass 2: reverse-graph DFS in reverse finish order.
    let mut component = vec![usize::MAX; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for &root in order.iter().rev() {
        if component[root] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![];
        let mut stack = vec![root];
        component[root] = id;
        while let Some(s) = stack.pop() {
            members.push(s);
            for s2 in 0..n {
                if component[s2] == usize::MAX && edge(s2, s) {
                    component[s2] = id;
                    stack.push(s2);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}

/// Closed classes: components with no support edge leaving them.
fn closed_classes(chain: &Array2<f64>) -> Vec<Vec<usize>> {
    let components = strongly_connected_components(chain);
    let n = chain.nrows();
    let mut id = vec![0usize; n];
    for (k, comp) in components.iter().enumerate() {
        for &s in comp {
            id[s] = k;
        }
    }
    let mut closed: Vec<Vec<usize>> = components
        .iter()
        .enumerate()
        .filter(|(k, comp)| {
            comp.iter().all(|&s| {
                (0..n).all(|s2| id[s2] == *k || chain[[s, s2]] <= SUPPORT_TOL)
            })
        })
        .map(|(_, comp)| comp.clone())
        .collect();
    closed.sort();
    closed
}

fn stationary_distribution(chain: &Array2<f64>) -> Option<Array1<f64>> {
    let n = chain.nrows();
    // (P^T - I) q = 0 with the last row replaced by the normalization.
    let mut a = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            a[[i, j]] = chain[[j, i]] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[[n - 1, j]] = 1.0;
    }
    let mut b = Array1::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let q = linalg::solve(&a, &b)?;
    let clipped = q.mapv(|x| x.max(0.0));
    let total = clipped.sum();
    if total <= 0.0 {
        return None;
    }
    Some(clipped / total)
}

/// Evaluates a fixed policy on an irreducible induced chain: stationary
/// distribution, gain, and min-normalized bias from the Bellman equation.
pub fn policy_gain(
    transitions: &Array3<f64>,
    policy: &StationaryPolicy,
    cost: &Array2<f64>,
) -> Result<PolicyEvaluation, PlanningError> {
    check_cost_shape(transitions, cost)?;
    let (s_count, a_count, _) = transitions.dim();
    if policy.n_states() != s_count || policy.n_actions() != a_count {
        return Err(PlanningError::Shape(format!(
            "policy shaped {}x{} against {s_count}x{a_count} model",
            policy.n_states(),
            policy.n_actions()
        )));
    }
    let chain = induced_chain(transitions, policy)
        .map_err(|e| PlanningError::Shape(e.to_string()))?;

    let classes = closed_classes(&chain);
    let irreducible = classes.len() == 1 && classes[0].len() == s_count;
    if !irreducible {
        return Err(PlanningError::ReducibleChain {
            closed_classes: classes,
        });
    }

    let q = stationary_distribution(&chain).ok_or_else(|| PlanningError::Shape(
        "stationary system singular on an irreducible chain".to_string(),
    ))?;

    let mut mean_cost = Array1::<f64>::zeros(s_count);
    for s in 0..s_count {
        for a in 0..a_count {
            mean_cost[s] += policy.prob(s, a) * cost[[s, a]];
        }
    }
    let gain: f64 = q.iter().zip(mean_cost.iter()).map(|(qi, ci)| qi * ci).sum();

    // Bias from (I - P + 1 q^T) v = c_bar - J 1: the rank-one term pins the
    // q-weighted component, the rest is the Bellman equation.
    let mut a = Array2::<f64>::zeros((s_count, s_count));
    for i in 0..s_count {
        for j in 0..s_count {
            a[[i, j]] = (if i == j { 1.0 } else { 0.0 }) - chain[[i, j]] + q[j];
        }
    }
    let b = &mean_cost - gain;
    let v = linalg::solve(&a, &b).ok_or_else(|| PlanningError::Shape(
        "bias system singular on an irreducible chain".to_string(),
    ))?;
    let shift = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let bias = v.mapv(|x| x - shift);

    Ok(PolicyEvaluation {
        gain,
        bias,
        stationary_distribution: q,
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::test_fixtures::toy_model;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use test_support::random_model;

    /// Deterministic n-cycle with a single action.
    fn cycle(n: usize) -> Array3<f64> {
        let mut p = Array3::zeros((n, 1, n));
        for s in 0..n {
            p[[s, 0, (s + 1) % n]] = 1.0;
        }
        p
    }

    #[test]
    fn exploration_cost_examples() {
        let c = exploration_cost(2, 3, 1).unwrap();
        assert_eq!(c.row(0).to_vec(), vec![1.0, 1.0, 1.0]);
        assert_eq!(c.row(1).to_vec(), vec![0.0, 0.0, 0.0]);
        assert_eq!(exploration_cost(1, 2, 0).unwrap().sum(), 0.0);
        let c = exploration_cost(3, 4, 0).unwrap();
        assert_abs_diff_eq!(c.sum(), 8.0);
        assert!(matches!(
            exploration_cost(2, 1, 2),
            Err(PlanningError::TargetOutOfRange { .. })
        ));
    }

    #[test]
    fn two_cycle_exploration_solve() {
        let p = cycle(2);
        let sol = exploration_solution(&p, 1).unwrap();
        assert_abs_diff_eq!(sol.gain, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.bias[0], 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.bias[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn plain_rvi_recovers_untransformed_gain() {
        // Forced 2-cycle with cost [1, 0]: gain 1/2, bias [1/2, 0]. Catches
        // any failure to divide the transformed gain back out.
        let p = cycle(2);
        let mut cost = Array2::zeros((2, 1));
        cost[[0, 0]] = 1.0;
        let sol = relative_value_iteration(&p, &cost, default_rvi_tol(2)).unwrap();
        assert_abs_diff_eq!(sol.gain, 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.bias[0], 0.5, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.bias[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_cost_gives_zero_solution() {
        let p = random_model(7, 4, 2);
        let cost = Array2::zeros((4, 2));
        let sol = relative_value_iteration(&p, &cost, default_rvi_tol(4)).unwrap();
        assert_abs_diff_eq!(sol.gain, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.bias.sum(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sampled_toy_hitting_bias() {
        // theta = 0.5: from s0 the best reach of s1 is geometric with mean 2.
        let model = toy_model(0.5, 0.9);
        let sol = exploration_solution(model.transitions(), 1).unwrap();
        assert_abs_diff_eq!(sol.bias[0], 2.0, epsilon = 1e-6);
        let h = expected_hitting_times(model.transitions(), &sol.greedy_policy, 1).unwrap();
        assert_abs_diff_eq!(h[0], sol.bias[0], epsilon = 1e-6);
    }

    #[test]
    fn toy_shortest_path_plays_a1() {
        let model = toy_model(0.9, 0.5275);
        let policy = shortest_path_policy(model.transitions(), 1).unwrap();
        assert_abs_diff_eq!(policy.prob(0, 1), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn one_step_reachable_absorbing_target() {
        // The target is absorbing and every state jumps to it under action 1.
        let mut p = Array3::zeros((3, 2, 3));
        for s in 0..3 {
            p[[s, 0, s]] = 1.0;
            p[[s, 1, 2]] = 1.0;
        }
        let policy = shortest_path_policy(&p, 2).unwrap();
        let h = expected_hitting_times(&p, &policy, 2).unwrap();
        assert_abs_diff_eq!(h[0], 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(h[1], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn random_model_bias_matches_hitting_oracle() {
        let p = random_model(42, 5, 3);
        for target in 0..5 {
            let sol = exploration_solution(&p, target).unwrap();
            let h = expected_hitting_times(&p, &sol.greedy_policy, target).unwrap();
            for s in 0..5 {
                assert_abs_diff_eq!(h[s], sol.bias[s], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn hitting_times_three_cycle() {
        let p = cycle(3);
        let policy = StationaryPolicy::uniform(3, 1);
        let h = expected_hitting_times(&p, &policy, 2).unwrap();
        assert_abs_diff_eq!(h[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(h[1], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(h[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hitting_times_toy_always_a1() {
        let model = toy_model(0.9, 0.5275);
        let policy = StationaryPolicy::deterministic(2, &[1, 0]);
        let h = expected_hitting_times(model.transitions(), &policy, 1).unwrap();
        assert_abs_diff_eq!(h[0], 1.0 / 0.9, epsilon = 1e-9);
    }

    #[test]
    fn unreachable_target_is_an_error() {
        // s0 self-loops under the policy's action; target 1 unreachable.
        let mut p = Array3::zeros((2, 2, 2));
        p[[0, 0, 0]] = 1.0;
        p[[0, 1, 1]] = 1.0;
        p[[1, 0, 0]] = 1.0;
        p[[1, 1, 0]] = 1.0;
        let policy = StationaryPolicy::deterministic(2, &[0, 0]);
        assert!(matches!(
            expected_hitting_times(&p, &policy, 1),
            Err(PlanningError::UnreachableTarget { target: 1 })
        ));
    }

    #[test]
    fn diameter_cycle_and_pair() {
        assert_abs_diff_eq!(diameter(&cycle(4)).unwrap(), 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(diameter(&cycle(2)).unwrap(), 1.0, epsilon = 1e-7);
        let single = Array3::from_elem((1, 2, 1), 1.0);
        assert_abs_diff_eq!(diameter(&single).unwrap(), 0.0, epsilon = 0.0);
    }

    #[test]
    fn diameter_toy_model() {
        let model = toy_model(0.9, 0.5275);
        // s0 -> s1 takes 1/0.9 in expectation at best; s1 -> s0 is one step.
        assert_abs_diff_eq!(diameter(model.transitions()).unwrap(), 1.0 / 0.9, epsilon = 1e-6);
    }

    #[test]
    fn diameter_rejects_non_communicating() {
        let mut p = Array3::zeros((2, 1, 2));
        p[[0, 0, 0]] = 1.0;
        p[[1, 0, 0]] = 1.0;
        match diameter(&p) {
            Err(PlanningError::NotCommunicating { from: 0, to: 1 }) => {}
            other => panic!("expected NotCommunicating(0, 1), got {other:?}"),
        }
    }

    #[test]
    fn policy_gain_unit_cost() {
        let p = random_model(3, 4, 2);
        let policy = StationaryPolicy::uniform(4, 2);
        let eval = policy_gain(&p, &policy, &Array2::ones((4, 2))).unwrap();
        assert_abs_diff_eq!(eval.gain, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn policy_gain_toy_auxiliary() {
        let model = toy_model(0.9, 0.5275);
        let policy = StationaryPolicy::deterministic(2, &[1, 0]);
        let aux = model.costs().index_axis(ndarray::Axis(0), 1).to_owned();
        let eval = policy_gain(model.transitions(), &policy, &aux).unwrap();
        // Always-a1 stationary distribution puts 1/1.9 of the time at s0.
        assert_abs_diff_eq!(eval.gain, 1.0 / 1.9, epsilon = 1e-9);
        assert_abs_diff_eq!(eval.stationary_distribution[0], 1.0 / 1.9, epsilon = 1e-9);
    }

    #[test]
    fn policy_gain_stationarity_and_bellman() {
        let p = random_model(11, 5, 3);
        let policy = StationaryPolicy::uniform(5, 3);
        let mut cost = Array2::zeros((5, 3));
        for s in 0..5 {
            for a in 0..3 {
                cost[[s, a]] = ((s * 3 + a) as f64) / 15.0;
            }
        }
        let eval = policy_gain(&p, &policy, &cost).unwrap();
        let chain = induced_chain(&p, &policy).unwrap();
        // q is a left fixed point.
        for j in 0..5 {
            let mut flow = 0.0;
            for i in 0..5 {
                flow += eval.stationary_distribution[i] * chain[[i, j]];
            }
            assert_abs_diff_eq!(flow, eval.stationary_distribution[j], epsilon = 1e-9);
        }
        // Bellman equation: v + J = c_bar + P v.
        for s in 0..5 {
            let mut rhs = 0.0;
            for a in 0..3 {
                rhs += policy.prob(s, a) * cost[[s, a]];
            }
            for s2 in 0..5 {
                rhs += chain[[s, s2]] * eval.bias[s2];
            }
            assert_abs_diff_eq!(eval.bias[s] + eval.gain, rhs, epsilon = 1e-8);
        }
        let min_bias = eval.bias.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(min_bias, 0.0, epsilon = 0.0);
    }

    #[test]
    fn policy_gain_names_closed_classes() {
        // Two disjoint self-loops: both singleton classes are closed.
        let mut p = Array3::zeros((2, 1, 2));
        p[[0, 0, 0]] = 1.0;
        p[[1, 0, 1]] = 1.0;
        let policy = StationaryPolicy::uniform(2, 1);
        match policy_gain(&p, &policy, &Array2::ones((2, 1))) {
            Err(PlanningError::ReducibleChain { closed_classes }) => {
                assert_eq!(closed_classes, vec![vec![0], vec![1]]);
            }
            other => panic!("expected ReducibleChain, got {other:?}"),
        }
    }

    #[test]
    fn policy_gain_transient_states_are_not_closed() {
        // 0 -> 1 -> 1: only {1} is closed; 0 is transient.
        let mut p = Array3::zeros((2, 1, 2));
        p[[0, 0, 1]] = 1.0;
        p[[1, 0, 1]] = 1.0;
        let policy = StationaryPolicy::uniform(2, 1);
        match policy_gain(&p, &policy, &Array2::ones((2, 1))) {
            Err(PlanningError::ReducibleChain { closed_classes }) => {
                assert_eq!(closed_classes, vec![vec![1]]);
            }
            other => panic!("expected ReducibleChain, got {other:?}"),
        }
    }

    #[test]
    fn lemma_a2_bias_bounded_by_diameter() {
        for seed in [1u64, 2, 3] {
            let p = random_model(seed, 4, 2);
            let d = diameter(&p).unwrap();
            for target in 0..4 {
                let sol = exploration_solution(&p, target).unwrap();
                for s in 0..4 {
                    assert!(
                        sol.bias[s] <= d + 1e-6,
                        "bias {} exceeds diameter {} (seed {seed}, target {target})",
                        sol.bias[s],
                        d
                    );
                }
            }
        }
    }

    #[test]
    fn shift_invariance_of_bias_and_greedy() {
        let p = random_model(9, 4, 3);
        let mut cost = Array2::zeros((4, 3));
        for s in 0..4 {
            for a in 0..3 {
                cost[[s, a]] = ((s * 7 + a * 3) % 5) as f64 / 5.0;
            }
        }
        let base = relative_value_iteration(&p, &cost, default_rvi_tol(4)).unwrap();
        let shifted_cost = cost.mapv(|c| c + 0.37);
        let shifted = relative_value_iteration(&p, &shifted_cost, default_rvi_tol(4)).unwrap();
        assert_abs_diff_eq!(shifted.gain, base.gain + 0.37, epsilon = 1e-7);
        for s in 0..4 {
            assert_abs_diff_eq!(shifted.bias[s], base.bias[s], epsilon = 1e-6);
            assert_eq!(shifted.greedy_policy.mode(s), base.greedy_policy.mode(s));
        }
    }

    #[test]
    fn aperiodicity_transform_relations() {
        // Solving the manually transformed model reproduces the original
        // bias exactly and scales the gain by the blend factor; on
        // exploration problems both gains are zero, matching the stated
        // identities.
        let theta = 0.7;
        let p = random_model(21, 3, 2);
        let mut cost = Array2::zeros((3, 2));
        for s in 0..3 {
            for a in 0..2 {
                cost[[s, a]] = ((s + 2 * a) % 3) as f64 / 3.0;
            }
        }
        let mut p_t = Array3::zeros((3, 2, 3));
        for s in 0..3 {
            for a in 0..2 {
                for s2 in 0..3 {
                    p_t[[s, a, s2]] = theta * p[[s, a, s2]] + if s == s2 { 1.0 - theta } else { 0.0 };
                }
            }
        }
        let cost_t = cost.mapv(|c| theta * c);
        let base = relative_value_iteration(&p, &cost, default_rvi_tol(3)).unwrap();
        let transformed = relative_value_iteration(&p_t, &cost_t, default_rvi_tol(3)).unwrap();
        assert_abs_diff_eq!(transformed.gain, theta * base.gain, epsilon = 1e-7);
        for s in 0..3 {
            assert_abs_diff_eq!(transformed.bias[s], base.bias[s], epsilon = 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        /// The returned pair satisfies the optimality equation of the
        /// untransformed model within rvi_tol, with min-zero bias.
        #[test]
        fn rvi_bellman_residual(seed in 0u64..1000) {
            let p = random_model(seed, 3, 2);
            let mut cost = Array2::zeros((3, 2));
            let mut x = seed;
            for s in 0..3 {
                for a in 0..2 {
                    x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    cost[[s, a]] = ((x >> 33) % 1000) as f64 / 1000.0;
                }
            }
            let tol = default_rvi_tol(3);
            let sol = relative_value_iteration(&p, &cost, tol).unwrap();
            let min_bias = sol.bias.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(min_bias.abs() < 1e-15);
            for s in 0..3 {
                let mut best = f64::INFINITY;
                for a in 0..2 {
                    let mut q = cost[[s, a]];
                    for s2 in 0..3 {
                        q += p[[s, a, s2]] * sol.bias[s2];
                    }
                    best = best.min(q);
                }
                prop_assert!((sol.gain + sol.bias[s] - best).abs() <= tol);
            }
        }
    }

    #[test]
    fn hitting_times_reject_bad_target() {
        let p = cycle(3);
        let policy = StationaryPolicy::uniform(3, 1);
        assert!(matches!(
            expected_hitting_times(&p, &policy, 3),
            Err(PlanningError::TargetOutOfRange { .. })
        ));
    }
}
