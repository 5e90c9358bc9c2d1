//! Constrained MDP model types and the occupancy/policy conversions.
//!
//! A `Cmdp` is the tuple (S, A, p, c, tau): a transition tensor, an
//! (m+1)-component cost tensor with main cost c0 and auxiliary costs
//! c1..cm, and the m budget thresholds. Stationary policies and occupancy
//! measures are the two interchangeable policy representations; the
//! extraction rule pi(a|s) = mu(s,a) / sum_a' mu(s,a') ties them together.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use thiserror::Error;

/// Tolerance on probability row sums.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Occupancy row totals at or below this are treated as zero (unvisited state).
pub const ZERO_ROW_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("transitions must be [S x A x S], got [{0} x {1} x {2}]")]
    Transitions(usize, usize, usize),
    #[error("costs must be [(m+1) x S x A] with at least one component, got [{0} x {1} x {2}]")]
    Costs(usize, usize, usize),
    #[error("policy shape [{got_states} x {got_actions}] does not match model [{states} x {actions}]")]
    PolicyMismatch {
        states: usize,
        actions: usize,
        got_states: usize,
        got_actions: usize,
    },
    #[error("policy row {state} sums to {sum}, expected 1")]
    PolicyRowSum { state: usize, sum: f64 },
    #[error("empty model (S and A must be positive)")]
    Empty,
}

/// Full constrained MDP model.
#[derive(Debug, Clone)]
pub struct Cmdp {
    transitions: Array3<f64>,
    costs: Array3<f64>,
    thresholds: Array1<f64>,
}

impl Cmdp {
    /// Builds a model from raw tensors, checking shapes only. Numeric
    /// invariants (row sums, ranges) are reported by [`validate_cmdp`].
    pub fn new(
        transitions: Array3<f64>,
        costs: Array3<f64>,
        thresholds: Array1<f64>,
    ) -> Result<Self, ShapeError> {
        let (s, a, s2) = transitions.dim();
        if s == 0 || a == 0 {
            return Err(ShapeError::Empty);
        }
        if s2 != s {
            return Err(ShapeError::Transitions(s, a, s2));
        }
        let (comps, cs, ca) = costs.dim();
        if comps != thresholds.len() + 1 || cs != s || ca != a {
            return Err(ShapeError::Costs(comps, cs, ca));
        }
        Ok(Self {
            transitions,
            costs,
            thresholds,
        })
    }

    pub fn n_states(&self) -> usize {
        self.transitions.dim().0
    }

    pub fn n_actions(&self) -> usize {
        self.transitions.dim().1
    }

    /// Number of auxiliary (budgeted) cost components, m.
    pub fn n_constraints(&self) -> usize {
        self.thresholds.len()
    }

    pub fn transitions(&self) -> &Array3<f64> {
        &self.transitions
    }

    pub fn costs(&self) -> &Array3<f64> {
        &self.costs
    }

    /// Cost component `i` at (s, a); component 0 is the main cost.
    pub fn cost(&self, component: usize, s: usize, a: usize) -> f64 {
        self.costs[[component, s, a]]
    }

    pub fn thresholds(&self) -> &Array1<f64> {
        &self.thresholds
    }

    /// Markov chain induced by `policy`: P[s,s'] = sum_a pi(a|s) p(s'|s,a).
    pub fn induced_chain(&self, policy: &StationaryPolicy) -> Result<Array2<f64>, ShapeError> {
        induced_chain(&self.transitions, policy)
    }
}

/// One defect found by [`validate_cmdp`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// sum_s' p(s'|s,a) deviates from 1 by `deviation`.
    RowSum {
        state: usize,
        action: usize,
        deviation: f64,
    },
    NegativeTransition {
        state: usize,
        action: usize,
        next_state: usize,
        value: f64,
    },
    /// Cost entry outside [0,1] by `excess`.
    CostRange {
        component: usize,
        state: usize,
        action: usize,
        excess: f64,
    },
    ThresholdRange { component: usize, excess: f64 },
}

impl Violation {
    pub fn magnitude(&self) -> f64 {
        match *self {
            Violation::RowSum { deviation, .. } => deviation,
            Violation::NegativeTransition { value, .. } => -value,
            Violation::CostRange { excess, .. } => excess,
            Violation::ThresholdRange { excess, .. } => excess,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every numeric invariant of the model and reports all defects;
/// never fails.
pub fn validate_cmdp(model: &Cmdp) -> ValidationReport {
    let mut violations = Vec::new();
    let (s_count, a_count, _) = model.transitions.dim();

    for s in 0..s_count {
        for a in 0..a_count {
            let mut sum = 0.0;
            for s2 in 0..s_count {
                let p = model.transitions[[s, a, s2]];
                if p < 0.0 {
                    violations.push(Violation::NegativeTransition {
                        state: s,
                        action: a,
                        next_state: s2,
                        value: p,
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                violations.push(Violation::RowSum {
                    state: s,
                    action: a,
                    deviation: (sum - 1.0).abs(),
                });
            }
        }
    }

    for (i, row) in model.costs.outer_iter().enumerate() {
        for s in 0..s_count {
            for a in 0..a_count {
                let c = row[[s, a]];
                let excess = if c < 0.0 {
                    -c
                } else if c > 1.0 {
                    c - 1.0
                } else {
                    0.0
                };
                if excess > 0.0 {
                    violations.push(Violation::CostRange {
                        component: i,
                        state: s,
                        action: a,
                        excess,
                    });
                }
            }
        }
    }

    for (i, &tau) in model.thresholds.iter().enumerate() {
        let excess = if tau < 0.0 {
            -tau
        } else if tau > 1.0 {
            tau - 1.0
        } else {
            0.0
        };
        if excess > 0.0 {
            violations.push(Violation::ThresholdRange {
                component: i,
                excess,
            });
        }
    }

    ValidationReport { violations }
}

/// Randomized stationary policy; rows are distributions over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    probs: Array2<f64>,
}

impl StationaryPolicy {
    pub fn new(probs: Array2<f64>) -> Result<Self, ShapeError> {
        for (s, row) in probs.outer_iter().enumerate() {
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|&p| p < 0.0) {
                return Err(ShapeError::PolicyRowSum { state: s, sum });
            }
        }
        Ok(Self { probs })
    }

    /// Deterministic policy choosing `actions[s]` in state s.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let mut probs = Array2::zeros((actions.len(), n_actions));
        for (s, &a) in actions.iter().enumerate() {
            probs[[s, a]] = 1.0;
        }
        Self { probs }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            probs: Array2::from_elem((n_states, n_actions), 1.0 / n_actions as f64),
        }
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[[s, a]]
    }

    /// Most likely action in state s (lowest index on ties).
    pub fn mode(&self, s: usize) -> usize {
        let row = self.probs.row(s);
        let mut best = 0;
        for a in 1..row.len() {
            if row[a] > row[best] {
                best = a;
            }
        }
        best
    }

    /// Samples an action in state s, consuming exactly one uniform draw.
    pub fn sample_action<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_categorical(self.probs.row(s).as_slice().unwrap(), rng)
    }
}

/// Draws an index from an unnormalized-but-near-1 probability row using a
/// single uniform variate and a CDF scan. The final index absorbs rounding.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

/// Long-run state-action visitation frequencies; the LP decision variable.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    mu: Array2<f64>,
}

impl OccupancyMeasure {
    pub fn new(mu: Array2<f64>) -> Self {
        Self { mu }
    }

    pub fn mu(&self) -> &Array2<f64> {
        &self.mu
    }

    /// sum_{s,a} mu(s,a) * cost(s,a).
    pub fn expected_cost(&self, cost: &ndarray::ArrayView2<f64>) -> f64 {
        let mut acc = 0.0;
        for s in 0..self.mu.nrows() {
            for a in 0..self.mu.ncols() {
                acc += self.mu[[s, a]] * cost[[s, a]];
            }
        }
        acc
    }

    /// Per-state totals sum_a mu(s,a).
    pub fn state_occupancy(&self) -> Array1<f64> {
        self.mu.sum_axis(ndarray::Axis(1))
    }
}

/// Extracts the stationary policy pi(a|s) = mu(s,a) / sum_a' mu(s,a').
/// States with total occupancy at or below [`ZERO_ROW_TOL`] get the uniform
/// row: the LP guarantees they are visited with asymptotic frequency zero,
/// and uniform keeps the policy well defined on transient excursions.
pub fn policy_from_occupancy(mu: &OccupancyMeasure) -> StationaryPolicy {
    let (s_count, a_count) = mu.mu().dim();
    let mut probs = Array2::zeros((s_count, a_count));
    for s in 0..s_count {
        let total: f64 = mu.mu().row(s).sum();
        if total > ZERO_ROW_TOL {
            for a in 0..a_count {
                probs[[s, a]] = (mu.mu()[[s, a]] / total).max(0.0);
            }
            // Renormalize away clipping residue so rows sum to 1 exactly.
            let sum: f64 = probs.row(s).sum();
            for a in 0..a_count {
                probs[[s, a]] /= sum;
            }
        } else {
            for a in 0..a_count {
                probs[[s, a]] = 1.0 / a_count as f64;
            }
        }
    }
    StationaryPolicy { probs }
}

/// Markov chain induced by a policy on a transition tensor.
pub fn induced_chain(
    transitions: &Array3<f64>,
    policy: &StationaryPolicy,
) -> Result<Array2<f64>, ShapeError> {
    let (s_count, a_count, _) = transitions.dim();
    if policy.n_states() != s_count || policy.n_actions() != a_count {
        return Err(ShapeError::PolicyMismatch {
            states: s_count,
            actions: a_count,
            got_states: policy.n_states(),
            got_actions: policy.n_actions(),
        });
    }
    let mut chain = Array2::zeros((s_count, s_count));
    for s in 0..s_count {
        for a in 0..a_count {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for s2 in 0..s_count {
                chain[[s, s2]] += w * transitions[[s, a, s2]];
            }
        }
    }
    Ok(chain)
}
