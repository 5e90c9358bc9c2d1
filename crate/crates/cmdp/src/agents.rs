//! Learning agents: PSConRL, the PSRL-CMDP baseline, and C-UCRL, behind one
//! act/observe interface driven by the harness.
//!
//! PSConRL samples a model from the Dirichlet posterior at each episode
//! boundary and solves the constrained occupancy program on it. When the
//! sample is infeasible it steers to the least-visited state instead, which
//! is what keeps the posterior from getting stuck. PSRL-CMDP shares the
//! feasible path but reacts to infeasibility by dropping the constraints
//! outright. C-UCRL plans on empirical means with optimism on the main cost
//! and pessimism on the auxiliary ones.
//!
//! Call discipline: `act` then `observe` once per step, strictly
//! alternating; the agent tracks episode boundaries internally.

use crate::cmdp::{Cmdp, StationaryPolicy};
use crate::lp::{solve_constrained, solve_unconstrained, ConstrainedOutcome, LpError};
use crate::planning::{default_rvi_tol, exploration_solution_with_tol, PlanningError};
use crate::posterior::{init_prior, DirichletPosterior, PosteriorError};
use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Which planning branch produced the policy in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// The constrained program was feasible and its policy is running.
    LpFeasible,
    /// Fallback: exploration steering, unconstrained planning, or random
    /// play, depending on the agent.
    ExplorationFallback,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::LpFeasible => "lp",
            Branch::ExplorationFallback => "explore",
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("planning failed twice on freshly sampled models at t={t}: {first}; then {second}")]
    ResampleExhausted {
        t: u64,
        first: String,
        second: String,
    },
    #[error("posterior failure: {0}")]
    Posterior(#[from] PosteriorError),
    #[error("LP failure on a deterministic model: {0}")]
    Lp(#[from] LpError),
    #[error("agent model construction failed: {0}")]
    Model(String),
}

/// Shared agent knobs. Thresholds and cost tensors are passed to the
/// constructors directly since they come from the environment.
#[derive(Debug, Clone)]
pub struct AgentConfig {
    /// Dirichlet prior concentration per successor state.
    pub alpha0: f64,
    /// Value-iteration tolerance for the exploration solves; `None` scales
    /// the default with the state count.
    pub rvi_tol: Option<f64>,
    /// Seed recorded for bookkeeping; the harness owns the actual streams.
    pub seed: u64,
    /// C-UCRL epoch unit: epoch k lasts k*h steps.
    pub cucrl_h: u64,
    /// Multiplier on the C-UCRL confidence bonus.
    pub bonus_scale: f64,
    /// Confidence level inside the C-UCRL bonus.
    pub delta: f64,
    /// PSRL-CMDP resamples every step instead of every episode.
    pub psrl_per_step: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            alpha0: 0.1,
            rvi_tol: None,
            seed: 0,
            cucrl_h: 100,
            bonus_scale: 1.0,
            delta: 0.05,
            psrl_per_step: false,
        }
    }
}

impl AgentConfig {
    fn resolve_rvi_tol(&self, n_states: usize) -> f64 {
        self.rvi_tol.unwrap_or_else(|| default_rvi_tol(n_states))
    }
}

/// Book-keeping for one episode of the posterior-sampling agents.
#[derive(Debug, Clone)]
pub struct EpisodeState {
    /// Episode index k, starting at 1.
    pub episode_index: u64,
    /// First timestep of the episode, t_k.
    pub episode_start: u64,
    /// Length of the previous episode, T_{k-1} (0 before the first).
    pub prev_episode_len: u64,
    /// Visit counts frozen at t_k.
    pub start_counts: Array2<u64>,
    /// Live visit counts.
    pub counts: Array2<u64>,
    pub current_policy: StationaryPolicy,
    pub branch_taken: Branch,
}

impl EpisodeState {
    fn new(n_states: usize, n_actions: usize) -> Self {
        EpisodeState {
            episode_index: 0,
            episode_start: 0,
            prev_episode_len: 0,
            start_counts: Array2::zeros((n_states, n_actions)),
            counts: Array2::zeros((n_states, n_actions)),
            current_policy: StationaryPolicy::uniform(n_states, n_actions),
            branch_taken: Branch::ExplorationFallback,
        }
    }

    fn roll(&mut self, t: u64) {
        if self.episode_index > 0 {
            self.prev_episode_len = t - self.episode_start;
        }
        self.episode_index += 1;
        self.episode_start = t;
        self.start_counts.assign(&self.counts);
    }

    /// Visit count per state at episode start, N_{t_k}(s).
    fn start_state_count(&self, s: usize) -> u64 {
        self.start_counts.row(s).sum()
    }
}

/// Episode stopping rule: the episode ends at the first t (checked after
/// the count update for the step at t) where either the running length
/// exceeds the previous episode's length, or some pair's count reaches its
/// doubling target max(1, 2*N_{t_k}(s,a)).
pub fn psconrl_should_stop(es: &EpisodeState, t: u64) -> bool {
    if t + 1 - es.episode_start > es.prev_episode_len {
        return true;
    }
    es.counts
        .iter()
        .zip(es.start_counts.iter())
        .any(|(&n, &n0)| n >= (2 * n0).max(1))
}

/// Outcome of one episode-head planning pass.
#[derive(Debug, Clone)]
pub struct PlannedEpisode {
    pub policy: StationaryPolicy,
    pub branch: Branch,
    /// Objective value of the planning LP, when one was solved.
    pub lp_objective: Option<f64>,
    /// Target state of the exploration steer, when that branch was taken.
    pub exploration_target: Option<usize>,
}

/// One sampled-model planning attempt; errors here trigger one resample.
fn plan_on_sample(
    sample: Array3<f64>,
    costs: &Array3<f64>,
    thresholds: &Array1<f64>,
    fallback: &mut dyn FnMut(&Cmdp) -> Result<PlannedEpisode, String>,
) -> Result<PlannedEpisode, String> {
    let model = Cmdp::new(sample, costs.clone(), thresholds.clone()).map_err(|e| e.to_string())?;
    match solve_constrained(&model).map_err(|e| e.to_string())? {
        ConstrainedOutcome::Optimal(sol) => Ok(PlannedEpisode {
            policy: sol.policy,
            branch: Branch::LpFeasible,
            lp_objective: Some(sol.objective_value),
            exploration_target: None,
        }),
        ConstrainedOutcome::Infeasible { .. } => fallback(&model),
    }
}

fn plan_with_resample(
    posterior: &DirichletPosterior,
    costs: &Array3<f64>,
    thresholds: &Array1<f64>,
    t: u64,
    rng: &mut ChaCha8Rng,
    fallback: &mut dyn FnMut(&Cmdp) -> Result<PlannedEpisode, String>,
) -> Result<PlannedEpisode, AgentError> {
    let first = match plan_on_sample(posterior.sample(rng), costs, thresholds, fallback) {
        Ok(out) => return Ok(out),
        Err(msg) => msg,
    };
    // One fresh draw from the same posterior; a second failure aborts.
    match plan_on_sample(posterior.sample(rng), costs, thresholds, fallback) {
        Ok(out) => Ok(out),
        Err(second) => Err(AgentError::ResampleExhausted { t, first, second }),
    }
}

/// PSConRL episode head: sample, solve the constrained program, and fall
/// back to shortest-path exploration toward the least-visited state when
/// the sample is infeasible.
pub fn psconrl_begin_episode(
    posterior: &DirichletPosterior,
    costs: &Array3<f64>,
    thresholds: &Array1<f64>,
    es: &EpisodeState,
    rvi_tol: f64,
    t: u64,
    rng: &mut ChaCha8Rng,
) -> Result<PlannedEpisode, AgentError> {
    let n_states = posterior.n_states();
    let target = (0..n_states).min_by_key(|&s| es.start_state_count(s)).unwrap();
    let mut fallback = |model: &Cmdp| {
        let solution = exploration_solution_with_tol(model.transitions(), target, rvi_tol)
            .map_err(|e: PlanningError| e.to_string())?;
        Ok(PlannedEpisode {
            policy: solution.greedy_policy,
            branch: Branch::ExplorationFallback,
            lp_objective: None,
            exploration_target: Some(target),
        })
    };
    plan_with_resample(posterior, costs, thresholds, t, rng, &mut fallback)
}

/// PSRL-CMDP episode head: identical to PSConRL on feasible samples, but
/// infeasible ones are planned unconstrained.
pub fn psrlcmdp_begin_episode(
    posterior: &DirichletPosterior,
    costs: &Array3<f64>,
    thresholds: &Array1<f64>,
    t: u64,
    rng: &mut ChaCha8Rng,
) -> Result<PlannedEpisode, AgentError> {
    let mut fallback = |model: &Cmdp| {
        let sol = solve_unconstrained(model, 0).map_err(|e| e.to_string())?;
        Ok(PlannedEpisode {
            policy: sol.policy,
            branch: Branch::ExplorationFallback,
            lp_objective: Some(sol.objective_value),
            exploration_target: None,
        })
    };
    plan_with_resample(posterior, costs, thresholds, t, rng, &mut fallback)
}

/// Uniform interface the harness drives. `act` and `observe` must strictly
/// alternate, with `t` increasing by one per step from zero.
pub trait Agent {
    fn act(&mut self, s: usize, t: u64, rng: &mut ChaCha8Rng) -> Result<usize, AgentError>;
    fn observe(&mut self, s: usize, a: usize, s_next: usize, costs: &[f64]);
    /// Episode (or epoch) index of the step currently in force, 1-based.
    fn episode_index(&self) -> u64;
    fn branch(&self) -> Branch;
    /// Exploration target of the current episode, when the agent has one.
    fn exploration_target(&self) -> Option<usize> {
        None
    }
    /// Objective of the planning LP behind the current episode, if any.
    fn lp_objective(&self) -> Option<f64> {
        None
    }
    /// The transition posterior, for agents that keep one.
    fn posterior(&self) -> Option<&DirichletPosterior> {
        None
    }
}

pub struct PsconrlAgent {
    posterior: DirichletPosterior,
    costs: Array3<f64>,
    thresholds: Array1<f64>,
    es: EpisodeState,
    rvi_tol: f64,
    needs_plan: bool,
    last_t: u64,
    current_target: Option<usize>,
    current_objective: Option<f64>,
}

impl PsconrlAgent {
    pub fn new(
        costs: Array3<f64>,
        thresholds: Array1<f64>,
        config: &AgentConfig,
    ) -> Result<Self, AgentError> {
        let (_, n_states, n_actions) = costs.dim();
        let posterior = init_prior(n_states, n_actions, config.alpha0)?;
        Ok(PsconrlAgent {
            posterior,
            costs,
            thresholds,
            es: EpisodeState::new(n_states, n_actions),
            rvi_tol: config.resolve_rvi_tol(n_states),
            needs_plan: true,
            last_t: 0,
            current_target: None,
            current_objective: None,
        })
    }

    pub fn episode_state(&self) -> &EpisodeState {
        &self.es
    }
}

impl Agent for PsconrlAgent {
    fn act(&mut self, s: usize, t: u64, rng: &mut ChaCha8Rng) -> Result<usize, AgentError> {
        if self.needs_plan {
            self.es.roll(t);
            let plan = psconrl_begin_episode(
                &self.posterior,
                &self.costs,
                &self.thresholds,
                &self.es,
                self.rvi_tol,
                t,
                rng,
            )?;
            self.es.current_policy = plan.policy;
            self.es.branch_taken = plan.branch;
            self.current_target = plan.exploration_target;
            self.current_objective = plan.lp_objective;
            self.needs_plan = false;
        }
        self.last_t = t;
        Ok(self.es.current_policy.sample_action(s, rng))
    }

    fn observe(&mut self, s: usize, a: usize, s_next: usize, _costs: &[f64]) {
        self.es.counts[[s, a]] += 1;
        self.posterior.observe(s, a, s_next).expect("observed indices in range");
        if psconrl_should_stop(&self.es, self.last_t) {
            self.needs_plan = true;
        }
    }

    fn episode_index(&self) -> u64 {
        self.es.episode_index
    }

    fn branch(&self) -> Branch {
        self.es.branch_taken
    }

    fn exploration_target(&self) -> Option<usize> {
        self.current_target
    }

    fn lp_objective(&self) -> Option<f64> {
        self.current_objective
    }

    fn posterior(&self) -> Option<&DirichletPosterior> {
        Some(&self.posterior)
    }
}

pub struct PsrlCmdpAgent {
    posterior: DirichletPosterior,
    costs: Array3<f64>,
    thresholds: Array1<f64>,
    es: EpisodeState,
    per_step: bool,
    needs_plan: bool,
    last_t: u64,
    current_objective: Option<f64>,
}

impl PsrlCmdpAgent {
    pub fn new(
        costs: Array3<f64>,
        thresholds: Array1<f64>,
        config: &AgentConfig,
    ) -> Result<Self, AgentError> {
        let (_, n_states, n_actions) = costs.dim();
        let posterior = init_prior(n_states, n_actions, config.alpha0)?;
        Ok(PsrlCmdpAgent {
            posterior,
            costs,
            thresholds,
            es: EpisodeState::new(n_states, n_actions),
            per_step: config.psrl_per_step,
            needs_plan: true,
            last_t: 0,
            current_objective: None,
        })
    }
}

impl Agent for PsrlCmdpAgent {
    fn act(&mut self, s: usize, t: u64, rng: &mut ChaCha8Rng) -> Result<usize, AgentError> {
        if self.per_step || self.needs_plan {
            self.es.roll(t);
            let plan = psrlcmdp_begin_episode(
                &self.posterior,
                &self.costs,
                &self.thresholds,
                t,
                rng,
            )?;
            self.es.current_policy = plan.policy;
            self.es.branch_taken = plan.branch;
            self.current_objective = plan.lp_objective;
            self.needs_plan = false;
        }
        self.last_t = t;
        Ok(self.es.current_policy.sample_action(s, rng))
    }

    fn observe(&mut self, s: usize, a: usize, s_next: usize, _costs: &[f64]) {
        self.es.counts[[s, a]] += 1;
        self.posterior.observe(s, a, s_next).expect("observed indices in range");
        if !self.per_step && psconrl_should_stop(&self.es, self.last_t) {
            self.needs_plan = true;
        }
    }

    fn episode_index(&self) -> u64 {
        self.es.episode_index
    }

    fn branch(&self) -> Branch {
        self.es.branch_taken
    }

    fn lp_objective(&self) -> Option<f64> {
        self.current_objective
    }

    fn posterior(&self) -> Option<&DirichletPosterior> {
        Some(&self.posterior)
    }
}

/// Plan for one C-UCRL epoch, fixed at the epoch head.
#[derive(Debug, Clone)]
pub struct EpochPlan {
    /// Total epoch length k*h.
    pub epoch_len: u64,
    /// Steps of uniform-random play at the head of the epoch.
    pub random_steps: u64,
    /// Policy for the remaining steps; `None` keeps the whole epoch random.
    pub lp_policy: Option<StationaryPolicy>,
    /// Objective of the optimistic LP when it was feasible.
    pub lp_objective: Option<f64>,
}

/// C-UCRL epoch head: optimistic main cost, pessimistic auxiliary costs,
/// empirical transitions (uniform where unvisited).
#[allow(clippy::too_many_arguments)]
pub fn cucrl_begin_epoch(
    p_bar: &Array3<f64>,
    c_bar: &Array3<f64>,
    counts: &Array2<u64>,
    thresholds: &Array1<f64>,
    k: u64,
    h: u64,
    bonus_scale: f64,
    delta: f64,
) -> Result<EpochPlan, AgentError> {
    assert!(k >= 1 && h >= 1);
    let (n_states, n_actions) = counts.dim();
    let m = thresholds.len();
    let log_term = (2.0 * n_states as f64 * n_actions as f64 * k as f64 / delta).ln();
    let mut costs = c_bar.clone();
    for s in 0..n_states {
        for a in 0..n_actions {
            let n = counts[[s, a]].max(1) as f64;
            let bonus = bonus_scale * (log_term / n).sqrt().min(1.0);
            costs[[0, s, a]] = (c_bar[[0, s, a]] - bonus).max(0.0);
            for i in 1..=m {
                costs[[i, s, a]] = (c_bar[[i, s, a]] + bonus).min(1.0);
            }
        }
    }
    let model = Cmdp::new(p_bar.clone(), costs, thresholds.clone())
        .map_err(|e| AgentError::Model(e.to_string()))?;
    let solution = solve_constrained(&model)?.optimal();
    Ok(EpochPlan {
        epoch_len: k * h,
        random_steps: h,
        lp_objective: solution.as_ref().map(|sol| sol.objective_value),
        lp_policy: solution.map(|sol| sol.policy),
    })
}

pub struct CucrlAgent {
    /// Count store; never sampled, only read back as empirical means.
    counts: DirichletPosterior,
    cost_sums: Array3<f64>,
    thresholds: Array1<f64>,
    n_states: usize,
    n_actions: usize,
    h: u64,
    bonus_scale: f64,
    delta: f64,
    epoch_index: u64,
    epoch_start: u64,
    epoch_end: u64,
    plan: Option<EpochPlan>,
    branch_now: Branch,
}

impl CucrlAgent {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        m: usize,
        thresholds: Array1<f64>,
        config: &AgentConfig,
    ) -> Result<Self, AgentError> {
        assert!(config.cucrl_h >= 1, "epoch unit h must be at least 1");
        assert_eq!(thresholds.len(), m);
        Ok(CucrlAgent {
            counts: init_prior(n_states, n_actions, 1.0)?,
            cost_sums: Array3::zeros((m + 1, n_states, n_actions)),
            thresholds,
            n_states,
            n_actions,
            h: config.cucrl_h,
            bonus_scale: config.bonus_scale,
            delta: config.delta,
            epoch_index: 0,
            epoch_start: 0,
            epoch_end: 0,
            plan: None,
            branch_now: Branch::ExplorationFallback,
        })
    }

    fn empirical_transitions(&self) -> Array3<f64> {
        let mut p = Array3::zeros((self.n_states, self.n_actions, self.n_states));
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let n = self.counts.visit_count(s, a);
                for s2 in 0..self.n_states {
                    p[[s, a, s2]] = if n == 0 {
                        1.0 / self.n_states as f64
                    } else {
                        self.counts.transition_count(s, a, s2) as f64 / n as f64
                    };
                }
            }
        }
        p
    }

    fn empirical_costs(&self) -> Array3<f64> {
        let m = self.thresholds.len();
        let mut c = Array3::zeros((m + 1, self.n_states, self.n_actions));
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let n = self.counts.visit_count(s, a);
                for i in 0..=m {
                    c[[i, s, a]] = if n == 0 {
                        0.0
                    } else {
                        self.cost_sums[[i, s, a]] / n as f64
                    };
                }
            }
        }
        c
    }

    fn visit_counts(&self) -> Array2<u64> {
        let mut n = Array2::zeros((self.n_states, self.n_actions));
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                n[[s, a]] = self.counts.visit_count(s, a);
            }
        }
        n
    }
}

impl Agent for CucrlAgent {
    fn act(&mut self, s: usize, t: u64, rng: &mut ChaCha8Rng) -> Result<usize, AgentError> {
        if self.epoch_index == 0 || t >= self.epoch_end {
            self.epoch_index += 1;
            self.epoch_start = t;
            self.epoch_end = t + self.epoch_index * self.h;
            self.plan = Some(cucrl_begin_epoch(
                &self.empirical_transitions(),
                &self.empirical_costs(),
                &self.visit_counts(),
                &self.thresholds,
                self.epoch_index,
                self.h,
                self.bonus_scale,
                self.delta,
            )?);
        }
        let plan = self.plan.as_ref().expect("plan set at epoch head");
        let in_random_head = t - self.epoch_start < plan.random_steps;
        if in_random_head || plan.lp_policy.is_none() {
            self.branch_now = Branch::ExplorationFallback;
            Ok(rng.random_range(0..self.n_actions))
        } else {
            self.branch_now = Branch::LpFeasible;
            Ok(plan
                .lp_policy
                .as_ref()
                .expect("checked above")
                .sample_action(s, rng))
        }
    }

    fn observe(&mut self, s: usize, a: usize, s_next: usize, costs: &[f64]) {
        self.counts.observe(s, a, s_next).expect("observed indices in range");
        for (i, &c) in costs.iter().enumerate() {
            self.cost_sums[[i, s, a]] += c;
        }
    }

    fn episode_index(&self) -> u64 {
        self.epoch_index
    }

    fn branch(&self) -> Branch {
        self.branch_now
    }

    fn lp_objective(&self) -> Option<f64> {
        self.plan.as_ref().and_then(|p| p.lp_objective)
    }
}
