//! Average-cost constrained Markov decision processes.
//!
//! The crate provides the model types and planners needed to run
//! posterior-sampling reinforcement learning in constrained MDPs:
//!
//! * [`cmdp`]: the `Cmdp` model, stationary policies, occupancy measures,
//!   and the conversions between them.
//! * [`lp`]: a dense two-phase primal simplex solver and the
//!   occupancy-measure linear program for constrained planning.
//! * [`planning`]: relative value iteration for average-cost optimality,
//!   exploration (shortest-path) policies, hitting times, and the diameter.
//! * [`posterior`]: Dirichlet posteriors over transition kernels.
//! * [`agents`]: the PSConRL, PSRL-CMDP, and C-UCRL learning agents.
//! * [`envs`]: benchmark environments: the two-state counterexample and
//!   grid-file compiled Marsrover / Box worlds.
//! * [`harness`]: seeded experiment runs, regret metrics, and CSV output.
//!
//! Multi-run simulations and per-target diameter solves use data-parallel
//! loops when the `parallel` feature (default) is enabled; disabling it
//! yields a dependency-free sequential fallback with identical results.

pub mod agents;
pub mod cmdp;
pub mod envs;
mod exec;
pub mod harness;
mod linalg;
pub mod lp;
pub mod planning;
pub mod posterior;
