//! Dense linear programming: two-phase primal simplex with Bland's rule,
//! and the occupancy-measure program for constrained average-cost planning.
//!
//! The occupancy LP minimizes sum mu*c0 over mu >= 0 subject to the m budget
//! rows sum mu*ci <= tau_i, the S flow-conservation equalities, and the
//! normalization sum mu = 1. One flow row is linearly dependent given the
//! normalization, so the constrained solver drops the row for state 0.
//!
//! Infeasibility is a first-class outcome, not an error: the learning agents
//! branch on it. The solver is fully deterministic (fixed pivot rule, no
//! randomization), so identical inputs give bit-identical outcomes.

use crate::cmdp::{policy_from_occupancy, Cmdp, OccupancyMeasure, StationaryPolicy};
use crate::linalg::Lu;
use ndarray::Array2;
use thiserror::Error;

/// Feasibility tolerance: phase-1 optima above this certify infeasibility,
/// and Optimal outcomes satisfy all constraints within it.
pub const FEAS_TOL: f64 = 1e-7;
/// Optimality tolerance on the rational-data test corpus.
pub const OPT_TOL: f64 = 1e-8;
/// Reduced costs and pivot elements below this count as zero.
const PIVOT_TOL: f64 = 1e-9;
/// Dividing a row by anything smaller than this amplifies elimination
/// round-off into the tableau, so the ratio test and the artificial
/// drive-out only accept such pivots when no safer row exists.
const STABLE_PIVOT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintSense {
    Le,
    Eq,
    Ge,
}

/// Generic LP in the form: minimize c.x subject to A x (<=|=|>=) b, x >= lb.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub constraints: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub senses: Vec<ConstraintSense>,
    pub lower_bounds: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("non-finite entry in LP data")]
    NonFinite,
    #[error("inconsistent LP dimensions: {0}")]
    BadShape(String),
    #[error("simplex iteration limit reached after {pivots} pivots")]
    IterationLimit { pivots: usize },
    #[error("LP unexpectedly infeasible (phase-1 optimum {infeasibility}); the occupancy polytope of a valid model is nonempty")]
    UnexpectedInfeasible { infeasibility: f64 },
    #[error("LP unexpectedly unbounded; the occupancy polytope is bounded")]
    UnexpectedUnbounded,
    #[error("simplex lost numerical consistency (scaled constraint violation {violation:.3e})")]
    Numerical { violation: f64 },
}

impl LpProblem {
    /// Builds a problem with default zero lower bounds.
    pub fn new(
        objective: Vec<f64>,
        constraints: Vec<Vec<f64>>,
        rhs: Vec<f64>,
        senses: Vec<ConstraintSense>,
    ) -> Result<Self, LpError> {
        let n = objective.len();
        let lower_bounds = vec![0.0; n];
        let p = Self {
            objective,
            constraints,
            rhs,
            senses,
            lower_bounds,
        };
        p.check_shape()?;
        Ok(p)
    }

    pub fn with_lower_bounds(mut self, lower_bounds: Vec<f64>) -> Result<Self, LpError> {
        self.lower_bounds = lower_bounds;
        self.check_shape()?;
        Ok(self)
    }

    fn check_shape(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        let k = self.constraints.len();
        if self.rhs.len() != k || self.senses.len() != k {
            return Err(LpError::BadShape(format!(
                "{} rows, {} rhs, {} senses",
                k,
                self.rhs.len(),
                self.senses.len()
            )));
        }
        if let Some(row) = self.constraints.iter().find(|row| row.len() != n) {
            return Err(LpError::BadShape(format!(
                "row of length {} in an {n}-variable problem",
                row.len()
            )));
        }
        if self.lower_bounds.len() != n {
            return Err(LpError::BadShape(format!(
                "{} lower bounds for {n} variables",
                self.lower_bounds.len()
            )));
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.rhs.iter().all(|v| v.is_finite())
            && self.lower_bounds.iter().all(|v| v.is_finite())
            && self
                .constraints
                .iter()
                .all(|row| row.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(LpError::NonFinite);
        }
        Ok(())
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.constraints.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    /// Phase-1 optimum (total residual infeasibility), strictly above `FEAS_TOL`.
    Infeasible { infeasibility: f64 },
    /// An unbounded improving ray in the original variable space.
    Unbounded { ray: Vec<f64> },
}

/// Tableau rows drift after this many pivots and get rebuilt from the
/// original data (degenerate occupancy LPs stall for long stretches under
/// Bland's rule, which would otherwise compound round-off without bound).
const REFACTOR_INTERVAL: usize = 64;

/// Dense simplex tableau: `rows` are the constraint rows with the rhs in the
/// last column; `obj` is the reduced-cost row with -(objective value) last.
/// `orig` keeps the initial rows untouched so the tableau can be recomputed
/// exactly from the current basis at any time.
struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
    orig: Vec<Vec<f64>>,
    orig_ncols: usize,
    /// Indices into `orig` of the rows that have not been dropped as
    /// redundant.
    live: Vec<usize>,
    since_refactor: usize,
}

enum IterEnd {
    Optimal,
    Unbounded { entering: usize },
    /// Refactor interval reached; rebuild and continue.
    Stale,
}

enum PhaseEnd {
    Optimal,
    Unbounded { entering: usize },
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let scale = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= scale;
        }
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let factor = self.rows[i][c];
            if factor != 0.0 {
                for j in 0..=self.ncols {
                    let delta = factor * self.rows[r][j];
                    self.rows[i][j] -= delta;
                }
                self.rows[i][c] = 0.0;
            }
        }
        let factor = self.obj[c];
        if factor != 0.0 {
            for j in 0..=self.ncols {
                self.obj[j] -= factor * self.rows[r][j];
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
        self.since_refactor += 1;
        // Snap away negative round-off so ratio tests stay well defined.
        for i in 0..self.rows.len() {
            let b = self.rows[i][self.ncols];
            if b < 0.0 && b > -1e-11 {
                self.rows[i][self.ncols] = 0.0;
            }
        }
    }

    /// Rebuilds `rows` exactly from the original data and the current basis
    /// by one dense LU solve, resetting accumulated round-off.
    fn refactor(&mut self) -> Result<(), LpError> {
        let r = self.rows.len();
        if r == 0 {
            self.since_refactor = 0;
            return Ok(());
        }
        let mut bmat = Array2::zeros((r, r));
        for (i, &orow) in self.live.iter().enumerate() {
            for (jj, &bcol) in self.basis.iter().enumerate() {
                bmat[[i, jj]] = self.orig[orow][bcol];
            }
        }
        let lu = Lu::factor(bmat).ok_or(LpError::Numerical {
            violation: f64::INFINITY,
        })?;
        let mut col = vec![0.0; r];
        for j in 0..=self.ncols {
            let src = if j == self.ncols { self.orig_ncols } else { j };
            for (i, &orow) in self.live.iter().enumerate() {
                col[i] = self.orig[orow][src];
            }
            let y = lu.solve(&col);
            for i in 0..r {
                self.rows[i][j] = y[i];
            }
        }
        // Basic columns are unit vectors in exact arithmetic; snap them.
        for (jj, &bcol) in self.basis.iter().enumerate() {
            for i in 0..r {
                self.rows[i][bcol] = if i == jj { 1.0 } else { 0.0 };
            }
        }
        for i in 0..r {
            let b = self.rows[i][self.ncols];
            if b < 0.0 && b > -1e-8 {
                self.rows[i][self.ncols] = 0.0;
            }
        }
        self.since_refactor = 0;
        Ok(())
    }

    /// Prices the given phase costs out against the current basis.
    fn rebuild_obj(&mut self, costs: &[f64]) {
        debug_assert_eq!(costs.len(), self.ncols);
        self.obj = vec![0.0; self.ncols + 1];
        self.obj[..self.ncols].copy_from_slice(costs);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = costs[b];
            if cb != 0.0 {
                for j in 0..=self.ncols {
                    self.obj[j] -= cb * self.rows[i][j];
                }
            }
        }
        for &b in &self.basis {
            self.obj[b] = 0.0;
        }
    }

    fn has_entering(&self) -> bool {
        (0..self.ncols).any(|j| self.obj[j] < -PIVOT_TOL)
    }

    /// Runs simplex pivots under Bland's rule until optimal, unbounded, or
    /// due for a refactor.
    fn iterate(&mut self, pivots: &mut usize, cap: usize) -> Result<IterEnd, LpError> {
        loop {
            if self.since_refactor >= REFACTOR_INTERVAL {
                return Ok(IterEnd::Stale);
            }
            let entering = (0..self.ncols).find(|&j| self.obj[j] < -PIVOT_TOL);
            let Some(entering) = entering else {
                return Ok(IterEnd::Optimal);
            };
            let mut leaving: Option<(usize, f64)> = None;
            // Rows with a solid pivot element are preferred; the loose pass
            // only runs when none exists, so a small coefficient cannot
            // shadow a stable one in the ratio test.
            for threshold in [STABLE_PIVOT_TOL, PIVOT_TOL] {
                for r in 0..self.rows.len() {
                    let coeff = self.rows[r][entering];
                    if coeff > threshold {
                        let ratio = self.rhs(r) / coeff;
                        let better = match leaving {
                            None => true,
                            Some((best_r, best_ratio)) => {
                                ratio < best_ratio - 1e-12
                                    || (ratio < best_ratio + 1e-12
                                        && self.basis[r] < self.basis[best_r])
                            }
                        };
                        if better {
                            leaving = Some((r, ratio));
                        }
                    }
                }
                if leaving.is_some() {
                    break;
                }
            }
            let Some((r, _)) = leaving else {
                return Ok(IterEnd::Unbounded { entering });
            };
            self.pivot(r, entering);
            *pivots += 1;
            if *pivots > cap {
                return Err(LpError::IterationLimit { pivots: *pivots });
            }
        }
    }
}

/// Drives one phase to a verified end state. Optimal and unbounded claims
/// are only accepted from a freshly refactored tableau, so round-off can
/// delay termination but not corrupt the answer.
fn run_phase(
    tab: &mut Tableau,
    costs: &[f64],
    pivots: &mut usize,
    cap: usize,
) -> Result<PhaseEnd, LpError> {
    tab.refactor()?;
    tab.rebuild_obj(costs);
    let mut verified_at: Option<usize> = None;
    loop {
        match tab.iterate(pivots, cap)? {
            IterEnd::Stale => {
                tab.refactor()?;
                tab.rebuild_obj(costs);
            }
            IterEnd::Optimal => {
                if verified_at == Some(*pivots) {
                    return Ok(PhaseEnd::Optimal);
                }
                tab.refactor()?;
                tab.rebuild_obj(costs);
                verified_at = Some(*pivots);
                if !tab.has_entering() {
                    return Ok(PhaseEnd::Optimal);
                }
            }
            IterEnd::Unbounded { entering } => {
                if verified_at == Some(*pivots) {
                    return Ok(PhaseEnd::Unbounded { entering });
                }
                tab.refactor()?;
                tab.rebuild_obj(costs);
                verified_at = Some(*pivots);
                if !tab.has_entering() {
                    return Ok(PhaseEnd::Optimal);
                }
            }
        }
    }
}

/// Solves a general LP by two-phase dense primal simplex.
pub fn solve_lp(problem: &LpProblem) -> Result<LpOutcome, LpError> {
    problem.check_shape()?;
    let n = problem.n_vars();
    let k = problem.n_rows();
    let cap = 50 * (n + k).max(1);

    // Shift variables by their lower bounds: x = lb + y with y >= 0.
    let lb = &problem.lower_bounds;

    // Row normalization: rhs >= 0, senses adjusted.
    let mut senses = Vec::with_capacity(k);
    let mut rows_a = Vec::with_capacity(k);
    let mut rhs = Vec::with_capacity(k);
    for i in 0..k {
        let shift: f64 = problem.constraints[i]
            .iter()
            .zip(lb)
            .map(|(a, l)| a * l)
            .sum();
        let mut b = problem.rhs[i] - shift;
        let mut row = problem.constraints[i].clone();
        let mut sense = problem.senses[i];
        if b < 0.0 {
            b = -b;
            for v in row.iter_mut() {
                *v = -*v;
            }
            sense = match sense {
                ConstraintSense::Le => ConstraintSense::Ge,
                ConstraintSense::Ge => ConstraintSense::Le,
                ConstraintSense::Eq => ConstraintSense::Eq,
            };
        }
        rows_a.push(row);
        rhs.push(b);
        senses.push(sense);
    }

    // Column layout: structural | slack/surplus | artificial | rhs.
    let n_slack = k;
    let artificial_offset = n + n_slack;
    let n_artificial = senses
        .iter()
        .filter(|s| !matches!(s, ConstraintSense::Le))
        .count();
    let ncols = artificial_offset + n_artificial;

    let mut rows = vec![vec![0.0; ncols + 1]; k];
    let mut basis = vec![0usize; k];
    let mut next_artificial = artificial_offset;
    for i in 0..k {
        rows[i][..n].copy_from_slice(&rows_a[i]);
        rows[i][ncols] = rhs[i];
        match senses[i] {
            ConstraintSense::Le => {
                rows[i][n + i] = 1.0;
                basis[i] = n + i;
            }
            ConstraintSense::Ge => {
                rows[i][n + i] = -1.0;
                rows[i][next_artificial] = 1.0;
                basis[i] = next_artificial;
                next_artificial += 1;
            }
            ConstraintSense::Eq => {
                rows[i][next_artificial] = 1.0;
                basis[i] = next_artificial;
                next_artificial += 1;
            }
        }
    }

    let mut tab = Tableau {
        orig: rows.clone(),
        orig_ncols: ncols,
        live: (0..k).collect(),
        rows,
        obj: vec![0.0; ncols + 1],
        basis,
        ncols,
        since_refactor: 0,
    };
    let mut pivots = 0usize;

    // Phase 1: minimize the sum of artificials.
    if n_artificial > 0 {
        let mut costs1 = vec![0.0; ncols];
        for c in costs1.iter_mut().skip(artificial_offset) {
            *c = 1.0;
        }
        match run_phase(&mut tab, &costs1, &mut pivots, cap)? {
            PhaseEnd::Optimal => {}
            // The phase-1 objective is bounded below by zero, so a verified
            // unbounded claim means the basis cannot be stabilized.
            PhaseEnd::Unbounded { .. } => {
                return Err(LpError::Numerical {
                    violation: f64::INFINITY,
                });
            }
        }
        let phase1 = -tab.obj[ncols];
        if phase1 > FEAS_TOL {
            return Ok(LpOutcome::Infeasible {
                infeasibility: phase1,
            });
        }

        // Drive remaining artificials out of the basis; rows where that is
        // impossible are redundant and get dropped.
        let mut r = 0;
        while r < tab.rows.len() {
            if tab.basis[r] >= artificial_offset {
                // Largest magnitude wins; rows whose non-artificial part is
                // numerically zero are redundant.
                let mut col: Option<(usize, f64)> = None;
                for j in 0..artificial_offset {
                    let mag = tab.rows[r][j].abs();
                    if mag > STABLE_PIVOT_TOL && col.is_none_or(|(_, best)| mag > best) {
                        col = Some((j, mag));
                    }
                }
                match col.map(|(j, _)| j) {
                    Some(j) => {
                        tab.pivot(r, j);
                        pivots += 1;
                        if pivots > cap {
                            return Err(LpError::IterationLimit { pivots });
                        }
                        r += 1;
                    }
                    None => {
                        tab.rows.remove(r);
                        tab.basis.remove(r);
                        tab.live.remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
        // Physically remove artificial columns (they occupy the tail, so
        // original column indices are unchanged).
        for row in tab.rows.iter_mut() {
            let b = row[ncols];
            row.truncate(artificial_offset);
            row.push(b);
        }
        tab.ncols = artificial_offset;
    }

    // Phase 2: the real objective over structural columns.
    let mut costs2 = vec![0.0; tab.ncols];
    costs2[..n].copy_from_slice(&problem.objective);
    match run_phase(&mut tab, &costs2, &mut pivots, cap)? {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded { entering } => {
            let mut ray = vec![0.0; tab.ncols];
            ray[entering] = 1.0;
            for i in 0..tab.rows.len() {
                ray[tab.basis[i]] = -tab.rows[i][entering];
            }
            ray.truncate(n);
            return Ok(LpOutcome::Unbounded { ray });
        }
    }

    let mut x = lb.clone();
    for i in 0..tab.rows.len() {
        if tab.basis[i] < n {
            x[tab.basis[i]] += tab.rows[i][tab.ncols];
        }
    }
    // The tableau is only trusted after checking the claimed solution
    // against the original data; silent drift would poison everything
    // downstream.
    let violation = max_scaled_violation(problem, &x);
    if violation > FEAS_TOL {
        return Err(LpError::Numerical { violation });
    }
    // Recompute the objective from x itself; x already carries the lower
    // bound shift.
    let objective: f64 = problem.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpOutcome::Optimal { x, objective })
}

/// Worst violation of the original rows and bounds at `x`, scaled by each
/// row's magnitude.
fn max_scaled_violation(problem: &LpProblem, x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (i, row) in problem.constraints.iter().enumerate() {
        let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
        let gap = lhs - problem.rhs[i];
        let viol = match problem.senses[i] {
            ConstraintSense::Le => gap.max(0.0),
            ConstraintSense::Ge => (-gap).max(0.0),
            ConstraintSense::Eq => gap.abs(),
        };
        let scale = 1.0 + problem.rhs[i].abs() + row.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        worst = worst.max(viol / scale);
    }
    for (v, l) in x.iter().zip(&problem.lower_bounds) {
        worst = worst.max((l - v) / (1.0 + l.abs()));
    }
    worst
}

/// Optimal solution of the occupancy-measure LP, in both representations.
#[derive(Debug, Clone)]
pub struct CmdpSolution {
    pub occupancy: OccupancyMeasure,
    pub policy: StationaryPolicy,
    /// Optimal loss: sum mu * c0 (or the chosen component for the
    /// unconstrained solver).
    pub objective_value: f64,
    /// Achieved sum mu * ci per auxiliary component. Bounded by tau_i +
    /// `FEAS_TOL` for `solve_constrained` outcomes only.
    pub constraint_values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum ConstrainedOutcome {
    Optimal(CmdpSolution),
    /// The sampled or true model admits no stationary policy within budget.
    Infeasible { infeasibility: f64 },
}

impl ConstrainedOutcome {
    pub fn optimal(self) -> Option<CmdpSolution> {
        match self {
            ConstrainedOutcome::Optimal(sol) => Some(sol),
            ConstrainedOutcome::Infeasible { .. } => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, ConstrainedOutcome::Optimal(_))
    }
}

/// Encodes the full occupancy LP: m budget rows, all S flow rows, and the
/// normalization row, in that order. Variables are mu(s,a) in row-major
/// (s,a) order.
pub fn build_cmdp_lp(model: &Cmdp) -> LpProblem {
    let s_count = model.n_states();
    let a_count = model.n_actions();
    let m = model.n_constraints();
    let n = s_count * a_count;
    let p = model.transitions();

    let mut constraints = Vec::with_capacity(m + s_count + 1);
    let mut rhs = Vec::with_capacity(m + s_count + 1);
    let mut senses = Vec::with_capacity(m + s_count + 1);

    for i in 0..m {
        let mut row = vec![0.0; n];
        for s in 0..s_count {
            for a in 0..a_count {
                row[s * a_count + a] = model.cost(i + 1, s, a);
            }
        }
        constraints.push(row);
        rhs.push(model.thresholds()[i]);
        senses.push(ConstraintSense::Le);
    }

    for s in 0..s_count {
        let mut row = vec![0.0; n];
        for s2 in 0..s_count {
            for a in 0..a_count {
                let mut coeff = -p[[s2, a, s]];
                if s2 == s {
                    coeff += 1.0;
                }
                row[s2 * a_count + a] = coeff;
            }
        }
        constraints.push(row);
        rhs.push(0.0);
        senses.push(ConstraintSense::Eq);
    }

    constraints.push(vec![1.0; n]);
    rhs.push(1.0);
    senses.push(ConstraintSense::Eq);

    let mut objective = vec![0.0; n];
    for s in 0..s_count {
        for a in 0..a_count {
            objective[s * a_count + a] = model.cost(0, s, a);
        }
    }

    LpProblem::new(objective, constraints, rhs, senses)
        .expect("occupancy LP dimensions are consistent by construction")
}

fn extract_solution(model: &Cmdp, x: &[f64], objective: f64) -> CmdpSolution {
    let s_count = model.n_states();
    let a_count = model.n_actions();
    let mut mu = Array2::zeros((s_count, a_count));
    for s in 0..s_count {
        for a in 0..a_count {
            mu[[s, a]] = x[s * a_count + a].max(0.0);
        }
    }
    let occupancy = OccupancyMeasure::new(mu);
    let policy = policy_from_occupancy(&occupancy);
    let constraint_values = (0..model.n_constraints())
        .map(|i| occupancy.expected_cost(&model.costs().index_axis(ndarray::Axis(0), i + 1)))
        .collect();
    CmdpSolution {
        occupancy,
        policy,
        objective_value: objective,
        constraint_values,
    }
}

/// Solves the constrained occupancy LP with the flow row for `drop_state`
/// removed (one flow row is redundant given normalization).
fn solve_constrained_dropping(
    model: &Cmdp,
    drop_state: usize,
) -> Result<ConstrainedOutcome, LpError> {
    let m = model.n_constraints();
    let mut problem = build_cmdp_lp(model);
    problem.constraints.remove(m + drop_state);
    problem.rhs.remove(m + drop_state);
    problem.senses.remove(m + drop_state);
    match solve_lp(&problem)? {
        LpOutcome::Optimal { x, objective } => {
            Ok(ConstrainedOutcome::Optimal(extract_solution(model, &x, objective)))
        }
        LpOutcome::Infeasible { infeasibility } => {
            Ok(ConstrainedOutcome::Infeasible { infeasibility })
        }
        LpOutcome::Unbounded { .. } => Err(LpError::UnexpectedUnbounded),
    }
}

/// Solves the occupancy LP for the model's main cost under all budgets.
/// Infeasibility is the typed outcome the agents branch on.
pub fn solve_constrained(model: &Cmdp) -> Result<ConstrainedOutcome, LpError> {
    solve_constrained_dropping(model, 0)
}

/// Solves the unconstrained average-cost LP for one cost component (budget
/// rows removed). Always optimal on a valid model: the occupancy polytope is
/// nonempty and bounded.
pub fn solve_unconstrained(model: &Cmdp, cost_index: usize) -> Result<CmdpSolution, LpError> {
    assert!(
        cost_index <= model.n_constraints(),
        "cost_index {cost_index} out of range (m = {})",
        model.n_constraints()
    );
    let s_count = model.n_states();
    let a_count = model.n_actions();
    let n = s_count * a_count;
    let m = model.n_constraints();
    let mut problem = build_cmdp_lp(model);
    // Strip the m budget rows; keep flow (minus the dropped one) and
    // normalization.
    problem.constraints.drain(0..m);
    problem.rhs.drain(0..m);
    problem.senses.drain(0..m);
    problem.constraints.remove(0);
    problem.rhs.remove(0);
    problem.senses.remove(0);
    for s in 0..s_count {
        for a in 0..a_count {
            problem.objective[s * a_count + a] = model.cost(cost_index, s, a);
        }
    }
    debug_assert_eq!(problem.objective.len(), n);
    match solve_lp(&problem)? {
        LpOutcome::Optimal { x, objective } => Ok(extract_solution(model, &x, objective)),
        LpOutcome::Infeasible { infeasibility } => {
            Err(LpError::UnexpectedInfeasible { infeasibility })
        }
        LpOutcome::Unbounded { .. } => Err(LpError::UnexpectedUnbounded),
    }
}
