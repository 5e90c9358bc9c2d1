//! Benchmark environments compiled to explicit CMDP tensors: the two-state
//! counterexample, Marsrover gridworlds, and the Box push-puzzle.
//!
//! Gridworlds are read from a small text format: a `key = value` header
//! (kind, slip, threshold[i]), a blank line, then the bordered character
//! grid. The compilers are fully deterministic, so the same file always
//! yields bit-identical tensors.
//!
//! Box state space: (agent cell, box cell) pairs, restricted to the pairs
//! reachable from the start configuration. Pairs with the box in a spot it
//! can never be pushed to would form unreachable classes and break the
//! communicating requirement, so they are not materialized. The goal resets
//! both the agent and the box, which keeps even cornered-box configurations
//! connected back to the start.

use crate::cmdp::{sample_categorical, validate_cmdp, Cmdp};
use crate::planning::{self, PlanningError};
use ndarray::{Array1, Array3};
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

pub const MARSROVER4_GRID: &str = include_str!("../grids/marsrover4.grid");
pub const MARSROVER8_GRID: &str = include_str!("../grids/marsrover8.grid");
pub const BOX_GRID: &str = include_str!("../grids/box.grid");

/// Action indices shared by all gridworlds.
pub const ACTION_NAMES: [&str; 4] = ["up", "down", "right", "left"];
const DIRS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, 1), (0, -1)];
/// Perpendicular directions for the slip model: up/down slip sideways,
/// right/left slip vertically.
const PERP: [[usize; 2]; 4] = [[2, 3], [2, 3], [0, 1], [0, 1]];

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("grid parse error at row {row}, col {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    #[error("grid header error: {0}")]
    Header(String),
    #[error("cannot compile grid: {0}")]
    Compile(String),
    #[error("goal unreachable from start")]
    UnreachableGoal,
    #[error("environment is not communicating: {0}")]
    NotCommunicating(String),
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("compiled model failed validation: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Marsrover,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Free,
    Start,
    Goal,
    Risky,
    Box,
}

impl Cell {
    fn from_char(c: char) -> Option<Cell> {
        match c {
            '#' => Some(Cell::Wall),
            '.' => Some(Cell::Free),
            'S' => Some(Cell::Start),
            'G' => Some(Cell::Goal),
            'R' => Some(Cell::Risky),
            'B' => Some(Cell::Box),
            _ => None,
        }
    }
}

/// Parsed grid file: header values plus the bordered cell matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub kind: GridKind,
    pub slip: f64,
    pub thresholds: Vec<f64>,
    pub cells: Vec<Vec<Cell>>,
}

impl GridSpec {
    pub fn rows(&self) -> usize {
        self.cells.len()
    }

    pub fn cols(&self) -> usize {
        self.cells[0].len()
    }

    fn cell(&self, r: usize, c: usize) -> Cell {
        self.cells[r][c]
    }

    fn find_unique(&self, wanted: Cell) -> (usize, usize) {
        for (r, row) in self.cells.iter().enumerate() {
            for (c, &cell) in row.iter().enumerate() {
                if cell == wanted {
                    return (r, c);
                }
            }
        }
        unreachable!("presence established during parsing")
    }

    /// A cell is a corner when at least two of its orthogonal neighbors are
    /// walls.
    fn is_corner(&self, r: usize, c: usize) -> bool {
        let walls = DIRS
            .iter()
            .filter(|(dr, dc)| {
                let nr = (r as isize + dr) as usize;
                let nc = (c as isize + dc) as usize;
                self.cell(nr, nc) == Cell::Wall
            })
            .count();
        walls >= 2
    }
}

/// Decodes a state index back to something human-readable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateLabel {
    Named(&'static str),
    Cell { row: usize, col: usize },
    AgentBox {
        agent: (usize, usize),
        box_pos: (usize, usize),
    },
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateLabel::Named(name) => write!(f, "{name}"),
            StateLabel::Cell { row, col } => write!(f, "({row},{col})"),
            StateLabel::AgentBox { agent, box_pos } => write!(
                f,
                "agent({},{}) box({},{})",
                agent.0, agent.1, box_pos.0, box_pos.1
            ),
        }
    }
}

/// A fully compiled benchmark: true model, start state, labels, and the
/// diameter computed at construction (which doubles as the communicating
/// check).
#[derive(Debug, Clone)]
pub struct EnvInstance {
    pub name: String,
    pub model: Cmdp,
    pub initial_state: usize,
    pub labels: Vec<StateLabel>,
    pub diameter: f64,
}

fn finish_instance(
    name: String,
    model: Cmdp,
    initial_state: usize,
    labels: Vec<StateLabel>,
) -> Result<EnvInstance, EnvError> {
    let report = validate_cmdp(&model);
    if !report.is_ok() {
        return Err(EnvError::InvalidModel(format!("{:?}", report.violations)));
    }
    let diameter = planning::diameter(model.transitions()).map_err(|e| match e {
        PlanningError::NotCommunicating { .. } | PlanningError::NonConvergence { .. } => {
            EnvError::NotCommunicating(e.to_string())
        }
        other => EnvError::Compile(other.to_string()),
    })?;
    Ok(EnvInstance {
        name,
        model,
        initial_state,
        labels,
        diameter,
    })
}

/// The two-state counterexample: staying at s0 is free but burns the
/// auxiliary budget; a1 escapes to s1 with probability theta; s1 resets.
pub fn toy_counterexample(theta: f64, tau: f64) -> Result<EnvInstance, EnvError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(EnvError::Parameter(format!(
            "theta must be in (0, 1], got {theta}"
        )));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(EnvError::Parameter(format!(
            "tau must be in [0, 1], got {tau}"
        )));
    }
    let mut p = Array3::zeros((2, 2, 2));
    p[[0, 0, 0]] = 1.0;
    p[[0, 1, 1]] = theta;
    p[[0, 1, 0]] = 1.0 - theta;
    p[[1, 0, 0]] = 1.0;
    p[[1, 1, 0]] = 1.0;
    let mut costs = Array3::zeros((2, 2, 2));
    // Main cost 1 - r with reward 1 at s0: the agent wants to sit at s0.
    costs[[0, 1, 0]] = 1.0;
    costs[[0, 1, 1]] = 1.0;
    // Auxiliary cost counts time at s0.
    costs[[1, 0, 0]] = 1.0;
    costs[[1, 0, 1]] = 1.0;
    let model = Cmdp::new(p, costs, ndarray::arr1(&[tau]))
        .map_err(|e| EnvError::Compile(e.to_string()))?;
    finish_instance(
        "toy".to_string(),
        model,
        0,
        vec![StateLabel::Named("s0"), StateLabel::Named("s1")],
    )
}

/// Parses the grid file format: header lines, a blank separator, then the
/// bordered grid. CRLF endings are normalized and trailing blank lines are
/// ignored.
pub fn parse_grid(text: &str) -> Result<GridSpec, EnvError> {
    let lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    let separator = lines
        .iter()
        .position(|l| l.trim().is_empty())
        .ok_or_else(|| EnvError::Header("missing blank line between header and grid".into()))?;

    let mut kind = None;
    let mut slip = None;
    let mut thresholds: BTreeMap<usize, f64> = BTreeMap::new();
    for line in &lines[..separator] {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| EnvError::Header(format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        if key == "kind" {
            kind = Some(match value {
                "marsrover" => GridKind::Marsrover,
                "box" => GridKind::Box,
                other => {
                    return Err(EnvError::Header(format!("unknown kind `{other}`")));
                }
            });
        } else if key == "slip" {
            let eps: f64 = value
                .parse()
                .map_err(|_| EnvError::Header(format!("bad slip value `{value}`")))?;
            if !(0.0..1.0).contains(&eps) {
                return Err(EnvError::Header(format!("slip must be in [0, 1), got {eps}")));
            }
            slip = Some(eps);
        } else if let Some(idx) = key
            .strip_prefix("threshold[")
            .and_then(|rest| rest.strip_suffix(']'))
        {
            let i: usize = idx
                .parse()
                .map_err(|_| EnvError::Header(format!("bad threshold index `{idx}`")))?;
            let tau: f64 = value
                .parse()
                .map_err(|_| EnvError::Header(format!("bad threshold value `{value}`")))?;
            if thresholds.insert(i, tau).is_some() {
                return Err(EnvError::Header(format!("duplicate threshold[{i}]")));
            }
        } else {
            return Err(EnvError::Header(format!("unknown header key `{key}`")));
        }
    }
    let kind = kind.ok_or_else(|| EnvError::Header("missing `kind`".into()))?;
    let slip = slip.ok_or_else(|| EnvError::Header("missing `slip`".into()))?;
    for (expect, (&i, _)) in thresholds.iter().enumerate().map(|(e, kv)| (e, kv)) {
        if i != expect {
            return Err(EnvError::Header(format!(
                "threshold indices must be contiguous from 0, found threshold[{i}]"
            )));
        }
    }
    let thresholds: Vec<f64> = thresholds.into_values().collect();

    let mut cells: Vec<Vec<Cell>> = Vec::new();
    for (offset, line) in lines[separator + 1..].iter().enumerate() {
        if line.trim().is_empty() {
            // Only trailing blanks are tolerated.
            if lines[separator + 1 + offset..].iter().all(|l| l.trim().is_empty()) {
                break;
            }
            return Err(EnvError::Parse {
                row: offset,
                col: 0,
                msg: "blank line inside grid".into(),
            });
        }
        let mut row = Vec::with_capacity(line.len());
        for (c, ch) in line.chars().enumerate() {
            let cell = Cell::from_char(ch).ok_or(EnvError::Parse {
                row: offset,
                col: c,
                msg: format!("unknown character `{ch}`"),
            })?;
            row.push(cell);
        }
        cells.push(row);
    }
    if cells.len() < 3 {
        return Err(EnvError::Parse {
            row: 0,
            col: 0,
            msg: format!("grid needs at least 3 rows, got {}", cells.len()),
        });
    }
    let width = cells[0].len();
    if width < 3 {
        return Err(EnvError::Parse {
            row: 0,
            col: 0,
            msg: format!("grid needs at least 3 columns, got {width}"),
        });
    }
    for (r, row) in cells.iter().enumerate() {
        if row.len() != width {
            return Err(EnvError::Parse {
                row: r,
                col: row.len(),
                msg: format!("ragged row: expected {width} columns, got {}", row.len()),
            });
        }
    }
    let height = cells.len();
    for (r, row) in cells.iter().enumerate() {
        for (c, &cell) in row.iter().enumerate() {
            let on_border = r == 0 || r == height - 1 || c == 0 || c == width - 1;
            if on_border && cell != Cell::Wall {
                return Err(EnvError::Parse {
                    row: r,
                    col: c,
                    msg: "grid border must be all walls".into(),
                });
            }
        }
    }
    let count = |wanted: Cell| -> Vec<(usize, usize)> {
        let mut found = vec![];
        for (r, row) in cells.iter().enumerate() {
            for (c, &cell) in row.iter().enumerate() {
                if cell == wanted {
                    found.push((r, c));
                }
            }
        }
        found
    };
    for (cell, label) in [(Cell::Start, "S"), (Cell::Goal, "G")] {
        let found = count(cell);
        if found.is_empty() {
            return Err(EnvError::Parse {
                row: 0,
                col: 0,
                msg: format!("missing `{label}`"),
            });
        }
        if found.len() > 1 {
            let (r, c) = found[1];
            return Err(EnvError::Parse {
                row: r,
                col: c,
                msg: format!("duplicate `{label}`"),
            });
        }
    }
    let boxes = count(Cell::Box);
    if boxes.len() > 1 {
        let (r, c) = boxes[1];
        return Err(EnvError::Parse {
            row: r,
            col: c,
            msg: "duplicate `B`".into(),
        });
    }

    Ok(GridSpec {
        kind,
        slip,
        thresholds,
        cells,
    })
}

/// Realized movement directions for an intended action under the slip
/// model: intended with probability 1 - slip, each perpendicular with
/// probability slip / 2.
fn realized(a: usize, slip: f64) -> [(usize, f64); 3] {
    [
        (a, 1.0 - slip),
        (PERP[a][0], slip / 2.0),
        (PERP[a][1], slip / 2.0),
    ]
}

fn step_cell(spec: &GridSpec, r: usize, c: usize, dir: usize) -> (usize, usize) {
    let (dr, dc) = DIRS[dir];
    let nr = (r as isize + dr) as usize;
    let nc = (c as isize + dc) as usize;
    if spec.cell(nr, nc) == Cell::Wall {
        (r, c)
    } else {
        (nr, nc)
    }
}

fn check_thresholds(spec: &GridSpec) -> Result<(), EnvError> {
    if spec.thresholds.len() > 1 {
        return Err(EnvError::Compile(format!(
            "gridworlds define a single auxiliary cost; got {} thresholds",
            spec.thresholds.len()
        )));
    }
    for &tau in &spec.thresholds {
        if !(0.0..=1.0).contains(&tau) {
            return Err(EnvError::Compile(format!(
                "threshold must be in [0, 1], got {tau}"
            )));
        }
    }
    Ok(())
}

/// Compiles a Marsrover grid: states are the non-wall cells, the goal row
/// resets to the start at main cost 0, and risky cells charge the auxiliary
/// cost.
pub fn compile_marsrover(spec: &GridSpec) -> Result<EnvInstance, EnvError> {
    check_thresholds(spec)?;
    for (r, row) in spec.cells.iter().enumerate() {
        for (c, &cell) in row.iter().enumerate() {
            if cell == Cell::Box {
                return Err(EnvError::Compile(format!(
                    "`B` at ({r},{c}) is not a marsrover cell; compile as kind = box"
                )));
            }
        }
    }

    let mut index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (r, row) in spec.cells.iter().enumerate() {
        for (c, &cell) in row.iter().enumerate() {
            if cell != Cell::Wall {
                index.insert((r, c), coords.len());
                coords.push((r, c));
            }
        }
    }
    let n = coords.len();
    let start = spec.find_unique(Cell::Start);
    let goal = spec.find_unique(Cell::Goal);

    // Goal reachability from the start along free cells; the full
    // communicating check happens in finish_instance.
    {
        let mut seen = BTreeSet::new();
        let mut frontier = vec![start];
        seen.insert(start);
        while let Some((r, c)) = frontier.pop() {
            for dir in 0..4 {
                let next = step_cell(spec, r, c, dir);
                if seen.insert(next) {
                    frontier.push(next);
                }
            }
        }
        if !seen.contains(&goal) {
            return Err(EnvError::UnreachableGoal);
        }
    }

    let m = spec.thresholds.len();
    let mut p = Array3::zeros((n, 4, n));
    let mut costs = Array3::zeros((m + 1, n, 4));
    for (s, &(r, c)) in coords.iter().enumerate() {
        let here = spec.cell(r, c);
        for a in 0..4 {
            if here == Cell::Goal {
                // Reset: deterministic jump to the start, main cost 0.
                p[[s, a, index[&start]]] = 1.0;
                continue;
            }
            for (dir, prob) in realized(a, spec.slip) {
                let next = step_cell(spec, r, c, dir);
                p[[s, a, index[&next]]] += prob;
            }
            costs[[0, s, a]] = 1.0;
            if m == 1 && here == Cell::Risky {
                costs[[1, s, a]] = 1.0;
            }
        }
    }

    let thresholds = Array1::from_vec(spec.thresholds.clone());
    let model = Cmdp::new(p, costs, thresholds).map_err(|e| EnvError::Compile(e.to_string()))?;
    let labels = coords
        .iter()
        .map(|&(row, col)| StateLabel::Cell { row, col })
        .collect();
    let name = format!("marsrover{}x{}", spec.rows() - 2, spec.cols() - 2);
    finish_instance(name, model, index[&start], labels)
}

/// One-step Box dynamics for a realized direction, ignoring goal resets:
/// walk, or push the box if it sits in the way and its far side is free.
fn box_resolve(
    spec: &GridSpec,
    agent: (usize, usize),
    box_pos: (usize, usize),
    dir: usize,
) -> ((usize, usize), (usize, usize)) {
    let target = {
        let (dr, dc) = DIRS[dir];
        (
            (agent.0 as isize + dr) as usize,
            (agent.1 as isize + dc) as usize,
        )
    };
    if spec.cell(target.0, target.1) == Cell::Wall {
        return (agent, box_pos);
    }
    if target == box_pos {
        let (dr, dc) = DIRS[dir];
        let box_target = (
            (box_pos.0 as isize + dr) as usize,
            (box_pos.1 as isize + dc) as usize,
        );
        if spec.cell(box_target.0, box_target.1) == Cell::Wall {
            // The push fails as if the box were a wall.
            return (agent, box_pos);
        }
        return (target, box_target);
    }
    (target, box_pos)
}

/// Compiles the Box puzzle: states are reachable (agent, box) pairs, the
/// goal resets agent and box, and any action with the box in a corner
/// charges the auxiliary cost.
pub fn compile_box(spec: &GridSpec) -> Result<EnvInstance, EnvError> {
    check_thresholds(spec)?;
    let has_box = spec
        .cells
        .iter()
        .any(|row| row.iter().any(|&c| c == Cell::Box));
    if !has_box {
        return Err(EnvError::Compile("box grid needs exactly one `B`".into()));
    }
    let start = spec.find_unique(Cell::Start);
    let goal = spec.find_unique(Cell::Goal);
    let box_init = spec.find_unique(Cell::Box);
    if start == box_init {
        return Err(EnvError::Compile("start and box coincide".into()));
    }

    // Reachable (agent, box) closure over all four directions plus the
    // goal reset. Successor sets are direction unions, so slip probability
    // does not change the closure.
    let initial = (start, box_init);
    let mut seen: BTreeSet<((usize, usize), (usize, usize))> = BTreeSet::new();
    let mut frontier = vec![initial];
    seen.insert(initial);
    while let Some((agent, box_pos)) = frontier.pop() {
        let succs: Vec<((usize, usize), (usize, usize))> = if agent == goal {
            vec![initial]
        } else {
            (0..4).map(|dir| box_resolve(spec, agent, box_pos, dir)).collect()
        };
        for next in succs {
            if seen.insert(next) {
                frontier.push(next);
            }
        }
    }

    let states: Vec<((usize, usize), (usize, usize))> = seen.into_iter().collect();
    let index: BTreeMap<_, usize> = states
        .iter()
        .enumerate()
        .map(|(i, &pair)| (pair, i))
        .collect();
    if !index.contains_key(&(goal, box_init)) && !states.iter().any(|&(a, _)| a == goal) {
        return Err(EnvError::UnreachableGoal);
    }

    let n = states.len();
    let m = spec.thresholds.len();
    let mut p = Array3::zeros((n, 4, n));
    let mut costs = Array3::zeros((m + 1, n, 4));
    for (s, &(agent, box_pos)) in states.iter().enumerate() {
        let in_corner = spec.is_corner(box_pos.0, box_pos.1);
        for a in 0..4 {
            if agent == goal {
                p[[s, a, index[&initial]]] = 1.0;
            } else {
                for (dir, prob) in realized(a, spec.slip) {
                    let next = box_resolve(spec, agent, box_pos, dir);
                    p[[s, a, index[&next]]] += prob;
                }
                costs[[0, s, a]] = 1.0;
            }
            if m == 1 && in_corner {
                costs[[1, s, a]] = 1.0;
            }
        }
    }

    let thresholds = Array1::from_vec(spec.thresholds.clone());
    let model = Cmdp::new(p, costs, thresholds).map_err(|e| EnvError::Compile(e.to_string()))?;
    let labels = states
        .iter()
        .map(|&(agent, box_pos)| StateLabel::AgentBox { agent, box_pos })
        .collect();
    let name = format!("box{}x{}", spec.rows() - 2, spec.cols() - 2);
    finish_instance(name, model, index[&initial], labels)
}

/// Dispatches on the header kind.
pub fn compile_grid(spec: &GridSpec) -> Result<EnvInstance, EnvError> {
    match spec.kind {
        GridKind::Marsrover => compile_marsrover(spec),
        GridKind::Box => compile_box(spec),
    }
}

fn builtin_grid(name: &str, text: &str) -> Result<EnvInstance, EnvError> {
    let mut env = compile_grid(&parse_grid(text)?)?;
    env.name = name.to_string();
    Ok(env)
}

/// The 4x4 Marsrover benchmark shipped with the crate.
pub fn marsrover4() -> Result<EnvInstance, EnvError> {
    builtin_grid("marsrover4", MARSROVER4_GRID)
}

/// The 8x8 Marsrover benchmark shipped with the crate.
pub fn marsrover8() -> Result<EnvInstance, EnvError> {
    builtin_grid("marsrover8", MARSROVER8_GRID)
}

/// The Box push-puzzle benchmark shipped with the crate.
pub fn box_env() -> Result<EnvInstance, EnvError> {
    builtin_grid("box", BOX_GRID)
}

/// Samples one environment transition and returns the realized successor
/// plus the (deterministic) cost vector of the taken pair.
pub fn env_step<R: Rng + ?Sized>(
    env: &EnvInstance,
    s: usize,
    a: usize,
    rng: &mut R,
) -> (usize, Array1<f64>) {
    let row = env.model.transitions().index_axis(ndarray::Axis(0), s);
    let row = row.index_axis(ndarray::Axis(0), a);
    let s_next = sample_categorical(row.as_slice().expect("standard layout"), rng);
    let m = env.model.n_constraints();
    let mut cost = Array1::zeros(m + 1);
    for i in 0..=m {
        cost[i] = env.model.cost(i, s, a);
    }
    (s_next, cost)
}
