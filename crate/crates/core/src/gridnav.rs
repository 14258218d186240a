//! Partially observed gridworld: reach a goal cell and stay there.
//!
//! The agent sees its normalised position plus a square window of cells
//! around it. A scripted breadth-first-search expert produces demonstrations.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::demo::{ActionRecord, ActionSchema, ControlSpec, ControlValue, DemoSet};
use crate::encoder::{Encoder, Observation};
use crate::error::{Result, SbcError};
use crate::index::LatentIndex;
use crate::rng::{derive_seed, SeedRng};
use crate::scalar::Scalar;

/// World generation attempts before giving up on a configuration.
pub const RETRY_BUDGET: u32 = 64;

const WORLD_SALT: u64 = 0x574f_524c_44; // "WORLD"
const DEMO_SALT: u64 = 0x4445_4d4f; // "DEMO"
const EXPERT_SALT: u64 = 0x4558_5052_54; // "EXPRT"

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub size: usize,
    pub obstacle_density: f64,
    pub goal_count: usize,
    pub view_radius: usize,
    pub seed: u64,
    pub max_episode_steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            size: 32,
            obstacle_density: 0.15,
            goal_count: 32,
            view_radius: 2,
            seed: 0,
            max_episode_steps: 3600,
        }
    }
}

impl GridConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SbcError::Config(m));
        if self.size < 8 {
            return bad(format!("grid size must be at least 8, got {}", self.size));
        }
        if !(0.0..=0.3).contains(&self.obstacle_density) {
            return bad(format!("obstacle_density {} outside [0, 0.3]", self.obstacle_density));
        }
        if self.goal_count == 0 {
            return bad("goal_count must be positive".into());
        }
        if self.view_radius == 0 {
            return bad("view_radius must be positive".into());
        }
        if self.max_episode_steps == 0 {
            return bad("max_episode_steps must be positive".into());
        }
        Ok(())
    }

    /// Length of the vector produced by [`GridState::observe`].
    pub fn observation_len(&self) -> usize {
        let side = 2 * self.view_radius + 1;
        2 + side * side
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Free,
    Obstacle,
    Goal,
}

impl Cell {
    fn feature(self) -> f64 {
        match self {
            Cell::Free => 0.0,
            Cell::Obstacle => 0.5,
            Cell::Goal => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridAction {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl GridAction {
    /// Schema order; also the expert's tie-breaking order for moves.
    pub const ALL: [GridAction; 5] = [
        GridAction::Up,
        GridAction::Down,
        GridAction::Left,
        GridAction::Right,
        GridAction::Stay,
    ];
    pub const MOVES: [GridAction; 4] = [
        GridAction::Up,
        GridAction::Down,
        GridAction::Left,
        GridAction::Right,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GridAction::Up => "up",
            GridAction::Down => "down",
            GridAction::Left => "left",
            GridAction::Right => "right",
            GridAction::Stay => "stay",
        }
    }

    pub fn schema() -> ActionSchema {
        ActionSchema::new(Self::ALL.iter().map(|a| ControlSpec::boolean(a.name())).collect())
    }

    pub fn to_record(self) -> ActionRecord {
        ActionRecord::new(
            Self::ALL
                .iter()
                .map(|&a| ControlValue::Bool(a == self))
                .collect(),
        )
    }

    /// Inverse of [`to_record`](Self::to_record); exactly one control must be set.
    pub fn from_record(record: &ActionRecord) -> Result<Self> {
        let mut chosen = None;
        if record.values.len() != Self::ALL.len() {
            return Err(SbcError::InvalidAction(format!(
                "expected {} controls, got {}",
                Self::ALL.len(),
                record.values.len()
            )));
        }
        for (&action, value) in Self::ALL.iter().zip(&record.values) {
            match value {
                ControlValue::Bool(true) if chosen.is_none() => chosen = Some(action),
                ControlValue::Bool(true) => {
                    return Err(SbcError::InvalidAction("more than one control set".into()))
                }
                ControlValue::Bool(false) => {}
                ControlValue::Real(_) => {
                    return Err(SbcError::InvalidAction("grid controls are boolean".into()))
                }
            }
        }
        chosen.ok_or_else(|| SbcError::InvalidAction("no control set".into()))
    }

    fn delta(self) -> (isize, isize) {
        match self {
            GridAction::Up => (0, -1),
            GridAction::Down => (0, 1),
            GridAction::Left => (-1, 0),
            GridAction::Right => (1, 0),
            GridAction::Stay => (0, 0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridState {
    config: GridConfig,
    cells: Vec<Cell>,
    /// (x, y): x is the column, y the row; `Up` decreases y.
    agent: (usize, usize),
    steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub in_goal: bool,
}

impl GridState {
    /// Deterministic in `config.seed`. Each attempt draws obstacles
    /// cell-by-cell (row-major, one `chance(density)` each), a spawn uniformly
    /// among free cells, then `goal_count` goals uniformly among cells reachable
    /// from the spawn. Attempts whose reachable area is too small are redrawn.
    pub fn generate(config: &GridConfig) -> Result<Self> {
        config.validate()?;
        let n = config.size;
        for attempt in 0..RETRY_BUDGET {
            let mut rng = SeedRng::new(derive_seed(config.seed, &[WORLD_SALT, u64::from(attempt)]));
            let mut cells: Vec<Cell> = (0..n * n)
                .map(|_| {
                    if rng.chance(config.obstacle_density) {
                        Cell::Obstacle
                    } else {
                        Cell::Free
                    }
                })
                .collect();
            let free: Vec<usize> = (0..n * n).filter(|&i| cells[i] == Cell::Free).collect();
            if free.is_empty() {
                continue;
            }
            let spawn = free[rng.index(free.len())];
            let mut reachable: Vec<usize> = bfs(n, &cells, &[spawn])
                .iter()
                .enumerate()
                .filter(|&(i, d)| d.is_some() && i != spawn)
                .map(|(i, _)| i)
                .collect();
            if reachable.len() < config.goal_count {
                continue;
            }
            // partial Fisher-Yates
            for k in 0..config.goal_count {
                let j = k + rng.index(reachable.len() - k);
                reachable.swap(k, j);
                cells[reachable[k]] = Cell::Goal;
            }
            return Ok(Self {
                config: config.clone(),
                cells,
                agent: (spawn % n, spawn / n),
                steps: 0,
            });
        }
        Err(SbcError::Unsatisfiable {
            attempts: RETRY_BUDGET,
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn agent(&self) -> (usize, usize) {
        self.agent
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_over(&self) -> bool {
        self.steps >= self.config.max_episode_steps
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.config.size + x]
    }

    pub fn in_goal(&self) -> bool {
        self.cell(self.agent.0, self.agent.1) == Cell::Goal
    }

    fn cell_at(&self, x: isize, y: isize) -> Option<Cell> {
        let n = self.config.size as isize;
        (x >= 0 && y >= 0 && x < n && y < n).then(|| self.cell(x as usize, y as usize))
    }

    fn target(&self, action: GridAction) -> Option<(usize, usize)> {
        let (dx, dy) = action.delta();
        let (x, y) = (self.agent.0 as isize + dx, self.agent.1 as isize + dy);
        match self.cell_at(x, y) {
            Some(Cell::Obstacle) | None => None,
            Some(_) => Some((x as usize, y as usize)),
        }
    }

    /// `[x/size, y/size]` followed by the `(2r+1)^2` window, row-major from the
    /// top-left, with free 0, obstacle 0.5, goal 1 and off-grid cells as obstacles.
    pub fn observe(&self) -> Observation {
        let n = self.config.size as f64;
        let r = self.config.view_radius as isize;
        let mut features = Vec::with_capacity(self.config.observation_len());
        features.push(self.agent.0 as f64 / n);
        features.push(self.agent.1 as f64 / n);
        let (ax, ay) = (self.agent.0 as isize, self.agent.1 as isize);
        for dy in -r..=r {
            for dx in -r..=r {
                let cell = self.cell_at(ax + dx, ay + dy).unwrap_or(Cell::Obstacle);
                features.push(cell.feature());
            }
        }
        Observation(features)
    }

    /// Moves unless blocked; a blocked move leaves the agent in place.
    pub fn step(&mut self, action: GridAction) -> Result<StepResult> {
        if self.is_over() {
            return Err(SbcError::EpisodeOver(self.steps));
        }
        if let Some(pos) = self.target(action) {
            self.agent = pos;
        }
        self.steps += 1;
        Ok(StepResult {
            observation: self.observe(),
            in_goal: self.in_goal(),
        })
    }

    /// Shortest-path length from every cell to the nearest goal.
    pub fn goal_distances(&self) -> Vec<Option<u32>> {
        let goals: Vec<usize> = (0..self.cells.len())
            .filter(|&i| self.cells[i] == Cell::Goal)
            .collect();
        bfs(self.config.size, &self.cells, &goals)
    }

    pub fn goal_distance(&self) -> Option<u32> {
        self.goal_distances()[self.agent.1 * self.config.size + self.agent.0]
    }

    /// Moves that change the agent's position.
    pub fn open_moves(&self) -> Vec<GridAction> {
        GridAction::MOVES
            .iter()
            .copied()
            .filter(|&a| self.target(a).is_some())
            .collect()
    }

    /// Text map: `#` obstacle, `.` free, `G` goal, `A` agent (`@` on a goal).
    pub fn render(&self) -> String {
        let n = self.config.size;
        let mut out = String::with_capacity((n + 1) * n);
        for y in 0..n {
            for x in 0..n {
                let c = match (self.cell(x, y), (x, y) == self.agent) {
                    (Cell::Goal, true) => '@',
                    (_, true) => 'A',
                    (Cell::Obstacle, _) => '#',
                    (Cell::Goal, _) => 'G',
                    (Cell::Free, _) => '.',
                };
                out.push(c);
            }
            out.push('\n');
        }
        let _ = write!(out, "step {}/{}", self.steps, self.config.max_episode_steps);
        out.push('\n');
        out
    }
}

/// Multi-source breadth-first search over non-obstacle cells.
fn bfs(n: usize, cells: &[Cell], sources: &[usize]) -> Vec<Option<u32>> {
    let mut dist = vec![None; n * n];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s] = Some(0);
        queue.push_back(s);
    }
    while let Some(i) = queue.pop_front() {
        let d = dist[i].expect("queued cells have a distance");
        let (x, y) = (i % n, i / n);
        let neighbours = [
            (y > 0).then(|| i - n),
            (y + 1 < n).then(|| i + n),
            (x > 0).then(|| i - 1),
            (x + 1 < n).then(|| i + 1),
        ];
        for j in neighbours.into_iter().flatten() {
            if cells[j] != Cell::Obstacle && dist[j].is_none() {
                dist[j] = Some(d + 1);
                queue.push_back(j);
            }
        }
    }
    dist
}

/// Scripted shortest-path expert with epsilon-noise.
///
/// Per call off-goal it draws one `chance(noise_eps)`; on a noisy call it then
/// draws `index(open_moves)`. On a goal cell it stays without drawing.
pub struct Expert {
    noise_eps: f64,
    rng: SeedRng,
}

impl Expert {
    pub fn new(noise_eps: f64, seed: u64) -> Result<Self> {
        if !(0.0..0.5).contains(&noise_eps) {
            return Err(SbcError::Config(format!("noise_eps {noise_eps} outside [0, 0.5)")));
        }
        Ok(Self {
            noise_eps,
            rng: SeedRng::new(seed),
        })
    }

    pub fn act(&mut self, state: &GridState) -> Result<GridAction> {
        if state.in_goal() {
            return Ok(GridAction::Stay);
        }
        let dist = state.goal_distances();
        let n = state.config.size;
        let (x, y) = state.agent;
        let here = dist[y * n + x].ok_or(SbcError::UnreachableGoal { x, y })?;
        if self.rng.chance(self.noise_eps) {
            let moves = state.open_moves();
            return Ok(moves[self.rng.index(moves.len())]);
        }
        GridAction::MOVES
            .iter()
            .copied()
            .find(|&a| {
                state
                    .target(a)
                    .is_some_and(|(tx, ty)| dist[ty * n + tx] == Some(here - 1))
            })
            .ok_or(SbcError::UnreachableGoal { x, y })
    }
}

/// Records `n_demos` expert episodes on distinct worlds; each episode runs
/// until `hold_steps` frames have been recorded after the first goal entry.
///
/// Demo `i` uses world seed `derive_seed(seed, [DEMO, i])`, expert seed
/// `derive_seed(seed, [EXPERT, i])` and trajectory id `i`.
pub fn generate_demos<T: Scalar>(
    config: &GridConfig,
    n_demos: usize,
    noise_eps: f64,
    encoder: &mut Encoder,
    hold_steps: usize,
    seed: u64,
) -> Result<DemoSet<T>> {
    config.validate()?;
    if hold_steps == 0 {
        return Err(SbcError::Config("hold_steps must be positive".into()));
    }
    if encoder.input_dim() != config.observation_len() {
        return Err(SbcError::DimensionMismatch {
            expected: config.observation_len(),
            found: encoder.input_dim(),
        });
    }
    let mut trajectories = Vec::with_capacity(n_demos);
    for i in 0..n_demos as u64 {
        let world_seed = derive_seed(seed, &[DEMO_SALT, i]);
        let mut state = GridState::generate(&config.with_seed(world_seed))?;
        let mut expert = Expert::new(noise_eps, derive_seed(seed, &[EXPERT_SALT, i]))?;
        let mut observations = Vec::new();
        let mut actions = Vec::new();
        let mut held: Option<usize> = None;
        while held.is_none_or(|h| h < hold_steps) {
            if state.is_over() {
                return Err(SbcError::ExpertFailure {
                    seed: world_seed,
                    reason: format!(
                        "did not finish within {} steps",
                        config.max_episode_steps
                    ),
                });
            }
            let action = expert.act(&state)?;
            observations.push(state.observe());
            actions.push(action.to_record());
            if let Some(h) = held.as_mut() {
                *h += 1;
            }
            if state.step(action)?.in_goal && held.is_none() {
                held = Some(0);
            }
        }
        trajectories.push(encoder.encode_trajectory(i, &observations, &actions)?);
    }
    Ok(DemoSet::new(
        encoder.output_dim(),
        GridAction::schema(),
        trajectories,
    ))
}

/// Per flat index position: whether the frame belongs to the trailing run of
/// `stay` actions of its trajectory, i.e. the hold phase inside the goal.
pub fn hold_phase_labels<T: Scalar>(index: &LatentIndex<T>) -> Vec<bool> {
    let stay = GridAction::Stay.to_record();
    let mut labels = vec![false; index.len()];
    let mut in_run = false;
    for pos in (0..index.len()).rev() {
        if pos + 1 == index.trajectory_end(pos) {
            in_run = true;
        }
        in_run = in_run && *index.action(pos) == stay;
        labels[pos] = in_run;
    }
    labels
}
