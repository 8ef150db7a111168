//! Deterministic sparse-reward environments.
//!
//! Every step costs `-1`; an episode ends when the goal set is reached or
//! the horizon runs out. Goal-conditioned tasks carry the goal in the
//! trailing coordinates of the state, and those coordinates never change
//! within an episode.
//!
//! Two views of a state feed the learned functions: the *model input*
//! excludes the goal, the *value input* includes it. For the grid both are
//! the cell coordinates divided by the grid size.

use std::cell::Cell;
use std::collections::VecDeque;
use std::fmt;
use std::ops::Deref;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

thread_local! {
    static STEP_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of [`EnvSpec::step`] calls made on the current thread.
pub fn step_calls() -> u64 {
    STEP_CALLS.with(Cell::get)
}

/// Raw environment state.
#[derive(Clone, Debug, PartialEq)]
pub struct State(pub Vec<f64>);

impl Deref for State {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: State,
    pub reward: f64,
    pub reached_goal: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub horizon: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            width: 9,
            height: 6,
            start: (0, 2),
            goal: (8, 2),
            horizon: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReachSpec {
    pub a_max: f64,
    pub goal_tol: f64,
    pub horizon: usize,
}

impl Default for ReachSpec {
    fn default() -> Self {
        ReachSpec {
            a_max: 0.08,
            goal_tol: 0.05,
            horizon: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PushSpec {
    pub a_max: f64,
    pub goal_tol: f64,
    pub contact_radius: f64,
    pub horizon: usize,
}

impl Default for PushSpec {
    fn default() -> Self {
        PushSpec {
            a_max: 0.08,
            goal_tol: 0.05,
            contact_radius: 0.06,
            horizon: 100,
        }
    }
}

/// One of the three task families, with its constants.
#[derive(Clone, Debug, PartialEq)]
pub enum EnvSpec {
    Grid(GridSpec),
    Reach(ReachSpec),
    Push(PushSpec),
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Unit moves of the grid, in the fixed order used for enumeration and
/// tie-breaking: right, left, up, down.
pub const GRID_MOVES: [[f64; 2]; 4] = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];

/// Nearest grid move by cosine similarity; ties go to the earlier move and a
/// zero vector maps to `None`.
pub fn nearest_grid_move(action: &[f64]) -> Option<usize> {
    let norm = (action[0] * action[0] + action[1] * action[1]).sqrt();
    if norm == 0.0 {
        return None;
    }
    let mut best = 0;
    let mut best_cos = f64::NEG_INFINITY;
    for (i, m) in GRID_MOVES.iter().enumerate() {
        let cos = (m[0] * action[0] + m[1] * action[1]) / norm;
        if cos > best_cos {
            best_cos = cos;
            best = i;
        }
    }
    Some(best)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

impl EnvSpec {
    pub fn grid() -> Self {
        EnvSpec::Grid(GridSpec::default())
    }

    pub fn reach() -> Self {
        EnvSpec::Reach(ReachSpec::default())
    }

    pub fn push() -> Self {
        EnvSpec::Push(PushSpec::default())
    }

    /// Looks up a default-configured environment by its config name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "grid" => Ok(Self::grid()),
            "reach" => Ok(Self::reach()),
            "push" => Ok(Self::push()),
            other => Err(Error::Config(format!("unknown environment: {other}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Grid(_) => "grid",
            EnvSpec::Reach(_) => "reach",
            EnvSpec::Push(_) => "push",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self {
            EnvSpec::Grid(g) => {
                if g.width == 0 || g.height == 0 {
                    return bad("grid dimensions must be positive".into());
                }
                if g.start.0 >= g.width || g.start.1 >= g.height {
                    return bad(format!("grid start {:?} outside grid", g.start));
                }
                if g.goal.0 >= g.width || g.goal.1 >= g.height {
                    return bad(format!("grid goal {:?} outside grid", g.goal));
                }
                if g.start == g.goal {
                    return bad("grid start equals goal".into());
                }
            }
            EnvSpec::Reach(r) => {
                if !(r.a_max > 0.0) || !(r.goal_tol > 0.0) {
                    return bad("reach a_max and goal_tol must be positive".into());
                }
            }
            EnvSpec::Push(p) => {
                if !(p.a_max > 0.0) || !(p.goal_tol > 0.0) || !(p.contact_radius > 0.0) {
                    return bad("push a_max, goal_tol and contact_radius must be positive".into());
                }
            }
        }
        if self.horizon() == 0 {
            return bad("horizon must be at least 1".into());
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        match self {
            EnvSpec::Grid(_) => 2,
            EnvSpec::Reach(_) => 4,
            EnvSpec::Push(_) => 6,
        }
    }

    pub fn action_dim(&self) -> usize {
        2
    }

    pub fn horizon(&self) -> usize {
        match self {
            EnvSpec::Grid(g) => g.horizon,
            EnvSpec::Reach(r) => r.horizon,
            EnvSpec::Push(p) => p.horizon,
        }
    }

    /// Per-coordinate action bound.
    pub fn action_bound(&self) -> f64 {
        match self {
            EnvSpec::Grid(_) => 1.0,
            EnvSpec::Reach(r) => r.a_max,
            EnvSpec::Push(p) => p.a_max,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, EnvSpec::Grid(_))
    }

    /// Draws an initial state. Deterministic in `seed`.
    pub fn reset(&self, seed: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            EnvSpec::Grid(g) => State(vec![g.start.0 as f64, g.start.1 as f64]),
            EnvSpec::Reach(_) => State(vec![
                rng.random_range(0.0..=0.1),
                rng.random_range(0.0..=1.0),
                rng.random_range(0.9..=1.0),
                rng.random_range(0.0..=1.0),
            ]),
            EnvSpec::Push(_) => State(vec![
                rng.random_range(0.0..=0.1),
                rng.random_range(0.2..=0.8),
                rng.random_range(0.35..=0.55),
                rng.random_range(0.3..=0.7),
                rng.random_range(0.9..=1.0),
                rng.random_range(0.2..=0.8),
            ]),
        }
    }

    /// Clamps every coordinate to `[-a_max, a_max]`; rejects non-finite or
    /// wrongly-sized actions.
    pub fn clamp_action(&self, action: &[f64]) -> Result<Vec<f64>> {
        if action.len() != self.action_dim() {
            return Err(Error::InvalidAction(format!(
                "expected {} components, got {}",
                self.action_dim(),
                action.len()
            )));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidAction(format!("non-finite action {action:?}")));
        }
        let bound = self.action_bound();
        Ok(action.iter().map(|a| a.clamp(-bound, bound)).collect())
    }

    /// Applies the deterministic dynamics. Reward is always `-1`.
    ///
    /// Every call is counted per thread (see [`step_calls`]).
    pub fn step(&self, state: &State, action: &[f64]) -> Result<StepResult> {
        STEP_CALLS.with(|c| c.set(c.get() + 1));
        self.transition(state, action)
    }

    /// The same dynamics as [`step`](Self::step) without the interaction
    /// counter; used when the true dynamics serve as a planning model.
    pub fn transition(&self, state: &State, action: &[f64]) -> Result<StepResult> {
        if state.len() != self.state_dim() {
            return Err(Error::Shape(format!(
                "state has {} coordinates, {} expects {}",
                state.len(),
                self.name(),
                self.state_dim()
            )));
        }
        let action = self.clamp_action(action)?;
        let next = match self {
            EnvSpec::Grid(g) => {
                let (mut x, mut y) = (state[0] as i64, state[1] as i64);
                if let Some(m) = nearest_grid_move(&action) {
                    x = (x + GRID_MOVES[m][0] as i64).clamp(0, g.width as i64 - 1);
                    y = (y + GRID_MOVES[m][1] as i64).clamp(0, g.height as i64 - 1);
                }
                vec![x as f64, y as f64]
            }
            EnvSpec::Reach(_) => vec![
                clamp01(state[0] + action[0]),
                clamp01(state[1] + action[1]),
                state[2],
                state[3],
            ],
            EnvSpec::Push(p) => {
                let agent = [state[0], state[1]];
                let moved = [clamp01(agent[0] + action[0]), clamp01(agent[1] + action[1])];
                let mut block = [state[2], state[3]];
                let gap = dist(&agent, &block);
                if gap <= p.contact_radius && gap > 0.0 {
                    let u = [(block[0] - agent[0]) / gap, (block[1] - agent[1]) / gap];
                    let along = (moved[0] - agent[0]) * u[0] + (moved[1] - agent[1]) * u[1];
                    if along > 0.0 {
                        block = [clamp01(block[0] + along * u[0]), clamp01(block[1] + along * u[1])];
                    }
                }
                vec![moved[0], moved[1], block[0], block[1], state[4], state[5]]
            }
        };
        let next_state = State(next);
        let reached_goal = self.is_goal_state(&next_state);
        Ok(StepResult {
            next_state,
            reward: -1.0,
            reached_goal,
        })
    }

    pub fn is_goal_state(&self, state: &State) -> bool {
        match self {
            EnvSpec::Grid(g) => {
                state[0].round() as usize == g.goal.0 && state[1].round() as usize == g.goal.1
            }
            EnvSpec::Reach(r) => dist(&state[0..2], &state[2..4]) <= r.goal_tol,
            EnvSpec::Push(p) => dist(&state[2..4], &state[4..6]) <= p.goal_tol,
        }
    }

    /// The four grid moves, or `None` for continuous action spaces.
    pub fn enumerate_actions(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            EnvSpec::Grid(_) => Some(GRID_MOVES.iter().map(|m| m.to_vec()).collect()),
            _ => None,
        }
    }

    pub fn model_dim(&self) -> usize {
        match self {
            EnvSpec::Grid(_) | EnvSpec::Reach(_) => 2,
            EnvSpec::Push(_) => 4,
        }
    }

    pub fn value_dim(&self) -> usize {
        self.state_dim()
    }

    /// `(model_input, value_input)`: the model never sees the goal.
    pub fn reduced_state(&self, state: &State) -> (Vec<f64>, Vec<f64>) {
        let value = self.value_input(state);
        let model = value[..self.model_dim()].to_vec();
        (model, value)
    }

    pub fn value_input(&self, state: &State) -> Vec<f64> {
        match self {
            EnvSpec::Grid(g) => vec![state[0] / g.width as f64, state[1] / g.height as f64],
            _ => state.0.clone(),
        }
    }

    pub fn model_input(&self, state: &State) -> Vec<f64> {
        self.value_input(state)[..self.model_dim()].to_vec()
    }

    /// Inverse of [`value_input`](Self::value_input); grid coordinates are
    /// rounded to the nearest cell.
    pub fn state_from_value(&self, value: &[f64]) -> State {
        match self {
            EnvSpec::Grid(g) => State(vec![
                (value[0] * g.width as f64).round().clamp(0.0, (g.width - 1) as f64),
                (value[1] * g.height as f64).round().clamp(0.0, (g.height - 1) as f64),
            ]),
            _ => State(value.to_vec()),
        }
    }

    /// Appends the goal of `state` to a model-space vector, producing a
    /// value-space vector.
    pub fn complete_value_input(&self, model: &[f64], state: &State) -> Vec<f64> {
        let goal = &self.value_input(state)[self.model_dim()..];
        model.iter().chain(goal).copied().collect()
    }

    /// Goal membership evaluated on a value-space vector.
    pub fn is_goal_value(&self, value: &[f64]) -> bool {
        self.is_goal_state(&self.state_from_value(value))
    }

    /// Value-space coordinates that are not goal coordinates.
    pub fn position_mask(&self) -> Vec<bool> {
        let m = self.model_dim();
        (0..self.value_dim()).map(|i| i < m).collect()
    }

    /// Value-space coordinates perturbed when drawing negative samples: the
    /// agent position only (the block of the push task is left in place).
    pub fn perturb_mask(&self) -> Vec<bool> {
        (0..self.value_dim()).map(|i| i < 2).collect()
    }

    /// Per-coordinate bounds of the value space.
    pub fn value_bounds(&self) -> Vec<(f64, f64)> {
        match self {
            EnvSpec::Grid(g) => vec![
                (0.0, (g.width - 1) as f64 / g.width as f64),
                (0.0, (g.height - 1) as f64 / g.height as f64),
            ],
            _ => vec![(0.0, 1.0); self.value_dim()],
        }
    }

    /// Maps an arbitrary value-space vector onto a valid state: clamps to the
    /// bounds and, on the grid, snaps to the nearest cell.
    pub fn project_value(&self, value: &mut [f64]) {
        for (v, (lo, hi)) in value.iter_mut().zip(self.value_bounds()) {
            *v = v.clamp(lo, hi);
        }
        if let EnvSpec::Grid(g) = self {
            value[0] = (value[0] * g.width as f64).round() / g.width as f64;
            value[1] = (value[1] * g.height as f64).round() / g.height as f64;
        }
    }

    /// Displaces the agent of `state` by noise of infinity-norm `magnitude`.
    ///
    /// On the grid `magnitude` is in cells and the offset has infinity norm
    /// exactly `magnitude.round()`; elsewhere the agent moves uniformly within
    /// the `[-magnitude, magnitude]^2` box (clamped to the arena).
    pub fn displace(&self, state: &State, magnitude: f64, rng: &mut impl Rng) -> State {
        match self {
            EnvSpec::Grid(g) => {
                let r = magnitude.round() as i64;
                if r == 0 {
                    return state.clone();
                }
                let offsets: Vec<(i64, i64)> = (-r..=r)
                    .flat_map(|dx| (-r..=r).map(move |dy| (dx, dy)))
                    .filter(|(dx, dy)| dx.abs().max(dy.abs()) == r)
                    .collect();
                let (dx, dy) = offsets[rng.random_range(0..offsets.len())];
                let x = (state[0] as i64 + dx).clamp(0, g.width as i64 - 1);
                let y = (state[1] as i64 + dy).clamp(0, g.height as i64 - 1);
                State(vec![x as f64, y as f64])
            }
            _ => {
                let mut s = state.0.clone();
                for v in s.iter_mut().take(2) {
                    *v = clamp01(*v + rng.random_range(-magnitude..=magnitude));
                }
                State(s)
            }
        }
    }

    /// Breadth-first step counts to the grid goal, indexed `[x][y]`.
    pub fn grid_distances(&self) -> Option<Vec<Vec<usize>>> {
        let EnvSpec::Grid(g) = self else {
            return None;
        };
        let mut d = vec![vec![usize::MAX; g.height]; g.width];
        let mut queue = VecDeque::new();
        d[g.goal.0][g.goal.1] = 0;
        queue.push_back(g.goal);
        while let Some((x, y)) = queue.pop_front() {
            for m in GRID_MOVES {
                let nx = x as i64 + m[0] as i64;
                let ny = y as i64 + m[1] as i64;
                if nx < 0 || ny < 0 || nx >= g.width as i64 || ny >= g.height as i64 {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if d[nx][ny] == usize::MAX {
                    d[nx][ny] = d[x][y] + 1;
                    queue.push_back((nx, ny));
                }
            }
        }
        Some(d)
    }
}
