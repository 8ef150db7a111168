//! Scripted experts, demonstration collection, interpolation augmentation,
//! and the demonstration file format.

use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvSpec, State, GRID_MOVES};
use crate::error::{Error, Result};
use crate::format;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: State,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: State,
    pub reached_goal: bool,
    pub episode: usize,
    pub t: usize,
}

/// Behind-the-block standoff used by the push expert.
const PUSH_STANDOFF: f64 = 0.035;
const PUSH_ALIGN_TOL: f64 = 0.01;

fn scale_to_bound(v: [f64; 2], bound: f64) -> Vec<f64> {
    let m = v[0].abs().max(v[1].abs());
    if m <= bound {
        v.to_vec()
    } else {
        vec![v[0] * bound / m, v[1] * bound / m]
    }
}

/// Scripted expert.
///
/// * grid: a move that lowers the breadth-first distance to the goal, ties
///   broken uniformly by `rng`;
/// * reach: `clamp(g - p)` per coordinate;
/// * push: walk to a standoff point behind the block on the goal line, then
///   push along it.
pub fn expert_action(env: &EnvSpec, state: &State, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if env.is_goal_state(state) {
        return Err(Error::NoAction(format!("{state:?} is terminal")));
    }
    match env {
        EnvSpec::Grid(g) => {
            let d = env.grid_distances().expect("grid");
            let (x, y) = (state[0] as i64, state[1] as i64);
            let here = d[x as usize][y as usize];
            let better: Vec<usize> = GRID_MOVES
                .iter()
                .enumerate()
                .filter(|(_, m)| {
                    let nx = x + m[0] as i64;
                    let ny = y + m[1] as i64;
                    nx >= 0
                        && ny >= 0
                        && nx < g.width as i64
                        && ny < g.height as i64
                        && d[nx as usize][ny as usize] + 1 == here
                })
                .map(|(i, _)| i)
                .collect();
            if better.is_empty() {
                return Err(Error::NoAction(format!("goal unreachable from {state:?}")));
            }
            let pick = better[rng.random_range(0..better.len())];
            Ok(GRID_MOVES[pick].to_vec())
        }
        EnvSpec::Reach(r) => Ok(vec![
            (state[2] - state[0]).clamp(-r.a_max, r.a_max),
            (state[3] - state[1]).clamp(-r.a_max, r.a_max),
        ]),
        EnvSpec::Push(p) => Ok(push_expert(p.a_max, p.contact_radius, state)),
    }
}

fn push_expert(a_max: f64, contact: f64, s: &State) -> Vec<f64> {
    let agent = [s[0], s[1]];
    let block = [s[2], s[3]];
    let goal = [s[4], s[5]];
    let to_goal = [goal[0] - block[0], goal[1] - block[1]];
    let remaining = (to_goal[0].powi(2) + to_goal[1].powi(2)).sqrt();
    let dir = [to_goal[0] / remaining, to_goal[1] / remaining];
    let behind = [block[0] - PUSH_STANDOFF * dir[0], block[1] - PUSH_STANDOFF * dir[1]];
    let off = [behind[0] - agent[0], behind[1] - agent[1]];

    let rel = [agent[0] - block[0], agent[1] - block[1]];
    let along = rel[0] * dir[0] + rel[1] * dir[1];
    let lateral = [rel[0] - along * dir[0], rel[1] - along * dir[1]];
    let lateral_norm = (lateral[0].powi(2) + lateral[1].powi(2)).sqrt();

    // On the push line behind the block and in contact: push, closing any
    // gap to the standoff on the way.
    if lateral_norm <= PUSH_ALIGN_TOL && (-contact..=-0.5 * PUSH_STANDOFF).contains(&along) {
        // Longest stride along `dir` allowed by the per-coordinate bound.
        let stride = a_max / dir[0].abs().max(dir[1].abs());
        let len = stride.min(remaining);
        return scale_to_bound([off[0] + len * dir[0], off[1] + len * dir[1]], a_max);
    }

    // Walk around the block when beside or in front of it; the waypoint
    // lies well behind, so the detour ends on the approach line.
    let clearance = contact + 0.03;
    if along > -0.5 * PUSH_STANDOFF && lateral_norm < clearance {
        let side = if lateral_norm > 1e-9 {
            [lateral[0] / lateral_norm, lateral[1] / lateral_norm]
        } else {
            [-dir[1], dir[0]]
        };
        let waypoint = [
            block[0] + side[0] * clearance - (PUSH_STANDOFF + 0.03) * dir[0],
            block[1] + side[1] * clearance - (PUSH_STANDOFF + 0.03) * dir[1],
        ];
        return scale_to_bound([waypoint[0] - agent[0], waypoint[1] - agent[1]], a_max);
    }
    scale_to_bound(off, a_max)
}

/// Ordered transitions of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn success(&self) -> bool {
        self.transitions.last().is_some_and(|t| t.reached_goal)
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// `s_0, ..., s_n`.
    pub fn states(&self) -> impl Iterator<Item = &State> {
        self.transitions
            .iter()
            .map(|t| &t.state)
            .chain(self.transitions.last().map(|t| &t.next_state))
    }
}

/// Rolls `policy` from `start` for at most the horizon, stopping at the goal.
pub fn rollout(
    env: &EnvSpec,
    start: State,
    episode: usize,
    mut policy: impl FnMut(&State) -> Result<Vec<f64>>,
) -> Result<Trajectory> {
    let mut transitions = Vec::new();
    let mut s = start;
    for t in 0..env.horizon() {
        let a = env.clamp_action(&policy(&s)?)?;
        let r = env.step(&s, &a)?;
        let done = r.reached_goal;
        transitions.push(Transition {
            state: s,
            action: a,
            reward: r.reward,
            next_state: r.next_state.clone(),
            reached_goal: done,
            episode,
            t,
        });
        s = r.next_state;
        if done {
            break;
        }
    }
    Ok(Trajectory { transitions })
}

/// Successful expert trajectories plus per-coordinate spread of their states.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoDataset {
    env_name: String,
    trajectories: Vec<Trajectory>,
    transitions: Vec<Transition>,
    sigma: Vec<f64>,
}

impl DemoDataset {
    /// Builds a dataset; every trajectory must be non-empty and successful.
    pub fn new(env: &EnvSpec, trajectories: Vec<Trajectory>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::Schema("dataset has no trajectories".into()));
        }
        for (i, tr) in trajectories.iter().enumerate() {
            if tr.is_empty() {
                return Err(Error::Schema(format!("trajectory {i} is empty")));
            }
            if !tr.success() {
                return Err(Error::Schema(format!("trajectory {i} is not successful")));
            }
        }
        let transitions: Vec<Transition> = trajectories
            .iter()
            .flat_map(|t| t.transitions.iter().cloned())
            .collect();
        let sigma = state_std(env, &trajectories);
        Ok(DemoDataset {
            env_name: env.name().to_string(),
            trajectories,
            transitions,
            sigma,
        })
    }

    pub fn env_name(&self) -> &str {
        &self.env_name
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Per-coordinate population standard deviation of value-space states.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Every stored state (`s_0 .. s_n` of every trajectory).
    pub fn states(&self) -> impl Iterator<Item = &State> {
        self.trajectories.iter().flat_map(Trajectory::states)
    }

    /// Range of flattened transition indices belonging to trajectory `i`.
    pub fn trajectory_range(&self, i: usize) -> Range<usize> {
        let start: usize = self.trajectories[..i].iter().map(Trajectory::len).sum();
        start..start + self.trajectories[i].len()
    }
}

fn state_std(env: &EnvSpec, trajectories: &[Trajectory]) -> Vec<f64> {
    let values: Vec<Vec<f64>> = trajectories
        .iter()
        .flat_map(Trajectory::states)
        .map(|s| env.value_input(s))
        .collect();
    let n = values.len() as f64;
    // Shifted by the first sample so constant coordinates come out exactly 0.
    let shift = values[0].clone();
    (0..env.value_dim())
        .map(|j| {
            let mean = values.iter().map(|v| v[j] - shift[j]).sum::<f64>() / n;
            let var = values
                .iter()
                .map(|v| (v[j] - shift[j] - mean).powi(2))
                .sum::<f64>()
                / n;
            var.sqrt()
        })
        .collect()
}

/// Rolls the expert until `n` successful trajectories are stored.
pub fn collect_demos(env: &EnvSpec, n: usize, seed: u64) -> Result<DemoDataset> {
    if n == 0 {
        return Err(Error::Invalid("need at least one demonstration".into()));
    }
    env.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = Vec::with_capacity(n);
    let mut attempts = 0;
    while kept.len() < n {
        if attempts >= 100 * n {
            return Err(Error::CollectionFailure(format!(
                "only {} of {n} successful trajectories after {attempts} attempts",
                kept.len()
            )));
        }
        attempts += 1;
        let start = env.reset(rng.next_u64());
        let traj = rollout(env, start, kept.len(), |s| expert_action(env, s, &mut rng))?;
        if traj.success() {
            kept.push(traj);
        }
    }
    DemoDataset::new(env, kept)
}

/// `(s + l (s' - s), a, l r, s')` for a given `l` in `[0, 1]`.
pub fn interpolate(tr: &Transition, lambda: f64) -> Transition {
    let state = tr
        .state
        .iter()
        .zip(tr.next_state.iter())
        .map(|(s, n)| s + lambda * (n - s))
        .collect();
    Transition {
        state: State(state),
        reward: lambda * tr.reward,
        ..tr.clone()
    }
}

/// [`interpolate`] with `l ~ Uniform[0, 1]`.
pub fn augment_interpolate(tr: &Transition, rng: &mut impl Rng) -> Transition {
    interpolate(tr, rng.random_range(0.0..=1.0))
}

/// Exact nearest-neighbor lookup over the distinct demonstrated positions
/// (value-space coordinates with the goal dropped).
#[derive(Clone, Debug)]
pub struct DemoIndex {
    dim: usize,
    points: Vec<f64>,
}

impl DemoIndex {
    pub fn new(env: &EnvSpec, ds: &DemoDataset) -> Self {
        let mask = env.position_mask();
        let mut rows: Vec<Vec<f64>> = ds
            .states()
            .map(|s| {
                env.value_input(s)
                    .into_iter()
                    .zip(&mask)
                    .filter(|(_, m)| **m)
                    .map(|(v, _)| v)
                    .collect()
            })
            .collect();
        rows.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
        rows.dedup();
        let dim = mask.iter().filter(|m| **m).count();
        DemoIndex {
            dim,
            points: rows.concat(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Index of and Euclidean distance to the closest stored position;
    /// `position` holds only the non-goal coordinates.
    pub fn nearest(&self, position: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.points.chunks_exact(self.dim).enumerate() {
            let d2: f64 = p.iter().zip(position).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        (best.0, best.1.sqrt())
    }
}

const HEADER: &str = "# vinslab-demos";

impl DemoDataset {
    pub fn write_to(&self, mut w: impl Write, env: &EnvSpec) -> Result<()> {
        writeln!(
            w,
            "{HEADER} env={} d={} k={}",
            self.env_name,
            env.state_dim(),
            env.action_dim()
        )?;
        for tr in &self.transitions {
            let mut fields = vec![tr.episode.to_string(), tr.t.to_string()];
            fields.extend(tr.state.iter().map(|v| format::real(*v)));
            fields.extend(tr.action.iter().map(|v| format::real(*v)));
            fields.push(format::real(tr.reward));
            fields.extend(tr.next_state.iter().map(|v| format::real(*v)));
            fields.push(if tr.reached_goal { "1" } else { "0" }.to_string());
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>, env: &EnvSpec) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf, env)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn parse(text: &str, env: &EnvSpec) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Schema("empty dataset file".into()))?;
        let rest = header
            .strip_prefix(HEADER)
            .ok_or_else(|| Error::parse(1, "missing dataset header"))?;
        let (mut name, mut d, mut k) = (None, None, None);
        for field in rest.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::parse(1, format!("bad header field {field:?}")))?;
            match key {
                "env" => name = Some(value.to_string()),
                "d" => d = value.parse::<usize>().ok(),
                "k" => k = value.parse::<usize>().ok(),
                _ => return Err(Error::parse(1, format!("unknown header field {key:?}"))),
            }
        }
        let name = name.ok_or_else(|| Error::Schema("header lacks env".into()))?;
        let d = d.ok_or_else(|| Error::Schema("header lacks d".into()))?;
        let k = k.ok_or_else(|| Error::Schema("header lacks k".into()))?;
        if name != env.name() || d != env.state_dim() || k != env.action_dim() {
            return Err(Error::Schema(format!(
                "file holds {name} (d={d}, k={k}) but environment is {} (d={}, k={})",
                env.name(),
                env.state_dim(),
                env.action_dim()
            )));
        }

        let width = 2 + d + k + 1 + d + 1;
        let mut trajectories: Vec<Trajectory> = Vec::new();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width {
                return Err(Error::parse(
                    n,
                    format!("row has {} fields, expected {width}", fields.len()),
                ));
            }
            let int = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::parse(n, format!("not an integer: {s:?}")))
            };
            let episode = int(fields[0])?;
            let t = int(fields[1])?;
            let reals = format::parse_reals(&fields[2..width - 1], n)?;
            let done = match fields[width - 1].trim() {
                "1" => true,
                "0" => false,
                other => return Err(Error::parse(n, format!("bad done flag {other:?}"))),
            };
            let tr = Transition {
                state: State(reals[..d].to_vec()),
                action: reals[d..d + k].to_vec(),
                reward: reals[d + k],
                next_state: State(reals[d + k + 1..].to_vec()),
                reached_goal: done,
                episode,
                t,
            };
            match trajectories.last_mut() {
                Some(traj) if traj.transitions[0].episode == episode => {
                    let prev = traj.transitions.last().expect("non-empty");
                    if t != prev.t + 1 || prev.next_state != tr.state || prev.reached_goal {
                        return Err(Error::Schema(format!(
                            "line {n}: transition does not continue episode {episode}"
                        )));
                    }
                    traj.transitions.push(tr);
                }
                _ => {
                    if t != 0 {
                        return Err(Error::Schema(format!(
                            "line {n}: episode {episode} does not start at t=0"
                        )));
                    }
                    trajectories.push(Trajectory {
                        transitions: vec![tr],
                    });
                }
            }
        }
        DemoDataset::new(env, trajectories)
    }

    pub fn load(path: impl AsRef<Path>, env: &EnvSpec) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::Dependency(path.to_path_buf()));
        }
        Self::parse(&fs::read_to_string(path)?, env)
    }
}
