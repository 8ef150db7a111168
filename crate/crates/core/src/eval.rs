//! Measurements: success rates, distance-to-demonstration profiles along
//! rollouts, the conservative-extrapolation audit, and value heatmaps.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bc::BcPolicy;
use crate::demos::{expert_action, rollout, DemoDataset, DemoIndex, Trajectory};
use crate::env::{EnvSpec, State};
use crate::error::{Error, Result};
use crate::format;
use crate::tensor::NetworkParams;
use crate::vins::{induced_action, Anchor, NegativeSampler, VinsConfig, VinsState};

/// Anything that maps a state to an action. The random generator is owned by
/// the episode, so policies can be shared across worker threads.
pub trait Policy: Sync {
    fn act(&self, env: &EnvSpec, state: &State, rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;
}

/// The scripted expert.
pub struct Expert;

impl Policy for Expert {
    fn act(&self, env: &EnvSpec, state: &State, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        expert_action(env, state, rng)
    }
}

/// Always the zero action.
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn act(&self, env: &EnvSpec, _: &State, _: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Ok(vec![0.0; env.action_dim()])
    }
}

impl Policy for BcPolicy {
    fn act(&self, env: &EnvSpec, state: &State, _: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        BcPolicy::act(self, env, state)
    }
}

/// The induced policy of a trained [`VinsState`].
pub struct Induced<'a> {
    pub vins: &'a VinsState,
    pub anchor: Anchor<'a>,
    pub cfg: &'a VinsConfig,
}

impl Policy for Induced<'_> {
    fn act(&self, env: &EnvSpec, state: &State, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        induced_action(env, state, self.vins, self.anchor, self.cfg, rng)
    }
}

fn episode_rng(base_seed: u64, seed: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(seed as u64));
    rng.set_stream(trial as u64 + 1);
    rng
}

/// Success rate per seed and across seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub mean: f64,
    /// Sample standard deviation of the per-seed rates.
    pub stddev: f64,
    pub per_seed: Vec<f64>,
    pub n_trials: usize,
}

impl EvalReport {
    fn from_rates(per_seed: Vec<f64>, n_trials: usize) -> Self {
        let (mean, stddev) = mean_std(&per_seed);
        EvalReport {
            mean,
            stddev,
            per_seed,
            n_trials,
        }
    }

    /// Rows `seed,rate`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "seed,rate")?;
        for (i, r) in self.per_seed.iter().enumerate() {
            writeln!(w, "{i},{}", format::real(*r))?;
        }
        Ok(())
    }

    pub fn parse_csv(text: &str, n_trials: usize) -> Result<Self> {
        let rows = parse_table(text, "seed,rate")?;
        let mut rates = Vec::with_capacity(rows.len());
        for (line, row) in rows {
            if row[0] as usize != rates.len() {
                return Err(Error::parse(line, "seeds must be listed in order"));
            }
            rates.push(row[1]);
        }
        Ok(EvalReport::from_rates(rates, n_trials))
    }
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Fraction of episodes reaching the goal within the horizon, for `n_seeds`
/// seeds of `n_trials` fresh starts each.
pub fn success_rate(
    env: &EnvSpec,
    policy: &dyn Policy,
    n_trials: usize,
    n_seeds: usize,
    base_seed: u64,
) -> Result<EvalReport> {
    success_rate_perturbed(env, policy, n_trials, n_seeds, base_seed, 0.0)
}

/// [`success_rate`] with every start displaced by noise of infinity norm
/// `perturb0` (see [`EnvSpec::displace`]).
pub fn success_rate_perturbed(
    env: &EnvSpec,
    policy: &dyn Policy,
    n_trials: usize,
    n_seeds: usize,
    base_seed: u64,
    perturb0: f64,
) -> Result<EvalReport> {
    if n_trials == 0 || n_seeds == 0 {
        return Err(Error::Invalid("success_rate needs at least one trial and one seed".into()));
    }
    let outcomes: Vec<bool> = (0..n_seeds * n_trials)
        .into_par_iter()
        .map(|i| {
            let (seed, trial) = (i / n_trials, i % n_trials);
            let mut rng = episode_rng(base_seed, seed, trial);
            let start = env.reset(rng.next_u64());
            let start = env.displace(&start, perturb0, &mut rng);
            let traj = rollout(env, start, trial, |s| policy.act(env, s, &mut rng))?;
            Ok(traj.success())
        })
        .collect::<Result<_>>()?;
    let rates = outcomes
        .chunks(n_trials)
        .map(|c| c.iter().filter(|s| **s).count() as f64 / n_trials as f64)
        .collect();
    Ok(EvalReport::from_rates(rates, n_trials))
}

impl DemoIndex {
    /// Distance from the non-goal coordinates of `state` to the closest
    /// demonstrated state.
    pub fn distance(&self, env: &EnvSpec, state: &State) -> f64 {
        self.nearest(&position(env, &env.value_input(state))).1
    }
}

fn position(env: &EnvSpec, value: &[f64]) -> Vec<f64> {
    value[..env.model_dim()].to_vec()
}

/// Euclidean distance, over non-goal coordinates of the value space, from
/// `state` to the nearest demonstrated state.
pub fn distance_to_demo(env: &EnvSpec, state: &State, ds: &DemoDataset) -> Result<f64> {
    let index = DemoIndex::new(env, ds);
    if index.is_empty() {
        return Err(Error::Invalid("empty demonstration set".into()));
    }
    Ok(index.distance(env, state))
}

/// Distances to the demonstrations along one rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutTrace {
    /// Entry `t` is the distance of `s_t`; `s_0` is the start.
    pub distances: Vec<f64>,
    pub success: bool,
}

impl RolloutTrace {
    /// First step at which the rollout is on a demonstrated state.
    pub fn first_return(&self) -> Option<usize> {
        self.distances.iter().position(|d| *d <= 1e-9)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

/// Per-step distance statistics over a set of rollouts. Finished episodes
/// keep contributing their final distance up to the horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceProfile {
    pub steps: Vec<StepStats>,
    pub traces: Vec<RolloutTrace>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl DistanceProfile {
    fn from_traces(traces: Vec<RolloutTrace>, horizon: usize) -> Self {
        let steps = (0..=horizon)
            .map(|t| {
                let mut col: Vec<f64> = traces
                    .iter()
                    .map(|tr| tr.distances[t.min(tr.distances.len() - 1)])
                    .collect();
                col.sort_by(f64::total_cmp);
                StepStats {
                    mean: col.iter().sum::<f64>() / col.len() as f64,
                    p50: quantile(&col, 0.5),
                    p95: quantile(&col, 0.95),
                    max: col[col.len() - 1],
                }
            })
            .collect();
        DistanceProfile { steps, traces }
    }

    /// Rows `step,mean,p50,p95,max`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "step,mean,p50,p95,max")?;
        for (t, s) in self.steps.iter().enumerate() {
            writeln!(w, "{t},{}", format::join_reals(&[s.mean, s.p50, s.p95, s.max], ","))?;
        }
        Ok(())
    }

    /// Reads the per-step table written by [`write_csv`](Self::write_csv);
    /// the per-rollout traces are not part of the file.
    pub fn parse_csv(text: &str) -> Result<Vec<StepStats>> {
        parse_table(text, "step,mean,p50,p95,max")?
            .into_iter()
            .enumerate()
            .map(|(i, (line, row))| {
                if row[0] as usize != i {
                    return Err(Error::parse(line, "steps must be listed in order"));
                }
                Ok(StepStats {
                    mean: row[1],
                    p50: row[2],
                    p95: row[3],
                    max: row[4],
                })
            })
            .collect()
    }
}

/// Rolls `policy` from each start and records distances to the
/// demonstrations at every step.
pub fn distance_profile_from(
    env: &EnvSpec,
    policy: &dyn Policy,
    index: &DemoIndex,
    starts: &[State],
    seed: u64,
) -> Result<DistanceProfile> {
    if starts.is_empty() {
        return Err(Error::Invalid("no rollout starts".into()));
    }
    let traces = starts
        .par_iter()
        .enumerate()
        .map(|(i, start)| {
            let mut rng = episode_rng(seed, 0, i);
            let traj: Trajectory = rollout(env, start.clone(), i, |s| policy.act(env, s, &mut rng))?;
            let distances = std::iter::once(start)
                .chain(traj.transitions.iter().map(|t| &t.next_state))
                .map(|s| index.distance(env, s))
                .collect();
            Ok(RolloutTrace {
                distances,
                success: traj.success(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DistanceProfile::from_traces(traces, env.horizon()))
}

/// Starts `n_rollouts` episodes from demonstrated initial states (cycling
/// through the trajectories) displaced by noise of infinity norm `perturb0`,
/// and profiles their distance to the demonstrations.
pub fn rollout_distance_profile(
    env: &EnvSpec,
    policy: &dyn Policy,
    ds: &DemoDataset,
    n_rollouts: usize,
    perturb0: f64,
    seed: u64,
) -> Result<DistanceProfile> {
    if !(perturb0 >= 0.0) {
        return Err(Error::Invalid("perturb0 must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trajs = ds.trajectories();
    let starts: Vec<State> = (0..n_rollouts)
        .map(|i| env.displace(&trajs[i % trajs.len()].transitions[0].state, perturb0, &mut rng))
        .collect();
    distance_profile_from(env, policy, &DemoIndex::new(env, ds), &starts, seed)
}

/// Outcome of the conservative-extrapolation audit.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    /// Fraction of probes valued strictly below their projection onto the
    /// demonstrations.
    pub fraction: f64,
    /// Mean of `(V(proj) - V(probe)) / |probe - proj|`, comparable to lambda.
    pub mean_margin: f64,
    pub n_probes: usize,
}

impl AuditReport {
    /// Header `probe_fraction,mean_margin` and one row.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "probe_fraction,mean_margin")?;
        writeln!(w, "{}", format::join_reals(&[self.fraction, self.mean_margin], ","))?;
        Ok(())
    }

    pub fn parse_csv(text: &str, n_probes: usize) -> Result<Self> {
        let rows = parse_table(text, "probe_fraction,mean_margin")?;
        match rows.as_slice() {
            [(_, row)] => Ok(AuditReport {
                fraction: row[0],
                mean_margin: row[1],
                n_probes,
            }),
            _ => Err(Error::Schema("audit table must have exactly one row".into())),
        }
    }
}

/// Draws probes around demonstrated states and checks that each is valued
/// below its nearest demonstrated state.
///
/// Probes come from the negative sampler used in training (`rho`,
/// `sigma_floor`); probes that land on a demonstrated state are discarded and
/// redrawn. The projection keeps the probe's goal coordinates.
pub fn conservative_audit(
    env: &EnvSpec,
    value: &NetworkParams,
    ds: &DemoDataset,
    n_probes: usize,
    rho: f64,
    sigma_floor: f64,
    seed: u64,
) -> Result<AuditReport> {
    if n_probes == 0 {
        return Err(Error::Invalid("audit needs at least one probe".into()));
    }
    let index = DemoIndex::new(env, ds);
    let sampler = NegativeSampler::new(env, ds.sigma(), rho, sigma_floor, Some(index.clone()));
    let anchors: Vec<Vec<f64>> = ds.states().map(|s| env.value_input(s)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::with_capacity(n_probes);
    let mut projections = Vec::with_capacity(n_probes);
    let mut gaps = Vec::with_capacity(n_probes);
    let mut attempts = 0;
    while probes.len() < n_probes {
        attempts += 1;
        if attempts > 100 * n_probes {
            return Err(Error::Invalid(
                "perturbation too small: probes keep landing on demonstrations".into(),
            ));
        }
        let anchor = &anchors[(rng.next_u64() % anchors.len() as u64) as usize];
        let probe = sampler.sample(anchor, &mut rng);
        let (i, dist) = index.nearest(&position(env, &probe));
        if dist <= 1e-9 {
            continue;
        }
        let mut proj = index.point(i).to_vec();
        proj.extend_from_slice(&probe[env.model_dim()..]);
        probes.push(probe);
        projections.push(proj);
        gaps.push(dist);
    }
    let d = env.value_dim();
    let batch = |rows: Vec<Vec<f64>>| {
        Array2::from_shape_vec((n_probes, d), rows.concat()).map_err(|e| Error::Shape(e.to_string()))
    };
    let v_probe = value.forward_batch(&batch(probes)?)?;
    let v_proj = value.forward_batch(&batch(projections)?)?;
    let mut below = 0;
    let mut margin = 0.0;
    for ((vp, vu), gap) in v_probe.column(0).iter().zip(v_proj.column(0)).zip(&gaps) {
        if vp < vu {
            below += 1;
        }
        margin += (vu - vp) / gap;
    }
    Ok(AuditReport {
        fraction: below as f64 / n_probes as f64,
        mean_margin: margin / n_probes as f64,
        n_probes,
    })
}

/// A 2-D slice of the value space: the first two coordinates vary over a
/// regular lattice, the rest are held at `fixed`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSpec {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    pub fixed: Vec<f64>,
}

impl LatticeSpec {
    /// One lattice point per grid cell.
    pub fn grid_cells(env: &EnvSpec) -> Result<Self> {
        let EnvSpec::Grid(g) = env else {
            return Err(Error::Invalid("grid_cells needs the grid environment".into()));
        };
        Ok(LatticeSpec {
            x: (0.0, (g.width - 1) as f64 / g.width as f64),
            y: (0.0, (g.height - 1) as f64 / g.height as f64),
            nx: g.width,
            ny: g.height,
            fixed: Vec::new(),
        })
    }

    /// The unit square at `resolution` points per side, remaining value
    /// coordinates (block, goal) held at `fixed`.
    pub fn slice(resolution: usize, fixed: Vec<f64>) -> Self {
        LatticeSpec {
            x: (0.0, 1.0),
            y: (0.0, 1.0),
            nx: resolution,
            ny: resolution,
            fixed,
        }
    }

    fn validate(&self, env: &EnvSpec) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::Invalid(format!(
                "lattice must be two-dimensional, got {}x{}",
                self.nx, self.ny
            )));
        }
        if self.fixed.len() + 2 != env.value_dim() {
            return Err(Error::Invalid(format!(
                "lattice fixes {} coordinates, environment needs {}",
                self.fixed.len(),
                env.value_dim() - 2
            )));
        }
        Ok(())
    }

    pub fn coord(&self, ix: usize, iy: usize) -> (f64, f64) {
        let at = |(lo, hi): (f64, f64), i: usize, n: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
        (at(self.x, ix, self.nx), at(self.y, iy, self.ny))
    }

    fn nearest_index(&self, x: f64, y: f64) -> (usize, usize) {
        let idx = |(lo, hi): (f64, f64), v: f64, n: usize| {
            (((v - lo) / (hi - lo) * (n - 1) as f64).round().max(0.0) as usize).min(n - 1)
        };
        (idx(self.x, x, self.nx), idx(self.y, y, self.ny))
    }

    fn header(&self) -> String {
        format!(
            "# lattice x0={} x1={} nx={} y0={} y1={} ny={} fixed={}",
            format::real(self.x.0),
            format::real(self.x.1),
            self.nx,
            format::real(self.y.0),
            format::real(self.y.1),
            self.ny,
            format::join_reals(&self.fixed, ";"),
        )
    }

    fn parse_header(line: &str) -> Result<Self> {
        let body = line
            .strip_prefix("# lattice ")
            .ok_or_else(|| Error::parse(1, "expected '# lattice' header"))?;
        let mut fields = std::collections::HashMap::new();
        for tok in body.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::parse(1, format!("malformed field {tok:?}")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::parse(1, format!("missing field {k}")))
        };
        let count = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::parse(1, format!("{k} is not a count")))
        };
        let fixed = get("fixed")?;
        let fixed = if fixed.is_empty() {
            Vec::new()
        } else {
            format::parse_reals(&fixed.split(';').collect::<Vec<_>>(), 1)?
        };
        Ok(LatticeSpec {
            x: (format::parse_real(get("x0")?, 1)?, format::parse_real(get("x1")?, 1)?),
            y: (format::parse_real(get("y0")?, 1)?, format::parse_real(get("y1")?, 1)?),
            nx: count("nx")?,
            ny: count("ny")?,
            fixed,
        })
    }
}

/// Values over a lattice, `values[[iy, ix]]`, plus the lattice points that
/// hold demonstrated states.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapGrid {
    pub lattice: LatticeSpec,
    pub values: Array2<f64>,
    pub demo_cells: Vec<(usize, usize)>,
}

/// Evaluates `value` over `lattice`.
pub fn value_heatmap(
    env: &EnvSpec,
    value: &NetworkParams,
    lattice: &LatticeSpec,
    ds: &DemoDataset,
) -> Result<HeatmapGrid> {
    lattice.validate(env)?;
    let (nx, ny) = (lattice.nx, lattice.ny);
    let mut inputs = Vec::with_capacity(nx * ny * env.value_dim());
    for iy in 0..ny {
        for ix in 0..nx {
            let (x, y) = lattice.coord(ix, iy);
            inputs.extend([x, y]);
            inputs.extend_from_slice(&lattice.fixed);
        }
    }
    let inputs = Array2::from_shape_vec((nx * ny, env.value_dim()), inputs)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let values = value
        .forward_batch(&inputs)?
        .into_shape_with_order((ny, nx))
        .map_err(|e| Error::Shape(e.to_string()))?;
    let mut demo_cells: Vec<(usize, usize)> = ds
        .states()
        .map(|s| {
            let v = env.value_input(s);
            lattice.nearest_index(v[0], v[1])
        })
        .collect();
    demo_cells.sort_unstable();
    demo_cells.dedup();
    Ok(HeatmapGrid {
        lattice: lattice.clone(),
        values,
        demo_cells,
    })
}

impl HeatmapGrid {
    /// Lattice header, then one comma-separated row of values per `iy`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", self.lattice.header())?;
        for row in self.values.rows() {
            writeln!(w, "{}", format::join_reals(row.iter(), ","))?;
        }
        Ok(())
    }

    /// Reads a grid written by [`write_csv`](Self::write_csv); demo cells
    /// live in a separate file and come back empty.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let lattice = LatticeSpec::parse_header(lines.next().unwrap_or(""))?;
        let mut values = Vec::with_capacity(lattice.nx * lattice.ny);
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            let row = format::parse_reals(&line.split(',').collect::<Vec<_>>(), i + 2)?;
            if row.len() != lattice.nx {
                return Err(Error::parse(i + 2, format!("expected {} values", lattice.nx)));
            }
            values.extend(row);
            rows += 1;
        }
        if rows != lattice.ny {
            return Err(Error::Schema(format!("expected {} rows, found {rows}", lattice.ny)));
        }
        let values = Array2::from_shape_vec((lattice.ny, lattice.nx), values)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(HeatmapGrid {
            lattice,
            values,
            demo_cells: Vec::new(),
        })
    }

    /// Gray levels: minimum maps to 0, maximum to 255, constant grids to 0.
    pub fn gray_levels(&self) -> Array2<u8> {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.values.mapv(|v| {
            if hi > lo {
                ((v - lo) / (hi - lo) * 255.0).round() as u8
            } else {
                0
            }
        })
    }

    /// Plain (ASCII) portable graymap, largest `y` on the top row.
    pub fn write_pgm(&self, mut w: impl Write) -> Result<()> {
        let g = self.gray_levels();
        writeln!(w, "P2\n{} {}\n255", self.lattice.nx, self.lattice.ny)?;
        for row in g.rows().into_iter().rev() {
            let row: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    /// Rows `ix,iy` of lattice points holding demonstrated states.
    pub fn write_demo_cells(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "ix,iy")?;
        for (ix, iy) in &self.demo_cells {
            writeln!(w, "{ix},{iy}")?;
        }
        Ok(())
    }

    /// Writes `<stem>.csv`, `<stem>.pgm` and `<stem>_demo_cells.csv` into `dir`.
    pub fn export(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.write_csv(fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        self.write_pgm(fs::File::create(dir.join(format!("{stem}.pgm")))?)?;
        self.write_demo_cells(fs::File::create(dir.join(format!("{stem}_demo_cells.csv")))?)?;
        Ok(())
    }
}

/// Parses a headed CSV of reals into `(line number, row)` pairs.
fn parse_table(text: &str, header: &str) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => return Err(Error::parse(1, format!("expected header {header:?}"))),
    }
    let width = header.split(',').count();
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let row = format::parse_reals(&l.split(',').collect::<Vec<_>>(), i + 1)?;
            if row.len() != width {
                return Err(Error::parse(i + 1, format!("expected {width} columns")));
            }
            Ok((i + 1, row))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::collect_demos;
    use crate::tensor::{Activation, Layer};
    use ndarray::Array1;

    fn constant_value(env: &EnvSpec, c: f64) -> NetworkParams {
        NetworkParams::from_layers(vec![Layer {
            weights: Array2::zeros((1, env.value_dim())),
            bias: Array1::from_elem(1, c),
            norm: None,
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn expert_succeeds_everywhere() {
        for env in [EnvSpec::grid(), EnvSpec::reach()] {
            let r = success_rate(&env, &Expert, 20, 3, 0).unwrap();
            assert_eq!(r.mean, 1.0, "{}", env.name());
            assert_eq!(r.stddev, 0.0);
        }
    }

    #[test]
    fn zero_policy_never_reaches() {
        let r = success_rate(&EnvSpec::reach(), &ZeroPolicy, 50, 2, 0).unwrap();
        assert_eq!(r.mean, 0.0);
    }

    #[test]
    fn success_rate_reproducible() {
        let env = EnvSpec::push();
        let a = success_rate_perturbed(&env, &Expert, 5, 2, 9, 0.05).unwrap();
        let b = success_rate_perturbed(&env, &Expert, 5, 2, 9, 0.05).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn distance_to_demo_on_grid_lattice() {
        let env = EnvSpec::grid();
        let ds = collect_demos(&env, 3, 0).unwrap();
        assert_eq!(distance_to_demo(&env, &State(vec![4.0, 2.0]), &ds).unwrap(), 0.0);
        let d = distance_to_demo(&env, &State(vec![4.0, 3.0]), &ds).unwrap();
        assert!((d - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn expert_profile_stays_on_demos() {
        let env = EnvSpec::grid();
        let ds = collect_demos(&env, 5, 0).unwrap();
        let p = rollout_distance_profile(&env, &Expert, &ds, 10, 0.0, 1).unwrap();
        assert_eq!(p.steps.len(), env.horizon() + 1);
        assert!(p.steps.iter().all(|s| s.max == 0.0));
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 2.0);
        assert_eq!(quantile(&xs, 0.95), 3.8);
        assert_eq!(quantile(&xs, 1.0), 4.0);
    }

    #[test]
    fn constant_value_fails_audit() {
        let env = EnvSpec::grid();
        let ds = collect_demos(&env, 5, 0).unwrap();
        let r = conservative_audit(&env, &constant_value(&env, -3.0), &ds, 200, 0.25, 0.25, 0).unwrap();
        assert_eq!(r.fraction, 0.0);
        assert_eq!(r.mean_margin, 0.0);
    }

    #[test]
    fn heatmap_of_constant_is_black() {
        let env = EnvSpec::grid();
        let ds = collect_demos(&env, 2, 0).unwrap();
        let lattice = LatticeSpec::grid_cells(&env).unwrap();
        let h = value_heatmap(&env, &constant_value(&env, 2.5), &lattice, &ds).unwrap();
        assert!(h.values.iter().all(|v| *v == 2.5));
        assert!(h.gray_levels().iter().all(|g| *g == 0));
        assert_eq!(h.demo_cells, (0..9).map(|x| (x, 2)).collect::<Vec<_>>());
    }

    #[test]
    fn heatmap_rejects_degenerate_lattice() {
        let env = EnvSpec::reach();
        let ds = collect_demos(&env, 2, 0).unwrap();
        let v = constant_value(&env, 0.0);
        let flat = LatticeSpec {
            ny: 1,
            ..LatticeSpec::slice(5, vec![0.95, 0.5])
        };
        assert!(matches!(value_heatmap(&env, &v, &flat, &ds), Err(Error::Invalid(_))));
        let wrong = LatticeSpec::slice(5, vec![0.95]);
        assert!(matches!(value_heatmap(&env, &v, &wrong, &ds), Err(Error::Invalid(_))));
    }

    #[test]
    fn tables_round_trip() {
        let report = EvalReport::from_rates(vec![0.25, 1.0 / 3.0, 0.1], 200);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(EvalReport::parse_csv(std::str::from_utf8(&buf).unwrap(), 200).unwrap(), report);

        let audit = AuditReport {
            fraction: 0.93,
            mean_margin: 17.123456789,
            n_probes: 10,
        };
        let mut buf = Vec::new();
        audit.write_csv(&mut buf).unwrap();
        assert_eq!(AuditReport::parse_csv(std::str::from_utf8(&buf).unwrap(), 10).unwrap(), audit);
    }

    #[test]
    fn heatmap_csv_round_trips() {
        let env = EnvSpec::reach();
        let ds = collect_demos(&env, 2, 0).unwrap();
        let v = NetworkParams::init(&[4, 8, 1], &[true, false], 3).unwrap();
        let h = value_heatmap(&env, &v, &LatticeSpec::slice(7, vec![0.95, 0.4]), &ds).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let back = HeatmapGrid::parse_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.lattice, h.lattice);
        assert_eq!(back.values, h.values);
    }
}
