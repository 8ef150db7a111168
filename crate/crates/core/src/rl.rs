//! Fine-tuning with environment interaction.
//!
//! Starting from a [`VinsState`], alternate between rolling out the induced
//! policy anchored at the zero action and fitting value (TD only unless
//! configured otherwise) and model on a replay buffer that starts with the
//! demonstrations.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use crate::demos::{rollout, DemoDataset, DemoIndex, Transition};
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::eval::{success_rate, Induced, Policy};
use crate::format;
use crate::vins::{
    iteration_rng, train_step, Anchor, LossLog, NegativeSampler, VinsConfig, VinsState,
};

/// Demonstrations plus a bounded queue of collected transitions.
///
/// Demonstrations are never evicted; once full, the oldest collected
/// transition makes room for the newest.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    demos: Vec<Transition>,
    online: VecDeque<Transition>,
    capacity: usize,
    env_steps: u64,
}

impl ReplayBuffer {
    pub fn new(demos: &DemoDataset, capacity: usize) -> Result<Self> {
        let demos = demos.transitions().to_vec();
        if capacity <= demos.len() {
            return Err(Error::Config(format!(
                "rl.capacity {capacity} leaves no room beside {} demonstration transitions",
                demos.len()
            )));
        }
        Ok(ReplayBuffer {
            demos,
            online: VecDeque::new(),
            capacity,
            env_steps: 0,
        })
    }

    pub fn push(&mut self, tr: Transition) {
        if self.len() == self.capacity {
            self.online.pop_front();
        }
        self.online.push_back(tr);
    }

    pub fn len(&self) -> usize {
        self.demos.len() + self.online.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn demo_len(&self) -> usize {
        self.demos.len()
    }

    /// Collected (non-demonstration) transitions, oldest first.
    pub fn online(&self) -> impl Iterator<Item = &Transition> {
        self.online.iter()
    }

    /// Environment steps taken to fill the buffer.
    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn get(&self, i: usize) -> &Transition {
        if i < self.demos.len() {
            &self.demos[i]
        } else {
            &self.online[i - self.demos.len()]
        }
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<&Transition> {
        (0..n).map(|_| self.get(rng.random_range(0..self.len()))).collect()
    }
}

/// Rolls whole episodes of the zero-anchored induced policy until at least
/// `n1` transitions were added. Failed episodes are kept.
pub fn collect_rollouts(
    env: &EnvSpec,
    vins: &VinsState,
    cfg: &VinsConfig,
    buffer: &mut ReplayBuffer,
    n1: usize,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    if n1 == 0 {
        return Err(Error::Config("rl.n1 must be >= 1".into()));
    }
    let policy = Induced {
        vins,
        anchor: Anchor::Zero,
        cfg,
    };
    let mut added = 0;
    let mut episode = 0;
    while added < n1 {
        let start = env.reset(rng.next_u64());
        let traj = rollout(env, start, episode, |s| policy.act(env, s, rng))?;
        added += traj.len();
        buffer.env_steps += traj.len() as u64;
        for tr in traj.transitions {
            buffer.push(tr);
        }
        episode += 1;
    }
    Ok(added)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RlConfig {
    /// Transitions collected per stage (whole episodes, so possibly more).
    pub n1: usize,
    /// Value/model updates per stage.
    pub n_inner: usize,
    pub capacity: usize,
    /// Upper bound on stages.
    pub max_stages: usize,
    /// Stop once this many environment steps were taken.
    pub budget: u64,
    pub eval_trials: usize,
    pub eval_seeds: usize,
    /// Evaluate every this many stages (and always after the last).
    pub eval_every: usize,
    /// Stop as soon as an evaluation reaches this success rate.
    pub stop_at: Option<f64>,
    /// Weight of the negative-sampling loss during fine-tuning; 0 fits on
    /// TD alone.
    pub mu: f64,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            n1: 200,
            n_inner: 500,
            capacity: 100_000,
            max_stages: 1000,
            budget: 20_000,
            eval_trials: 200,
            eval_seeds: 1,
            eval_every: 1,
            stop_at: None,
            mu: 0.0,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::Config("rl.mu must be finite and >= 0".into()));
        }
        if self.n1 == 0 || self.eval_trials == 0 || self.eval_seeds == 0 || self.eval_every == 0 {
            return Err(Error::Config(
                "rl.n1, rl.eval_trials, rl.eval_seeds and rl.eval_every must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub env_steps: u64,
    pub success_rate: f64,
    pub stddev: f64,
}

/// Success rate against environment steps spent on training.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    /// Environment steps at the first evaluation with success `>= threshold`.
    pub fn steps_to_reach(&self, threshold: f64) -> Option<u64> {
        self.points
            .iter()
            .find(|p| p.success_rate >= threshold)
            .map(|p| p.env_steps)
    }

    /// Rows `env_steps,success_rate,stddev`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "env_steps,success_rate,stddev")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{}",
                p.env_steps,
                format::real(p.success_rate),
                format::real(p.stddev)
            )?;
        }
        Ok(())
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "env_steps,success_rate,stddev" => {}
            _ => return Err(Error::parse(1, "expected header env_steps,success_rate,stddev")),
        }
        let points = lines
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 3 {
                    return Err(Error::parse(i + 1, "expected 3 columns"));
                }
                Ok(CurvePoint {
                    env_steps: f[0]
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(i + 1, "env_steps is not a count"))?,
                    success_rate: format::parse_real(f[1], i + 1)?,
                    stddev: format::parse_real(f[2], i + 1)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(LearningCurve { points })
    }
}

/// Success of the zero-anchored induced policy on fixed evaluation seeds.
fn evaluate(env: &EnvSpec, state: &VinsState, vcfg: &VinsConfig, cfg: &RlConfig, seed: u64, steps: u64) -> Result<CurvePoint> {
    let policy = Induced {
        vins: state,
        anchor: Anchor::Zero,
        cfg: vcfg,
    };
    let report = success_rate(env, &policy, cfg.eval_trials, cfg.eval_seeds, seed)?;
    Ok(CurvePoint {
        env_steps: steps,
        success_rate: report.mean,
        stddev: report.stddev,
    })
}

/// Seed of the evaluation episodes; shared by every run so that curves of
/// different initializations are evaluated on the same starts.
pub const EVAL_SEED: u64 = 0x5eed_e7a1;

/// Runs stages of collection and fitted value iteration from `init`.
///
/// The curve starts with an evaluation of `init` at zero steps. Stages run
/// until `max_stages`, the step budget, or `stop_at` is reached.
pub fn train_vins_rl(
    env: &EnvSpec,
    init: VinsState,
    demos: &DemoDataset,
    vcfg: &VinsConfig,
    cfg: &RlConfig,
    seed: u64,
) -> Result<(VinsState, LearningCurve)> {
    vcfg.validate()?;
    cfg.validate()?;
    let mut state = init;
    let mut buffer = ReplayBuffer::new(demos, cfg.capacity)?;
    let mut curve = LearningCurve::default();
    if cfg.max_stages == 0 {
        return Ok((state, curve));
    }
    let reached = |p: &CurvePoint| cfg.stop_at.is_some_and(|t| p.success_rate >= t);
    let first = evaluate(env, &state, vcfg, cfg, EVAL_SEED, 0)?;
    let done = reached(&first);
    curve.points.push(first);
    if done {
        return Ok((state, curve));
    }
    // Negative sampling is off unless a weight is configured.
    let sampler = (cfg.mu > 0.0).then(|| {
        NegativeSampler::new(env, demos.sigma(), vcfg.rho, vcfg.sigma_floor, Some(DemoIndex::new(env, demos)))
    });
    let step_cfg = VinsConfig { mu: cfg.mu, ..vcfg.clone() };
    let mut log = LossLog::default();
    for stage in 0..cfg.max_stages {
        let mut rng = iteration_rng(seed ^ 0x726c, stage as u64);
        collect_rollouts(env, &state, vcfg, &mut buffer, cfg.n1, &mut rng)?;
        for _ in 0..cfg.n_inner {
            let mut rng = iteration_rng(seed, state.iteration);
            let batch = buffer.sample(vcfg.batch_size, &mut rng);
            train_step(env, &step_cfg, &mut state, &batch, sampler.as_ref(), &mut rng, &mut log)
                .map_err(|e| Error::numeric(format!("stage {stage}: {e}")))?;
        }
        let last = stage + 1 == cfg.max_stages || buffer.env_steps() >= cfg.budget;
        if (stage + 1) % cfg.eval_every == 0 || last {
            let point = evaluate(env, &state, vcfg, cfg, EVAL_SEED, buffer.env_steps())?;
            let done = reached(&point);
            curve.points.push(point);
            if done {
                break;
            }
        }
        if last {
            break;
        }
    }
    Ok((state, curve))
}
