//! Behavioral cloning: regress demonstrated actions on goal-conditioned
//! states with a mean-squared error.
//!
//! The network predicts actions in units of the action bound, so a raw
//! output of `1.0` means "full speed" in every environment.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::demos::{DemoDataset, Transition};
use crate::env::{nearest_grid_move, EnvSpec, State, GRID_MOVES};
use crate::error::{Error, Result};
use crate::tensor::{AdamConfig, AdamState, Gradient, NetworkParams};

#[derive(Clone, Debug, PartialEq)]
pub struct BcConfig {
    pub hidden: Vec<usize>,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            hidden: vec![64, 64, 64],
            iterations: 5000,
            batch_size: 128,
            learning_rate: 3e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BcPolicy {
    pub params: NetworkParams,
    /// Multiplies the network output to give an action.
    pub action_scale: f64,
}

/// Inputs and normalized targets for one minibatch.
pub struct BcBatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
}

impl BcBatch {
    pub fn from_transitions(env: &EnvSpec, batch: &[&Transition]) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::InvalidBatch("empty behavioral-cloning batch".into()));
        }
        let scale = env.action_bound();
        let d = env.value_dim();
        let k = env.action_dim();
        let mut states = Array2::zeros((batch.len(), d));
        let mut actions = Array2::zeros((batch.len(), k));
        for (i, tr) in batch.iter().enumerate() {
            for (j, v) in env.value_input(&tr.state).into_iter().enumerate() {
                states[[i, j]] = v;
            }
            for (j, a) in tr.action.iter().enumerate() {
                actions[[i, j]] = a / scale;
            }
        }
        Ok(BcBatch { states, actions })
    }
}

impl BcPolicy {
    pub fn new(env: &EnvSpec, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![env.value_dim()];
        sizes.extend_from_slice(hidden);
        sizes.push(env.action_dim());
        let params = NetworkParams::init(&sizes, &vec![false; sizes.len() - 1], seed)?;
        Ok(BcPolicy {
            params,
            action_scale: env.action_bound(),
        })
    }

    /// Mean over the batch of the squared prediction error, with its gradient.
    pub fn loss(&self, batch: &BcBatch) -> Result<(f64, Gradient)> {
        let n = batch.states.nrows();
        if n == 0 {
            return Err(Error::InvalidBatch("empty behavioral-cloning batch".into()));
        }
        let tape = self.params.tape(&batch.states)?;
        let diff = tape.output() - &batch.actions;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n as f64;
        let upstream = diff * (2.0 / n as f64);
        Ok((loss, tape.backward(&upstream)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.params.save(path)
    }

    /// Loads parameters saved by [`save`](Self::save); the action scale comes
    /// from `env`.
    pub fn load(path: impl AsRef<Path>, env: &EnvSpec) -> Result<Self> {
        let params = NetworkParams::load(path)?;
        if params.input_dim() != env.value_dim() || params.output_dim() != env.action_dim() {
            return Err(Error::Schema(format!(
                "policy network is {}->{}, environment needs {}->{}",
                params.input_dim(),
                params.output_dim(),
                env.value_dim(),
                env.action_dim()
            )));
        }
        Ok(BcPolicy {
            params,
            action_scale: env.action_bound(),
        })
    }

    /// Action for `state`: clamped to the bound, and on the grid projected to
    /// the nearest unit move.
    pub fn act(&self, env: &EnvSpec, state: &State) -> Result<Vec<f64>> {
        let raw = self.params.forward(&env.value_input(state))?;
        let bound = env.action_bound();
        let action: Vec<f64> = raw
            .iter()
            .map(|v| (v * self.action_scale).clamp(-bound, bound))
            .collect();
        if env.is_discrete() {
            return Ok(match nearest_grid_move(&action) {
                Some(m) => GRID_MOVES[m].to_vec(),
                None => vec![0.0; action.len()],
            });
        }
        Ok(action)
    }
}

/// Free-function form of [`BcPolicy::loss`].
pub fn bc_loss(policy: &BcPolicy, batch: &BcBatch) -> Result<f64> {
    policy.loss(batch).map(|(l, _)| l)
}

#[derive(Clone, Debug)]
pub struct BcTraining {
    pub policy: BcPolicy,
    pub losses: Vec<f64>,
}

/// Minibatch Adam on the cloning loss. Deterministic in `seed`.
pub fn train_bc(env: &EnvSpec, ds: &DemoDataset, cfg: &BcConfig, seed: u64) -> Result<BcTraining> {
    let transitions = ds.transitions();
    if transitions.is_empty() {
        return Err(Error::InvalidBatch("empty dataset".into()));
    }
    let mut policy = BcPolicy::new(env, &cfg.hidden, seed)?;
    let mut opt = AdamState::new(&policy.params, AdamConfig::with_learning_rate(cfg.learning_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbc);
    let mut losses = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let picks: Vec<&Transition> = (0..cfg.batch_size)
            .map(|_| &transitions[rng.random_range(0..transitions.len())])
            .collect();
        let batch = BcBatch::from_transitions(env, &picks)?;
        let (loss, grad) = policy.loss(&batch)?;
        if !loss.is_finite() {
            return Err(Error::numeric(format!("behavioral cloning at iteration {it}")));
        }
        opt.update(&mut policy.params, &grad)
            .map_err(|_| Error::numeric(format!("behavioral cloning at iteration {it}")))?;
        losses.push(loss);
    }
    Ok(BcTraining { policy, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::collect_demos;
    use ndarray::array;

    fn linear_policy(weights: Array2<f64>, bias: ndarray::Array1<f64>, scale: f64) -> BcPolicy {
        let params = NetworkParams::from_layers(vec![crate::tensor::Layer {
            weights,
            bias,
            norm: None,
            activation: crate::tensor::Activation::Identity,
        }])
        .unwrap();
        BcPolicy {
            params,
            action_scale: scale,
        }
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let p = linear_policy(array![[1.0, 0.0], [0.0, 1.0]], array![0.0, 0.0], 1.0);
        let batch = BcBatch {
            states: array![[0.3, -0.2], [1.0, 0.5]],
            actions: array![[0.3, -0.2], [1.0, 0.5]],
        };
        assert_eq!(bc_loss(&p, &batch).unwrap(), 0.0);
    }

    #[test]
    fn single_sample_loss() {
        let p = linear_policy(array![[0.0, 0.0], [0.0, 0.0]], array![0.3, 0.4], 1.0);
        let batch = BcBatch {
            states: array![[0.1, 0.2]],
            actions: array![[0.0, 0.0]],
        };
        assert!((bc_loss(&p, &batch).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn empty_batch_rejected() {
        let env = EnvSpec::grid();
        assert!(matches!(
            BcBatch::from_transitions(&env, &[]),
            Err(Error::InvalidBatch(_))
        ));
    }

    #[test]
    fn act_clamps_and_projects() {
        let zero = linear_policy(Array2::zeros((2, 4)), array![0.0, 0.0], 0.08);
        let reach = EnvSpec::reach();
        let s = State(vec![0.1, 0.2, 0.9, 0.5]);
        assert_eq!(zero.act(&reach, &s).unwrap(), vec![0.0, 0.0]);

        let big = linear_policy(Array2::zeros((2, 4)), array![0.5, 0.0], 1.0);
        assert_eq!(big.act(&reach, &s).unwrap(), vec![0.08, 0.0]);

        let grid = EnvSpec::grid();
        let g = linear_policy(Array2::zeros((2, 2)), array![0.9, 0.1], 1.0);
        assert_eq!(g.act(&grid, &State(vec![3.0, 2.0])).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn zero_iterations_returns_initialization() {
        let env = EnvSpec::grid();
        let ds = collect_demos(&env, 3, 0).unwrap();
        let cfg = BcConfig {
            iterations: 0,
            ..Default::default()
        };
        let out = train_bc(&env, &ds, &cfg, 4).unwrap();
        assert_eq!(out.policy, BcPolicy::new(&env, &cfg.hidden, 4).unwrap());
        assert!(out.losses.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let env = EnvSpec::reach();
        let ds = collect_demos(&env, 5, 0).unwrap();
        let cfg = BcConfig {
            iterations: 50,
            batch_size: 16,
            ..Default::default()
        };
        let a = train_bc(&env, &ds, &cfg, 9).unwrap();
        let b = train_bc(&env, &ds, &cfg, 9).unwrap();
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.losses, b.losses);
    }
}
