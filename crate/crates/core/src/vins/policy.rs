//! The induced policy: pick the candidate action whose predicted next state
//! has the highest value.

use ndarray::Array2;
use rand::Rng;

use super::losses::model_features;
use super::{ModelKind, VinsConfig, VinsState};
use crate::bc::BcPolicy;
use crate::env::{EnvSpec, State};
use crate::error::{Error, Result};
use crate::tensor::NetworkParams;

/// Center of the shooting box.
#[derive(Clone, Copy, Debug)]
pub enum Anchor<'a> {
    /// The cloned policy's action.
    Bc(&'a BcPolicy),
    /// The zero action.
    Zero,
}

/// Dynamics used to look one step ahead.
#[derive(Clone, Copy, Debug)]
pub enum Dynamics<'a> {
    Learned(&'a NetworkParams),
    Exact,
}

impl<'a> Dynamics<'a> {
    pub fn from_kind(kind: ModelKind, vins: &'a VinsState) -> Self {
        match kind {
            ModelKind::Learned => Dynamics::Learned(&vins.model),
            ModelKind::Exact => Dynamics::Exact,
        }
    }
}

/// Value of the predicted successor of `state` under each candidate action.
/// Predicted goal states are worth 0, the value of a terminal state.
pub fn candidate_values(
    env: &EnvSpec,
    state: &State,
    value: &NetworkParams,
    dynamics: Dynamics<'_>,
    candidates: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::NoAction("no candidate actions".into()));
    }
    let d = env.value_dim();
    let successors: Vec<Vec<f64>> = match dynamics {
        Dynamics::Exact => candidates
            .iter()
            .map(|a| env.transition(state, a).map(|r| env.value_input(&r.next_state)))
            .collect::<Result<_>>()?,
        Dynamics::Learned(model) => {
            let m = env.model_dim();
            let here = env.model_input(state);
            let scale = env.action_bound();
            let feats: Vec<f64> = candidates
                .iter()
                .flat_map(|a| model_features(&here, a, scale))
                .collect();
            let feats = Array2::from_shape_vec((candidates.len(), m + env.action_dim()), feats)
                .map_err(|e| Error::Shape(e.to_string()))?;
            let delta = model.forward_batch(&feats)?;
            delta
                .rows()
                .into_iter()
                .map(|row| {
                    let next: Vec<f64> = here.iter().zip(row).map(|(h, dv)| h + dv).collect();
                    env.complete_value_input(&next, state)
                })
                .collect()
        }
    };
    let inputs = Array2::from_shape_vec((successors.len(), d), successors.concat())
        .map_err(|e| Error::Shape(e.to_string()))?;
    let values = value.forward_batch(&inputs)?;
    Ok(successors
        .iter()
        .zip(values.column(0))
        .map(|(s, v)| if env.is_goal_value(s) { 0.0 } else { *v })
        .collect())
}

/// Self-correcting action for `state`.
///
/// Discrete environments evaluate every available action. Continuous ones
/// draw `k_shoot` candidates `a + alpha * xi`, `xi ~ U[-1, 1]^k`, around the
/// anchor action `a` and clamp them to the action bounds. The best candidate
/// wins; ties go to the lowest index.
pub fn induced_action(
    env: &EnvSpec,
    state: &State,
    vins: &VinsState,
    anchor: Anchor<'_>,
    cfg: &VinsConfig,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let mut candidates = match env.enumerate_actions() {
        Some(actions) => actions,
        None => {
            let base = match anchor {
                Anchor::Bc(policy) => policy.act(env, state)?,
                Anchor::Zero => vec![0.0; env.action_dim()],
            };
            let bound = env.action_bound();
            (0..cfg.k_shoot)
                .map(|_| {
                    base.iter()
                        .map(|a| (a + cfg.alpha * rng.random_range(-1.0..=1.0)).clamp(-bound, bound))
                        .collect()
                })
                .collect::<Vec<Vec<f64>>>()
        }
    };
    let dynamics = Dynamics::from_kind(cfg.model_kind, vins);
    let values = candidate_values(env, state, &vins.value, dynamics, &candidates)?;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    Ok(candidates.swap_remove(best))
}
