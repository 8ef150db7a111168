//! The three training losses and the negative-sample generator.
//!
//! Each loss is a mean over the batch and returns its gradient with respect
//! to the trained network only; target-network terms are constants.

use std::cell::Cell;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::demos::{DemoIndex, Transition};
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::tensor::{Gradient, NetworkParams};

thread_local! {
    static NS_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of [`ns_loss`] evaluations on the current thread.
pub fn ns_loss_calls() -> u64 {
    NS_CALLS.with(Cell::get)
}

fn rows(data: Vec<Vec<f64>>, width: usize) -> Result<Array2<f64>> {
    let n = data.len();
    Array2::from_shape_vec((n, width), data.concat()).map_err(|e| Error::Shape(e.to_string()))
}

fn check_nonempty(n: usize, what: &str) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidBatch(format!("empty {what} batch")));
    }
    Ok(())
}

/// Value-space transitions for the temporal-difference loss.
#[derive(Clone, Debug)]
pub struct TdBatch {
    pub states: Array2<f64>,
    pub next_states: Array2<f64>,
    pub rewards: Array1<f64>,
    pub terminal: Vec<bool>,
}

impl TdBatch {
    pub fn from_transitions(env: &EnvSpec, batch: &[Transition]) -> Result<Self> {
        check_nonempty(batch.len(), "temporal-difference")?;
        let d = env.value_dim();
        Ok(TdBatch {
            states: rows(batch.iter().map(|t| env.value_input(&t.state)).collect(), d)?,
            next_states: rows(batch.iter().map(|t| env.value_input(&t.next_state)).collect(), d)?,
            rewards: batch.iter().map(|t| t.reward).collect(),
            terminal: batch.iter().map(|t| t.reached_goal).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `mean (r + discount * V_target(s') * [not terminal] - V(s))^2`.
pub fn td_loss(
    batch: &TdBatch,
    value: &NetworkParams,
    target: &NetworkParams,
    discount: f64,
) -> Result<(f64, Gradient)> {
    let n = batch.len();
    check_nonempty(n, "temporal-difference")?;
    let bootstrap = target.forward_batch(&batch.next_states)?;
    let tape = value.tape(&batch.states)?;
    let mut diff = tape.output().clone();
    for (i, mut row) in diff.axis_iter_mut(Axis(0)).enumerate() {
        let next = if batch.terminal[i] { 0.0 } else { bootstrap[[i, 0]] };
        row[0] -= batch.rewards[i] + discount * next;
    }
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n as f64;
    diff *= 2.0 / n as f64;
    Ok((loss, tape.backward(&diff)?))
}

/// Anchors and their perturbed copies for the negative-sampling loss.
#[derive(Clone, Debug)]
pub struct NsBatch {
    pub anchors: Array2<f64>,
    pub perturbed: Array2<f64>,
    /// Euclidean distance between anchor and perturbed copy over the
    /// perturbed coordinates.
    pub distances: Array1<f64>,
}

impl NsBatch {
    pub fn new(anchors: Vec<Vec<f64>>, perturbed: Vec<Vec<f64>>, mask: &[bool]) -> Result<Self> {
        check_nonempty(anchors.len(), "negative-sampling")?;
        if anchors.len() != perturbed.len() {
            return Err(Error::Shape("anchor and perturbed counts differ".into()));
        }
        let distances = anchors
            .iter()
            .zip(&perturbed)
            .map(|(a, p)| masked_distance(a, p, mask))
            .collect();
        let d = anchors[0].len();
        Ok(NsBatch {
            anchors: rows(anchors, d)?,
            perturbed: rows(perturbed, d)?,
            distances,
        })
    }

    pub fn len(&self) -> usize {
        self.anchors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn masked_distance(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|((x, y), _)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `mean (V_target(s) - lambda * |s - s~| - V(s~))^2`; the gradient flows
/// through `V(s~)` only.
pub fn ns_loss(
    batch: &NsBatch,
    value: &NetworkParams,
    target: &NetworkParams,
    lambda: f64,
) -> Result<(f64, Gradient)> {
    NS_CALLS.with(|c| c.set(c.get() + 1));
    let n = batch.len();
    check_nonempty(n, "negative-sampling")?;
    let anchor_values = target.forward_batch(&batch.anchors)?;
    let tape = value.tape(&batch.perturbed)?;
    let mut diff = tape.output().clone();
    for (i, mut row) in diff.axis_iter_mut(Axis(0)).enumerate() {
        row[0] -= anchor_values[[i, 0]] - lambda * batch.distances[i];
    }
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n as f64;
    diff *= 2.0 / n as f64;
    Ok((loss, tape.backward(&diff)?))
}

/// Gaussian perturbation `s + z`, `z_i ~ N(0, rho * sigma_i^2)` on masked
/// coordinates, projected back onto valid states.
pub fn perturb_state(
    env: &EnvSpec,
    state: &[f64],
    sigma: &[f64],
    rho: f64,
    mask: &[bool],
    rng: &mut impl Rng,
) -> Vec<f64> {
    let scale = rho.sqrt();
    let mut out: Vec<f64> = state
        .iter()
        .zip(sigma)
        .zip(mask)
        .map(|((s, sd), m)| {
            if *m {
                let z: f64 = rng.sample(StandardNormal);
                s + scale * sd * z
            } else {
                *s
            }
        })
        .collect();
    env.project_value(&mut out);
    out
}

/// Draws negative samples for a set of anchors.
///
/// On discrete state spaces a perturbation that lands back on a demonstrated
/// state is redrawn (up to a fixed number of attempts), since such a sample
/// is not off the demonstrations.
pub struct NegativeSampler<'a> {
    env: &'a EnvSpec,
    sigma: Vec<f64>,
    rho: f64,
    mask: Vec<bool>,
    demo_index: Option<DemoIndex>,
}

const MAX_REDRAWS: usize = 32;

impl<'a> NegativeSampler<'a> {
    /// `sigma_floor` lifts zero-spread coordinates so that a perturbation can
    /// leave a demonstration set that is flat along them.
    pub fn new(
        env: &'a EnvSpec,
        sigma: &[f64],
        rho: f64,
        sigma_floor: f64,
        demo_index: Option<DemoIndex>,
    ) -> Self {
        let mask = env.perturb_mask();
        let sigma = sigma
            .iter()
            .zip(&mask)
            .map(|(s, m)| if *m { s.max(sigma_floor) } else { 0.0 })
            .collect();
        NegativeSampler {
            env,
            sigma,
            rho,
            mask,
            demo_index: if env.is_discrete() { demo_index } else { None },
        }
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sample(&self, anchor: &[f64], rng: &mut impl Rng) -> Vec<f64> {
        let mut candidate = perturb_state(self.env, anchor, &self.sigma, self.rho, &self.mask, rng);
        if let Some(index) = &self.demo_index {
            let pos_mask = self.env.position_mask();
            for _ in 0..MAX_REDRAWS {
                let pos: Vec<f64> = candidate
                    .iter()
                    .zip(&pos_mask)
                    .filter(|(_, m)| **m)
                    .map(|(v, _)| *v)
                    .collect();
                if index.nearest(&pos).1 > 1e-9 {
                    break;
                }
                candidate = perturb_state(self.env, anchor, &self.sigma, self.rho, &self.mask, rng);
            }
        }
        candidate
    }

    pub fn batch(&self, anchors: Vec<Vec<f64>>, rng: &mut impl Rng) -> Result<NsBatch> {
        let perturbed = anchors.iter().map(|a| self.sample(a, rng)).collect();
        NsBatch::new(anchors, perturbed, &self.mask)
    }
}

/// Model-space inputs and targets.
///
/// The dynamics network reads the model-space state concatenated with the
/// action divided by the action bound and predicts the change of state.
#[derive(Clone, Debug)]
pub struct ModelBatch {
    pub inputs: Array2<f64>,
    pub current: Array2<f64>,
    pub next: Array2<f64>,
}

pub fn model_features(model_state: &[f64], action: &[f64], action_scale: f64) -> Vec<f64> {
    model_state
        .iter()
        .copied()
        .chain(action.iter().map(|a| a / action_scale))
        .collect()
}

impl ModelBatch {
    pub fn from_transitions(env: &EnvSpec, batch: &[Transition]) -> Result<Self> {
        check_nonempty(batch.len(), "model")?;
        let m = env.model_dim();
        let k = env.action_dim();
        let scale = env.action_bound();
        let current: Vec<Vec<f64>> = batch.iter().map(|t| env.model_input(&t.state)).collect();
        let inputs = current
            .iter()
            .zip(batch)
            .map(|(c, t)| model_features(c, &t.action, scale))
            .collect();
        Ok(ModelBatch {
            inputs: rows(inputs, m + k)?,
            current: rows(current, m)?,
            next: rows(batch.iter().map(|t| env.model_input(&t.next_state)).collect(), m)?,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Predicted next model-space states for a batch of features.
pub fn predict_next(model: &NetworkParams, inputs: &Array2<f64>, current: &Array2<f64>) -> Result<Array2<f64>> {
    Ok(model.forward_batch(inputs)? + current)
}

/// `mean |M(s, a) - s'|_2` (un-squared); samples with zero error contribute
/// a zero subgradient.
pub fn model_loss(batch: &ModelBatch, model: &NetworkParams) -> Result<(f64, Gradient)> {
    let n = batch.len();
    check_nonempty(n, "model")?;
    let tape = model.tape(&batch.inputs)?;
    let mut err = tape.output() + &batch.current - &batch.next;
    let mut total = 0.0;
    for mut row in err.axis_iter_mut(Axis(0)) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        total += norm;
        if norm > 0.0 {
            row.mapv_inplace(|v| v / (norm * n as f64));
        }
    }
    Ok((total / n as f64, tape.backward(&err)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::State;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_net(inputs: usize, outputs: usize) -> NetworkParams {
        let mut p = NetworkParams::init(&[inputs, outputs], &[false], 0).unwrap();
        p.layers_mut()[0].weights.fill(0.0);
        p
    }

    #[test]
    fn td_terminal_sample_with_zero_values() {
        let v = zero_net(2, 1);
        let batch = TdBatch {
            states: array![[0.1, 0.2]],
            next_states: array![[0.3, 0.4]],
            rewards: array![-1.0],
            terminal: vec![true],
        };
        let (loss, _) = td_loss(&batch, &v, &v, 1.0).unwrap();
        assert_eq!(loss, 1.0);
    }

    #[test]
    fn td_rejects_empty() {
        let env = EnvSpec::grid();
        assert!(matches!(TdBatch::from_transitions(&env, &[]), Err(Error::InvalidBatch(_))));
    }

    #[test]
    fn ns_fixed_point_and_zero_perturbation() {
        // V(s) = s_0 in both networks.
        let mut v = zero_net(2, 1);
        v.layers_mut()[0].weights[[0, 0]] = 1.0;
        let anchors = vec![vec![0.5, 0.3], vec![0.2, 0.1]];
        let perturbed = vec![vec![0.5, 0.3], vec![0.2, 0.1]];
        let batch = NsBatch::new(anchors, perturbed, &[true, true]).unwrap();
        let (loss, grad) = ns_loss(&batch, &v, &v, 5.0).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad.max_abs(), 0.0);

        // Target offset by 0.25 and no perturbation: loss is (0.25)^2.
        let mut t = v.clone();
        t.layers_mut()[0].bias[0] = 0.25;
        let batch = NsBatch::new(vec![vec![0.4, 0.0]], vec![vec![0.4, 0.0]], &[true, true]).unwrap();
        let (loss, _) = ns_loss(&batch, &v, &t, 5.0).unwrap();
        assert!((loss - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn ns_exact_extrapolation_gives_zero_loss() {
        // V(x) = -2 |x_0 - 0.5| built from two ReLUs; anchors at 0.5.
        let layers = vec![
            crate::tensor::Layer {
                weights: array![[1.0], [-1.0]],
                bias: array![-0.5, 0.5],
                norm: None,
                activation: crate::tensor::Activation::Relu,
            },
            crate::tensor::Layer {
                weights: array![[-2.0, -2.0]],
                bias: array![0.0],
                norm: None,
                activation: crate::tensor::Activation::Identity,
            },
        ];
        let v = NetworkParams::from_layers(layers).unwrap();
        let anchors = vec![vec![0.5]; 3];
        let perturbed = vec![vec![0.7], vec![0.1], vec![0.55]];
        let batch = NsBatch::new(anchors, perturbed, &[true]).unwrap();
        let (loss, _) = ns_loss(&batch, &v, &v, 2.0).unwrap();
        assert!(loss < 1e-28, "{loss}");
    }

    #[test]
    fn model_loss_examples() {
        let m = zero_net(4, 2);
        let batch = ModelBatch {
            inputs: array![[0.1, 0.2, 1.0, 0.0]],
            current: array![[0.1, 0.2]],
            next: array![[0.1, 0.2]],
        };
        let (loss, grad) = model_loss(&batch, &m).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad.max_abs(), 0.0);

        let batch = ModelBatch {
            inputs: array![[0.0, 0.0, 1.0, 0.0]],
            current: array![[0.0, 0.0]],
            next: array![[0.3, 0.4]],
        };
        let (loss, _) = model_loss(&batch, &m).unwrap();
        assert!((loss - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_rho_is_identity_and_goal_is_fixed() {
        let env = EnvSpec::reach();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = vec![0.3, 0.6, 0.95, 0.4];
        let mask = env.perturb_mask();
        let sigma = [0.2, 0.2, 0.1, 0.3];
        assert_eq!(perturb_state(&env, &s, &sigma, 0.0, &mask, &mut rng), s);
        for _ in 0..1000 {
            let p = perturb_state(&env, &s, &sigma, 1.0, &mask, &mut rng);
            assert_eq!(&p[2..], &s[2..]);
            assert!(p[..2].iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn perturbation_std_matches_sigma() {
        let env = EnvSpec::reach();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let s = vec![0.5, 0.5, 0.95, 0.5];
        let sigma = [0.04, 0.08, 0.0, 0.0];
        let rho = 0.25;
        let mask = env.perturb_mask();
        let n = 100_000;
        let mut sums = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let p = perturb_state(&env, &s, &sigma, rho, &mask, &mut rng);
            for j in 0..2 {
                sums[j] += p[j];
                sq[j] += p[j] * p[j];
            }
        }
        for j in 0..2 {
            let mean = sums[j] / n as f64;
            let sd = (sq[j] / n as f64 - mean * mean).sqrt();
            let expected = rho.sqrt() * sigma[j];
            assert!((sd - expected).abs() <= 0.03 * expected, "coord {j}: {sd} vs {expected}");
        }
    }

    #[test]
    fn grid_samples_avoid_demonstrated_cells() {
        let env = EnvSpec::grid();
        let ds = crate::demos::collect_demos(&env, 5, 0).unwrap();
        let index = DemoIndex::new(&env, &ds);
        let sampler = NegativeSampler::new(&env, ds.sigma(), 0.25, 0.25, Some(index.clone()));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let anchor = env.value_input(&State(vec![4.0, 2.0]));
        let mut off = 0;
        for _ in 0..1000 {
            let s = sampler.sample(&anchor, &mut rng);
            let cell = env.state_from_value(&s);
            assert_eq!(env.value_input(&cell), s, "snapped to a cell");
            if index.nearest(&s).1 > 1e-9 {
                off += 1;
            }
        }
        assert!(off > 990, "{off}");
    }
}
