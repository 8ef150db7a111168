//! Value iteration on demonstrations with negative sampling.
//!
//! Training never touches the environment. Each iteration samples a
//! minibatch of demonstrated transitions (interpolated on the fly), fits the
//! value network to a TD target plus a negative-sampling term that pushes
//! values down linearly with distance from the demonstrations, fits the
//! dynamics model, and moves the target network toward the online one.

mod losses;
mod policy;

pub use losses::{
    masked_distance, model_features, model_loss, ns_loss, ns_loss_calls, perturb_state,
    predict_next, td_loss, ModelBatch, NegativeSampler, NsBatch, TdBatch,
};
pub use policy::{candidate_values, induced_action, Anchor, Dynamics};

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::demos::{augment_interpolate, DemoDataset, DemoIndex, Transition};
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::tensor::{AdamConfig, AdamState, NetworkParams};

/// Which dynamics the induced policy plans with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// The trained network `M_theta`.
    Learned,
    /// The environment's own transition function.
    Exact,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Learned => "learned",
            ModelKind::Exact => "exact",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(ModelKind::Learned),
            "exact" => Ok(ModelKind::Exact),
            other => Err(Error::Config(format!("unknown model kind: {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VinsConfig {
    /// Slope of the value fall-off per unit of state distance.
    pub lambda: f64,
    /// Weight of the negative-sampling loss.
    pub mu: f64,
    /// Target-network mixing rate.
    pub tau: f64,
    /// Perturbation variance scale relative to the demonstration spread.
    pub rho: f64,
    /// Lower bound on the per-coordinate spread used for perturbation.
    pub sigma_floor: f64,
    /// Shooting radius around the anchor action.
    pub alpha: f64,
    /// Number of shooting candidates.
    pub k_shoot: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub value_lr: f64,
    pub model_lr: f64,
    pub discount: f64,
    pub augment: bool,
    pub value_hidden: usize,
    pub model_hidden: Vec<usize>,
    pub model_kind: ModelKind,
}

impl VinsConfig {
    /// Defaults tuned per environment family.
    pub fn for_env(env: &EnvSpec) -> Self {
        let a_max = env.action_bound();
        let (lambda, sigma_floor, model_kind) = match env {
            EnvSpec::Grid(_) => (18.0, 0.25, ModelKind::Exact),
            _ => (25.0, 0.0, ModelKind::Learned),
        };
        VinsConfig {
            lambda,
            mu: 1.0,
            tau: 0.05,
            rho: 0.25,
            sigma_floor,
            alpha: 0.5 * a_max,
            k_shoot: 100,
            batch_size: 128,
            iterations: 20_000,
            value_lr: 3e-4,
            model_lr: 3e-4,
            discount: 1.0,
            augment: true,
            value_hidden: 64,
            model_hidden: vec![128, 128],
            model_kind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lambda >= 0.0) {
            return bad("vins.lambda must be >= 0");
        }
        if !(self.mu >= 0.0) {
            return bad("vins.mu must be >= 0");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("vins.tau must lie in (0, 1]");
        }
        if !(self.rho >= 0.0) || !(self.sigma_floor >= 0.0) {
            return bad("vins.rho and vins.sigma_floor must be >= 0");
        }
        if !(self.alpha > 0.0) {
            return bad("vins.alpha must be > 0");
        }
        if self.k_shoot == 0 || self.batch_size == 0 || self.value_hidden == 0 {
            return bad("vins.k_shoot, vins.batch and vins.value_hidden must be >= 1");
        }
        if !(self.value_lr > 0.0) || !(self.model_lr > 0.0) {
            return bad("learning rates must be > 0");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("vins.discount must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Online value, target value, dynamics model, and their optimizers.
#[derive(Clone, Debug, PartialEq)]
pub struct VinsState {
    pub value: NetworkParams,
    pub target: NetworkParams,
    pub model: NetworkParams,
    pub value_opt: AdamState,
    pub model_opt: AdamState,
    pub iteration: u64,
}

impl VinsState {
    /// Random initialization with the target equal to the online value.
    pub fn new(env: &EnvSpec, cfg: &VinsConfig, seed: u64) -> Result<Self> {
        let value = NetworkParams::init(
            &[env.value_dim(), cfg.value_hidden, 1],
            &[true, false],
            seed,
        )?;
        let mut sizes = vec![env.model_dim() + env.action_dim()];
        sizes.extend_from_slice(&cfg.model_hidden);
        sizes.push(env.model_dim());
        let model = NetworkParams::init(&sizes, &vec![false; sizes.len() - 1], seed ^ 0x6d6f64)?;
        Ok(VinsState {
            target: value.clone(),
            value_opt: AdamState::new(&value, AdamConfig::with_learning_rate(cfg.value_lr)),
            model_opt: AdamState::new(&model, AdamConfig::with_learning_rate(cfg.model_lr)),
            value,
            model,
            iteration: 0,
        })
    }

    /// `V_phi` at one value-space point.
    pub fn value_at(&self, value_input: &[f64]) -> Result<f64> {
        Ok(self.value.forward(value_input)?[0])
    }

    /// Writes `value.params`, `target.params`, `model.params` and a manifest.
    pub fn save(&self, dir: impl AsRef<Path>, manifest: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.value.save(dir.join("value.params"))?;
        self.target.save(dir.join("target.params"))?;
        self.model.save(dir.join("model.params"))?;
        fs::write(dir.join("manifest.txt"), manifest)?;
        Ok(())
    }

    /// Loads networks saved by [`save`](Self::save). Optimizer moments are
    /// not persisted and restart from zero.
    pub fn load(dir: impl AsRef<Path>, cfg: &VinsConfig) -> Result<Self> {
        let dir = dir.as_ref();
        let value = NetworkParams::load(dir.join("value.params"))?;
        let target = NetworkParams::load(dir.join("target.params"))?;
        let model = NetworkParams::load(dir.join("model.params"))?;
        if !value.same_shape(&target) {
            return Err(Error::Schema("value and target networks differ in shape".into()));
        }
        Ok(VinsState {
            value_opt: AdamState::new(&value, AdamConfig::with_learning_rate(cfg.value_lr)),
            model_opt: AdamState::new(&model, AdamConfig::with_learning_rate(cfg.model_lr)),
            value,
            target,
            model,
            iteration: 0,
        })
    }
}

/// `target + tau * (online - target)`.
pub fn polyak_update(target: &NetworkParams, online: &NetworkParams, tau: f64) -> Result<NetworkParams> {
    target.polyak_toward(online, tau)
}

/// Per-iteration losses recorded during training.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossLog {
    pub td: Vec<f64>,
    pub ns: Vec<f64>,
    pub model: Vec<f64>,
}

/// Random generator for iteration `it` of a run seeded with `seed`.
pub fn iteration_rng(seed: u64, it: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(it + 1);
    rng
}

pub(crate) fn sample_transitions<'t>(
    pool: &[&'t Transition],
    n: usize,
    rng: &mut impl Rng,
) -> Vec<&'t Transition> {
    (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

/// One value update on the TD loss plus `mu` times the negative-sampling
/// loss (skipped when `sampler` is `None` or `mu == 0`), one model update,
/// and one target update.
pub fn train_step(
    env: &EnvSpec,
    cfg: &VinsConfig,
    state: &mut VinsState,
    batch: &[&Transition],
    sampler: Option<&NegativeSampler<'_>>,
    rng: &mut impl Rng,
    log: &mut LossLog,
) -> Result<()> {
    let it = state.iteration;
    let fail = |what: &str| Error::numeric(format!("{what} at iteration {it}"));

    let raw: Vec<Transition> = batch.iter().map(|t| (*t).clone()).collect();
    let value_batch: Vec<Transition> = if cfg.augment {
        raw.iter().map(|t| augment_interpolate(t, rng)).collect()
    } else {
        raw.clone()
    };
    let td = TdBatch::from_transitions(env, &value_batch)?;
    let (td_value, mut grad) = td_loss(&td, &state.value, &state.target, cfg.discount)?;
    if !td_value.is_finite() {
        return Err(fail("TD loss"));
    }
    log.td.push(td_value);

    if let (Some(sampler), true) = (sampler, cfg.mu > 0.0) {
        let anchors: Vec<Vec<f64>> = value_batch.iter().map(|t| env.value_input(&t.state)).collect();
        let ns = sampler.batch(anchors, rng)?;
        let (ns_value, ns_grad) = ns_loss(&ns, &state.value, &state.target, cfg.lambda)?;
        if !ns_value.is_finite() {
            return Err(fail("negative-sampling loss"));
        }
        grad.add_scaled(&ns_grad, cfg.mu)?;
        log.ns.push(ns_value);
    }
    state
        .value_opt
        .update(&mut state.value, &grad)
        .map_err(|_| fail("value update"))?;

    if cfg.model_kind == ModelKind::Learned {
        let mb = ModelBatch::from_transitions(env, &raw)?;
        let (m_value, m_grad) = model_loss(&mb, &state.model)?;
        if !m_value.is_finite() {
            return Err(fail("model loss"));
        }
        state
            .model_opt
            .update(&mut state.model, &m_grad)
            .map_err(|_| fail("model update"))?;
        log.model.push(m_value);
    }

    state.target = polyak_update(&state.target, &state.value, cfg.tau)?;
    state.iteration += 1;
    Ok(())
}

/// Runs VINS on a demonstration set. Deterministic in `seed`.
pub fn train_vins(
    env: &EnvSpec,
    ds: &DemoDataset,
    cfg: &VinsConfig,
    seed: u64,
) -> Result<(VinsState, LossLog)> {
    cfg.validate()?;
    if ds.transitions().is_empty() {
        return Err(Error::InvalidBatch("empty dataset".into()));
    }
    let mut state = VinsState::new(env, cfg, seed)?;
    let sampler = NegativeSampler::new(
        env,
        ds.sigma(),
        cfg.rho,
        cfg.sigma_floor,
        Some(DemoIndex::new(env, ds)),
    );
    let pool: Vec<&Transition> = ds.transitions().iter().collect();
    let mut log = LossLog::default();
    for it in 0..cfg.iterations as u64 {
        let mut rng = iteration_rng(seed, it);
        let batch = sample_transitions(&pool, cfg.batch_size, &mut rng);
        train_step(env, cfg, &mut state, &batch, Some(&sampler), &mut rng, &mut log)?;
    }
    Ok((state, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::collect_demos;

    fn small_cfg(env: &EnvSpec) -> VinsConfig {
        VinsConfig {
            iterations: 30,
            batch_size: 16,
            value_hidden: 8,
            model_hidden: vec![8, 8],
            ..VinsConfig::for_env(env)
        }
    }

    #[test]
    fn zero_iterations_returns_initialization() {
        let env = EnvSpec::reach();
        let ds = collect_demos(&env, 3, 0).unwrap();
        let cfg = VinsConfig {
            iterations: 0,
            ..small_cfg(&env)
        };
        let (state, log) = train_vins(&env, &ds, &cfg, 5).unwrap();
        assert_eq!(state, VinsState::new(&env, &cfg, 5).unwrap());
        assert_eq!(state.value, state.target);
        assert!(log.td.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_offline() {
        let env = EnvSpec::reach();
        let ds = collect_demos(&env, 4, 0).unwrap();
        let cfg = small_cfg(&env);
        let before = crate::env::step_calls();
        let (a, la) = train_vins(&env, &ds, &cfg, 3).unwrap();
        let (b, lb) = train_vins(&env, &ds, &cfg, 3).unwrap();
        assert_eq!(crate::env::step_calls(), before);
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(la.td.len(), 30);
        assert_eq!(la.ns.len(), 30);
        assert_eq!(la.model.len(), 30);
    }

    #[test]
    fn mu_zero_skips_negative_sampling() {
        let env = EnvSpec::grid();
        let ds = collect_demos(&env, 2, 0).unwrap();
        let cfg = VinsConfig {
            mu: 0.0,
            ..small_cfg(&env)
        };
        let before = ns_loss_calls();
        let (_, log) = train_vins(&env, &ds, &cfg, 0).unwrap();
        assert_eq!(ns_loss_calls(), before);
        assert!(log.ns.is_empty());
        assert!(log.model.is_empty(), "exact grid model is not trained");
    }

    #[test]
    fn polyak_converges_geometrically() {
        let online = NetworkParams::init(&[3, 4, 1], &[true, false], 1).unwrap();
        let start = NetworkParams::init(&[3, 4, 1], &[true, false], 2).unwrap();
        let tau = 0.1;
        let gap0 = {
            let mut d = start.clone();
            d.add_scaled(&online, -1.0).unwrap();
            d.norm()
        };
        let mut target = start;
        for n in 1..=50 {
            target = polyak_update(&target, &online, tau).unwrap();
            let mut d = target.clone();
            d.add_scaled(&online, -1.0).unwrap();
            let expected = (1.0 - tau).powi(n) * gap0;
            assert!((d.norm() - expected).abs() <= 1e-10 * gap0, "step {n}");
        }
    }

    #[test]
    fn polyak_scalar_examples() {
        let mut zero = NetworkParams::init(&[1, 1], &[false], 0).unwrap();
        zero.set_flat(&[0.0, 0.0]).unwrap();
        let mut two = zero.clone();
        two.set_flat(&[2.0, 2.0]).unwrap();
        assert_eq!(polyak_update(&zero, &two, 0.5).unwrap().to_flat(), vec![1.0, 1.0]);
        assert_eq!(polyak_update(&zero, &two, 1.0).unwrap(), two);
    }

    #[test]
    fn checkpoint_round_trip() {
        let env = EnvSpec::push();
        let cfg = small_cfg(&env);
        let state = VinsState::new(&env, &cfg, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        state.save(dir.path(), "vins.lambda = 25\n").unwrap();
        let back = VinsState::load(dir.path(), &cfg).unwrap();
        assert_eq!(back.value, state.value);
        assert_eq!(back.target, state.target);
        assert_eq!(back.model, state.model);
    }

    #[test]
    fn invalid_config_rejected() {
        let env = EnvSpec::grid();
        let cfg = VinsConfig {
            tau: 0.0,
            ..VinsConfig::for_env(&env)
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
