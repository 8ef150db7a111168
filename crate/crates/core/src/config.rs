//! Flat `key = value` run configuration.
//!
//! A file sets any subset of the known keys; `--set key=value` overrides
//! win over the file; everything else takes its (environment-dependent)
//! default. [`Resolved::to_text`] writes every key, so a resolved config
//! reproduces a run exactly.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bc::BcConfig;
use crate::env::{EnvSpec, GridSpec, PushSpec, ReachSpec};
use crate::error::{Error, Result};
use crate::rl::RlConfig;
use crate::vins::{ModelKind, VinsConfig};

/// Every recognised key, in the order they are written out.
pub const KEYS: &[&str] = &[
    "seed",
    "env",
    "out",
    "grid.w",
    "grid.h",
    "grid.start_x",
    "grid.start_y",
    "grid.goal_x",
    "grid.goal_y",
    "grid.horizon",
    "reach.a_max",
    "reach.goal_tol",
    "reach.horizon",
    "push.a_max",
    "push.goal_tol",
    "push.contact",
    "push.horizon",
    "demos.n",
    "bc.hidden",
    "bc.iterations",
    "bc.batch",
    "bc.lr",
    "vins.lambda",
    "vins.mu",
    "vins.tau",
    "vins.rho",
    "vins.sigma_floor",
    "vins.alpha",
    "vins.k_shoot",
    "vins.batch",
    "vins.iterations",
    "vins.value_lr",
    "vins.model_lr",
    "vins.discount",
    "vins.augment",
    "vins.value_hidden",
    "vins.model_hidden",
    "vins.model",
    "rl.n1",
    "rl.n_inner",
    "rl.capacity",
    "rl.max_stages",
    "rl.budget",
    "rl.eval_trials",
    "rl.eval_seeds",
    "rl.eval_every",
    "rl.stop_at",
    "rl.mu",
    "eval.policy",
    "eval.anchor",
    "eval.trials",
    "eval.seeds",
    "eval.perturb0",
    "eval.probes",
    "eval.rollouts",
    "heatmap.resolution",
    "reproduce.seeds",
];

/// Explicitly set keys, before defaults are filled in.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.insert(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Dependency(path.to_path_buf()),
            _ => e.into(),
        })?;
        RunConfig::parse(&text)
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.insert(k.trim(), v.trim())
    }

    fn insert(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key: {key}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn typed<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("{key}: expected {what}, got {v:?}")))
            })
            .transpose()
    }

    fn real(&self, key: &str, slot: &mut f64) -> Result<()> {
        if let Some(v) = self.typed(key, "a real number")? {
            *slot = v;
        }
        Ok(())
    }

    fn count<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.typed(key, "a non-negative integer")? {
            *slot = v;
        }
        Ok(())
    }

    fn flag(&self, key: &str, slot: &mut bool) -> Result<()> {
        if let Some(v) = self.typed(key, "true or false")? {
            *slot = v;
        }
        Ok(())
    }

    fn list(&self, key: &str, slot: &mut Vec<usize>) -> Result<()> {
        if let Some(v) = self.get(key) {
            *slot = v
                .split(',')
                .map(|x| x.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("{key}: expected a comma-separated list of sizes, got {v:?}")))?;
        }
        Ok(())
    }

    /// Fills in defaults and builds the typed configuration.
    pub fn resolve(&self) -> Result<Resolved> {
        let mut env = EnvSpec::by_name(self.get("env").unwrap_or("grid"))
            .map_err(|_| Error::Config(format!("env: unknown environment {:?}", self.get("env").unwrap_or(""))))?;
        match &mut env {
            EnvSpec::Grid(g) => self.grid(g)?,
            EnvSpec::Reach(r) => self.reach(r)?,
            EnvSpec::Push(p) => self.push(p)?,
        }
        env.validate().map_err(|e| Error::Config(e.to_string()))?;

        let mut seed = 0u64;
        self.count("seed", &mut seed)?;
        let out = PathBuf::from(self.get("out").unwrap_or("out"));
        let mut demos = default_demo_count(&env);
        self.count("demos.n", &mut demos)?;

        let mut bc = BcConfig::default();
        self.list("bc.hidden", &mut bc.hidden)?;
        self.count("bc.iterations", &mut bc.iterations)?;
        self.count("bc.batch", &mut bc.batch_size)?;
        self.real("bc.lr", &mut bc.learning_rate)?;

        let mut vins = VinsConfig::for_env(&env);
        self.real("vins.lambda", &mut vins.lambda)?;
        self.real("vins.mu", &mut vins.mu)?;
        self.real("vins.tau", &mut vins.tau)?;
        self.real("vins.rho", &mut vins.rho)?;
        self.real("vins.sigma_floor", &mut vins.sigma_floor)?;
        self.real("vins.alpha", &mut vins.alpha)?;
        self.count("vins.k_shoot", &mut vins.k_shoot)?;
        self.count("vins.batch", &mut vins.batch_size)?;
        self.count("vins.iterations", &mut vins.iterations)?;
        self.real("vins.value_lr", &mut vins.value_lr)?;
        self.real("vins.model_lr", &mut vins.model_lr)?;
        self.real("vins.discount", &mut vins.discount)?;
        self.flag("vins.augment", &mut vins.augment)?;
        self.count("vins.value_hidden", &mut vins.value_hidden)?;
        self.list("vins.model_hidden", &mut vins.model_hidden)?;
        if let Some(m) = self.get("vins.model") {
            vins.model_kind = ModelKind::parse(m)?;
        }
        vins.validate()?;

        let mut rl = RlConfig::default();
        self.count("rl.n1", &mut rl.n1)?;
        self.count("rl.n_inner", &mut rl.n_inner)?;
        self.count("rl.capacity", &mut rl.capacity)?;
        self.count("rl.max_stages", &mut rl.max_stages)?;
        self.count("rl.budget", &mut rl.budget)?;
        self.count("rl.eval_trials", &mut rl.eval_trials)?;
        self.count("rl.eval_seeds", &mut rl.eval_seeds)?;
        self.count("rl.eval_every", &mut rl.eval_every)?;
        match self.get("rl.stop_at") {
            None | Some("none") => {}
            Some(_) => rl.stop_at = self.typed("rl.stop_at", "a real number or none")?,
        }
        self.real("rl.mu", &mut rl.mu)?;
        rl.validate()?;

        let mut eval = EvalSettings::default();
        if let Some(p) = self.get("eval.policy") {
            eval.policy = PolicyChoice::parse(p)?;
        }
        if let Some(a) = self.get("eval.anchor") {
            eval.anchor = AnchorChoice::parse(a)?;
        }
        self.count("eval.trials", &mut eval.trials)?;
        self.count("eval.seeds", &mut eval.seeds)?;
        self.real("eval.perturb0", &mut eval.perturb0)?;
        self.count("eval.probes", &mut eval.probes)?;
        self.count("eval.rollouts", &mut eval.rollouts)?;
        self.count("heatmap.resolution", &mut eval.heatmap_resolution)?;
        self.count("reproduce.seeds", &mut eval.study_seeds)?;

        Ok(Resolved {
            seed,
            env,
            out,
            demos,
            bc,
            vins,
            rl,
            eval,
        })
    }

    fn grid(&self, g: &mut GridSpec) -> Result<()> {
        self.count("grid.w", &mut g.width)?;
        self.count("grid.h", &mut g.height)?;
        self.count("grid.start_x", &mut g.start.0)?;
        self.count("grid.start_y", &mut g.start.1)?;
        self.count("grid.goal_x", &mut g.goal.0)?;
        self.count("grid.goal_y", &mut g.goal.1)?;
        self.count("grid.horizon", &mut g.horizon)
    }

    fn reach(&self, r: &mut ReachSpec) -> Result<()> {
        self.real("reach.a_max", &mut r.a_max)?;
        self.real("reach.goal_tol", &mut r.goal_tol)?;
        self.count("reach.horizon", &mut r.horizon)
    }

    fn push(&self, p: &mut PushSpec) -> Result<()> {
        self.real("push.a_max", &mut p.a_max)?;
        self.real("push.goal_tol", &mut p.goal_tol)?;
        self.real("push.contact", &mut p.contact_radius)?;
        self.count("push.horizon", &mut p.horizon)
    }
}

pub fn default_demo_count(env: &EnvSpec) -> usize {
    match env {
        EnvSpec::Grid(_) => 20,
        _ => 100,
    }
}

/// Which policy `eval` measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyChoice {
    Induced,
    Bc,
    Expert,
}

impl PolicyChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "induced" => Ok(PolicyChoice::Induced),
            "bc" => Ok(PolicyChoice::Bc),
            "expert" => Ok(PolicyChoice::Expert),
            _ => Err(Error::Config(format!("eval.policy: expected induced, bc or expert, got {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyChoice::Induced => "induced",
            PolicyChoice::Bc => "bc",
            PolicyChoice::Expert => "expert",
        }
    }
}

/// Anchor of the induced policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnchorChoice {
    Bc,
    Zero,
}

impl AnchorChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bc" => Ok(AnchorChoice::Bc),
            "zero" => Ok(AnchorChoice::Zero),
            _ => Err(Error::Config(format!("eval.anchor: expected bc or zero, got {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AnchorChoice::Bc => "bc",
            AnchorChoice::Zero => "zero",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub policy: PolicyChoice,
    pub anchor: AnchorChoice,
    pub trials: usize,
    pub seeds: usize,
    pub perturb0: f64,
    pub probes: usize,
    pub rollouts: usize,
    pub heatmap_resolution: usize,
    /// Training seeds per study in `reproduce`.
    pub study_seeds: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            policy: PolicyChoice::Induced,
            anchor: AnchorChoice::Bc,
            trials: 200,
            seeds: 10,
            perturb0: 0.0,
            probes: 1000,
            rollouts: 100,
            heatmap_resolution: 21,
            study_seeds: 10,
        }
    }
}

/// A fully-specified run.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub seed: u64,
    pub env: EnvSpec,
    pub out: PathBuf,
    pub demos: usize,
    pub bc: BcConfig,
    pub vins: VinsConfig,
    pub rl: RlConfig,
    pub eval: EvalSettings,
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Resolved {
    /// Every key with its value, one `key = value` per line. Reals use the
    /// shortest representation that parses back to the same number.
    pub fn to_text(&self) -> String {
        let mut kv: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("env", self.env.name().to_string()),
            ("out", self.out.display().to_string()),
        ];
        let (grid, reach, push) = match &self.env {
            EnvSpec::Grid(g) => (Some(g), None, None),
            EnvSpec::Reach(r) => (None, Some(r), None),
            EnvSpec::Push(p) => (None, None, Some(p)),
        };
        let g = grid.cloned().unwrap_or_default();
        let r = reach.cloned().unwrap_or_default();
        let p = push.cloned().unwrap_or_default();
        kv.extend([
            ("grid.w", g.width.to_string()),
            ("grid.h", g.height.to_string()),
            ("grid.start_x", g.start.0.to_string()),
            ("grid.start_y", g.start.1.to_string()),
            ("grid.goal_x", g.goal.0.to_string()),
            ("grid.goal_y", g.goal.1.to_string()),
            ("grid.horizon", g.horizon.to_string()),
            ("reach.a_max", r.a_max.to_string()),
            ("reach.goal_tol", r.goal_tol.to_string()),
            ("reach.horizon", r.horizon.to_string()),
            ("push.a_max", p.a_max.to_string()),
            ("push.goal_tol", p.goal_tol.to_string()),
            ("push.contact", p.contact_radius.to_string()),
            ("push.horizon", p.horizon.to_string()),
        ]);
        let v = &self.vins;
        kv.extend([
            ("demos.n", self.demos.to_string()),
            ("bc.hidden", join(&self.bc.hidden)),
            ("bc.iterations", self.bc.iterations.to_string()),
            ("bc.batch", self.bc.batch_size.to_string()),
            ("bc.lr", self.bc.learning_rate.to_string()),
            ("vins.lambda", v.lambda.to_string()),
            ("vins.mu", v.mu.to_string()),
            ("vins.tau", v.tau.to_string()),
            ("vins.rho", v.rho.to_string()),
            ("vins.sigma_floor", v.sigma_floor.to_string()),
            ("vins.alpha", v.alpha.to_string()),
            ("vins.k_shoot", v.k_shoot.to_string()),
            ("vins.batch", v.batch_size.to_string()),
            ("vins.iterations", v.iterations.to_string()),
            ("vins.value_lr", v.value_lr.to_string()),
            ("vins.model_lr", v.model_lr.to_string()),
            ("vins.discount", v.discount.to_string()),
            ("vins.augment", v.augment.to_string()),
            ("vins.value_hidden", v.value_hidden.to_string()),
            ("vins.model_hidden", join(&v.model_hidden)),
            ("vins.model", v.model_kind.name().to_string()),
        ]);
        let rl = &self.rl;
        kv.extend([
            ("rl.n1", rl.n1.to_string()),
            ("rl.n_inner", rl.n_inner.to_string()),
            ("rl.capacity", rl.capacity.to_string()),
            ("rl.max_stages", rl.max_stages.to_string()),
            ("rl.budget", rl.budget.to_string()),
            ("rl.eval_trials", rl.eval_trials.to_string()),
            ("rl.eval_seeds", rl.eval_seeds.to_string()),
            ("rl.eval_every", rl.eval_every.to_string()),
            ("rl.stop_at", rl.stop_at.map_or("none".to_string(), |s| s.to_string())),
            ("rl.mu", rl.mu.to_string()),
        ]);
        let e = &self.eval;
        kv.extend([
            ("eval.policy", e.policy.name().to_string()),
            ("eval.anchor", e.anchor.name().to_string()),
            ("eval.trials", e.trials.to_string()),
            ("eval.seeds", e.seeds.to_string()),
            ("eval.perturb0", e.perturb0.to_string()),
            ("eval.probes", e.probes.to_string()),
            ("eval.rollouts", e.rollouts.to_string()),
            ("heatmap.resolution", e.heatmap_resolution.to_string()),
            ("reproduce.seeds", e.study_seeds.to_string()),
        ]);
        debug_assert_eq!(kv.iter().map(|(k, _)| *k).collect::<Vec<_>>(), KEYS);
        let mut text = String::new();
        for (k, v) in kv {
            text.push_str(&format!("{k} = {v}\n"));
        }
        text
    }

    /// Writes the resolved config to `dir/config.txt`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.txt"), self.to_text())?;
        Ok(())
    }
}
