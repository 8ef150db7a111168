//! The `vinslab` command line.
//!
//! Every command reads a flat config (file plus `--set` overrides), writes
//! its artifacts under the output directory, and drops the fully resolved
//! config next to them.
//!
//! ```text
//! out/demos.csv
//! out/bc/policy.params
//! out/vins/{value,target,model}.params, manifest.txt
//! out/rl/{value,target,model}.params, curve.csv
//! out/eval/{success,profile}.csv
//! out/heatmap/value.{csv,pgm}, value_demo_cells.csv
//! out/audit/audit.csv
//! out/reproduce/summary.txt
//! ```

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bc::{train_bc, BcPolicy};
use crate::config::{AnchorChoice, PolicyChoice, Resolved, RunConfig};
use crate::demos::{collect_demos, DemoDataset};
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::eval::{
    conservative_audit, rollout_distance_profile, success_rate_perturbed, value_heatmap, Expert, Induced,
    LatticeSpec, Policy,
};
use crate::experiments::{grid_study, init_run, shift_study, Summary};
use crate::rl::train_vins_rl;
use crate::vins::{train_vins, Anchor, VinsState};

/// Environment variable that overrides the output directory.
pub const OUT_VAR: &str = "VINSLAB_OUT";

#[derive(Parser, Debug)]
#[command(name = "vinslab", version, about = "Conservative value extrapolation for imitation learning")]
pub struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key; repeatable, wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Cap on worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Roll out the scripted expert and save the demonstrations.
    GenDemos,
    /// Fit the behavioral-cloning policy.
    TrainBc,
    /// Fit value function and dynamics model on the demonstrations.
    TrainVins,
    /// Fine-tune the VINS networks with environment interaction.
    TrainVinsRl,
    /// Success rate and distance profile of a policy.
    Eval,
    /// Export the value function over a 2-D lattice.
    Heatmap,
    /// Check that values fall off away from the demonstrations.
    Audit,
    /// Run every study and write a summary table.
    Reproduce,
}

/// Parses arguments and runs; returns the lines to print.
pub fn run_from<I, T>(args: I) -> Result<Vec<String>>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    run(&cli)
}

pub fn run(cli: &Cli) -> Result<Vec<String>> {
    let raw = load_config(cli)?;
    let cfg = raw.resolve()?;
    match cli.jobs {
        Some(0) => Err(Error::Config("--jobs must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| dispatch(cli.command, &raw, &cfg)),
        None => dispatch(cli.command, &raw, &cfg),
    }
}

/// File, then `--set` overrides, then the output-directory variable.
pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut raw = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for s in &cli.sets {
        raw.set(s)?;
    }
    if let Some(out) = std::env::var_os(OUT_VAR) {
        raw.set(&format!("out={}", out.to_string_lossy()))?;
    }
    Ok(raw)
}

fn dispatch(command: Command, raw: &RunConfig, cfg: &Resolved) -> Result<Vec<String>> {
    match command {
        Command::GenDemos => gen_demos(cfg),
        Command::TrainBc => train_bc_cmd(cfg),
        Command::TrainVins => train_vins_cmd(cfg),
        Command::TrainVinsRl => train_vins_rl_cmd(cfg),
        Command::Eval => eval_cmd(cfg),
        Command::Heatmap => heatmap_cmd(cfg),
        Command::Audit => audit_cmd(cfg),
        Command::Reproduce => reproduce(raw, cfg),
    }
}

pub fn demos_path(out: &Path) -> PathBuf {
    out.join("demos.csv")
}

pub fn bc_path(out: &Path) -> PathBuf {
    out.join("bc").join("policy.params")
}

pub fn vins_dir(out: &Path) -> PathBuf {
    out.join("vins")
}

fn load_demos(cfg: &Resolved) -> Result<DemoDataset> {
    DemoDataset::load(demos_path(&cfg.out), &cfg.env)
}

fn load_vins(cfg: &Resolved) -> Result<VinsState> {
    VinsState::load(vins_dir(&cfg.out), &cfg.vins)
}

fn manifest(cfg: &Resolved, what: &str) -> String {
    format!("{what}\nenv = {}\nseed = {}\n", cfg.env.name(), cfg.seed)
}

fn gen_demos(cfg: &Resolved) -> Result<Vec<String>> {
    let ds = collect_demos(&cfg.env, cfg.demos, cfg.seed)?;
    cfg.write_to_dir(&cfg.out)?;
    let path = demos_path(&cfg.out);
    ds.save(&path, &cfg.env)?;
    Ok(vec![format!(
        "{} demonstrations ({} transitions) -> {}",
        ds.len(),
        ds.transitions().len(),
        path.display()
    )])
}

fn train_bc_cmd(cfg: &Resolved) -> Result<Vec<String>> {
    let ds = load_demos(cfg)?;
    let trained = train_bc(&cfg.env, &ds, &cfg.bc, cfg.seed)?;
    let path = bc_path(&cfg.out);
    cfg.write_to_dir(path.parent().expect("policy path has a parent"))?;
    trained.policy.save(&path)?;
    let last = trained.losses.last().copied().unwrap_or(f64::NAN);
    Ok(vec![format!("final cloning loss {last:.6} -> {}", path.display())])
}

fn train_vins_cmd(cfg: &Resolved) -> Result<Vec<String>> {
    let ds = load_demos(cfg)?;
    let (state, log) = train_vins(&cfg.env, &ds, &cfg.vins, cfg.seed)?;
    let dir = vins_dir(&cfg.out);
    cfg.write_to_dir(&dir)?;
    state.save(&dir, &manifest(cfg, &format!("vins iterations = {}", state.iteration)))?;
    let last = |xs: &[f64]| xs.last().map_or("-".to_string(), |v| format!("{v:.5}"));
    Ok(vec![format!(
        "td {} ns {} model {} -> {}",
        last(&log.td),
        last(&log.ns),
        last(&log.model),
        dir.display()
    )])
}

fn train_vins_rl_cmd(cfg: &Resolved) -> Result<Vec<String>> {
    let ds = load_demos(cfg)?;
    let init = load_vins(cfg)?;
    let (state, curve) = train_vins_rl(&cfg.env, init, &ds, &cfg.vins, &cfg.rl, cfg.seed)?;
    let dir = cfg.out.join("rl");
    cfg.write_to_dir(&dir)?;
    state.save(&dir, &manifest(cfg, "vins+rl"))?;
    curve.write_csv(fs::File::create(dir.join("curve.csv"))?)?;
    let mut lines: Vec<String> = curve
        .points
        .iter()
        .map(|p| format!("{} steps: {:.3}", p.env_steps, p.success_rate))
        .collect();
    lines.push(format!("curve -> {}", dir.join("curve.csv").display()));
    Ok(lines)
}

fn eval_cmd(cfg: &Resolved) -> Result<Vec<String>> {
    let env = &cfg.env;
    let e = &cfg.eval;
    let ds = load_demos(cfg)?;
    let bc = match (e.policy, e.anchor) {
        (PolicyChoice::Bc, _) | (PolicyChoice::Induced, AnchorChoice::Bc) => {
            Some(BcPolicy::load(bc_path(&cfg.out), env)?)
        }
        _ => None,
    };
    let vins = match e.policy {
        PolicyChoice::Induced => Some(load_vins(cfg)?),
        _ => None,
    };
    let induced;
    let policy: &dyn Policy = match e.policy {
        PolicyChoice::Expert => &Expert,
        PolicyChoice::Bc => bc.as_ref().expect("loaded above"),
        PolicyChoice::Induced => {
            induced = Induced {
                vins: vins.as_ref().expect("loaded above"),
                anchor: match &bc {
                    Some(p) => Anchor::Bc(p),
                    None => Anchor::Zero,
                },
                cfg: &cfg.vins,
            };
            &induced
        }
    };
    let report = success_rate_perturbed(env, policy, e.trials, e.seeds, cfg.seed, e.perturb0)?;
    let profile = rollout_distance_profile(env, policy, &ds, e.rollouts, e.perturb0, cfg.seed)?;
    let dir = cfg.out.join("eval");
    cfg.write_to_dir(&dir)?;
    report.write_csv(fs::File::create(dir.join("success.csv"))?)?;
    profile.write_csv(fs::File::create(dir.join("profile.csv"))?)?;
    Ok(vec![format!(
        "{} success {:.3} ± {:.3} over {} seeds x {} trials (perturb0 {}) -> {}",
        e.policy.name(),
        report.mean,
        report.stddev,
        e.seeds,
        e.trials,
        e.perturb0,
        dir.display()
    )])
}

/// Grid cells, or the agent-position slice of a point task with the rest of
/// the state held at the first demonstration's start.
pub fn default_lattice(env: &EnvSpec, ds: &DemoDataset, resolution: usize) -> Result<LatticeSpec> {
    if env.is_discrete() {
        return LatticeSpec::grid_cells(env);
    }
    let start = ds
        .states()
        .next()
        .ok_or_else(|| Error::Invalid("empty demonstration set".into()))?;
    Ok(LatticeSpec::slice(resolution, env.value_input(start)[2..].to_vec()))
}

fn heatmap_cmd(cfg: &Resolved) -> Result<Vec<String>> {
    let ds = load_demos(cfg)?;
    let vins = load_vins(cfg)?;
    let lattice = default_lattice(&cfg.env, &ds, cfg.eval.heatmap_resolution)?;
    let grid = value_heatmap(&cfg.env, &vins.value, &lattice, &ds)?;
    let dir = cfg.out.join("heatmap");
    cfg.write_to_dir(&dir)?;
    grid.export(&dir, "value")?;
    Ok(vec![format!("{}x{} heatmap -> {}", lattice.nx, lattice.ny, dir.display())])
}

fn audit_cmd(cfg: &Resolved) -> Result<Vec<String>> {
    let ds = load_demos(cfg)?;
    let vins = load_vins(cfg)?;
    let v = &cfg.vins;
    let report = conservative_audit(&cfg.env, &vins.value, &ds, cfg.eval.probes, v.rho, v.sigma_floor, cfg.seed)?;
    let dir = cfg.out.join("audit");
    cfg.write_to_dir(&dir)?;
    report.write_csv(fs::File::create(dir.join("audit.csv"))?)?;
    Ok(vec![format!(
        "{:.3} of {} probes below their projection, mean margin {:.3} (lambda {})",
        report.fraction, report.n_probes, report.mean_margin, v.lambda
    )])
}

/// `raw` with the environment and seed replaced, resolved.
pub fn stage_config(raw: &RunConfig, env: &str, seed: u64) -> Result<Resolved> {
    let mut raw = raw.clone();
    raw.set(&format!("env={env}"))?;
    raw.set(&format!("seed={seed}"))?;
    raw.resolve()
}

/// Threshold for the initialization study when `rl.stop_at` is unset.
pub const DEFAULT_INIT_THRESHOLD: f64 = 0.8;
/// Start displacement for the shift study when `eval.perturb0` is zero.
pub const DEFAULT_SHIFT: f64 = 0.1;

fn reproduce(raw: &RunConfig, cfg: &Resolved) -> Result<Vec<String>> {
    let dir = cfg.out.join("reproduce");
    cfg.write_to_dir(&dir)?;
    let seeds = cfg.seed..cfg.seed + cfg.eval.study_seeds as u64;

    let mut grid = Vec::new();
    for seed in seeds.clone() {
        let g = stage_config(raw, "grid", seed)?;
        let study = grid_study(&g)?;
        let sub = dir.join("grid").join(format!("seed{seed}"));
        study.heatmap_full.export(&sub, "value_full")?;
        study.heatmap_td.export(&sub, "value_td_only")?;
        study.recovery.profile.write_csv(fs::File::create(sub.join("profile.csv"))?)?;
        grid.push(study);
    }

    let reach = stage_config(raw, "reach", cfg.seed)?;
    let shift = if reach.eval.perturb0 > 0.0 { reach.eval.perturb0 } else { DEFAULT_SHIFT };
    let shift = shift_study(&reach, shift)?;

    let mut init = Vec::new();
    let mut push_rl = None;
    for seed in seeds {
        let mut p = stage_config(raw, "push", seed)?;
        let threshold = *p.rl.stop_at.get_or_insert(DEFAULT_INIT_THRESHOLD);
        let run = init_run(&p)?;
        let sub = dir.join("push");
        fs::create_dir_all(&sub)?;
        run.from_vins.write_csv(fs::File::create(sub.join(format!("curve_vins_seed{seed}.csv")))?)?;
        run.from_scratch.write_csv(fs::File::create(sub.join(format!("curve_scratch_seed{seed}.csv")))?)?;
        init.push(run);
        push_rl = Some((p.rl.clone(), threshold));
    }
    let (rl, init_threshold) = push_rl.unwrap_or((cfg.rl.clone(), DEFAULT_INIT_THRESHOLD));
    let summary = Summary {
        grid,
        shift: Some(shift),
        init,
        init_threshold,
        rl,
    }
    .render();
    fs::write(dir.join("summary.txt"), &summary)?;
    let mut lines: Vec<String> = summary.lines().map(str::to_string).collect();
    lines.push(format!("summary -> {}", dir.join("summary.txt").display()));
    Ok(lines)
}
