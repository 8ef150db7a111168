//! End-to-end studies. Each one trains what it needs from a resolved config
//! and returns raw measurements; judging them is left to the caller.

use std::fmt::Write as _;

use crate::bc::{train_bc, BcPolicy};
use crate::config::Resolved;
use crate::demos::{collect_demos, DemoDataset, DemoIndex};
use crate::env::{EnvSpec, State};
use crate::error::{Error, Result};
use crate::eval::{
    conservative_audit, distance_profile_from, success_rate_perturbed, value_heatmap, AuditReport,
    DistanceProfile, EvalReport, HeatmapGrid, Induced, LatticeSpec,
};
use crate::rl::{train_vins_rl, LearningCurve, RlConfig};
use crate::vins::{train_vins, Anchor, VinsConfig, VinsState};

/// Demonstrations, cloned policy and VINS networks trained from one config.
pub struct Fitted {
    pub demos: DemoDataset,
    pub bc: BcPolicy,
    pub vins: VinsState,
}

pub fn fit(cfg: &Resolved) -> Result<Fitted> {
    let demos = collect_demos(&cfg.env, cfg.demos, cfg.seed)?;
    let bc = train_bc(&cfg.env, &demos, &cfg.bc, cfg.seed)?.policy;
    let (vins, _) = train_vins(&cfg.env, &demos, &cfg.vins, cfg.seed)?;
    Ok(Fitted { demos, bc, vins })
}

/// Non-goal cells at infinity-norm distance exactly one from the nearest
/// demonstrated cell.
pub fn one_cell_off(env: &EnvSpec, ds: &DemoDataset) -> Result<Vec<State>> {
    let EnvSpec::Grid(g) = env else {
        return Err(Error::Invalid("one_cell_off needs the grid environment".into()));
    };
    let cells: Vec<(i64, i64)> = ds
        .states()
        .map(|s| (s[0].round() as i64, s[1].round() as i64))
        .collect();
    let mut starts = Vec::new();
    for y in 0..g.height as i64 {
        for x in 0..g.width as i64 {
            let d = cells
                .iter()
                .map(|(cx, cy)| (cx - x).abs().max((cy - y).abs()))
                .min()
                .unwrap_or(i64::MAX);
            let cell = State(vec![x as f64, y as f64]);
            if d == 1 && !env.is_goal_state(&cell) {
                starts.push(cell);
            }
        }
    }
    Ok(starts)
}

/// Rollouts of the induced policy from states just off the demonstrations.
pub struct Recovery {
    pub profile: DistanceProfile,
}

impl Recovery {
    pub fn starts(&self) -> usize {
        self.profile.traces.len()
    }

    /// Fraction of rollouts back on a demonstrated state within `steps`
    /// steps that also reach the goal.
    pub fn recovered(&self, steps: usize) -> f64 {
        let ok = self
            .profile
            .traces
            .iter()
            .filter(|t| t.success && t.first_return().is_some_and(|r| r <= steps))
            .count();
        ok as f64 / self.starts() as f64
    }

    /// Whether the 95th-percentile distance never rises after step `from`.
    pub fn p95_nonincreasing_after(&self, from: usize) -> bool {
        self.profile.steps[from.min(self.profile.steps.len())..]
            .windows(2)
            .all(|w| w[1].p95 <= w[0].p95)
    }
}

/// Full VINS against TD-only training on one grid seed.
pub struct GridStudy {
    pub demos: DemoDataset,
    pub full: VinsState,
    pub td_only: VinsState,
    pub audit_full: AuditReport,
    pub audit_td: AuditReport,
    pub heatmap_full: HeatmapGrid,
    pub heatmap_td: HeatmapGrid,
    pub recovery: Recovery,
}

pub fn grid_study(cfg: &Resolved) -> Result<GridStudy> {
    let env = &cfg.env;
    let demos = collect_demos(env, cfg.demos, cfg.seed)?;
    let td_cfg = VinsConfig { mu: 0.0, ..cfg.vins.clone() };
    let (full, _) = train_vins(env, &demos, &cfg.vins, cfg.seed)?;
    let (td_only, _) = train_vins(env, &demos, &td_cfg, cfg.seed)?;
    let audit = |v: &VinsState| {
        conservative_audit(env, &v.value, &demos, cfg.eval.probes, cfg.vins.rho, cfg.vins.sigma_floor, cfg.seed)
    };
    let lattice = LatticeSpec::grid_cells(env)?;
    let starts = one_cell_off(env, &demos)?;
    let policy = Induced {
        vins: &full,
        anchor: Anchor::Zero,
        cfg: &cfg.vins,
    };
    let profile = distance_profile_from(env, &policy, &DemoIndex::new(env, &demos), &starts, cfg.seed)?;
    Ok(GridStudy {
        audit_full: audit(&full)?,
        audit_td: audit(&td_only)?,
        heatmap_full: value_heatmap(env, &full.value, &lattice, &demos)?,
        heatmap_td: value_heatmap(env, &td_only.value, &lattice, &demos)?,
        recovery: Recovery { profile },
        demos,
        full,
        td_only,
    })
}

/// Cloned policy against the BC-anchored induced policy, on clean and
/// displaced starts.
pub struct ShiftStudy {
    pub perturb0: f64,
    pub bc_clean: EvalReport,
    pub vins_clean: EvalReport,
    pub bc_shifted: EvalReport,
    pub vins_shifted: EvalReport,
}

pub fn shift_study(cfg: &Resolved, perturb0: f64) -> Result<ShiftStudy> {
    let env = &cfg.env;
    let fitted = fit(cfg)?;
    let induced = Induced {
        vins: &fitted.vins,
        anchor: Anchor::Bc(&fitted.bc),
        cfg: &cfg.vins,
    };
    let (trials, seeds) = (cfg.eval.trials, cfg.eval.seeds);
    let eval_seed = cfg.seed.wrapping_mul(1_000_003);
    Ok(ShiftStudy {
        perturb0,
        bc_clean: success_rate_perturbed(env, &fitted.bc, trials, seeds, eval_seed, 0.0)?,
        vins_clean: success_rate_perturbed(env, &induced, trials, seeds, eval_seed, 0.0)?,
        bc_shifted: success_rate_perturbed(env, &fitted.bc, trials, seeds, eval_seed, perturb0)?,
        vins_shifted: success_rate_perturbed(env, &induced, trials, seeds, eval_seed, perturb0)?,
    })
}

/// Learning curves of fine-tuning from VINS and from scratch, one seed.
pub struct InitRun {
    pub seed: u64,
    pub from_vins: LearningCurve,
    pub from_scratch: LearningCurve,
}

pub fn init_run(cfg: &Resolved) -> Result<InitRun> {
    let env = &cfg.env;
    let demos = collect_demos(env, cfg.demos, cfg.seed)?;
    let (trained, _) = train_vins(env, &demos, &cfg.vins, cfg.seed)?;
    let fresh = VinsState::new(env, &cfg.vins, cfg.seed)?;
    let (_, from_vins) = train_vins_rl(env, trained, &demos, &cfg.vins, &cfg.rl, cfg.seed)?;
    let (_, from_scratch) = train_vins_rl(env, fresh, &demos, &cfg.vins, &cfg.rl, cfg.seed)?;
    Ok(InitRun {
        seed: cfg.seed,
        from_vins,
        from_scratch,
    })
}

/// Median of step counts where `None` (never reached) ranks above every
/// number; the result is `None` when the median falls on an unreached run.
pub fn censored_median(xs: &[Option<u64>]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v: Vec<Option<u64>> = xs.to_vec();
    v.sort_by_key(|x| x.unwrap_or(u64::MAX));
    let n = v.len();
    let (a, b) = (v[(n - 1) / 2], v[n / 2]);
    Some((a? as f64 + b? as f64) / 2.0)
}

/// Ratio test of the initialization study: the VINS median must be at most
/// half the scratch median. A scratch median beyond the budget counts as
/// the budget.
pub fn init_speedup_holds(vins_median: Option<f64>, scratch_median: Option<f64>, rl: &RlConfig) -> bool {
    match (vins_median, scratch_median) {
        (Some(v), Some(s)) => v <= 0.5 * s,
        (Some(v), None) => v <= 0.5 * rl.budget as f64,
        (None, _) => false,
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("never".to_string(), |v| v.to_string())
}

/// Everything `reproduce` measures, as a plain-text table.
pub struct Summary {
    pub grid: Vec<GridStudy>,
    pub shift: Option<ShiftStudy>,
    pub init: Vec<InitRun>,
    pub init_threshold: f64,
    pub rl: RlConfig,
}

impl Summary {
    pub fn render(&self) -> String {
        let mut s = String::new();
        if !self.grid.is_empty() {
            let _ = writeln!(s, "grid seed | audit full | audit td-only | recovered<=3 | p95 non-increasing");
            for (i, g) in self.grid.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{i} | {:.3} | {:.3} | {:.3} | {}",
                    g.audit_full.fraction,
                    g.audit_td.fraction,
                    g.recovery.recovered(3),
                    g.recovery.p95_nonincreasing_after(3)
                );
            }
        }
        if let Some(sh) = &self.shift {
            let _ = writeln!(s, "reach perturb0 | bc | vins");
            let _ = writeln!(s, "0 | {:.3} ± {:.3} | {:.3} ± {:.3}", sh.bc_clean.mean, sh.bc_clean.stddev, sh.vins_clean.mean, sh.vins_clean.stddev);
            let _ = writeln!(
                s,
                "{} | {:.3} ± {:.3} | {:.3} ± {:.3}",
                sh.perturb0, sh.bc_shifted.mean, sh.bc_shifted.stddev, sh.vins_shifted.mean, sh.vins_shifted.stddev
            );
        }
        if !self.init.is_empty() {
            let th = self.init_threshold;
            let _ = writeln!(s, "push seed | steps to {th} from vins | from scratch");
            let mut a = Vec::new();
            let mut b = Vec::new();
            for r in &self.init {
                let (x, y) = (r.from_vins.steps_to_reach(th), r.from_scratch.steps_to_reach(th));
                a.push(x);
                b.push(y);
                let _ = writeln!(s, "{} | {} | {}", r.seed, fmt_opt(x.map(|v| v as f64)), fmt_opt(y.map(|v| v as f64)));
            }
            let (ma, mb) = (censored_median(&a), censored_median(&b));
            let _ = writeln!(
                s,
                "median | {} | {} | halved: {}",
                fmt_opt(ma),
                fmt_opt(mb),
                init_speedup_holds(ma, mb, &self.rl)
            );
        }
        s
    }
}
