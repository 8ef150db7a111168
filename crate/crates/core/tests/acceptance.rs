//! Acceptance suite: one line per criterion, `PASS` or `FAIL`, with the
//! measured numbers. Set `ACCEPTANCE_STRICT=1` to exit non-zero on failure.
//! `ACCEPTANCE_ONLY=3,4` runs a subset.

use std::collections::{BTreeSet, VecDeque};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vinslab::bc::{BcBatch, BcPolicy};
use vinslab::cli::run_from;
use vinslab::config::{Resolved, RunConfig};
use vinslab::demos::{collect_demos, DemoDataset, DemoIndex};
use vinslab::env::{step_calls, EnvSpec, State};
use vinslab::eval::{
    conservative_audit, distance_profile_from, success_rate, value_heatmap, AuditReport, DistanceProfile,
    EvalReport, Expert, HeatmapGrid, Induced, LatticeSpec,
};
use vinslab::experiments::{censored_median, init_run, init_speedup_holds, shift_study};
use vinslab::rl::LearningCurve;
use vinslab::tensor::NetworkParams;
use vinslab::vins::{
    model_loss, ns_loss, td_loss, train_vins, Anchor, ModelBatch, NsBatch, TdBatch, VinsConfig, VinsState,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn out_dir(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn resolved(env: &str, seed: u64, sets: &[&str]) -> Resolved {
    let mut raw = RunConfig::default();
    raw.set(&format!("env={env}")).unwrap();
    raw.set(&format!("seed={seed}")).unwrap();
    for s in sets {
        raw.set(s).unwrap();
    }
    raw.resolve().unwrap()
}

// ---------------------------------------------------------------------------
// 1. Gradients against central finite differences.

/// `||a - f|| / max(||a||, ||f||)` over all parameters.
fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, f)| (a - f) * (a - f))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nf = numeric.iter().map(|f| f * f).sum::<f64>().sqrt();
    let scale = na.max(nf);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn central_differences(params: &NetworkParams, loss: impl Fn(&NetworkParams) -> f64) -> Vec<f64> {
    let flat = params.to_flat();
    let mut probe = params.clone();
    let mut grad = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        let h = 1e-6 * flat[i].abs().max(1.0);
        let mut x = flat.clone();
        x[i] = flat[i] + h;
        probe.set_flat(&x).unwrap();
        let up = loss(&probe);
        x[i] = flat[i] - h;
        probe.set_flat(&x).unwrap();
        let down = loss(&probe);
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

fn random_net(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> NetworkParams {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![inputs];
    for _ in 1..depth {
        sizes.push(rng.random_range(2..=8));
    }
    sizes.push(outputs);
    let norms: Vec<bool> = (0..depth)
        .map(|l| l + 1 < depth && rng.random_bool(0.5))
        .collect();
    let mut net = NetworkParams::init(&sizes, &norms, rng.random()).unwrap();
    // Move gains and biases away from their initial values so that every
    // parameter matters.
    let flat: Vec<f64> = net
        .to_flat()
        .iter()
        .map(|v| v + 0.3 * rng.random_range(-1.0..1.0))
        .collect();
    net.set_flat(&flat).unwrap();
    net
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn criterion_gradients() -> Verdict {
    const INSTANCES: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = [0.0f64; 4];
    for _ in 0..INSTANCES {
        let (d, k, n) = (rng.random_range(2..=6), rng.random_range(1..=3), rng.random_range(1..=6));

        let policy = BcPolicy {
            params: random_net(&mut rng, d, k),
            action_scale: 1.0,
        };
        let batch = BcBatch {
            states: random_matrix(&mut rng, n, d),
            actions: random_matrix(&mut rng, n, k),
        };
        let (_, g) = policy.loss(&batch).unwrap();
        let fd = central_differences(&policy.params, |p| {
            let q = BcPolicy {
                params: p.clone(),
                action_scale: 1.0,
            };
            q.loss(&batch).unwrap().0
        });
        worst[0] = worst[0].max(relative_error(&g.to_flat(), &fd));

        let value = random_net(&mut rng, d, 1);
        let target = random_net(&mut rng, d, 1);
        let td = TdBatch {
            states: random_matrix(&mut rng, n, d),
            next_states: random_matrix(&mut rng, n, d),
            rewards: Array1::from_elem(n, -1.0),
            terminal: (0..n).map(|_| rng.random_bool(0.3)).collect(),
        };
        let discount = rng.random_range(0.5..=1.0);
        let (_, g) = td_loss(&td, &value, &target, discount).unwrap();
        let fd = central_differences(&value, |v| td_loss(&td, v, &target, discount).unwrap().0);
        worst[1] = worst[1].max(relative_error(&g.to_flat(), &fd));

        // Frozen noise: the perturbed points are drawn once per instance.
        let anchors: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let perturbed: Vec<Vec<f64>> = anchors
            .iter()
            .map(|a| a.iter().map(|v| v + 0.2 * rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mask: Vec<bool> = (0..d).map(|i| i < 2).collect();
        let ns = NsBatch::new(anchors, perturbed, &mask).unwrap();
        let lambda = rng.random_range(0.5..20.0);
        let (_, g) = ns_loss(&ns, &value, &target, lambda).unwrap();
        let fd = central_differences(&value, |v| ns_loss(&ns, v, &target, lambda).unwrap().0);
        worst[2] = worst[2].max(relative_error(&g.to_flat(), &fd));

        // Residuals are kept well away from zero, where the norm has a kink.
        let m = rng.random_range(2..=4);
        let model = random_net(&mut rng, m + k, m);
        let inputs = random_matrix(&mut rng, n, m + k);
        let current = random_matrix(&mut rng, n, m);
        let pred = model.forward_batch(&inputs).unwrap() + &current;
        let shift = random_matrix(&mut rng, n, m).mapv(|v| if v >= 0.0 { v + 0.5 } else { v - 0.5 });
        let mb = ModelBatch {
            inputs,
            current,
            next: pred + shift,
        };
        let (_, g) = model_loss(&mb, &model).unwrap();
        let fd = central_differences(&model, |p| model_loss(&mb, p).unwrap().0);
        worst[3] = worst[3].max(relative_error(&g.to_flat(), &fd));
    }
    let pass = worst[0] <= 1e-4 && worst[1] <= 1e-4 && worst[2] <= 1e-4 && worst[3] <= 1e-3;
    verdict(
        pass,
        format!(
            "{INSTANCES} instances each; max rel err bc {:.1e}, td {:.1e}, ns {:.1e}, model {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

// ---------------------------------------------------------------------------
// 2-4. GridWorld.

/// Breadth-first steps-to-goal over the 4-connected grid.
fn bfs_steps(width: usize, height: usize, goal: (usize, usize)) -> Vec<Vec<i64>> {
    let mut d = vec![vec![-1i64; height]; width];
    d[goal.0][goal.1] = 0;
    let mut queue = VecDeque::from([goal]);
    while let Some((x, y)) = queue.pop_front() {
        let here = d[x][y];
        let mut visit = |nx: usize, ny: usize| {
            if d[nx][ny] < 0 {
                d[nx][ny] = here + 1;
                queue.push_back((nx, ny));
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < width {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < height {
            visit(x, y + 1);
        }
    }
    d
}

fn demo_cells(ds: &DemoDataset) -> BTreeSet<(i64, i64)> {
    ds.states().map(|s| (s[0] as i64, s[1] as i64)).collect()
}

/// Non-goal cells exactly one king move from the demonstrated cells.
fn starts_one_off(width: usize, height: usize, goal: (usize, usize), u: &BTreeSet<(i64, i64)>) -> Vec<State> {
    let mut out = Vec::new();
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            if (x as usize, y as usize) == goal || u.contains(&(x, y)) {
                continue;
            }
            let near = u.iter().any(|(cx, cy)| (cx - x).abs() <= 1 && (cy - y).abs() <= 1);
            if near {
                out.push(State(vec![x as f64, y as f64]));
            }
        }
    }
    out
}

struct GridSeed {
    mae_td_only: f64,
    audit_full: AuditReport,
    audit_td: AuditReport,
    profile: DistanceProfile,
    on_u_within_3: Vec<bool>,
    time_td_only: Duration,
    time_full_and_rollouts: Duration,
}

fn grid_seed(seed: u64, export: &std::path::Path) -> GridSeed {
    let cfg = resolved("grid", seed, &[]);
    let env = &cfg.env;
    let EnvSpec::Grid(g) = env else { unreachable!() };
    let ds = collect_demos(env, cfg.demos, seed).unwrap();
    let oracle = bfs_steps(g.width, g.height, g.goal);

    let t = Instant::now();
    let td_cfg = VinsConfig { mu: 0.0, ..cfg.vins.clone() };
    let (td_only, _) = train_vins(env, &ds, &td_cfg, seed).unwrap();
    let states: Vec<&State> = ds.states().collect();
    let mae_td_only = states
        .iter()
        .map(|s| {
            let v = td_only.value_at(&env.value_input(s)).unwrap();
            (v + oracle[s[0] as usize][s[1] as usize] as f64).abs()
        })
        .sum::<f64>()
        / states.len() as f64;
    let time_td_only = t.elapsed();

    let t = Instant::now();
    let (full, _) = train_vins(env, &ds, &cfg.vins, seed).unwrap();
    let u = demo_cells(&ds);
    let starts = starts_one_off(g.width, g.height, g.goal, &u);
    let policy = Induced {
        vins: &full,
        anchor: Anchor::Zero,
        cfg: &cfg.vins,
    };
    let profile = distance_profile_from(env, &policy, &DemoIndex::new(env, &ds), &starts, seed).unwrap();
    let time_full_and_rollouts = t.elapsed();

    // Re-entry is judged from the rollouts themselves, by replaying the
    // policy's deterministic greedy choices on the grid.
    let on_u_within_3 = starts
        .iter()
        .zip(&profile.traces)
        .map(|(start, trace)| {
            let mut s = start.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut hit = false;
            for _ in 0..3 {
                let a = vinslab::vins::induced_action(env, &s, &full, Anchor::Zero, &cfg.vins, &mut rng).unwrap();
                s = env.step(&s, &a).unwrap().next_state;
                if u.contains(&(s[0] as i64, s[1] as i64)) {
                    hit = true;
                    break;
                }
            }
            hit && trace.success
        })
        .collect();

    let audit = |v: &VinsState| {
        conservative_audit(env, &v.value, &ds, cfg.eval.probes, cfg.vins.rho, cfg.vins.sigma_floor, seed).unwrap()
    };
    let lattice = LatticeSpec::grid_cells(env).unwrap();
    let dir = export.join(format!("seed{seed}"));
    let maps: [(&str, HeatmapGrid); 2] = [
        ("value_full", value_heatmap(env, &full.value, &lattice, &ds).unwrap()),
        ("value_td_only", value_heatmap(env, &td_only.value, &lattice, &ds).unwrap()),
    ];
    for (stem, map) in &maps {
        map.export(&dir, stem).unwrap();
    }
    GridSeed {
        mae_td_only,
        audit_full: audit(&full),
        audit_td: audit(&td_only),
        profile,
        on_u_within_3,
        time_td_only,
        time_full_and_rollouts,
    }
}

fn grid_criteria(results: &[GridSeed], export: &std::path::Path) -> [Verdict; 3] {
    let r0 = &results[0];
    let c2 = verdict(
        r0.mae_td_only <= 0.5 && r0.time_td_only < Duration::from_secs(120),
        format!(
            "TD-only MAE vs BFS oracle on demo states {:.3} (<= 0.5), {:.1}s (< 120s)",
            r0.mae_td_only,
            r0.time_td_only.as_secs_f64()
        ),
    );

    let good = results
        .iter()
        .filter(|r| r.audit_full.fraction >= 0.9 && r.audit_full.fraction > r.audit_td.fraction)
        .count();
    let exported = ["value_full.pgm", "value_td_only.pgm", "value_full.csv", "value_td_only.csv"]
        .iter()
        .all(|f| export.join("seed0").join(f).exists());
    let fr: Vec<String> = results
        .iter()
        .map(|r| format!("{:.2}/{:.2}", r.audit_full.fraction, r.audit_td.fraction))
        .collect();
    let c3 = verdict(
        good >= 9 && exported,
        format!(
            "{good}/{} seeds with audit >= 0.9 and above TD-only (need 9); full/td {}; heatmaps exported: {exported}",
            results.len(),
            fr.join(" ")
        ),
    );

    let pooled: Vec<bool> = results.iter().flat_map(|r| r.on_u_within_3.iter().copied()).collect();
    let recovered = pooled.iter().filter(|b| **b).count() as f64 / pooled.len() as f64;
    let monotone = results.iter().filter(|r| p95_nonincreasing_after(&r.profile, 3)).count();
    let time: Duration = results.iter().map(|r| r.time_full_and_rollouts).sum();
    let c4 = verdict(
        recovered >= 0.95 && monotone == results.len() && time < Duration::from_secs(120),
        format!(
            "{:.3} of {} displaced starts back on U within 3 steps and at goal (>= 0.95); p95 non-increasing after step 3 in {monotone}/{} seeds; {:.1}s (< 120s)",
            recovered,
            pooled.len(),
            results.len(),
            time.as_secs_f64()
        ),
    );
    [c2, c3, c4]
}

/// 95th percentile (linear interpolation) of the distances at each step.
fn p95_nonincreasing_after(profile: &DistanceProfile, from: usize) -> bool {
    let horizon = profile.steps.len();
    let p95: Vec<f64> = (0..horizon)
        .map(|t| {
            let mut col: Vec<f64> = profile
                .traces
                .iter()
                .map(|tr| tr.distances[t.min(tr.distances.len() - 1)])
                .collect();
            col.sort_by(f64::total_cmp);
            let pos = 0.95 * (col.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            col[lo] + (col[hi] - col[lo]) * (pos - lo as f64)
        })
        .collect();
    p95[from..].windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

// ---------------------------------------------------------------------------
// 5. PointReach under start shift.

fn criterion_shift() -> Verdict {
    let t = Instant::now();
    let cfg = resolved("reach", 0, &["eval.trials=200", "eval.seeds=10"]);
    let s = shift_study(&cfg, 0.1).unwrap();
    let gap = s.vins_shifted.mean - s.bc_shifted.mean;
    let elapsed = t.elapsed();
    verdict(
        gap >= 0.05 && s.bc_clean.mean >= 0.95 && s.vins_clean.mean >= 0.95 && elapsed < Duration::from_secs(600),
        format!(
            "perturb0 0.1: vins {:.3} - bc {:.3} = {:.3} (>= 0.05); clean bc {:.3}, vins {:.3} (>= 0.95); {:.1}s (< 600s)",
            s.vins_shifted.mean,
            s.bc_shifted.mean,
            gap,
            s.bc_clean.mean,
            s.vins_clean.mean,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. PointPush fine-tuning from VINS versus from scratch.

/// Settings that fit ten paired runs into the time limit.
const PUSH_RL: &[&str] = &[
    "vins.iterations=10000",
    "rl.n1=500",
    "rl.n_inner=250",
    "rl.eval_trials=50",
    "rl.eval_every=2",
    "rl.budget=20000",
    "rl.stop_at=0.8",
];

fn steps_to(curve: &LearningCurve, threshold: f64) -> Option<u64> {
    curve.points.iter().find(|p| p.success_rate >= threshold).map(|p| p.env_steps)
}

fn criterion_init(export: &std::path::Path) -> Verdict {
    let t = Instant::now();
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut best = (0.0f64, 0.0f64);
    for seed in 0..10 {
        let cfg = resolved("push", seed, PUSH_RL);
        let run = init_run(&cfg).unwrap();
        for (name, curve) in [("vins", &run.from_vins), ("scratch", &run.from_scratch)] {
            curve
                .write_csv(std::fs::File::create(export.join(format!("curve_{name}_seed{seed}.csv"))).unwrap())
                .unwrap();
        }
        let peak = |c: &LearningCurve| c.points.iter().map(|p| p.success_rate).fold(0.0, f64::max);
        best = (best.0.max(peak(&run.from_vins)), best.1.max(peak(&run.from_scratch)));
        a.push(steps_to(&run.from_vins, 0.8));
        b.push(steps_to(&run.from_scratch, 0.8));
    }
    let (ma, mb) = (censored_median(&a), censored_median(&b));
    let rl = resolved("push", 0, PUSH_RL).rl;
    let elapsed = t.elapsed();
    let show = |m: Option<f64>| m.map_or(format!("> {}", rl.budget), |v| format!("{v}"));
    verdict(
        init_speedup_holds(ma, mb, &rl) && elapsed < Duration::from_secs(1200),
        format!(
            "median env steps to 80%: vins-init {}, scratch {} (need ratio <= 0.5); best success seen {:.2} / {:.2}; {:.1}s (< 1200s)",
            show(ma),
            show(mb),
            best.0,
            best.1,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. Infrastructure.

fn cli(out: &std::path::Path, sets: &[&str], command: &str) -> vinslab::Result<Vec<String>> {
    let mut args = vec!["vinslab".to_string(), "--set".into(), format!("out={}", out.display())];
    for s in sets {
        args.push("--set".into());
        args.push(s.to_string());
    }
    args.push(command.into());
    run_from(args)
}

fn same_tree(a: &std::path::Path, b: &std::path::Path, files: &[&str]) -> bool {
    files.iter().all(|f| {
        let (x, y) = (std::fs::read(a.join(f)), std::fs::read(b.join(f)));
        matches!((x, y), (Ok(x), Ok(y)) if x == y)
    })
}

fn criterion_infrastructure() -> Verdict {
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let dir = out_dir("infrastructure");

    for name in ["grid", "reach", "push"] {
        let env = EnvSpec::by_name(name).unwrap();
        let ds = collect_demos(&env, 5, 3).unwrap();
        let path = dir.join(format!("{name}_demos.csv"));
        ds.save(&path, &env).unwrap();
        let back = DemoDataset::load(&path, &env).unwrap();
        let exact = back.transitions() == ds.transitions();
        checks.push(("dataset round trip", exact));
    }

    let env = EnvSpec::push();
    let cfg = VinsConfig {
        iterations: 5,
        ..VinsConfig::for_env(&env)
    };
    let ds = collect_demos(&env, 3, 1).unwrap();
    let before = step_calls();
    let (state, _) = train_vins(&env, &ds, &cfg, 9).unwrap();
    checks.push(("train_vins takes no environment steps", step_calls() == before));
    state.save(dir.join("ckpt"), "test").unwrap();
    let back = VinsState::load(dir.join("ckpt"), &cfg).unwrap();
    checks.push((
        "checkpoint round trip",
        back.value == state.value && back.target == state.target && back.model == state.model,
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let report = EvalReport {
        mean: 0.0,
        stddev: 0.0,
        per_seed: (0..4).map(|_| rng.random::<f64>()).collect(),
        n_trials: 7,
    };
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let parsed = EvalReport::parse_csv(std::str::from_utf8(&buf).unwrap(), 7).unwrap();
    checks.push(("success CSV round trip", parsed.per_seed == report.per_seed));

    let heat = value_heatmap(&env, &state.value, &LatticeSpec::slice(5, vec![0.4, 0.5, 0.9, 0.3]), &ds).unwrap();
    let mut buf = Vec::new();
    heat.write_csv(&mut buf).unwrap();
    let parsed = HeatmapGrid::parse_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
    checks.push(("heatmap CSV round trip", parsed.values == heat.values && parsed.lattice == heat.lattice));

    let curve = LearningCurve {
        points: (0..5)
            .map(|i| vinslab::rl::CurvePoint {
                env_steps: i * 37,
                success_rate: rng.random(),
                stddev: rng.random(),
            })
            .collect(),
    };
    let mut buf = Vec::new();
    curve.write_csv(&mut buf).unwrap();
    checks.push((
        "curve CSV round trip",
        LearningCurve::parse_csv(std::str::from_utf8(&buf).unwrap()).unwrap() == curve,
    ));

    // Two runs of the same commands, then a third from the written config.
    let sets = ["env=reach", "seed=4", "demos.n=5", "vins.iterations=50", "bc.iterations=50"];
    let files = [
        "demos.csv",
        "bc/policy.params",
        "vins/value.params",
        "vins/target.params",
        "vins/model.params",
        "vins/config.txt",
    ];
    let (a, b, c) = (dir.join("run_a"), dir.join("run_b"), dir.join("run_c"));
    for out in [&a, &b] {
        for cmd in ["gen-demos", "train-bc", "train-vins"] {
            cli(out, &sets, cmd).unwrap();
        }
    }
    checks.push(("rerun is byte-identical", same_tree(&a, &b, &files[..5])));
    let written = std::fs::read_to_string(a.join("vins").join("config.txt")).unwrap();
    let other = std::fs::read_to_string(b.join("vins").join("config.txt")).unwrap();
    checks.push((
        "resolved configs agree apart from out",
        written.replace(&a.display().to_string(), "") == other.replace(&b.display().to_string(), ""),
    ));
    let cfg_path = dir.join("resolved.txt");
    std::fs::write(&cfg_path, written.replace(&a.display().to_string(), &c.display().to_string())).unwrap();
    for cmd in ["gen-demos", "train-bc", "train-vins"] {
        run_from(["vinslab", "--config", cfg_path.to_str().unwrap(), cmd]).unwrap();
    }
    checks.push((
        "rerun from resolved config is byte-identical",
        same_tree(&a, &c, &files[..5]),
    ));

    for name in ["grid", "reach"] {
        let env = EnvSpec::by_name(name).unwrap();
        let r = success_rate(&env, &Expert, 200, 3, 11).unwrap();
        checks.push(("expert success is 1.0", r.mean == 1.0 && r.stddev == 0.0));
    }

    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    verdict(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} checks passed", checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    )
}

// ---------------------------------------------------------------------------

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; none apply.
    let only: Option<BTreeSet<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |i: u32| only.as_ref().is_none_or(|o| o.contains(&i));
    let mut verdicts: Vec<(u32, &str, Verdict, Duration)> = Vec::new();
    let mut record = |i: u32, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        let line = format!(
            "[{}] {i}. {name}: {} ({:.1}s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
        println!("{line}");
        verdicts.push((i, name, v, t.elapsed()));
    };

    if wanted(1) {
        record(1, "gradient oracle", &mut criterion_gradients);
    }
    if wanted(2) || wanted(3) || wanted(4) {
        let export = out_dir("grid");
        let seeds: Vec<GridSeed> = (0..10).map(|s| grid_seed(s, &export)).collect();
        let [c2, c3, c4] = grid_criteria(&seeds, &export);
        for (i, name, v) in [
            (2, "tabular oracle equivalence", c2),
            (3, "conservative extrapolation audit", c3),
            (4, "self-correction from displaced starts", c4),
        ] {
            if wanted(i) {
                record(i, name, &mut || Verdict {
                    pass: v.pass,
                    detail: v.detail.clone(),
                });
            }
        }
    }
    if wanted(5) {
        record(5, "VINS beats BC under start shift", &mut criterion_shift);
    }
    if wanted(6) {
        let export = out_dir("push");
        record(6, "VINS initialization halves steps to 80%", &mut || criterion_init(&export));
    }
    if wanted(7) {
        record(7, "infrastructure invariants", &mut criterion_infrastructure);
    }

    let failed = verdicts.iter().filter(|(_, _, v, _)| !v.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        verdicts.len() - failed
    );
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
