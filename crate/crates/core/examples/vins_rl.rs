//! Fine-tune VINS networks with online interaction and print the learning
//! curve. Demonstrations stay in the replay buffer throughout.

use vinslab::config::RunConfig;
use vinslab::demos::collect_demos;
use vinslab::rl::train_vins_rl;
use vinslab::vins::train_vins;

fn main() -> vinslab::Result<()> {
    let mut raw = RunConfig::parse("env = push\nseed = 0\n")?;
    for s in ["vins.iterations=5000", "rl.n1=500", "rl.n_inner=250", "rl.budget=5000", "rl.eval_trials=20"] {
        raw.set(s)?;
    }
    let cfg = raw.resolve()?;
    let ds = collect_demos(&cfg.env, cfg.demos, cfg.seed)?;
    let (init, _) = train_vins(&cfg.env, &ds, &cfg.vins, cfg.seed)?;
    let (_, curve) = train_vins_rl(&cfg.env, init, &ds, &cfg.vins, &cfg.rl, cfg.seed)?;
    for p in &curve.points {
        println!("{:>6} env steps: success {:.3} ± {:.3}", p.env_steps, p.success_rate, p.stddev);
    }
    Ok(())
}
