//! Clone the reach expert and watch it degrade when the start state is
//! pushed away from the demonstrations.

use vinslab::bc::{train_bc, BcConfig};
use vinslab::demos::collect_demos;
use vinslab::env::EnvSpec;
use vinslab::eval::success_rate_perturbed;

fn main() -> vinslab::Result<()> {
    let env = EnvSpec::reach();
    let ds = collect_demos(&env, 40, 1)?;
    let trained = train_bc(&env, &ds, &BcConfig::default(), 1)?;
    println!(
        "loss {:.4} -> {:.4}",
        trained.losses.first().unwrap_or(&f64::NAN),
        trained.losses.last().unwrap_or(&f64::NAN)
    );
    for perturb0 in [0.0, 0.1, 0.2, 0.3] {
        let r = success_rate_perturbed(&env, &trained.policy, 100, 3, 7, perturb0)?;
        println!("perturb0 {perturb0:.1}: success {:.3} ± {:.3}", r.mean, r.stddev);
    }
    Ok(())
}
