//! Compare the cloned policy with the VINS-induced policy (random shooting
//! around the cloned action) on clean and displaced starts.

use vinslab::config::RunConfig;
use vinslab::eval::{success_rate_perturbed, Induced};
use vinslab::experiments::fit;
use vinslab::vins::Anchor;

fn main() -> vinslab::Result<()> {
    let cfg = RunConfig::parse("env = reach\nseed = 3\n")?.resolve()?;
    let fitted = fit(&cfg)?;
    for (name, anchor) in [("bc anchor", Anchor::Bc(&fitted.bc)), ("zero anchor", Anchor::Zero)] {
        let induced = Induced {
            vins: &fitted.vins,
            anchor,
            cfg: &cfg.vins,
        };
        for perturb0 in [0.0, 0.2] {
            let bc = success_rate_perturbed(&cfg.env, &fitted.bc, 100, 3, 11, perturb0)?;
            let vi = success_rate_perturbed(&cfg.env, &induced, 100, 3, 11, perturb0)?;
            println!("{name:<11} perturb0 {perturb0:.1}: bc {:.3}, induced {:.3}", bc.mean, vi.mean);
        }
    }
    Ok(())
}
