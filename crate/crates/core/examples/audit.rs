//! Probe states near the demonstrations and count how often the value drops
//! below that of the closest demonstrated state.

use vinslab::config::RunConfig;
use vinslab::demos::collect_demos;
use vinslab::eval::conservative_audit;
use vinslab::vins::{train_vins, VinsConfig};

fn main() -> vinslab::Result<()> {
    for env in ["grid", "reach"] {
        let cfg = RunConfig::parse(&format!("env = {env}\n"))?.resolve()?;
        let ds = collect_demos(&cfg.env, cfg.demos, 0)?;
        for mu in [cfg.vins.mu, 0.0] {
            let vcfg = VinsConfig { mu, ..cfg.vins.clone() };
            let (vins, _) = train_vins(&cfg.env, &ds, &vcfg, 0)?;
            let r = conservative_audit(&cfg.env, &vins.value, &ds, cfg.eval.probes, vcfg.rho, vcfg.sigma_floor, 0)?;
            println!(
                "{env:<5} mu {mu:<4}: {:.3} of {} probes below their projection, mean slope {:.2} (lambda {})",
                r.fraction, r.n_probes, r.mean_margin, vcfg.lambda
            );
        }
    }
    Ok(())
}
