//! Roll out the scripted expert on each task and save the demonstrations.
//!
//! cargo run --example gen_demos -- [out_dir]

use vinslab::demos::{collect_demos, DemoDataset};
use vinslab::env::EnvSpec;

fn main() -> vinslab::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/examples".into());
    std::fs::create_dir_all(&out)?;
    for env in [EnvSpec::grid(), EnvSpec::reach(), EnvSpec::push()] {
        let ds = collect_demos(&env, 20, 0)?;
        let path = std::path::Path::new(&out).join(format!("{}_demos.csv", env.name()));
        ds.save(&path, &env)?;
        let back = DemoDataset::load(&path, &env)?;
        let mean_len = ds.transitions().len() as f64 / ds.len() as f64;
        println!(
            "{:<5} {} trajectories, mean length {mean_len:.1}, spread {:?} -> {}",
            env.name(),
            back.len(),
            back.sigma().iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>(),
            path.display()
        );
    }
    Ok(())
}
