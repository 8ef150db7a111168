//! Export value heatmaps (CSV and PGM) for a grid run with and without the
//! negative-sampling term.
//!
//! cargo run --example heatmap -- [out_dir]

use vinslab::config::RunConfig;
use vinslab::demos::collect_demos;
use vinslab::eval::{value_heatmap, LatticeSpec};
use vinslab::vins::{train_vins, VinsConfig};

fn main() -> vinslab::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/examples/heatmap".into());
    let cfg = RunConfig::parse("env = grid\n")?.resolve()?;
    let ds = collect_demos(&cfg.env, cfg.demos, 0)?;
    let lattice = LatticeSpec::grid_cells(&cfg.env)?;
    for (stem, mu) in [("with_ns", cfg.vins.mu), ("td_only", 0.0)] {
        let vcfg = VinsConfig { mu, ..cfg.vins.clone() };
        let (vins, _) = train_vins(&cfg.env, &ds, &vcfg, 0)?;
        let map = value_heatmap(&cfg.env, &vins.value, &lattice, &ds)?;
        map.export(&out, stem)?;
        println!("{stem}: {out}/{stem}.pgm");
    }
    Ok(())
}
