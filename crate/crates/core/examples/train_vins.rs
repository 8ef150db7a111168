//! Fit a value function and dynamics model on grid demonstrations, without
//! touching the environment, and print the learned values cell by cell.

use vinslab::config::RunConfig;
use vinslab::demos::collect_demos;
use vinslab::env::{step_calls, EnvSpec, State};
use vinslab::vins::train_vins;

fn main() -> vinslab::Result<()> {
    let cfg = RunConfig::parse("env = grid\n")?.resolve()?;
    let env = &cfg.env;
    let ds = collect_demos(env, cfg.demos, 0)?;

    let before = step_calls();
    let (vins, log) = train_vins(env, &ds, &cfg.vins, 0)?;
    assert_eq!(step_calls(), before);
    println!(
        "{} iterations, final td {:.4}, ns {:.4}",
        vins.iteration,
        log.td.last().unwrap_or(&f64::NAN),
        log.ns.last().unwrap_or(&f64::NAN)
    );

    let EnvSpec::Grid(g) = env else { unreachable!() };
    let demo: Vec<(usize, usize)> = ds.states().map(|s| (s[0] as usize, s[1] as usize)).collect();
    for y in (0..g.height).rev() {
        let row: Vec<String> = (0..g.width)
            .map(|x| {
                let v = vins.value_at(&env.value_input(&State(vec![x as f64, y as f64]))).unwrap();
                let mark = if demo.contains(&(x, y)) { '*' } else { ' ' };
                format!("{v:6.1}{mark}")
            })
            .collect();
        println!("{}", row.join(""));
    }
    println!("(* = demonstrated cell)");
    Ok(())
}
