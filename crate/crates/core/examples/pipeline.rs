//! The command-line pipeline driven from code: every subcommand in order,
//! with small budgets, writing into one output directory.
//!
//! cargo run --example pipeline -- [out_dir]

use vinslab::cli::run_from;

fn main() -> vinslab::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/examples/pipeline".into());
    let sets = [
        format!("out={out}"),
        "env=reach".into(),
        "vins.iterations=2000".into(),
        "rl.budget=2000".into(),
        "eval.trials=50".into(),
    ];
    for cmd in ["gen-demos", "train-bc", "train-vins", "train-vins-rl", "eval", "heatmap", "audit"] {
        let mut args = vec!["vinslab".to_string()];
        for s in &sets {
            args.extend(["--set".into(), s.clone()]);
        }
        args.push(cmd.into());
        for line in run_from(args)? {
            println!("{cmd}: {line}");
        }
    }
    Ok(())
}
