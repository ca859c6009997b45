// Runs every pipeline command in sequence through the same entry point the
// `sigswap` binary uses.

use sigswap::run::{execute, Command, RunConfig};

pub fn run_example() -> sigswap::Result<()> {
    let root = std::env::temp_dir().join("sigswap_cli_pipeline");
    let base = RunConfig::default().with_overrides(&[
        "targets=[[2,0]]",
        "train.iterations=100",
        "train.checkpoint_every=0",
        "probe.seeds=[0]",
        "probe.config.epochs=20",
        "eval.swap.permutations=500",
    ])?;
    let at = |sub: &str| root.join(sub);
    let steps: Vec<(Command, RunConfig)> = vec![
        (Command::Toygen, RunConfig { output: at("toygen"), ..base.clone() }),
        (Command::Select, RunConfig { output: at("select"), dataset: Some(at("toygen/dataset")), ..base.clone() }),
        (Command::Train, RunConfig { output: at("train"), dataset: Some(at("toygen/dataset")), ..base.clone() }),
    ];
    let trained = RunConfig {
        dataset: Some(at("toygen/dataset")),
        checkpoint: Some(at("train/final")),
        ground_truth: Some(at("toygen/ground_truth")),
        ..base.clone()
    };
    let later: Vec<(Command, RunConfig)> = vec![
        (Command::Synth, RunConfig { output: at("synth"), ..trained.clone() }),
        (Command::Augment, RunConfig { output: at("augment"), ..trained.clone() }),
        (Command::Denoise, RunConfig { output: at("denoise"), ..trained.clone() }),
        (Command::Eval, RunConfig { output: at("eval"), synthetic: Some(at("synth/synthetic")), ..trained.clone() }),
        (Command::Probe, RunConfig { output: at("probe"), synthetic: Some(at("synth/synthetic")), ..trained }),
    ];
    for (command, config) in steps.into_iter().chain(later) {
        let summary = execute(command, &config)?;
        println!("{command:>8}: {summary}");
    }
    println!("artifacts under {}", root.display());
    Ok(())
}

fn main() -> sigswap::Result<()> {
    run_example()
}
