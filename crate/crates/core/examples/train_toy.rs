// Trains the toy model with a loss log and checkpoints, then resumes from
// the midpoint checkpoint and checks both runs end on identical weights.

use std::collections::BTreeSet;

use sigswap::codec::{ModelConfig, ModelState};
use sigswap::data::{hold_out_unseen, split_dataset, Scenario, ToySpec};
use sigswap::mci::enumerate_quads;
use sigswap::trainer::{checkpoint_path, read_loss_log, train_to_dir, TrainConfig, TrainState, LOG_FILE};

pub fn run_example() -> sigswap::Result<()> {
    let iterations = std::env::var("SIGSWAP_ITERS").ok().and_then(|v| v.parse().ok()).unwrap_or(200);
    let full = split_dataset(&ToySpec::default().generate()?, 0.8, 7)?;
    let (existing, _) = hold_out_unseen(&full, &BTreeSet::from([Scenario::new([2, 0])]))?;
    let quads = enumerate_quads(&existing.existing_scenarios(), &existing.schema);

    let config = TrainConfig {
        iterations,
        checkpoint_every: iterations / 2,
        log_every: (iterations / 10).max(1),
        seed: 1,
        ..Default::default()
    };
    let out = std::env::temp_dir().join("sigswap_train_toy");
    let fresh = TrainState::new(ModelState::init(ModelConfig::toy(2))?);
    let run = train_to_dir(&existing, &quads, fresh, &config, iterations, &out)?;
    for r in read_loss_log(&out.join(LOG_FILE))? {
        println!(
            "step {:>5}  recon {:.4}  exc {:.4}  gen {:.4}  disc {:.4}",
            r.step, r.losses.j_recon, r.losses.j_exc, r.losses.j_gen, r.losses.j_disc
        );
    }

    let half = TrainState::load(&checkpoint_path(&out, iterations / 2))?;
    let resumed = train_to_dir(&existing, &quads, half, &config, iterations, &out.join("resumed"))?;
    assert_eq!(resumed.state.model.params, run.state.model.params);
    println!("resumed run matches; final checkpoint at {}", run.final_checkpoint.display());
    Ok(())
}

fn main() -> sigswap::Result<()> {
    run_example()
}
