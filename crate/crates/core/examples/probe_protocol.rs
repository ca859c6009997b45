// Probe classifiers trained on real data only versus existing data plus
// synthetic samples of the held-out scenario, both tested on real data.

use std::collections::BTreeSet;

use sigswap::codec::{ModelConfig, ModelState};
use sigswap::data::{hold_out_unseen, split_dataset, Scenario, Split, ToySpec};
use sigswap::evaluation::{probe_classify, ProbeConfig};
use sigswap::mci::enumerate_quads;
use sigswap::run::probe_sets;
use sigswap::synthesis::{synthesize_unseen, SynthesisRequest};
use sigswap::trainer::{train, TrainConfig};

pub fn run_example() -> sigswap::Result<()> {
    let iterations = std::env::var("SIGSWAP_ITERS").ok().and_then(|v| v.parse().ok()).unwrap_or(600);
    let target = Scenario::new([2, 0]);
    let full = split_dataset(&ToySpec::default().generate()?, 0.8, 7)?;
    let (existing, held) = hold_out_unseen(&full, &BTreeSet::from([target.clone()]))?;
    let quads = enumerate_quads(&existing.existing_scenarios(), &existing.schema);
    let config = TrainConfig {
        iterations,
        ..Default::default()
    };
    let (model, _) = train(&existing, &quads, ModelState::init(ModelConfig::toy(2))?, &config)?;

    let count = held.iter().filter(|s| s.split == Split::Train).count();
    let synthetic = synthesize_unseen(&model, &existing, &SynthesisRequest { target, count, seed: 0 })?;
    let synthetic_ds = sigswap::data::Dataset {
        samples: synthetic,
        unseen: BTreeSet::new(),
        ..existing.clone()
    };
    let held_ds = sigswap::data::Dataset {
        samples: held,
        unseen: BTreeSet::new(),
        ..existing.clone()
    };
    let (mixed_train, test) = probe_sets(&existing, Some(&synthetic_ds), Some(&held_ds));
    let real_train: Vec<_> = full.split_samples(Split::Train).collect();

    let probe = ProbeConfig {
        epochs: 60,
        ..Default::default()
    };
    for p in 0..2 {
        let real = probe_classify(&real_train, &test, p, 3, &probe)?;
        let mixed = probe_classify(&mixed_train, &test, p, 3, &probe)?;
        println!(
            "attribute {p}: real-trained {:.1}% / with synthetic {:.1}% (F1 {:.1} / {:.1})",
            real.accuracy, mixed.accuracy, real.f1, mixed.f1
        );
    }
    Ok(())
}

fn main() -> sigswap::Result<()> {
    run_example()
}
