// Composes a held-out scenario from existing donors and compares it with
// the noise-free pattern of that scenario.

use std::collections::BTreeSet;

use sigswap::codec::{ModelConfig, ModelState};
use sigswap::data::{hold_out_unseen, split_dataset, toy_clean_pattern, Scenario, Split, ToySpec};
use sigswap::evaluation::{psnr, ssim};
use sigswap::mci::enumerate_quads;
use sigswap::synthesis::{synthesize_unseen, SynthesisRequest};
use sigswap::trainer::{train, TrainConfig};

pub fn run_example() -> sigswap::Result<()> {
    let iterations = std::env::var("SIGSWAP_ITERS").ok().and_then(|v| v.parse().ok()).unwrap_or(600);
    let target = Scenario::new([2, 0]);
    let full = split_dataset(&ToySpec::default().generate()?, 0.8, 7)?;
    let (existing, _) = hold_out_unseen(&full, &BTreeSet::from([target.clone()]))?;
    let quads = enumerate_quads(&existing.existing_scenarios(), &existing.schema);
    let config = TrainConfig {
        iterations,
        ..Default::default()
    };
    let (model, _) = train(&existing, &quads, ModelState::init(ModelConfig::toy(2))?, &config)?;

    let request = SynthesisRequest {
        target: target.clone(),
        count: 8,
        seed: 0,
    };
    let synthetic = synthesize_unseen(&model, &existing, &request)?;
    let clean = toy_clean_pattern(&existing.schema, 16, 16, &target)?.to_f64();

    let train_set: Vec<_> = existing.split_samples(Split::Train).collect();
    let mut mean = vec![0.0; 16 * 16];
    for s in &train_set {
        for (m, v) in mean.iter_mut().zip(s.signal.data()) {
            *m += f64::from(*v) / train_set.len() as f64;
        }
    }
    for s in &synthetic {
        let x = s.signal.to_f64();
        println!("{}  psnr {:6.2} dB  ssim {:.3}", s.id, psnr(&x, &clean)?, ssim(&x, &clean, 16, 16)?);
    }
    println!("training-mean baseline: psnr {:.2} dB", psnr(&mean, &clean)?);
    Ok(())
}

fn main() -> sigswap::Result<()> {
    run_example()
}
