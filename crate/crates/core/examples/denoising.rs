// Passes noisy toy signals through the autoencoder and reports PSNR against
// the clean pattern before and after.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigswap::codec::{ModelConfig, ModelState};
use sigswap::data::{split_dataset, toy_clean_pattern, Sample, Signal, Split, ToySpec};
use sigswap::evaluation::psnr;
use sigswap::mci::enumerate_quads;
use sigswap::synthesis::denoise;
use sigswap::trainer::{train, TrainConfig};

pub fn run_example() -> sigswap::Result<()> {
    let iterations = std::env::var("SIGSWAP_ITERS").ok().and_then(|v| v.parse().ok()).unwrap_or(600);
    let ds = split_dataset(&ToySpec::default().generate()?, 0.8, 7)?;
    let quads = enumerate_quads(&ds.existing_scenarios(), &ds.schema);
    let config = TrainConfig {
        iterations,
        ..Default::default()
    };
    let (model, _) = train(&ds, &quads, ModelState::init(ModelConfig::toy(2))?, &config)?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for s in ds.split_samples(Split::Test).take(6) {
        let clean = toy_clean_pattern(&ds.schema, 16, 16, &s.scenario)?.to_f64();
        let noisy: Vec<f64> = clean.iter().map(|v| v + rng.random_range(-0.1..=0.1)).collect();
        let input = Sample {
            signal: Signal::from_f64(16, 16, &noisy)?,
            ..s.clone()
        };
        let out = denoise(&model, &input)?;
        println!(
            "{}  noisy {:.2} dB -> denoised {:.2} dB",
            s.id,
            psnr(&input.signal.to_f64(), &clean)?,
            psnr(&out.signal.to_f64(), &clean)?
        );
    }
    Ok(())
}

fn main() -> sigswap::Result<()> {
    run_example()
}
