// Segment swap test before and after training: swapping in a segment from a
// sample with the same category should leave the source nearly unchanged.

use sigswap::codec::{ModelConfig, ModelState};
use sigswap::data::{split_dataset, ToySpec};
use sigswap::evaluation::{swap_test, SwapTestConfig};
use sigswap::mci::enumerate_quads;
use sigswap::trainer::{train, TrainConfig};

pub fn run_example() -> sigswap::Result<()> {
    let iterations = std::env::var("SIGSWAP_ITERS").ok().and_then(|v| v.parse().ok()).unwrap_or(600);
    let ds = split_dataset(&ToySpec::default().generate()?, 0.8, 7)?;
    let quads = enumerate_quads(&ds.existing_scenarios(), &ds.schema);
    let untrained = ModelState::init(ModelConfig::toy(2))?;
    let config = TrainConfig {
        iterations,
        ..Default::default()
    };
    let (trained, _) = train(&ds, &quads, untrained.clone(), &config)?;

    let test = SwapTestConfig {
        permutations: 2000,
        ..Default::default()
    };
    for (label, model) in [("untrained", &untrained), ("trained", &trained)] {
        for k in 0..ds.schema.len() {
            let r = swap_test(model, &ds, k, &test)?;
            println!(
                "{label:>9} attribute {k}: same {:.2} dB, different {:.2} dB, p = {:.4}",
                r.same.psnr_mean, r.different.psnr_mean, r.p_value
            );
        }
    }
    Ok(())
}

fn main() -> sigswap::Result<()> {
    run_example()
}
