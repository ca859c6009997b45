// Augments a seen scenario by exchanging segments between pairs of its own
// samples.

use sigswap::codec::{ModelConfig, ModelState};
use sigswap::data::{split_dataset, Scenario, ToySpec};
use sigswap::evaluation::psnr;
use sigswap::mci::enumerate_quads;
use sigswap::synthesis::augment_seen;
use sigswap::trainer::{train, TrainConfig};

pub fn run_example() -> sigswap::Result<()> {
    let iterations = std::env::var("SIGSWAP_ITERS").ok().and_then(|v| v.parse().ok()).unwrap_or(400);
    let ds = split_dataset(&ToySpec::default().generate()?, 0.8, 7)?;
    let quads = enumerate_quads(&ds.existing_scenarios(), &ds.schema);
    let config = TrainConfig {
        iterations,
        ..Default::default()
    };
    let (model, _) = train(&ds, &quads, ModelState::init(ModelConfig::toy(2))?, &config)?;

    let scenario = Scenario::new([1, 2]);
    let extra = augment_seen(&model, &ds, &scenario, 6, 3)?;
    let real: Vec<Vec<f64>> = ds.samples_of(&scenario).map(|s| s.signal.to_f64()).collect();
    for s in &extra {
        let x = s.signal.to_f64();
        let nearest = real
            .iter()
            .map(|r| psnr(&x, r))
            .collect::<sigswap::Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        println!("{} {}  nearest real sample {:.2} dB", s.id, s.scenario, nearest);
    }
    Ok(())
}

fn main() -> sigswap::Result<()> {
    run_example()
}
