// Generates the 3x3 toy grid, splits it 8:2 per scenario, holds out one
// scenario, and round-trips the result through the on-disk format.

use std::collections::BTreeSet;

use sigswap::data::{hold_out_unseen, load_dataset, save_dataset, split_dataset, Scenario, Split, ToySpec};

pub fn run_example() -> sigswap::Result<()> {
    let spec = ToySpec::default();
    let full = split_dataset(&spec.generate()?, 0.8, 7)?;
    let held: BTreeSet<Scenario> = [Scenario::new([2, 0])].into();
    let (existing, ground_truth) = hold_out_unseen(&full, &held)?;

    let dir = std::env::temp_dir().join("sigswap_toy_dataset");
    save_dataset(&existing, &dir)?;
    let back = load_dataset(&dir)?;
    assert_eq!(back, existing);

    println!(
        "{} samples over {} scenarios ({} train / {} test), {} held out as {:?}",
        back.samples.len(),
        back.existing_scenarios().len(),
        back.split_samples(Split::Train).count(),
        back.split_samples(Split::Test).count(),
        ground_truth.len(),
        back.unseen,
    );
    println!("manifest written to {}", dir.display());
    Ok(())
}

fn main() -> sigswap::Result<()> {
    run_example()
}
