// Lists the exchange quads of a grid with one missing cell and the donor
// plans that can compose the missing cell.

use std::collections::BTreeSet;

use sigswap::data::{AttributeSchema, Scenario};
use sigswap::mci::{enumerate_quads, plan_unseen_references};

pub fn run_example() -> sigswap::Result<()> {
    let schema = AttributeSchema::from_sizes(&[3, 3])?;
    let target = Scenario::new([2, 0]);
    let existing: BTreeSet<Scenario> = schema.all_scenarios().into_iter().filter(|y| *y != target).collect();

    let quads = enumerate_quads(&existing, &schema);
    println!("{} quads over {} scenarios", quads.len(), existing.len());
    for q in &quads {
        let members: Vec<String> = q.members.iter().map(|m| m.to_string()).collect();
        println!("  varying {:?}: {}", q.varying, members.join(" "));
    }

    let plans = plan_unseen_references(&existing, &target, &schema);
    println!("{} plans compose {target}", plans.len());
    for p in plans.iter().take(4) {
        println!("  {} with segment {} from {}", p.source, p.attribute, p.partner);
    }
    Ok(())
}

fn main() -> sigswap::Result<()> {
    run_example()
}
