use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Sample, Scenario, Split};
use crate::error::{Error, Result};
use crate::mci;

/// Train share of every scenario stratum (8:2).
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// Tags samples train/test within each scenario stratum.
///
/// Each stratum of `n` samples gets `floor(fraction * n)` train samples,
/// bounded to `[1, n - 1]` so neither side of a stratum is empty.
pub fn split_dataset(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<Dataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut strata: BTreeMap<&Scenario, Vec<usize>> = BTreeMap::new();
    for (i, s) in ds.samples.iter().enumerate() {
        strata.entry(&s.scenario).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ds.clone();
    for (scenario, mut idx) in strata {
        let n = idx.len();
        if n < 2 {
            return Err(Error::Stratification(format!(
                "scenario {scenario} has {n} sample(s); at least 2 are needed to split"
            )));
        }
        let n_train = ((train_fraction * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
        idx.shuffle(&mut rng);
        for (k, &i) in idx.iter().enumerate() {
            out.samples[i].split = if k < n_train { Split::Train } else { Split::Test };
        }
    }
    Ok(out)
}

/// Removes every sample of the target scenarios and returns them separately.
///
/// The returned dataset records the targets as unseen; the removed samples are
/// evaluation ground truth only.
pub fn hold_out_unseen(ds: &Dataset, targets: &BTreeSet<Scenario>) -> Result<(Dataset, Vec<Sample>)> {
    if targets.is_empty() {
        return Err(Error::Argument("no scenarios to hold out".into()));
    }
    for t in targets {
        ds.schema.check(t)?;
    }
    let (ground_truth, kept): (Vec<Sample>, Vec<Sample>) = ds
        .samples
        .iter()
        .cloned()
        .partition(|s| targets.contains(&s.scenario));
    let mut unseen = ds.unseen.clone();
    unseen.extend(targets.iter().cloned());
    let existing = Dataset {
        schema: ds.schema.clone(),
        height: ds.height,
        width: ds.width,
        samples: kept,
        unseen,
    };

    let scenarios = existing.existing_scenarios();
    if mci::enumerate_quads(&scenarios, &existing.schema).is_empty() {
        return Err(Error::Infeasible(
            "no complete exchange quad remains after holding out the targets".into(),
        ));
    }
    for t in targets {
        if mci::plan_unseen_references(&scenarios, t, &existing.schema).is_empty() {
            let missing: Vec<String> = mci::missing_categories(&scenarios, t)
                .iter()
                .map(|(p, c)| format!("attribute {p} (`{}`) category {c}", existing.schema.attributes[*p].name))
                .collect();
            let why = if missing.is_empty() {
                "no diagonal donor pair remains".to_string()
            } else {
                format!("no remaining data has {}", missing.join(", "))
            };
            return Err(Error::Infeasible(format!(
                "held-out scenario {t} cannot be composed: {why}"
            )));
        }
    }
    Ok((existing, ground_truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_toy_dataset, AttributeSchema};

    fn toy(per: usize) -> Dataset {
        let schema = AttributeSchema::from_sizes(&[3, 3]).unwrap();
        generate_toy_dataset(&schema, 16, 16, per, 0.0, 1).unwrap()
    }

    #[test]
    fn eight_two_split_per_stratum() {
        let ds = split_dataset(&toy(10), DEFAULT_TRAIN_FRACTION, 5).unwrap();
        for y in ds.schema.all_scenarios() {
            let train = ds.samples_of(&y).filter(|s| s.split == Split::Train).count();
            let test = ds.samples_of(&y).filter(|s| s.split == Split::Test).count();
            assert_eq!((train, test), (8, 2));
        }
    }

    #[test]
    fn half_split_of_two() {
        let ds = split_dataset(&toy(2), 0.5, 0).unwrap();
        let train = ds.split_samples(Split::Train).count();
        assert_eq!(train, 9);
        assert_eq!(ds.split_samples(Split::Test).count(), 9);
    }

    #[test]
    fn split_is_deterministic_partition() {
        let base = toy(10);
        let a = split_dataset(&base, 0.8, 11).unwrap();
        let b = split_dataset(&base, 0.8, 11).unwrap();
        assert_eq!(a, b);
        let ids: Vec<_> = a.samples.iter().map(|s| &s.id).collect();
        let base_ids: Vec<_> = base.samples.iter().map(|s| &s.id).collect();
        assert_eq!(ids, base_ids);
    }

    #[test]
    fn singleton_stratum_is_rejected() {
        assert!(matches!(
            split_dataset(&toy(1), 0.8, 0),
            Err(Error::Stratification(_))
        ));
        assert!(matches!(split_dataset(&toy(4), 1.0, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn hold_out_single_cell() {
        let target: BTreeSet<_> = [Scenario::new([2, 0])].into();
        let (existing, gt) = hold_out_unseen(&toy(10), &target).unwrap();
        assert_eq!(existing.existing_scenarios().len(), 8);
        assert_eq!(gt.len(), 10);
        assert!(gt.iter().all(|s| s.scenario == Scenario::new([2, 0])));
        assert!(existing.unseen.contains(&Scenario::new([2, 0])));
        existing.validate().unwrap();
    }

    #[test]
    fn hold_out_rejects_empty_and_infeasible() {
        assert!(matches!(
            hold_out_unseen(&toy(2), &BTreeSet::new()),
            Err(Error::Argument(_))
        ));
        // Removing a whole category of attribute 0 leaves no donor for it.
        let column: BTreeSet<_> = (0..3).map(|c| Scenario::new([2, c])).collect();
        assert!(matches!(
            hold_out_unseen(&toy(2), &column),
            Err(Error::Infeasible(_))
        ));
    }
}
