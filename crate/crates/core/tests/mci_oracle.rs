mod common;

use std::collections::BTreeSet;

use common::{brute_force_quads, mci_oracle_mismatch, oracle_grids};
use proptest::prelude::*;
use sigswap::data::{AttributeSchema, Scenario};
use sigswap::mci::{enumerate_quads, is_valid_quad, pair_type, PairType};

#[test]
fn enumeration_matches_brute_force_on_small_grids() {
    for sizes in oracle_grids() {
        if let Some(m) = mci_oracle_mismatch(&sizes) {
            panic!("{m}");
        }
    }
}

#[test]
fn full_3x3_grid_has_nine_quads() {
    let schema = AttributeSchema::from_sizes(&[3, 3]).unwrap();
    let all: BTreeSet<Scenario> = schema.all_scenarios().into_iter().collect();
    assert_eq!(enumerate_quads(&all, &schema).len(), 9);
    let mut held = all.clone();
    held.remove(&Scenario::new([2, 0]));
    assert_eq!(enumerate_quads(&held, &schema).len(), 5);
}

fn subset_strategy() -> impl Strategy<Value = (Vec<usize>, BTreeSet<Scenario>)> {
    prop::collection::vec(2usize..=4, 2..=3).prop_flat_map(|sizes| {
        let schema = AttributeSchema::from_sizes(&sizes).unwrap();
        let all = schema.all_scenarios();
        let n = all.len();
        (Just(sizes), prop::collection::vec(any::<bool>(), n)).prop_map(move |(sizes, keep)| {
            let set = all.iter().zip(keep).filter(|(_, k)| *k).map(|(y, _)| y.clone()).collect();
            (sizes, set)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_subsets_match_brute_force((sizes, set) in subset_strategy()) {
        let schema = AttributeSchema::from_sizes(&sizes).unwrap();
        let quads = enumerate_quads(&set, &schema);
        let got: BTreeSet<BTreeSet<Scenario>> = quads.iter().map(|q| q.members.iter().cloned().collect()).collect();
        prop_assert_eq!(got.len(), quads.len(), "duplicate quads");
        prop_assert_eq!(got, brute_force_quads(&set, sizes.len()));
    }

    #[test]
    fn enumerated_quads_have_the_role_structure((sizes, set) in subset_strategy()) {
        let schema = AttributeSchema::from_sizes(&sizes).unwrap();
        for q in enumerate_quads(&set, &schema) {
            prop_assert!(q.members.iter().all(|y| set.contains(y)));
            for (i, j, p) in q.adjacent_pairs() {
                let t = pair_type(&q.members[i], &q.members[j]).unwrap();
                prop_assert_eq!(t, PairType::Adjacent);
                prop_assert_eq!(q.members[i].get(p), q.members[j].get(p));
            }
            for (i, j) in q.diagonal_pairs() {
                prop_assert_eq!(pair_type(&q.members[i], &q.members[j]).unwrap(), PairType::Diagonal);
            }
            let [a, b, c, d] = q.members.clone();
            prop_assert!(is_valid_quad(&a, &b, &c, &d, &schema));
        }
    }
}
