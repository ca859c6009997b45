mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use sigswap::codec::{exchange, LatentCode};
use sigswap::data::{generate_toy_dataset, load_dataset, save_dataset, split_dataset, AttributeSchema, Sample, Scenario, Split};
use sigswap::evaluation::{psnr, ssim};
use sigswap::objectives::{loss_exc, loss_recon, total_loss, LossComponents, LossWeights};

fn partition_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..6, 2..5)
}

fn code_pair() -> impl Strategy<Value = (LatentCode, LatentCode)> {
    partition_strategy().prop_flat_map(|part| {
        let d: usize = part.iter().sum();
        let vals = prop::collection::vec(-10.0f64..10.0, d);
        (vals.clone(), vals).prop_map(move |(a, b)| {
            (LatentCode::new(a, part.clone()).unwrap(), LatentCode::new(b, part.clone()).unwrap())
        })
    })
}

fn image(h: usize, w: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, h * w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exchange_moves_exactly_one_segment((a, b) in code_pair(), p_seed in 0usize..16) {
        let p = p_seed % a.partition().len();
        let (x, y) = exchange(&a, &b, p).unwrap();
        for q in 0..a.partition().len() {
            if q == p {
                prop_assert_eq!(x.segment(q), b.segment(q));
                prop_assert_eq!(y.segment(q), a.segment(q));
            } else {
                prop_assert_eq!(x.segment(q), a.segment(q));
                prop_assert_eq!(y.segment(q), b.segment(q));
            }
        }
    }

    #[test]
    fn exchange_is_an_involution((a, b) in code_pair(), p_seed in 0usize..16) {
        let p = p_seed % a.partition().len();
        let (x, y) = exchange(&a, &b, p).unwrap();
        let (a2, b2) = exchange(&x, &y, p).unwrap();
        prop_assert_eq!(a2, a.clone());
        prop_assert_eq!(b2, b);
        let (s, t) = exchange(&a, &a, p).unwrap();
        prop_assert_eq!(&s, &a);
        prop_assert_eq!(&t, &a);
    }

    #[test]
    fn exchange_rejects_bad_attribute((a, b) in code_pair()) {
        prop_assert!(exchange(&a, &b, a.partition().len()).is_err());
    }

    #[test]
    fn psnr_is_symmetric_and_infinite_on_equal(x in image(4, 4), y in image(4, 4)) {
        let f = psnr(&x, &y).unwrap();
        let g = psnr(&y, &x).unwrap();
        prop_assert!(f == g || (f.is_infinite() && g.is_infinite()));
        prop_assert!(psnr(&x, &x).unwrap().is_infinite());
    }

    #[test]
    fn ssim_is_symmetric_and_one_on_equal(x in image(12, 12), y in image(12, 12)) {
        let f = ssim(&x, &y, 12, 12).unwrap();
        let g = ssim(&y, &x, 12, 12).unwrap();
        prop_assert!((f - g).abs() < 1e-12);
        prop_assert!(f <= 1.0 + 1e-12);
        prop_assert!((ssim(&x, &x, 12, 12).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn total_loss_is_linear_in_components(
        c in prop::array::uniform5(0.0f64..10.0),
        w in (0.01f64..5.0, 0.01f64..5.0, 0.0f64..2.0, 0.0f64..2.0),
    ) {
        let comps = LossComponents { recon: c[0], exc: c[1], exc_gen: c[2], cyc: c[3], adv: c[4] };
        let weights = LossWeights { alpha: w.0, beta: w.1, gamma: w.2, lambda: w.3 };
        let want = c[0] + w.0 * c[1] + w.1 * (c[2] + w.2 * c[3] + w.3 * c[4]);
        let got = total_loss(&comps, &weights).unwrap();
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn split_partitions_every_stratum(
        sizes in prop::collection::vec(2usize..4, 2..=3),
        per in 2usize..7,
        frac in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let schema = AttributeSchema::from_sizes(&sizes).unwrap();
        let ds = generate_toy_dataset(&schema, 8, 8, per, 0.1, seed).unwrap();
        let split = split_dataset(&ds, frac, seed).unwrap();
        prop_assert_eq!(split.samples.len(), ds.samples.len());
        let ids: BTreeSet<&str> = split.samples.iter().map(|s| s.id.as_str()).collect();
        prop_assert_eq!(ids.len(), ds.samples.len());
        for y in schema.all_scenarios() {
            let members: Vec<&Sample> = split.samples_of(&y).collect();
            let train = members.iter().filter(|s| s.split == Split::Train).count();
            let want = ((frac * per as f64 + 1e-9).floor() as usize).clamp(1, per - 1);
            prop_assert_eq!(train, want);
            prop_assert_eq!(members.len() - train, per - want);
        }
        prop_assert_eq!(split_dataset(&ds, frac, seed).unwrap(), split);
    }

    #[test]
    fn manifest_round_trips(
        sizes in prop::collection::vec(2usize..4, 2..=3),
        per in 2usize..4,
        seed in any::<u64>(),
    ) {
        let schema = AttributeSchema::from_sizes(&sizes).unwrap();
        let ds = split_dataset(&generate_toy_dataset(&schema, 9, 8, per, 0.2, seed).unwrap(), 0.5, seed).unwrap();
        let mut ds = ds;
        let target = Scenario::new(vec![0; sizes.len()]);
        ds.samples.retain(|s| s.scenario != target);
        ds.unseen.insert(target);
        ds.samples[0].synthetic = true;
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        prop_assert_eq!(load_dataset(dir.path()).unwrap(), ds);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn self_exchange_is_twice_reconstruction(idx in 0usize..4, k in 0usize..2) {
        let ds = common::micro_dataset();
        let state = common::micro_state();
        let x = &ds.samples[idx];
        let exc = loss_exc(&state, x, x, k).unwrap();
        let recon = loss_recon(&state, &x.signal).unwrap();
        prop_assert!((exc - 2.0 * recon).abs() <= 1e-12 * recon.max(1.0), "{exc} vs 2 x {recon}");
    }

    #[test]
    fn exchange_loss_is_symmetric(i in 0usize..4, j in 0usize..4, k in 0usize..2) {
        let ds = common::micro_dataset();
        let state = common::micro_state();
        let (a, b) = (&ds.samples[i], &ds.samples[j]);
        match (loss_exc(&state, a, b, k), loss_exc(&state, b, a, k)) {
            (Ok(f), Ok(g)) => prop_assert!((f - g).abs() <= 1e-12 * f.max(1.0)),
            (Err(_), Err(_)) => prop_assert_ne!(a.scenario.get(k), b.scenario.get(k)),
            (f, g) => prop_assert!(false, "asymmetric result {f:?} / {g:?}"),
        }
    }
}
