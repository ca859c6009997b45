mod common;

use sigswap::codec::ModelState;
use sigswap::data::{split_dataset, Dataset, Sample, Scenario, Split};
use sigswap::error::Error;
use sigswap::mci::enumerate_quads;
use sigswap::objectives::LossWeights;
use sigswap::trainer::{
    checkpoint_path, read_loss_log, train, train_to_dir, TrainConfig, TrainState, Trainer, FINAL_CHECKPOINT, LOG_FILE,
};

/// 2x2 micro grid with two samples per scenario, split 1:1, plus a test-only
/// synthetic sample the trainer must never see.
fn dataset() -> Dataset {
    let schema = sigswap::data::AttributeSchema::from_sizes(&[2, 2]).unwrap();
    let ds = sigswap::data::generate_toy_dataset(&schema, 8, 8, 2, 0.1, 9).unwrap();
    let mut ds = split_dataset(&ds, 0.5, 2).unwrap();
    let mut extra: Sample = ds.samples[0].clone();
    extra.id = "extra_test".into();
    extra.split = Split::Test;
    extra.synthetic = true;
    ds.samples.push(extra);
    ds
}

fn config(iterations: u64) -> TrainConfig {
    TrainConfig {
        iterations,
        learning_rate: 1e-3,
        log_every: 3,
        checkpoint_every: 4,
        seed: 21,
        ..TrainConfig::default()
    }
}

fn model() -> ModelState {
    common::micro_state()
}

#[test]
fn training_is_deterministic() {
    let ds = dataset();
    let quads = enumerate_quads(&ds.existing_scenarios(), &ds.schema);
    let (a, ha) = train(&ds, &quads, model(), &config(7)).unwrap();
    let (b, hb) = train(&ds, &quads, model(), &config(7)).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    assert_eq!(a.iteration, 7);
    assert_ne!(a.params, model().params);
}

#[test]
fn zero_iterations_leaves_the_model_untouched() {
    let ds = dataset();
    let quads = enumerate_quads(&ds.existing_scenarios(), &ds.schema);
    let (m, history) = train(&ds, &quads, model(), &config(0)).unwrap();
    assert_eq!(m, model());
    assert!(history.is_empty());
}

#[test]
fn history_has_one_record_per_log_interval() {
    let ds = dataset();
    let quads = enumerate_quads(&ds.existing_scenarios(), &ds.schema);
    for n in [1u64, 3, 5, 7] {
        let (_, h) = train(&ds, &quads, model(), &config(n)).unwrap();
        assert_eq!(h.len() as u64, n.div_ceil(3), "n = {n}");
        assert!(h.iter().all(|r| r.step % 3 == 0 && r.losses.is_finite()));
    }
}

#[test]
fn logged_total_matches_the_weighted_sum() {
    let ds = dataset();
    let quads = enumerate_quads(&ds.existing_scenarios(), &ds.schema);
    let mut cfg = config(4);
    cfg.log_every = 1;
    cfg.weights = LossWeights {
        alpha: 0.7,
        beta: 0.3,
        gamma: 0.5,
        lambda: 0.2,
    };
    let (_, h) = train(&ds, &quads, model(), &cfg).unwrap();
    for r in &h {
        let l = r.losses;
        let gen = l.j_exc_gen + 0.5 * l.j_cyc + 0.2 * l.j_adv;
        assert!((l.j_gen - gen).abs() < 1e-12);
        assert!((l.j_all - (l.j_recon + 0.7 * l.j_exc + 0.3 * gen)).abs() < 1e-12);
        assert!(l.j_disc > 0.0);
    }
}

#[test]
fn batches_only_read_train_split_seen_samples() {
    let mut ds = dataset();
    ds.unseen.insert(Scenario::new([1, 1]));
    ds.samples.retain(|s| s.scenario != Scenario::new([1, 1]));
    let full = dataset();
    let quads = enumerate_quads(&full.existing_scenarios(), &full.schema);
    let err = Trainer::new(&ds, &quads, &config(1)).err().unwrap();
    assert!(matches!(err, Error::Infeasible(_)), "{err}");

    let ds = dataset();
    let quads = enumerate_quads(&ds.existing_scenarios(), &ds.schema);
    let mut cfg = config(1);
    cfg.quads_per_step = 3;
    let trainer = Trainer::new(&ds, &quads, &cfg).unwrap();
    for step in 0..200 {
        for q in trainer.batch(step) {
            for (m, y) in q.members.iter().zip(&q.template.members) {
                assert_eq!(m.split, Split::Train);
                assert_eq!(&m.scenario, y);
                assert_ne!(m.id, "extra_test");
            }
        }
    }
}

#[test]
fn resume_from_checkpoint_is_bit_identical() {
    let ds = dataset();
    let quads = enumerate_quads(&ds.existing_scenarios(), &ds.schema);
    let cfg = config(8);
    let straight_dir = tempfile::tempdir().unwrap();
    let straight = train_to_dir(&ds, &quads, TrainState::new(model()), &cfg, 8, straight_dir.path()).unwrap();

    let split_dir = tempfile::tempdir().unwrap();
    let first = train_to_dir(&ds, &quads, TrainState::new(model()), &cfg, 4, split_dir.path()).unwrap();
    assert_eq!(first.state.step, 4);
    let resumed = TrainState::load(&checkpoint_path(split_dir.path(), 4)).unwrap();
    assert_eq!(resumed.model, first.state.model);
    assert_eq!(resumed.moments, first.state.moments);
    let second = train_to_dir(&ds, &quads, resumed, &cfg, 8, split_dir.path()).unwrap();

    assert_eq!(second.state.model, straight.state.model);
    assert_eq!(second.state.moments, straight.state.moments);
    let a = read_loss_log(&straight_dir.path().join(LOG_FILE)).unwrap();
    let b = read_loss_log(&split_dir.path().join(LOG_FILE)).unwrap();
    assert_eq!(a, b);
    assert!(checkpoint_path(straight_dir.path(), 8).exists());
    let fin = TrainState::load(&straight_dir.path().join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(fin.step, 8);
}

#[test]
fn divergence_stops_before_the_update() {
    let ds = dataset();
    let quads = enumerate_quads(&ds.existing_scenarios(), &ds.schema);
    let mut cfg = config(3);
    cfg.weights.alpha = 1e9;
    let err = train(&ds, &quads, model(), &cfg).unwrap_err();
    match &err {
        Error::Divergence { step, .. } => assert_eq!(*step, 0),
        other => panic!("expected divergence, got {other}"),
    }
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn invalid_config_is_rejected() {
    let ds = dataset();
    let quads = enumerate_quads(&ds.existing_scenarios(), &ds.schema);
    for bad in [
        TrainConfig { learning_rate: 0.0, ..config(1) },
        TrainConfig { log_every: 0, ..config(1) },
        TrainConfig { quads_per_step: 0, ..config(1) },
    ] {
        assert!(train(&ds, &quads, model(), &bad).is_err());
    }
    assert!(matches!(Trainer::new(&ds, &[], &config(1)).err(), Some(Error::Infeasible(_))));
}

#[test]
fn short_toy_run_reduces_reconstruction_loss() {
    let spec = sigswap::data::ToySpec {
        per_scenario: 4,
        ..Default::default()
    };
    let ds = split_dataset(&spec.generate().unwrap(), 0.5, 0).unwrap();
    let quads = enumerate_quads(&ds.existing_scenarios(), &ds.schema);
    let m = ModelState::init(sigswap::codec::ModelConfig::toy(2)).unwrap();
    let cfg = TrainConfig {
        iterations: 300,
        log_every: 1,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let (_, h) = train(&ds, &quads, m, &cfg).unwrap();
    let mean = |r: &[sigswap::trainer::LogRecord]| r.iter().map(|x| x.losses.j_recon).sum::<f64>() / r.len() as f64;
    let start = mean(&h[..10]);
    let end = mean(&h[h.len() - 10..]);
    assert!(end < 0.7 * start, "recon {start:.4} -> {end:.4}");
}
