#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigswap::codec::{Component, ModelConfig, ModelState};
use sigswap::data::{generate_toy_dataset, AttributeSchema, Dataset, Scenario};
use sigswap::mci::enumerate_quads;
use sigswap::objectives::{objective_gradients, objective_value, LossWeights, Objective, QuadSamples};

/// 8x8 inputs (padded to 16x16 inside the encoder), 8-dimensional code.
pub fn micro_config() -> ModelConfig {
    ModelConfig {
        height: 8,
        width: 8,
        latent_dim: 8,
        partition: vec![4, 4],
        enc_widths: [2, 3, 3, 4],
        fc_hidden: [6, 5],
        disc_widths: [2, 2, 3, 3],
        seed: 11,
    }
}

/// Micro model with small random biases so few units sit on a ReLU kink.
pub fn micro_state() -> ModelState {
    let mut state = ModelState::init(micro_config()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let names: Vec<String> = state.params.names().map(str::to_string).collect();
    for name in names {
        if name.ends_with(".b") {
            for v in state.params.get_mut(&name).unwrap().data_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }
    state
}

pub fn micro_dataset() -> Dataset {
    let schema = AttributeSchema::from_sizes(&[2, 2]).unwrap();
    generate_toy_dataset(&schema, 8, 8, 1, 0.1, 4).unwrap()
}

pub fn micro_quad(ds: &Dataset) -> QuadSamples<'_> {
    let quads = enumerate_quads(&ds.existing_scenarios(), &ds.schema);
    let q = quads[0].clone();
    let members = q.members.clone().map(|y| ds.samples_of(&y).next().unwrap());
    QuadSamples::new(q, members).unwrap()
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Gradient norm below which a tensor counts as structurally zero; biases
/// feeding an instance norm have an exactly zero true gradient and both
/// estimates are pure round-off there.
pub const FD_SCALE_FLOOR: f64 = 1e-6;

/// Whether `objective` trains parameter `name` (generator terms train the
/// encoder and decoder, the discriminator loss trains the discriminator).
pub fn trains(objective: Objective, name: &str) -> bool {
    let gen = Component::of(name).is_generator();
    match objective {
        Objective::Discriminator => !gen,
        _ => gen,
    }
}

pub struct FdResult {
    /// Worst per-tensor relative error `|a - n| / max(|a|, |n|)` (vector norms).
    pub worst: (String, f64),
    pub tensors: usize,
    pub coordinates: usize,
    /// Parameters outside the objective's component whose analytic gradient is not exactly zero.
    pub leaked: Vec<String>,
}

/// Central-difference check of every coordinate of every trained tensor.
#[allow(clippy::needless_range_loop)]
pub fn fd_check(objective: Objective) -> FdResult {
    let ds = micro_dataset();
    let quad = micro_quad(&ds);
    let weights = LossWeights::default();
    let mut state = micro_state();
    let (_, grads) = objective_gradients(&state, &quad, objective, &weights).unwrap();

    let names: Vec<String> = state.params.names().map(str::to_string).collect();
    let mut worst = (String::new(), 0.0);
    let mut leaked = Vec::new();
    let (mut tensors, mut coordinates) = (0, 0);
    for name in names {
        let analytic = grads.get(&name).unwrap().data().to_vec();
        if !trains(objective, &name) {
            if analytic.iter().any(|&g| g != 0.0) {
                leaked.push(name);
            }
            continue;
        }
        let mut numeric = vec![0.0; analytic.len()];
        for i in 0..analytic.len() {
            let orig = state.params.get(&name).unwrap().data()[i];
            state.params.get_mut(&name).unwrap().data_mut()[i] = orig + FD_STEP;
            let up = objective_value(&state, &quad, objective, &weights).unwrap();
            state.params.get_mut(&name).unwrap().data_mut()[i] = orig - FD_STEP;
            let down = objective_value(&state, &quad, objective, &weights).unwrap();
            state.params.get_mut(&name).unwrap().data_mut()[i] = orig;
            numeric[i] = (up - down) / (2.0 * FD_STEP);
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
        let scale = norm(&analytic).max(norm(&numeric)).max(FD_SCALE_FLOOR);
        let rel = norm(&diff) / scale;
        if std::env::var_os("FD_VERBOSE").is_some() {
            eprintln!("{name}: |a| {:.3e} |n| {:.3e} rel {rel:.3e}", norm(&analytic), norm(&numeric));
        }
        if rel > worst.1 {
            worst = (name.clone(), rel);
        }
        tensors += 1;
        coordinates += analytic.len();
    }
    FdResult {
        worst,
        tensors,
        coordinates,
        leaked,
    }
}

/// Every 4-subset of `scenarios` forming a 2x2 rectangle in exactly two
/// attributes, as member sets.
pub fn brute_force_quads(scenarios: &BTreeSet<Scenario>, attributes: usize) -> BTreeSet<BTreeSet<Scenario>> {
    let ys: Vec<&Scenario> = scenarios.iter().collect();
    let n = ys.len();
    let mut out = BTreeSet::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    let set = [ys[a], ys[b], ys[c], ys[d]];
                    let mut varying = 0;
                    let mut ok = true;
                    for p in 0..attributes {
                        let cats: BTreeSet<usize> = set.iter().map(|y| y.get(p)).collect();
                        match cats.len() {
                            1 => {}
                            2 => varying += 1,
                            _ => ok = false,
                        }
                    }
                    if ok && varying == 2 {
                        out.insert(set.iter().map(|y| (*y).clone()).collect());
                    }
                }
            }
        }
    }
    out
}

/// Grids for the quad oracle: every 2-attribute grid up to 5x5 plus 3x3x2.
pub fn oracle_grids() -> Vec<Vec<usize>> {
    let mut grids = Vec::new();
    for a in 2..=5 {
        for b in 2..=5 {
            grids.push(vec![a, b]);
        }
    }
    grids.push(vec![3, 3, 2]);
    grids
}

/// Compares `enumerate_quads` with the brute-force oracle on the full grid
/// and with each single cell held out. Returns the first mismatch.
pub fn mci_oracle_mismatch(sizes: &[usize]) -> Option<String> {
    let schema = AttributeSchema::from_sizes(sizes).unwrap();
    let all: Vec<Scenario> = schema.all_scenarios();
    let mut variants: Vec<(Option<&Scenario>, BTreeSet<Scenario>)> = vec![(None, all.iter().cloned().collect())];
    for cell in &all {
        variants.push((Some(cell), all.iter().filter(|y| *y != cell).cloned().collect()));
    }
    for (held, set) in variants {
        let quads = enumerate_quads(&set, &schema);
        let got: BTreeSet<BTreeSet<Scenario>> = quads.iter().map(|q| q.members.iter().cloned().collect()).collect();
        let want = brute_force_quads(&set, sizes.len());
        if got.len() != quads.len() || got != want {
            return Some(format!(
                "grid {sizes:?} without {held:?}: {} enumerated ({} distinct), {} by brute force",
                quads.len(),
                got.len(),
                want.len()
            ));
        }
    }
    None
}
