//! Downstream uses of a trained model: composing unseen scenarios, augmenting
//! seen ones, and denoising.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{exchange, LatentCode, ModelState};
use crate::data::{Dataset, Sample, Scenario, Signal, Split};
use crate::error::{Error, Result};
use crate::mci::{missing_categories, plan_unseen_references};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisRequest {
    pub target: Scenario,
    pub count: usize,
    pub seed: u64,
}

/// Train-split real samples of scenarios not marked unseen, grouped by scenario.
fn donor_pools(existing: &Dataset) -> BTreeMap<&Scenario, Vec<&Sample>> {
    let mut pools: BTreeMap<&Scenario, Vec<&Sample>> = BTreeMap::new();
    for s in &existing.samples {
        if s.split == Split::Train && !s.synthetic && !existing.unseen.contains(&s.scenario) {
            pools.entry(&s.scenario).or_default().push(s);
        }
    }
    pools
}

fn check_dims(model: &ModelState, ds: &Dataset) -> Result<()> {
    let cfg = &model.config;
    if (cfg.height, cfg.width) != (ds.height, ds.width) {
        return Err(Error::Shape(format!(
            "dataset is {}x{}, model expects {}x{}",
            ds.height, ds.width, cfg.height, cfg.width
        )));
    }
    if cfg.attributes() != ds.schema.len() {
        return Err(Error::Shape(format!(
            "dataset has {} attributes, model latent has {} segments",
            ds.schema.len(),
            cfg.attributes()
        )));
    }
    Ok(())
}

fn to_sample(model: &ModelState, id: String, values: &[f64], scenario: Scenario) -> Result<Sample> {
    Ok(Sample {
        id,
        signal: Signal::from_f64(model.config.height, model.config.width, values)?,
        scenario,
        split: Split::Train,
        synthetic: true,
    })
}

/// Composes samples of a scenario with no data by exchanging one segment
/// between two existing donors.
///
/// Each output draws a reference plan and one donor sample per plan role,
/// with replacement, from a stream seeded by `request.seed`. Only train-split
/// real samples of non-unseen scenarios are read.
pub fn synthesize_unseen(model: &ModelState, existing: &Dataset, request: &SynthesisRequest) -> Result<Vec<Sample>> {
    check_dims(model, existing)?;
    existing.schema.check(&request.target)?;
    if request.count == 0 {
        return Err(Error::Argument("synthesis count must be at least 1".into()));
    }
    let pools = donor_pools(existing);
    if pools.contains_key(&request.target) {
        return Err(Error::Argument(format!(
            "scenario {} has training data; use augmentation for seen scenarios",
            request.target
        )));
    }
    let scenarios: BTreeSet<Scenario> = pools.keys().map(|s| (*s).clone()).collect();
    let plans = plan_unseen_references(&scenarios, &request.target, &existing.schema);
    if plans.is_empty() {
        let missing = missing_categories(&scenarios, &request.target);
        let detail = if missing.is_empty() {
            "no diagonal donor pair completes it".to_string()
        } else {
            let list: Vec<String> = missing
                .iter()
                .map(|(p, c)| format!("attribute {p} (`{}`) category {c}", existing.schema.attributes[*p].name))
                .collect();
            format!("no existing data has {}", list.join(", "))
        };
        return Err(Error::Infeasible(format!(
            "cannot compose scenario {}: {detail}",
            request.target
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
    let mut sources = Vec::with_capacity(request.count);
    let mut partners = Vec::with_capacity(request.count);
    let mut attrs = Vec::with_capacity(request.count);
    for _ in 0..request.count {
        let plan = &plans[rng.random_range(0..plans.len())];
        assert_eq!(plan.execute(), request.target, "plan does not produce the target");
        let src_pool = &pools[&plan.source];
        let par_pool = &pools[&plan.partner];
        sources.push(src_pool[rng.random_range(0..src_pool.len())]);
        partners.push(par_pool[rng.random_range(0..par_pool.len())]);
        attrs.push(plan.attribute);
    }
    let signals: Vec<&Signal> = sources.iter().chain(&partners).map(|s| &s.signal).collect();
    let codes = model.encode_batch(&signals)?;
    let (zs, zp) = codes.split_at(request.count);
    let mixed: Vec<LatentCode> = zs
        .iter()
        .zip(zp)
        .zip(&attrs)
        .map(|((a, b), &p)| exchange(a, b, p).map(|(first, _)| first))
        .collect::<Result<_>>()?;
    let decoded = model.decode_batch(&mixed.iter().collect::<Vec<_>>())?;
    let tag = request.target.tag();
    decoded
        .iter()
        .enumerate()
        .map(|(i, v)| to_sample(model, format!("syn_{tag}_{i:04}"), v, request.target.clone()))
        .collect()
}

/// Both slots of every single-segment exchange between `a` and `b`, in
/// segment order: `[a<-b@0, b<-a@0, a<-b@1, ...]`.
pub fn exchange_variants(model: &ModelState, a: &Signal, b: &Signal) -> Result<Vec<Vec<f64>>> {
    let codes = model.encode_batch(&[a, b])?;
    let mut mixed = Vec::with_capacity(2 * model.config.attributes());
    for p in 0..model.config.attributes() {
        let (x, y) = exchange(&codes[0], &codes[1], p)?;
        mixed.push(x);
        mixed.push(y);
    }
    model.decode_batch(&mixed.iter().collect::<Vec<_>>())
}

/// New samples of a seen scenario from exchanges between two of its samples.
///
/// Pairs of distinct train-split samples are drawn with replacement; every
/// segment exchange of a pair contributes both decoded slots until `count`
/// outputs exist. All outputs carry `scenario`.
pub fn augment_seen(model: &ModelState, existing: &Dataset, scenario: &Scenario, count: usize, seed: u64) -> Result<Vec<Sample>> {
    check_dims(model, existing)?;
    existing.schema.check(scenario)?;
    if count == 0 {
        return Err(Error::Argument("augmentation count must be at least 1".into()));
    }
    let pools = donor_pools(existing);
    let pool = pools.get(scenario).map(Vec::as_slice).unwrap_or(&[]);
    if pool.len() < 2 {
        return Err(Error::Infeasible(format!(
            "scenario {scenario} has {} train sample(s); augmentation needs at least 2",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag = scenario.tag();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let i = rng.random_range(0..pool.len());
        let mut j = rng.random_range(0..pool.len() - 1);
        if j >= i {
            j += 1;
        }
        for v in exchange_variants(model, &pool[i].signal, &pool[j].signal)? {
            if out.len() == count {
                break;
            }
            let id = format!("aug_{tag}_{:04}", out.len());
            out.push(to_sample(model, id, &v, scenario.clone())?);
        }
    }
    Ok(out)
}

/// `decode(encode(x))`, keeping the id, scenario and split of `x`.
pub fn denoise(model: &ModelState, x: &Sample) -> Result<Sample> {
    Ok(denoise_batch(model, std::slice::from_ref(x))?.remove(0))
}

pub fn denoise_batch(model: &ModelState, xs: &[Sample]) -> Result<Vec<Sample>> {
    let signals: Vec<&Signal> = xs.iter().map(|s| &s.signal).collect();
    let out = model.reconstruct_batch(&signals)?;
    xs.iter()
        .zip(out)
        .map(|(x, v)| {
            Ok(Sample {
                id: x.id.clone(),
                signal: Signal::from_f64(model.config.height, model.config.width, &v)?,
                scenario: x.scenario.clone(),
                split: x.split,
                synthetic: x.synthetic,
            })
        })
        .collect()
}
