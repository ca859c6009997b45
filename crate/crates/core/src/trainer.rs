//! Alternating generator/discriminator training over exchange quads.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{read_checkpoint_dir, write_checkpoint_dir, Component, Dtype, ModelState, Network};
use crate::data::{Dataset, Sample, Scenario, Split};
use crate::error::{Error, Result};
use crate::mci::{BatchScheduler, QuadTemplate};
use crate::nn::{Binding, ParamSet, Tape, Tensor};
use crate::objectives::{
    build_discriminator_graph, build_generator_graph, generation_loss, GraphPlan, LossReport,
    LossWeights, QuadSamples,
};

/// Any loss above this magnitude aborts training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
pub const LOG_FILE: &str = "loss.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT: &str = "final";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub iterations: u64,
    pub quads_per_step: usize,
    pub seed: u64,
    /// Completed-step interval between numbered checkpoints; 0 disables them.
    pub checkpoint_every: u64,
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            weights: LossWeights::default(),
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            iterations: 5000,
            quads_per_step: 1,
            seed: 0,
            checkpoint_every: 1000,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    /// `iterations = 0` is accepted here and treated as a no-op by [`train`].
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Argument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        let (b1, b2) = (self.adam_beta1, self.adam_beta2);
        if !(0.0 <= b1 && b1 < b2 && b2 < 1.0) {
            return Err(Error::Argument(format!(
                "Adam betas must satisfy 0 <= beta1 < beta2 < 1, got {b1} and {b2}"
            )));
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(Error::Argument(format!("Adam eps must be positive, got {}", self.adam_eps)));
        }
        if self.quads_per_step == 0 {
            return Err(Error::Argument("quads_per_step must be at least 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Argument("log_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// First and second moment estimates, keyed like the parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamMoments {
    pub m: ParamSet,
    pub v: ParamSet,
}

impl AdamMoments {
    pub fn zeros_like(params: &ParamSet) -> Self {
        let mut m = ParamSet::new();
        for (name, t) in params.iter() {
            m.insert(name.clone(), Tensor::zeros(t.shape()));
        }
        AdamMoments { v: m.clone(), m }
    }
}

/// One bias-corrected Adam update at step `t` (1-based) for every tensor in `grads`.
pub fn adam_step(
    params: &mut ParamSet,
    moments: &mut AdamMoments,
    grads: &ParamSet,
    t: u64,
    config: &AdamConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::Argument("Adam step counter starts at 1".into()));
    }
    for (name, g) in grads.iter() {
        let p = params
            .get(name)
            .ok_or_else(|| Error::Shape(format!("gradient for unknown parameter `{name}`")))?;
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "gradient for `{name}` has shape {:?}, parameter has {:?}",
                g.shape(),
                p.shape()
            )));
        }
        if !g.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient for parameter `{name}`")));
        }
    }
    let (b1, b2) = (config.beta1, config.beta2);
    let exp = i32::try_from(t).unwrap_or(i32::MAX);
    let c1 = 1.0 - b1.powi(exp);
    let c2 = 1.0 - b2.powi(exp);
    for (name, g) in grads.iter() {
        let m = moments
            .m
            .get_mut(name)
            .ok_or_else(|| Error::Shape(format!("no first moment for `{name}`")))?;
        for (mi, &gi) in m.data_mut().iter_mut().zip(g.data()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
        }
        let v = moments
            .v
            .get_mut(name)
            .ok_or_else(|| Error::Shape(format!("no second moment for `{name}`")))?;
        for (vi, &gi) in v.data_mut().iter_mut().zip(g.data()) {
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
        }
        let (m, v) = (moments.m.get(name).unwrap(), moments.v.get(name).unwrap());
        let p = params.get_mut(name).unwrap();
        for ((pi, &mi), &vi) in p.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
            let m_hat = mi / c1;
            let v_hat = vi / c2;
            *pi -= config.learning_rate * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}

/// Everything needed to continue training bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: ModelState,
    pub moments: AdamMoments,
    /// Completed steps; also the scheduler cursor.
    pub step: u64,
}

impl TrainState {
    pub fn new(model: ModelState) -> Self {
        let moments = AdamMoments::zeros_like(&model.params);
        let step = model.iteration;
        TrainState { model, moments, step }
    }

    /// Writes parameters plus `opt.m.*` / `opt.v.*` moment tensors.
    pub fn save(&self, dir: &Path, config: &TrainConfig) -> Result<()> {
        let mut tensors = self.model.params.clone();
        for (name, t) in self.moments.m.iter() {
            tensors.insert(format!("opt.m.{name}"), t.clone());
        }
        for (name, t) in self.moments.v.iter() {
            tensors.insert(format!("opt.v.{name}"), t.clone());
        }
        let meta = serde_json::json!({ "step": self.step, "train": config });
        write_checkpoint_dir(dir, &self.model.config, self.step, Dtype::F64, &tensors, Some(meta))
    }

    /// Restores a state written by [`TrainState::save`]. Plain model
    /// checkpoints load with zero moments.
    pub fn load(dir: &Path) -> Result<Self> {
        let (header, tensors) = read_checkpoint_dir(dir)?;
        let mut params = ParamSet::new();
        let mut m = ParamSet::new();
        let mut v = ParamSet::new();
        for (name, t) in tensors.iter() {
            if let Some(rest) = name.strip_prefix("opt.m.") {
                m.insert(rest, t.clone());
            } else if let Some(rest) = name.strip_prefix("opt.v.") {
                v.insert(rest, t.clone());
            } else {
                params.insert(name.clone(), t.clone());
            }
        }
        let model = ModelState {
            config: header.config,
            params,
            iteration: header.iteration,
        };
        model.config.validate()?;
        model.check_layout()?;
        let moments = if m.is_empty() && v.is_empty() {
            AdamMoments::zeros_like(&model.params)
        } else {
            for (name, p) in model.params.iter() {
                for (kind, set) in [("m", &m), ("v", &v)] {
                    match set.get(name) {
                        Some(t) if t.shape() == p.shape() => {}
                        _ => {
                            return Err(Error::Checkpoint(format!(
                                "optimizer tensor `opt.{kind}.{name}` missing or misshapen"
                            )))
                        }
                    }
                }
            }
            AdamMoments { m, v }
        };
        Ok(TrainState {
            step: model.iteration,
            model,
            moments,
        })
    }
}

/// One logged line of the loss log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    #[serde(flatten)]
    pub losses: LossReport,
}

/// Step runner bound to the train-split samples of existing scenarios.
pub struct Trainer<'a> {
    pools: BTreeMap<Scenario, Vec<&'a Sample>>,
    scheduler: BatchScheduler,
    config: TrainConfig,
}

impl<'a> Trainer<'a> {
    /// Only train-split samples of scenarios not marked unseen are visible
    /// from here on; every quad member scenario must have at least one.
    pub fn new(dataset: &'a Dataset, quads: &[QuadTemplate], config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if quads.is_empty() {
            return Err(Error::Infeasible("no exchange quad available for training".into()));
        }
        let mut pools: BTreeMap<Scenario, Vec<&'a Sample>> = BTreeMap::new();
        for s in &dataset.samples {
            if s.split == Split::Train && !dataset.unseen.contains(&s.scenario) {
                pools.entry(s.scenario.clone()).or_default().push(s);
            }
        }
        for q in quads {
            for m in &q.members {
                if dataset.unseen.contains(m) {
                    return Err(Error::Infeasible(format!("quad member {m} is an unseen scenario")));
                }
                if !pools.contains_key(m) {
                    return Err(Error::Infeasible(format!(
                        "quad member {m} has no train-split samples"
                    )));
                }
            }
        }
        Ok(Trainer {
            pools,
            scheduler: BatchScheduler::new(quads.to_vec(), config.seed)?,
            config: *config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Quads and member samples used at `step`.
    pub fn batch(&self, step: u64) -> Vec<QuadSamples<'a>> {
        let mut rng = self.scheduler.rng_at(step);
        let quads = self.scheduler.quads();
        (0..self.config.quads_per_step)
            .map(|_| {
                let template = quads[rng.random_range(0..quads.len())].clone();
                let members = template.members.clone().map(|y| {
                    let pool = &self.pools[&y];
                    let s = pool[rng.random_range(0..pool.len())];
                    assert!(s.split == Split::Train, "training read a non-train sample");
                    s
                });
                QuadSamples { template, members }
            })
            .collect()
    }

    /// Generator update on the total objective, then discriminator update on
    /// the synthetic samples the generator produced before its update.
    pub fn step(&self, state: &mut TrainState) -> Result<LossReport> {
        let step = state.step;
        let batch = self.batch(step);
        let plan = GraphPlan::from_quads(&batch, None)?;
        let weights = self.config.weights;
        let model = &mut state.model;

        let mut tape = Tape::new();
        let binding = Binding::new(&mut tape, &model.params, |n| Component::of(n).is_generator());
        let net = Network::new(&model.config, &binding);
        let graph = build_generator_graph(&mut tape, &net, &plan, &weights)?;
        let components = graph.components(&tape);
        let j_all = tape.value(graph.total).item();
        let real = tape.value(graph.members).clone();
        let fake = tape
            .value(graph.synthetic.expect("quads always produce synthetic rows"))
            .clone();
        let mut grads = tape.backward(graph.total);
        let gen_grads = binding.gradients(&tape, &mut grads);
        drop(tape);

        let mut tape = Tape::new();
        let binding = Binding::new(&mut tape, &model.params, |n| !Component::of(n).is_generator());
        let net = Network::new(&model.config, &binding);
        let disc = build_discriminator_graph(&mut tape, &net, &real, &fake)?;
        let j_disc = tape.value(disc).item();
        let mut grads = tape.backward(disc);
        let disc_grads = binding.gradients(&tape, &mut grads);
        drop(tape);

        let report = LossReport {
            j_recon: components.recon,
            j_exc: components.exc,
            j_exc_gen: components.exc_gen,
            j_cyc: components.cyc,
            j_adv: components.adv,
            j_gen: generation_loss(&components, &weights),
            j_all,
            j_disc,
        };
        if !report.is_finite() || report.max_abs() > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                step,
                message: format!("loss out of range: {report:?}"),
            });
        }
        let t = step + 1;
        adam_step(&mut model.params, &mut state.moments, &gen_grads, t, &self.config.adam())?;
        adam_step(&mut model.params, &mut state.moments, &disc_grads, t, &self.config.adam())?;
        state.step = t;
        model.iteration = t;
        Ok(report)
    }

    /// Runs until `state.step == until`, calling `on_log` at every logged step
    /// and `on_checkpoint` after every completed multiple of `checkpoint_every`.
    pub fn run(
        &self,
        state: &mut TrainState,
        until: u64,
        mut on_log: impl FnMut(&LogRecord) -> Result<()>,
        mut on_checkpoint: impl FnMut(&TrainState) -> Result<()>,
    ) -> Result<()> {
        while state.step < until {
            let step = state.step;
            let losses = self.step(state)?;
            if step.is_multiple_of(self.config.log_every) {
                on_log(&LogRecord { step, losses })?;
            }
            let every = self.config.checkpoint_every;
            if every > 0 && state.step.is_multiple_of(every) {
                on_checkpoint(state)?;
            }
        }
        Ok(())
    }
}

/// In-memory training from `model` for `config.iterations` steps.
///
/// Returns the trained model and the loss history (one record per
/// `log_every` steps).
pub fn train(
    dataset: &Dataset,
    quads: &[QuadTemplate],
    model: ModelState,
    config: &TrainConfig,
) -> Result<(ModelState, Vec<LogRecord>)> {
    let trainer = Trainer::new(dataset, quads, config)?;
    let mut state = TrainState::new(model);
    let until = state.step + config.iterations;
    let mut history = Vec::new();
    trainer.run(
        &mut state,
        until,
        |r| {
            history.push(*r);
            Ok(())
        },
        |_| Ok(()),
    )?;
    Ok((state.model, history))
}

/// Outputs of [`train_to_dir`].
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub state: TrainState,
    pub history: Vec<LogRecord>,
    pub final_checkpoint: PathBuf,
}

pub fn checkpoint_path(out: &Path, step: u64) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(format!("step-{step:06}"))
}

/// Trains from `state` up to step `until`, appending to `out/loss.jsonl`,
/// writing numbered checkpoints under `out/checkpoints/` and the final state
/// to `out/final`.
pub fn train_to_dir(
    dataset: &Dataset,
    quads: &[QuadTemplate],
    mut state: TrainState,
    config: &TrainConfig,
    until: u64,
    out: &Path,
) -> Result<TrainRun> {
    let trainer = Trainer::new(dataset, quads, config)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let log_path = out.join(LOG_FILE);
    let file = if state.step == 0 {
        File::create(&log_path)
    } else {
        fs::OpenOptions::new().create(true).append(true).open(&log_path)
    }
    .map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let mut history = Vec::new();
    trainer.run(
        &mut state,
        until,
        |r| {
            history.push(*r);
            let line = serde_json::to_string(r).map_err(|e| Error::json(&log_path, e))?;
            writeln!(log, "{line}").map_err(|e| Error::io(&log_path, e))
        },
        |s| s.save(&checkpoint_path(out, s.step), config),
    )?;
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    let final_checkpoint = out.join(FINAL_CHECKPOINT);
    state.save(&final_checkpoint, config)?;
    Ok(TrainRun {
        state,
        history,
        final_checkpoint,
    })
}

/// Parses a JSON-lines loss log.
pub fn read_loss_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_scalar_adam_step() {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::from_vec(&[1], vec![0.0]));
        let mut moments = AdamMoments::zeros_like(&params);
        let mut grads = ParamSet::new();
        grads.insert("w", Tensor::from_vec(&[1], vec![1.0]));
        adam_step(&mut params, &mut moments, &grads, 1, &TrainConfig::default().adam()).unwrap();
        let w = params.get("w").unwrap().data()[0];
        assert!((w + 1e-4 / (1.0 + 1e-8)).abs() < 1e-18, "{w}");
    }

    #[test]
    fn zero_gradient_decays_moments_only() {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::from_vec(&[2], vec![0.5, -0.5]));
        let mut moments = AdamMoments::zeros_like(&params);
        moments.m.get_mut("w").unwrap().data_mut().copy_from_slice(&[0.0, 0.0]);
        let mut grads = ParamSet::new();
        grads.insert("w", Tensor::zeros(&[2]));
        adam_step(&mut params, &mut moments, &grads, 3, &TrainConfig::default().adam()).unwrap();
        assert_eq!(params.get("w").unwrap().data(), &[0.5, -0.5]);

        moments.m.get_mut("w").unwrap().data_mut()[0] = 1.0;
        moments.v.get_mut("w").unwrap().data_mut()[0] = 1.0;
        let before = params.get("w").unwrap().data()[0];
        adam_step(&mut params, &mut moments, &grads, 4, &TrainConfig::default().adam()).unwrap();
        assert!((moments.m.get("w").unwrap().data()[0] - 0.9).abs() < 1e-15);
        assert!((moments.v.get("w").unwrap().data()[0] - 0.999).abs() < 1e-15);
        assert!(params.get("w").unwrap().data()[0] < before);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut params = ParamSet::new();
        params.insert("enc.fc1.w", Tensor::zeros(&[1]));
        let mut moments = AdamMoments::zeros_like(&params);
        let mut grads = ParamSet::new();
        grads.insert("enc.fc1.w", Tensor::from_vec(&[1], vec![f64::NAN]));
        let err = adam_step(&mut params, &mut moments, &grads, 1, &TrainConfig::default().adam()).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(err.to_string().contains("enc.fc1.w"));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            adam_beta1: 0.999,
            adam_beta2: 0.9,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
