//! Batch pipeline driven by one JSON configuration.
//!
//! Every command writes its artifacts under `output` together with a
//! `run.json` echo of the resolved configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::codec::{load_checkpoint, even_partition, ModelConfig, ModelState};
use crate::data::{
    hold_out_unseen, load_dataset, save_dataset, split_dataset, Dataset, Sample, Scenario, Split, ToySpec,
    DEFAULT_TRAIN_FRACTION,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    probe_classify, reconstruction_scores, score_pairs, swap_test, write_pgm, MetricReport, ProbeConfig,
    ProbeReport, SwapTestConfig, SwapTestReport,
};
use crate::mci::{enumerate_quads, missing_categories, plan_unseen_references, QuadTemplate, ReferencePlan};
use crate::synthesis::{augment_seen, denoise_batch, synthesize_unseen, SynthesisRequest};
use crate::trainer::{train_to_dir, TrainConfig, TrainState};

pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Toygen,
    Select,
    Train,
    Synth,
    Augment,
    Denoise,
    Eval,
    Probe,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Toygen,
        Command::Select,
        Command::Train,
        Command::Synth,
        Command::Augment,
        Command::Denoise,
        Command::Eval,
        Command::Probe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Toygen => "toygen",
            Command::Select => "select",
            Command::Train => "train",
            Command::Synth => "synth",
            Command::Augment => "augment",
            Command::Denoise => "denoise",
            Command::Eval => "eval",
            Command::Probe => "probe",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Toy,
    Full,
}

/// Model architecture; input size and partition come from the dataset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub preset: Preset,
    pub latent_dim: Option<usize>,
    pub enc_widths: Option<[usize; 4]>,
    pub fc_hidden: Option<[usize; 2]>,
    pub disc_widths: Option<[usize; 4]>,
    pub seed: u64,
}

impl ModelOverrides {
    pub fn resolve(&self, ds: &Dataset) -> Result<ModelConfig> {
        let p = ds.schema.len();
        let mut cfg = match self.preset {
            Preset::Toy => ModelConfig::toy(p),
            Preset::Full => ModelConfig::full(p),
        };
        cfg.height = ds.height;
        cfg.width = ds.width;
        if let Some(d) = self.latent_dim {
            cfg.latent_dim = d;
        }
        if cfg.latent_dim < p {
            return Err(Error::Argument(format!(
                "latent dimension {} cannot hold {p} segments",
                cfg.latent_dim
            )));
        }
        cfg.partition = even_partition(cfg.latent_dim, p);
        if let Some(w) = self.enc_widths {
            cfg.enc_widths = w;
        }
        if let Some(w) = self.fc_hidden {
            cfg.fc_hidden = w;
        }
        if let Some(w) = self.disc_widths {
            cfg.disc_widths = w;
        }
        cfg.seed = self.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    /// Outputs per target; defaults to the mean train count of existing scenarios.
    pub count: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSettings {
    /// Scenarios to augment; empty means every existing scenario.
    pub scenarios: Vec<Scenario>,
    pub count: usize,
    pub seed: u64,
}

impl Default for AugmentSettings {
    fn default() -> Self {
        AugmentSettings {
            scenarios: Vec::new(),
            count: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub swap: SwapTestConfig,
    pub dump_pgm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    pub config: ProbeConfig,
    pub seeds: Vec<u64>,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            config: ProbeConfig::default(),
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory read by every command except `toygen`.
    pub dataset: Option<PathBuf>,
    pub output: PathBuf,
    /// Model checkpoint directory; `train` resumes from it when set.
    pub checkpoint: Option<PathBuf>,
    /// Held-out samples, read only by `eval` and `probe`.
    pub ground_truth: Option<PathBuf>,
    /// Synthetic dataset directory for `eval` and `probe`.
    pub synthetic: Option<PathBuf>,
    /// Scenarios to hold out (`toygen`) or compose (`select`, `synth`);
    /// defaults to the dataset's unseen list.
    pub targets: Vec<Scenario>,
    pub toy: ToySpec,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub model: ModelOverrides,
    pub train: TrainConfig,
    pub synth: SynthSettings,
    pub augment: AugmentSettings,
    pub eval: EvalSettings,
    pub probe: ProbeSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            output: PathBuf::from("run"),
            checkpoint: None,
            ground_truth: None,
            synthetic: None,
            targets: Vec::new(),
            toy: ToySpec::default(),
            train_fraction: DEFAULT_TRAIN_FRACTION,
            split_seed: 0,
            model: ModelOverrides::default(),
            train: TrainConfig::default(),
            synth: SynthSettings::default(),
            augment: AugmentSettings::default(),
            eval: EvalSettings::default(),
            probe: ProbeSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
    }

    /// Applies `key=value` overrides; dotted keys reach nested fields and
    /// values are parsed as JSON, falling back to a plain string.
    pub fn with_overrides<S: AsRef<str>>(self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut root = serde_json::to_value(&self).expect("config serializes");
        for raw in overrides {
            let raw = raw.as_ref();
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("override `{raw}` is not key=value")))?;
            let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
            set_path(&mut root, key, value)?;
        }
        serde_json::from_value(root).map_err(|e| Error::Usage(format!("override rejected: {e}")))
    }

    fn dataset_path(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| Error::Usage("`dataset` is required for this command".into()))
    }

    fn checkpoint_path(&self) -> Result<&Path> {
        self.checkpoint
            .as_deref()
            .ok_or_else(|| Error::Usage("`checkpoint` is required for this command".into()))
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Usage(format!("`{}` is not a section", parts[..i].join("."))))?;
        let slot = obj
            .get_mut(*part)
            .ok_or_else(|| Error::Usage(format!("unknown config key `{key}`")))?;
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    Err(Error::Usage("empty config key".into()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn targets_of(config: &RunConfig, ds: &Dataset) -> Vec<Scenario> {
    if config.targets.is_empty() {
        ds.unseen.iter().cloned().collect()
    } else {
        config.targets.clone()
    }
}

fn load_model(config: &RunConfig, ds: &Dataset) -> Result<ModelState> {
    let model = load_checkpoint(config.checkpoint_path()?, None)?;
    let cfg = &model.config;
    if (cfg.height, cfg.width, cfg.attributes()) != (ds.height, ds.width, ds.schema.len()) {
        return Err(Error::Shape(format!(
            "checkpoint expects {}x{} inputs with {} attributes, dataset has {}x{} with {}",
            cfg.height,
            cfg.width,
            cfg.attributes(),
            ds.height,
            ds.width,
            ds.schema.len()
        )));
    }
    Ok(model)
}

fn synthetic_dataset(template: &Dataset, samples: Vec<Sample>) -> Dataset {
    Dataset {
        schema: template.schema.clone(),
        height: template.height,
        width: template.width,
        samples,
        unseen: BTreeSet::new(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetFeasibility {
    pub target: Scenario,
    pub feasible: bool,
    pub plans: Vec<ReferencePlan>,
    /// `(attribute, category)` pairs absent from the existing data.
    pub missing: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectReport {
    pub existing: Vec<Scenario>,
    pub quad_count: usize,
    pub quads: Vec<QuadTemplate>,
    pub targets: Vec<TargetFeasibility>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub reconstruction: MetricReport,
    pub swap: Vec<SwapTestReport>,
    /// Synthetic samples scored against every ground-truth sample of their scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<MetricReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRun {
    pub seed: u64,
    pub attributes: Vec<ProbeReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub train_count: usize,
    pub test_count: usize,
    pub runs: Vec<ProbeRun>,
    /// Mean accuracy per attribute over seeds.
    pub mean_accuracy: Vec<f64>,
}

fn toygen(config: &RunConfig) -> Result<Value> {
    let ds = config.toy.generate()?;
    let ds = split_dataset(&ds, config.train_fraction, config.split_seed)?;
    let out = &config.output;
    let dataset_dir = out.join("dataset");
    if config.targets.is_empty() {
        save_dataset(&ds, &dataset_dir)?;
        return Ok(serde_json::json!({ "dataset": dataset_dir, "samples": ds.samples.len() }));
    }
    let targets: BTreeSet<Scenario> = config.targets.iter().cloned().collect();
    let (existing, held) = hold_out_unseen(&ds, &targets)?;
    save_dataset(&existing, &dataset_dir)?;
    let gt_dir = out.join("ground_truth");
    save_dataset(&synthetic_dataset(&ds, held.clone()), &gt_dir)?;
    Ok(serde_json::json!({
        "dataset": dataset_dir,
        "ground_truth": gt_dir,
        "samples": existing.samples.len(),
        "held_out": held.len(),
    }))
}

fn select(config: &RunConfig) -> Result<Value> {
    let ds = load_dataset(config.dataset_path()?)?;
    let existing: BTreeSet<Scenario> = ds
        .existing_scenarios()
        .into_iter()
        .filter(|y| !ds.unseen.contains(y))
        .collect();
    let quads = enumerate_quads(&existing, &ds.schema);
    let mut targets = Vec::new();
    for t in targets_of(config, &ds) {
        ds.schema.check(&t)?;
        let plans = plan_unseen_references(&existing, &t, &ds.schema);
        targets.push(TargetFeasibility {
            feasible: !plans.is_empty(),
            missing: missing_categories(&existing, &t),
            target: t,
            plans,
        });
    }
    let report = SelectReport {
        existing: existing.into_iter().collect(),
        quad_count: quads.len(),
        quads,
        targets,
    };
    write_json(&config.output.join("select.json"), &report)?;
    if report.quad_count == 0 {
        return Err(Error::Infeasible("no complete exchange quad in the dataset".into()));
    }
    Ok(serde_json::json!({
        "quads": report.quad_count,
        "feasible_targets": report.targets.iter().filter(|t| t.feasible).count(),
        "targets": report.targets.len(),
    }))
}

fn train(config: &RunConfig) -> Result<Value> {
    let ds = load_dataset(config.dataset_path()?)?;
    let existing: BTreeSet<Scenario> = ds
        .existing_scenarios()
        .into_iter()
        .filter(|y| !ds.unseen.contains(y))
        .collect();
    let quads = enumerate_quads(&existing, &ds.schema);
    let state = match &config.checkpoint {
        Some(dir) => {
            let state = TrainState::load(dir)?;
            load_model(config, &ds)?;
            state
        }
        None => TrainState::new(ModelState::init(config.model.resolve(&ds)?)?),
    };
    let run = train_to_dir(&ds, &quads, state, &config.train, config.train.iterations, &config.output)?;
    let last = run.history.last().map(|r| r.losses);
    Ok(serde_json::json!({
        "step": run.state.step,
        "checkpoint": run.final_checkpoint,
        "logged": run.history.len(),
        "last": last,
    }))
}

fn synth(config: &RunConfig) -> Result<Value> {
    let ds = load_dataset(config.dataset_path()?)?;
    let model = load_model(config, &ds)?;
    let targets = targets_of(config, &ds);
    if targets.is_empty() {
        return Err(Error::Argument("no target scenarios given and the dataset lists none".into()));
    }
    let count = match config.synth.count {
        Some(c) => c,
        None => {
            let train = ds.split_samples(Split::Train).filter(|s| !s.synthetic).count();
            let scenarios = ds.existing_scenarios().len().max(1);
            (train as f64 / scenarios as f64).round().max(1.0) as usize
        }
    };
    let mut samples = Vec::new();
    for (i, target) in targets.iter().enumerate() {
        let req = SynthesisRequest {
            target: target.clone(),
            count,
            seed: config.synth.seed.wrapping_add(i as u64),
        };
        samples.extend(synthesize_unseen(&model, &ds, &req)?);
    }
    let dir = config.output.join("synthetic");
    let n = samples.len();
    save_dataset(&synthetic_dataset(&ds, samples), &dir)?;
    Ok(serde_json::json!({ "synthetic": dir, "samples": n }))
}

fn augment(config: &RunConfig) -> Result<Value> {
    let ds = load_dataset(config.dataset_path()?)?;
    let model = load_model(config, &ds)?;
    let scenarios: Vec<Scenario> = if config.augment.scenarios.is_empty() {
        ds.existing_scenarios().into_iter().filter(|y| !ds.unseen.contains(y)).collect()
    } else {
        config.augment.scenarios.clone()
    };
    let mut samples = Vec::new();
    for (i, y) in scenarios.iter().enumerate() {
        let seed = config.augment.seed.wrapping_add(i as u64);
        samples.extend(augment_seen(&model, &ds, y, config.augment.count, seed)?);
    }
    let dir = config.output.join("augmented");
    let n = samples.len();
    save_dataset(&synthetic_dataset(&ds, samples), &dir)?;
    Ok(serde_json::json!({ "augmented": dir, "samples": n }))
}

fn denoise(config: &RunConfig) -> Result<Value> {
    let ds = load_dataset(config.dataset_path()?)?;
    let model = load_model(config, &ds)?;
    let samples = denoise_batch(&model, &ds.samples)?;
    let dir = config.output.join("denoised");
    let out = Dataset { samples, ..ds };
    save_dataset(&out, &dir)?;
    Ok(serde_json::json!({ "denoised": dir, "samples": out.samples.len() }))
}

fn eval(config: &RunConfig) -> Result<Value> {
    let ds = load_dataset(config.dataset_path()?)?;
    let model = load_model(config, &ds)?;
    let test: Vec<&Sample> = ds
        .split_samples(Split::Test)
        .filter(|s| !s.synthetic && !ds.unseen.contains(&s.scenario))
        .collect();
    let signals: Vec<_> = test.iter().map(|s| &s.signal).collect();
    if signals.is_empty() {
        return Err(Error::Infeasible("dataset has no real test-split samples".into()));
    }
    let reconstruction = reconstruction_scores(&model, &signals)?;
    let swap = (0..ds.schema.len())
        .map(|k| swap_test(&model, &ds, k, &config.eval.swap))
        .collect::<Result<Vec<_>>>()?;

    let mut synthetic = None;
    if let Some(syn_dir) = &config.synthetic {
        let syn = load_dataset(syn_dir)?;
        if config.eval.dump_pgm {
            let pgm = config.output.join("pgm");
            fs::create_dir_all(&pgm).map_err(|e| Error::io(&pgm, e))?;
            for s in &syn.samples {
                write_pgm(&pgm.join(format!("{}.pgm", s.id)), &s.signal)?;
            }
        }
        if let Some(gt_dir) = &config.ground_truth {
            let gt = load_dataset(gt_dir)?;
            let gen: Vec<(Vec<f64>, &Scenario)> = syn.samples.iter().map(|s| (s.signal.to_f64(), &s.scenario)).collect();
            let refs: Vec<(Vec<f64>, &Scenario)> = gt.samples.iter().map(|s| (s.signal.to_f64(), &s.scenario)).collect();
            let pairs: Vec<(&[f64], &[f64])> = gen
                .iter()
                .flat_map(|(g, y)| {
                    refs.iter()
                        .filter(move |(_, ry)| ry == y)
                        .map(move |(r, _)| (g.as_slice(), r.as_slice()))
                })
                .collect();
            if !pairs.is_empty() {
                synthetic = Some(score_pairs(&pairs, ds.height, ds.width)?);
            }
        }
    }
    let report = EvalReport {
        reconstruction,
        swap,
        synthetic,
    };
    write_json(&config.output.join("eval.json"), &report)?;
    Ok(serde_json::json!({
        "reconstruction_psnr": report.reconstruction.psnr_mean,
        "swap": report.swap.iter().map(|s| serde_json::json!({
            "attribute": s.attribute,
            "same_psnr": s.same.psnr_mean,
            "different_psnr": s.different.psnr_mean,
            "p_value": s.p_value,
        })).collect::<Vec<_>>(),
        "synthetic_psnr": report.synthetic.as_ref().map(|m| m.psnr_mean),
    }))
}

/// Probe protocol: train on existing train-split samples plus any synthetic
/// samples, test on real test-split samples (existing and held out).
pub fn probe_sets<'a>(existing: &'a Dataset, synthetic: Option<&'a Dataset>, ground_truth: Option<&'a Dataset>) -> (Vec<&'a Sample>, Vec<&'a Sample>) {
    let mut train: Vec<&Sample> = existing
        .samples
        .iter()
        .filter(|s| s.split == Split::Train && !s.synthetic)
        .collect();
    if let Some(syn) = synthetic {
        train.extend(syn.samples.iter());
    }
    let mut test: Vec<&Sample> = existing
        .samples
        .iter()
        .filter(|s| s.split == Split::Test && !s.synthetic)
        .collect();
    if let Some(gt) = ground_truth {
        test.extend(gt.samples.iter().filter(|s| s.split == Split::Test && !s.synthetic));
    }
    (train, test)
}

fn probe(config: &RunConfig) -> Result<Value> {
    let ds = load_dataset(config.dataset_path()?)?;
    let syn = config.synthetic.as_deref().map(load_dataset).transpose()?;
    let gt = config.ground_truth.as_deref().map(load_dataset).transpose()?;
    let (train, test) = probe_sets(&ds, syn.as_ref(), gt.as_ref());
    if config.probe.seeds.is_empty() {
        return Err(Error::Argument("probe needs at least one seed".into()));
    }
    let sizes = ds.schema.sizes();
    let mut runs = Vec::new();
    for &seed in &config.probe.seeds {
        let pc = ProbeConfig {
            seed,
            ..config.probe.config
        };
        let attributes = (0..sizes.len())
            .map(|p| probe_classify(&train, &test, p, sizes[p], &pc))
            .collect::<Result<Vec<_>>>()?;
        runs.push(ProbeRun { seed, attributes });
    }
    let mean_accuracy: Vec<f64> = (0..sizes.len())
        .map(|p| runs.iter().map(|r| r.attributes[p].accuracy).sum::<f64>() / runs.len() as f64)
        .collect();
    let summary = ProbeSummary {
        train_count: train.len(),
        test_count: test.len(),
        runs,
        mean_accuracy,
    };
    write_json(&config.output.join("probe.json"), &summary)?;
    Ok(serde_json::json!({ "mean_accuracy": summary.mean_accuracy }))
}

/// Runs `command`, writing `run.json` first. Returns a short summary.
pub fn execute(command: Command, config: &RunConfig) -> Result<Value> {
    let echo = serde_json::json!({ "command": command, "config": config });
    write_json(&config.output.join(RUN_FILE), &echo)?;
    match command {
        Command::Toygen => toygen(config),
        Command::Select => select(config),
        Command::Train => train(config),
        Command::Synth => synth(config),
        Command::Augment => augment(config),
        Command::Denoise => denoise(config),
        Command::Eval => eval(config),
        Command::Probe => probe(config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_roundtrip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        let err = "fit".parse::<Command>().unwrap_err();
        assert_eq!(err.exit_code(), 64);
    }

    #[test]
    fn overrides_are_type_checked() {
        let cfg = RunConfig::default()
            .with_overrides(&["train.iterations=7", "targets=[[2,0]]", "output=/tmp/x", "train.weights.gamma=0.5"])
            .unwrap();
        assert_eq!(cfg.train.iterations, 7);
        assert_eq!(cfg.targets, vec![Scenario::new([2, 0])]);
        assert_eq!(cfg.output, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.train.weights.gamma, 0.5);

        let bad = RunConfig::default().with_overrides(&["train.iterations=many"]);
        assert!(matches!(bad, Err(Error::Usage(_))));
        let unknown = RunConfig::default().with_overrides(&["train.epochs=3"]);
        assert!(matches!(unknown, Err(Error::Usage(_))));
        let malformed = RunConfig::default().with_overrides(&["iterations"]);
        assert!(matches!(malformed, Err(Error::Usage(_))));
    }

    #[test]
    fn partial_config_file_uses_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"train": {"iterations": 3}, "toy": {"noise_amp": 0.1}}"#).unwrap();
        assert_eq!(cfg.train.iterations, 3);
        assert_eq!(cfg.train.learning_rate, 1e-4);
        assert_eq!(cfg.toy.noise_amp, 0.1);
        assert_eq!(cfg.toy.sizes, vec![3, 3]);
        assert!(serde_json::from_str::<RunConfig>(r#"{"trian": {}}"#).is_err());
    }
}
