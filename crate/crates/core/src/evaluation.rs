//! Image metrics, the segment swap test, the probe classifier, and PGM dumps.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::codec::{exchange, LatentCode, ModelState};
use crate::data::{Dataset, Sample, Signal, Split};
use crate::error::{Error, Result};
use crate::nn::{Binding, ParamSet, Tape, Tensor};
use crate::trainer::{adam_step, AdamConfig, AdamMoments};

/// PSNR values are capped here before averaging; identical images score this.
pub const PSNR_CAP: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn same_len(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("images have {} and {} pixels", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::Shape("empty image".into()));
    }
    Ok(())
}

/// `10 log10(1 / MSE)` for pixels in `[0, 1]`; `+inf` when the images agree.
pub fn psnr(x: &[f64], y: &[f64]) -> Result<f64> {
    same_len(x, y)?;
    let mse = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode Gaussian filter of an `h x w` image.
fn filter_valid(img: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..k).map(|i| g[i] * img[r * w + c + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|i| g[i] * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

/// Mean local SSIM over every fully contained 11x11 Gaussian window
/// (sigma 1.5, K1 0.01, K2 0.03, dynamic range 1).
pub fn ssim(x: &[f64], y: &[f64], height: usize, width: usize) -> Result<f64> {
    same_len(x, y)?;
    if x.len() != height * width {
        return Err(Error::Shape(format!(
            "{} pixels do not form a {height}x{width} image",
            x.len()
        )));
    }
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(Error::Argument(format!(
            "{height}x{width} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let g = gaussian_window();
    let prod = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u * v).collect() };
    let mx = filter_valid(x, height, width, &g);
    let my = filter_valid(y, height, width, &g);
    let mxx = filter_valid(&prod(x, x), height, width, &g);
    let myy = filter_valid(&prod(y, y), height, width, &g);
    let mxy = filter_valid(&prod(x, y), height, width, &g);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cxy = mxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean of capped PSNR values.
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    pub count: usize,
    /// Pairs whose PSNR was infinite before capping.
    pub psnr_infinite: usize,
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
}

/// Scores `(output, reference)` image pairs.
pub fn score_pairs(pairs: &[(&[f64], &[f64])], height: usize, width: usize) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::Argument("no image pairs to score".into()));
    }
    let mut report = MetricReport::default();
    for (a, b) in pairs {
        let p = psnr(a, b)?;
        if p.is_infinite() {
            report.psnr_infinite += 1;
        }
        report.psnr.push(p.min(PSNR_CAP));
        report.ssim.push(ssim(a, b, height, width)?);
    }
    report.count = pairs.len();
    report.psnr_mean = report.psnr.iter().sum::<f64>() / report.count as f64;
    report.ssim_mean = report.ssim.iter().sum::<f64>() / report.count as f64;
    Ok(report)
}

/// Replaces segment `k` of each source code with the reference's and scores
/// the decoded output against the source.
pub fn swap_scores(model: &ModelState, pairs: &[(&Signal, &Signal)], k: usize) -> Result<MetricReport> {
    if k >= model.config.attributes() {
        return Err(Error::Argument(format!("attribute {k} out of range")));
    }
    let signals: Vec<&Signal> = pairs.iter().flat_map(|(s, r)| [*s, *r]).collect();
    let codes = model.encode_batch(&signals)?;
    let swapped: Vec<LatentCode> = codes
        .chunks(2)
        .map(|c| exchange(&c[0], &c[1], k).map(|(first, _)| first))
        .collect::<Result<_>>()?;
    let outputs = model.decode_batch(&swapped.iter().collect::<Vec<_>>())?;
    let sources: Vec<Vec<f64>> = pairs.iter().map(|(s, _)| s.to_f64()).collect();
    let scored: Vec<(&[f64], &[f64])> = outputs
        .iter()
        .zip(&sources)
        .map(|(o, s)| (o.as_slice(), s.as_slice()))
        .collect();
    score_pairs(&scored, model.config.height, model.config.width)
}

/// Scores `decode(encode(x))` against `x`.
pub fn reconstruction_scores(model: &ModelState, signals: &[&Signal]) -> Result<MetricReport> {
    let outputs = model.reconstruct_batch(signals)?;
    let sources: Vec<Vec<f64>> = signals.iter().map(|s| s.to_f64()).collect();
    let scored: Vec<(&[f64], &[f64])> = outputs
        .iter()
        .zip(&sources)
        .map(|(o, s)| (o.as_slice(), s.as_slice()))
        .collect();
    score_pairs(&scored, model.config.height, model.config.width)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwapTestConfig {
    /// Pairs drawn per group.
    pub pairs: usize,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for SwapTestConfig {
    fn default() -> Self {
        SwapTestConfig {
            pairs: 64,
            permutations: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapTestReport {
    pub attribute: usize,
    /// Reference shares the source's category of `attribute`.
    pub same: MetricReport,
    /// Reference has a different category of `attribute`.
    pub different: MetricReport,
    /// `same.psnr_mean - different.psnr_mean`.
    pub psnr_gap: f64,
    /// One-sided permutation p-value for `same > different` in mean PSNR.
    pub p_value: f64,
    pub permutations: usize,
}

/// One-sided two-sample permutation test on the difference of means.
pub fn permutation_p_value(a: &[f64], b: &[f64], permutations: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("permutation test needs two non-empty groups".into()));
    }
    if permutations == 0 {
        return Err(Error::Argument("permutation count must be positive".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let observed = mean(a) - mean(b);
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..permutations {
        pooled.shuffle(&mut rng);
        let (pa, pb) = pooled.split_at(a.len());
        if mean(pa) - mean(pb) >= observed - 1e-12 {
            hits += 1;
        }
    }
    Ok((hits + 1) as f64 / (permutations + 1) as f64)
}

/// Swap test on attribute `k`.
///
/// Sources are test-split real samples; references are any other real sample
/// of a non-unseen scenario. The same-category and different-category groups
/// are drawn independently, `config.pairs` each, with replacement.
pub fn swap_test(model: &ModelState, dataset: &Dataset, k: usize, config: &SwapTestConfig) -> Result<SwapTestReport> {
    if k >= dataset.schema.len() {
        return Err(Error::Argument(format!("attribute {k} out of range")));
    }
    if config.pairs == 0 {
        return Err(Error::Argument("swap test needs at least one pair per group".into()));
    }
    let pool: Vec<&Sample> = dataset
        .samples
        .iter()
        .filter(|s| !s.synthetic && !dataset.unseen.contains(&s.scenario))
        .collect();
    let sources: Vec<usize> = (0..pool.len()).filter(|&i| pool[i].split == Split::Test).collect();
    let eligible = |i: usize, same: bool| -> Vec<usize> {
        let c = pool[i].scenario.get(k);
        (0..pool.len())
            .filter(|&j| j != i && (pool[j].scenario.get(k) == c) == same)
            .collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |same: bool| -> Result<Vec<(&Signal, &Signal)>> {
        let usable: Vec<usize> = sources.iter().copied().filter(|&i| !eligible(i, same).is_empty()).collect();
        if usable.is_empty() {
            return Err(Error::Infeasible(format!(
                "no test sample has a {} reference for attribute {k}",
                if same { "same-category" } else { "different-category" }
            )));
        }
        Ok((0..config.pairs)
            .map(|_| {
                let i = usable[rng.random_range(0..usable.len())];
                let refs = eligible(i, same);
                let j = refs[rng.random_range(0..refs.len())];
                (&pool[i].signal, &pool[j].signal)
            })
            .collect())
    };
    let same_pairs = draw(true)?;
    let diff_pairs = draw(false)?;
    let same = swap_scores(model, &same_pairs, k)?;
    let different = swap_scores(model, &diff_pairs, k)?;
    let p_value = permutation_p_value(&same.psnr, &different.psnr, config.permutations, config.seed ^ 0x5eed)?;
    Ok(SwapTestReport {
        attribute: k,
        psnr_gap: same.psnr_mean - different.psnr_mean,
        same,
        different,
        p_value,
        permutations: config.permutations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub hidden: [usize; 2],
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            hidden: [256, 64],
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Macro-averaged scores in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub attribute: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub train_count: usize,
    pub test_count: usize,
}

/// Three-layer ReLU classifier on flattened signals.
#[derive(Debug, Clone)]
pub struct Probe {
    params: ParamSet,
    inputs: usize,
}

const PROBE_LAYERS: [&str; 3] = ["probe.fc1", "probe.fc2", "probe.fc3"];

impl Probe {
    fn new(inputs: usize, hidden: [usize; 2], classes: usize, rng: &mut ChaCha8Rng) -> Self {
        let dims = [inputs, hidden[0], hidden[1], classes];
        let mut params = ParamSet::new();
        for (l, name) in PROBE_LAYERS.iter().enumerate() {
            let (fan_in, out) = (dims[l], dims[l + 1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            let w: Vec<f64> = (0..out * fan_in).map(|_| normal.sample(rng)).collect();
            params.insert(format!("{name}.w"), Tensor::from_vec(&[out, fan_in], w));
            params.insert(format!("{name}.b"), Tensor::zeros(&[out]));
        }
        Probe { params, inputs }
    }

    fn logits(&self, tape: &mut Tape, binding: &Binding, x: Tensor) -> crate::nn::Var {
        let mut h = tape.constant(x);
        for (l, name) in PROBE_LAYERS.iter().enumerate() {
            h = tape.linear(h, binding.var(&format!("{name}.w")), binding.var(&format!("{name}.b")));
            if l + 1 < PROBE_LAYERS.len() {
                h = tape.relu(h);
            }
        }
        h
    }

    pub fn predict(&self, signals: &[&Signal]) -> Result<Vec<usize>> {
        let x = stack(signals, self.inputs)?;
        let mut tape = Tape::new();
        let binding = Binding::new(&mut tape, &self.params, |_| false);
        let out = self.logits(&mut tape, &binding, x);
        let v = tape.value(out);
        Ok((0..v.rows())
            .map(|r| {
                let row = v.row(r);
                (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best })
            })
            .collect())
    }
}

fn stack(signals: &[&Signal], inputs: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(signals.len() * inputs);
    for s in signals {
        if s.data().len() != inputs {
            return Err(Error::Shape(format!(
                "signal has {} pixels, probe expects {inputs}",
                s.data().len()
            )));
        }
        data.extend(s.data().iter().map(|&v| f64::from(v)));
    }
    Ok(Tensor::from_vec(&[signals.len(), inputs], data))
}

/// Trains a probe on `(signal, label)` pairs with minibatch Adam.
pub fn train_probe(signals: &[&Signal], labels: &[usize], classes: usize, config: &ProbeConfig) -> Result<Probe> {
    if signals.is_empty() || signals.len() != labels.len() {
        return Err(Error::Argument(format!(
            "probe needs matching non-empty inputs, got {} signals and {} labels",
            signals.len(),
            labels.len()
        )));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::Argument("probe batch size and epochs must be positive".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Argument(format!("label {bad} out of range for {classes} classes")));
    }
    let inputs = signals[0].data().len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut probe = Probe::new(inputs, config.hidden, classes, &mut rng);
    let mut moments = AdamMoments::zeros_like(&probe.params);
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
    let mut order: Vec<usize> = (0..signals.len()).collect();
    let mut t = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let xs: Vec<&Signal> = batch.iter().map(|&i| signals[i]).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let x = stack(&xs, inputs)?;
            let mut tape = Tape::new();
            let binding = Binding::new(&mut tape, &probe.params, |_| true);
            let logits = probe.logits(&mut tape, &binding, x);
            let loss = tape.softmax_cross_entropy(logits, &ys);
            let mut grads = tape.backward(loss);
            let g = binding.gradients(&tape, &mut grads);
            t += 1;
            adam_step(&mut probe.params, &mut moments, &g, t, &adam)?;
        }
    }
    Ok(probe)
}

/// Accuracy and macro precision/recall/F1 (percent); classes never predicted
/// count as zero precision.
#[allow(clippy::needless_range_loop)]
pub fn classification_scores(truth: &[usize], predicted: &[usize], classes: usize) -> (f64, f64, f64, f64, Vec<Vec<usize>>) {
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion[t][p] += 1;
    }
    let n = truth.len().max(1) as f64;
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let (mut prec, mut rec, mut f1) = (0.0, 0.0, 0.0);
    for c in 0..classes {
        let tp = confusion[c][c] as f64;
        let pred: usize = (0..classes).map(|t| confusion[t][c]).sum();
        let actual: usize = confusion[c].iter().sum();
        let p = if pred > 0 { tp / pred as f64 } else { 0.0 };
        let r = if actual > 0 { tp / actual as f64 } else { 0.0 };
        prec += p;
        rec += r;
        f1 += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    let k = classes as f64;
    (
        100.0 * correct as f64 / n,
        100.0 * prec / k,
        100.0 * rec / k,
        100.0 * f1 / k,
        confusion,
    )
}

/// Trains a probe for attribute `p` on `train_set` and scores it on `test_set`.
pub fn probe_classify(train_set: &[&Sample], test_set: &[&Sample], p: usize, classes: usize, config: &ProbeConfig) -> Result<ProbeReport> {
    if test_set.is_empty() {
        return Err(Error::Argument("probe test set is empty".into()));
    }
    let present: BTreeSet<usize> = train_set
        .iter()
        .map(|s| s.scenario.get(p))
        .collect();
    let missing: Vec<usize> = (0..classes).filter(|c| !present.contains(c)).collect();
    if !missing.is_empty() {
        return Err(Error::Stratification(format!(
            "probe train set lacks categories {missing:?} of attribute {p}"
        )));
    }
    let signals: Vec<&Signal> = train_set.iter().map(|s| &s.signal).collect();
    let labels: Vec<usize> = train_set.iter().map(|s| s.scenario.get(p)).collect();
    let probe = train_probe(&signals, &labels, classes, config)?;
    let test_signals: Vec<&Signal> = test_set.iter().map(|s| &s.signal).collect();
    let truth: Vec<usize> = test_set.iter().map(|s| s.scenario.get(p)).collect();
    let predicted = probe.predict(&test_signals)?;
    let (accuracy, precision, recall, f1, confusion) = classification_scores(&truth, &predicted, classes);
    Ok(ProbeReport {
        attribute: p,
        accuracy,
        precision,
        recall,
        f1,
        confusion,
        train_count: train_set.len(),
        test_count: test_set.len(),
    })
}

/// Binary 8-bit PGM (P5), pixels rounded from `[0, 1]`.
pub fn write_pgm(path: &Path, signal: &Signal) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", signal.width(), signal.height()).into_bytes();
    bytes.extend(
        signal
            .data()
            .iter()
            .map(|&v| (f64::from(v).clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Vec<f64> {
        (0..h * w).map(|i| (i % w) as f64 / w as f64 * 0.8 + (i / w) as f64 / h as f64 * 0.1).collect()
    }

    #[test]
    fn psnr_examples() {
        let x = ramp(16, 16);
        assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
        let y: Vec<f64> = x.iter().map(|v| v + 0.1).collect();
        assert!((psnr(&x, &y).unwrap() - 20.0).abs() < 1e-9);
        assert!(matches!(psnr(&x, &x[1..]), Err(Error::Shape(_))));
    }

    #[test]
    fn ssim_examples() {
        let x = ramp(16, 16);
        assert!((ssim(&x, &x, 16, 16).unwrap() - 1.0).abs() < 1e-12);
        let inv: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
        let s = ssim(&x, &inv, 16, 16).unwrap();
        assert!((-1.0..1.0).contains(&s));
        let small = ramp(8, 8);
        assert!(matches!(ssim(&small, &small, 8, 8), Err(Error::Argument(_))));
    }

    #[test]
    fn permutation_test_detects_shift() {
        let a: Vec<f64> = (0..30).map(|i| 10.0 + (i % 5) as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| 5.0 + (i % 5) as f64).collect();
        assert!(permutation_p_value(&a, &b, 2000, 1).unwrap() < 0.01);
        assert!(permutation_p_value(&b, &a, 2000, 1).unwrap() > 0.99);
    }

    #[test]
    fn macro_scores() {
        let (acc, p, r, f1, conf) = classification_scores(&[0, 0, 1, 1], &[0, 1, 1, 1], 2);
        assert_eq!(acc, 75.0);
        assert!((p - 100.0 * (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-9);
        assert!((r - 75.0).abs() < 1e-9);
        assert!(f1 > 0.0 && f1 < 100.0);
        assert_eq!(conf, vec![vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn pgm_header_and_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let s = Signal::new(2, 3, vec![0.0, 0.5, 1.0, 0.2, 0.8, 1.0]).unwrap();
        let path = dir.path().join("x.pgm");
        write_pgm(&path, &s).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 6..], &[0, 128, 255, 51, 204, 255]);
    }
}
