//! Shared autoencoder with a partitioned latent code, the real/synthetic
//! discriminator, the segment exchange operator, and checkpoint persistence.
//!
//! Encoder: 4 x [stride-2 conv, instance norm, ReLU] -> residual block ->
//! 3 fully connected layers -> `d` latent values. The decoder mirrors it with
//! transposed convolutions and ends in a logistic activation. Inputs whose
//! sides are not multiples of 16 are zero-padded before the first stage and
//! the decoder output is cropped back.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Signal;
use crate::error::{Error, Result};
use crate::nn::{Binding, ParamSet, Tape, Tensor, Var};

pub const INSTANCE_NORM_EPS: f64 = 1e-5;
const STAGES: usize = 4;
const KERNEL: usize = 4;
const RES_KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub height: usize,
    pub width: usize,
    pub latent_dim: usize,
    /// Segment length per attribute, summing to `latent_dim`.
    pub partition: Vec<usize>,
    pub enc_widths: [usize; 4],
    pub fc_hidden: [usize; 2],
    pub disc_widths: [usize; 4],
    pub seed: u64,
}

/// Splits `d` as evenly as possible over `parts` segments, remainder to the last.
pub fn even_partition(d: usize, parts: usize) -> Vec<usize> {
    let base = d / parts;
    let mut out = vec![base; parts];
    if let Some(last) = out.last_mut() {
        *last += d - base * parts;
    }
    out
}

impl ModelConfig {
    /// 128x128 inputs, 100-dimensional code, widths 32-64-128-256.
    pub fn full(attributes: usize) -> Self {
        ModelConfig {
            height: 128,
            width: 128,
            latent_dim: 100,
            partition: even_partition(100, attributes),
            enc_widths: [32, 64, 128, 256],
            fc_hidden: [512, 256],
            disc_widths: [32, 64, 128, 256],
            seed: 0,
        }
    }

    /// Desk-scale default: 16x16 inputs and narrower stages, same topology.
    pub fn toy(attributes: usize) -> Self {
        ModelConfig {
            height: 16,
            width: 16,
            latent_dim: 100,
            partition: even_partition(100, attributes),
            enc_widths: [16, 32, 64, 64],
            fc_hidden: [128, 128],
            disc_widths: [8, 16, 32, 32],
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Argument("model input dimensions must be positive".into()));
        }
        if self.partition.is_empty() || self.partition.contains(&0) {
            return Err(Error::Argument(format!(
                "latent partition {:?} must have non-empty segments",
                self.partition
            )));
        }
        if self.partition.iter().sum::<usize>() != self.latent_dim {
            return Err(Error::Argument(format!(
                "latent partition {:?} does not sum to {}",
                self.partition, self.latent_dim
            )));
        }
        let widths = self.enc_widths.iter().chain(&self.fc_hidden).chain(&self.disc_widths);
        if widths.into_iter().any(|&w| w == 0) {
            return Err(Error::Argument("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn attributes(&self) -> usize {
        self.partition.len()
    }

    /// Input sides rounded up to the next multiple of 16.
    pub fn padded_dims(&self) -> (usize, usize) {
        let m = 1 << STAGES;
        (self.height.div_ceil(m) * m, self.width.div_ceil(m) * m)
    }

    pub fn bottleneck_dims(&self) -> (usize, usize) {
        let (ph, pw) = self.padded_dims();
        (ph >> STAGES, pw >> STAGES)
    }

    fn flat_len(&self) -> usize {
        let (bh, bw) = self.bottleneck_dims();
        self.enc_widths[3] * bh * bw
    }

    fn disc_flat_len(&self) -> usize {
        let (bh, bw) = self.bottleneck_dims();
        self.disc_widths[3] * bh * bw
    }

    /// Column range of each latent segment.
    pub fn segment_bounds(&self) -> Vec<(usize, usize)> {
        segment_bounds(&self.partition)
    }

    /// Every parameter tensor with its shape and initialization gain.
    fn layout(&self) -> Vec<(String, Vec<usize>, f64, usize)> {
        // (name, shape, gain, fan_in); gain 0 marks a zero-initialized bias.
        let mut out = Vec::new();
        let push_conv = |out: &mut Vec<_>, name: &str, cout: usize, cin: usize, k: usize, gain: f64| {
            out.push((format!("{name}.w"), vec![cout, cin, k, k], gain, cin * k * k));
            out.push((format!("{name}.b"), vec![cout], 0.0, 0));
        };
        let he = 2.0;
        let lin = 1.0;
        let ew = self.enc_widths;
        let chans = [1, ew[0], ew[1], ew[2], ew[3]];
        for i in 0..STAGES {
            push_conv(&mut out, &format!("enc.conv{}", i + 1), chans[i + 1], chans[i], KERNEL, he);
        }
        push_conv(&mut out, "enc.res.conv1", ew[3], ew[3], RES_KERNEL, he);
        push_conv(&mut out, "enc.res.conv2", ew[3], ew[3], RES_KERNEL, lin);
        let [h1, h2] = self.fc_hidden;
        let fcs = [
            ("enc.fc1", self.flat_len(), h1, he),
            ("enc.fc2", h1, h2, he),
            ("enc.fc3", h2, self.latent_dim, lin),
            ("dec.fc1", self.latent_dim, h2, he),
            ("dec.fc2", h2, h1, he),
            ("dec.fc3", h1, self.flat_len(), he),
            ("disc.fc", self.disc_flat_len(), 1, lin),
        ];
        for (name, fan_in, fan_out, gain) in fcs {
            out.push((format!("{name}.w"), vec![fan_out, fan_in], gain, fan_in));
            out.push((format!("{name}.b"), vec![fan_out], 0.0, 0));
        }
        push_conv(&mut out, "dec.res.conv1", ew[3], ew[3], RES_KERNEL, he);
        push_conv(&mut out, "dec.res.conv2", ew[3], ew[3], RES_KERNEL, lin);
        // Transposed conv weights are stored `Cin x Cout x k x k`; each output
        // sees Cin * k * k / stride^2 inputs.
        for i in (0..STAGES).rev() {
            let stage = STAGES - i;
            let (cin, cout) = (chans[i + 1], chans[i]);
            let gain = if i == 0 { lin } else { he };
            out.push((
                format!("dec.up{stage}.w"),
                vec![cin, cout, KERNEL, KERNEL],
                gain,
                cin * KERNEL * KERNEL / 4,
            ));
            out.push((format!("dec.up{stage}.b"), vec![cout], 0.0, 0));
        }
        let dw = self.disc_widths;
        let dchans = [1, dw[0], dw[1], dw[2], dw[3]];
        for i in 0..STAGES {
            push_conv(&mut out, &format!("disc.conv{}", i + 1), dchans[i + 1], dchans[i], KERNEL, he);
        }
        out
    }
}

pub fn segment_bounds(partition: &[usize]) -> Vec<(usize, usize)> {
    let mut start = 0;
    partition
        .iter()
        .map(|&len| {
            let b = (start, start + len);
            start += len;
            b
        })
        .collect()
}

/// Which sub-network a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Encoder,
    Decoder,
    Discriminator,
}

impl Component {
    pub fn of(name: &str) -> Component {
        if name.starts_with("enc.") {
            Component::Encoder
        } else if name.starts_with("dec.") {
            Component::Decoder
        } else {
            Component::Discriminator
        }
    }

    pub fn is_generator(self) -> bool {
        matches!(self, Component::Encoder | Component::Decoder)
    }
}

/// Latent vector split into one segment per attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    values: Vec<f64>,
    partition: Vec<usize>,
}

impl LatentCode {
    pub fn new(values: Vec<f64>, partition: Vec<usize>) -> Result<Self> {
        if partition.iter().sum::<usize>() != values.len() {
            return Err(Error::Shape(format!(
                "code of length {} does not match partition {:?}",
                values.len(),
                partition
            )));
        }
        Ok(LatentCode { values, partition })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn partition(&self) -> &[usize] {
        &self.partition
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, p: usize) -> &[f64] {
        let (a, b) = segment_bounds(&self.partition)[p];
        &self.values[a..b]
    }
}

/// Swaps segment `p` between two codes: returns `(z_i with z_j's segment p,
/// z_j with z_i's segment p)`.
pub fn exchange(z_i: &LatentCode, z_j: &LatentCode, p: usize) -> Result<(LatentCode, LatentCode)> {
    if z_i.partition != z_j.partition {
        return Err(Error::Shape(format!(
            "cannot exchange codes with partitions {:?} and {:?}",
            z_i.partition, z_j.partition
        )));
    }
    if p >= z_i.partition.len() {
        return Err(Error::Shape(format!(
            "attribute {p} out of range for {} segments",
            z_i.partition.len()
        )));
    }
    let (a, b) = segment_bounds(&z_i.partition)[p];
    let mut first = z_i.clone();
    let mut second = z_j.clone();
    first.values[a..b].copy_from_slice(&z_j.values[a..b]);
    second.values[a..b].copy_from_slice(&z_i.values[a..b]);
    Ok((first, second))
}

/// Graph builders over a bound parameter set.
pub struct Network<'a> {
    config: &'a ModelConfig,
    binding: &'a Binding,
}

impl<'a> Network<'a> {
    pub fn new(config: &'a ModelConfig, binding: &'a Binding) -> Self {
        Network { config, binding }
    }

    pub fn config(&self) -> &ModelConfig {
        self.config
    }

    fn conv(&self, tape: &mut Tape, name: &str, x: Var, stride: usize, pad: usize) -> Var {
        let w = self.binding.var(&format!("{name}.w"));
        let b = self.binding.var(&format!("{name}.b"));
        tape.conv2d(x, w, b, stride, pad)
    }

    fn conv_t(&self, tape: &mut Tape, name: &str, x: Var) -> Var {
        let w = self.binding.var(&format!("{name}.w"));
        let b = self.binding.var(&format!("{name}.b"));
        tape.conv_transpose2d(x, w, b, 2, 1)
    }

    fn fc(&self, tape: &mut Tape, name: &str, x: Var) -> Var {
        let w = self.binding.var(&format!("{name}.w"));
        let b = self.binding.var(&format!("{name}.b"));
        tape.linear(x, w, b)
    }

    fn residual(&self, tape: &mut Tape, prefix: &str, x: Var) -> Var {
        let h = self.conv(tape, &format!("{prefix}.conv1"), x, 1, 1);
        let h = tape.instance_norm(h, INSTANCE_NORM_EPS);
        let h = tape.relu(h);
        let h = self.conv(tape, &format!("{prefix}.conv2"), h, 1, 1);
        tape.add(x, h)
    }

    fn pad_input(&self, tape: &mut Tape, x: Var) -> Var {
        let (ph, pw) = self.config.padded_dims();
        if (ph, pw) == (self.config.height, self.config.width) {
            x
        } else {
            tape.pad(x, ph, pw)
        }
    }

    /// `x: N x 1 x H x W` -> `N x d`.
    pub fn encode(&self, tape: &mut Tape, x: Var) -> Var {
        let mut h = self.pad_input(tape, x);
        for i in 1..=STAGES {
            h = self.conv(tape, &format!("enc.conv{i}"), h, 2, 1);
            h = tape.instance_norm(h, INSTANCE_NORM_EPS);
            h = tape.relu(h);
        }
        h = self.residual(tape, "enc.res", h);
        let n = tape.value(h).rows();
        h = tape.reshape(h, &[n, self.config.flat_len()]);
        h = self.fc(tape, "enc.fc1", h);
        h = tape.relu(h);
        h = self.fc(tape, "enc.fc2", h);
        h = tape.relu(h);
        self.fc(tape, "enc.fc3", h)
    }

    /// `z: N x d` -> `N x 1 x H x W` in `(0, 1)`.
    pub fn decode(&self, tape: &mut Tape, z: Var) -> Var {
        let mut h = z;
        for i in 1..=3 {
            h = self.fc(tape, &format!("dec.fc{i}"), h);
            h = tape.relu(h);
        }
        let n = tape.value(h).rows();
        let (bh, bw) = self.config.bottleneck_dims();
        h = tape.reshape(h, &[n, self.config.enc_widths[3], bh, bw]);
        h = self.residual(tape, "dec.res", h);
        for stage in 1..=STAGES {
            h = self.conv_t(tape, &format!("dec.up{stage}"), h);
            if stage < STAGES {
                h = tape.instance_norm(h, INSTANCE_NORM_EPS);
                h = tape.relu(h);
            }
        }
        let (ph, pw) = self.config.padded_dims();
        if (ph, pw) != (self.config.height, self.config.width) {
            h = tape.crop(h, self.config.height, self.config.width);
        }
        tape.sigmoid(h)
    }

    /// Real/synthetic logits, `x: N x 1 x H x W` -> `N x 1`.
    pub fn discriminator_logits(&self, tape: &mut Tape, x: Var) -> Var {
        let mut h = self.pad_input(tape, x);
        for i in 1..=STAGES {
            h = self.conv(tape, &format!("disc.conv{i}"), h, 2, 1);
            h = tape.relu(h);
        }
        let n = tape.value(h).rows();
        h = tape.reshape(h, &[n, self.config.disc_flat_len()]);
        self.fc(tape, "disc.fc", h)
    }
}

/// Encoder, decoder and discriminator parameters with their configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub iteration: u64,
}

impl ModelState {
    /// Fan-in-scaled zero-mean normal weights and zero biases, drawn from `config.seed`.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let mut layout = config.layout();
        layout.sort_by(|a, b| a.0.cmp(&b.0));
        for (name, shape, gain, fan_in) in layout {
            let n: usize = shape.iter().product();
            let data = if gain == 0.0 {
                vec![0.0; n]
            } else {
                let std = (gain / fan_in as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("finite std");
                (0..n).map(|_| normal.sample(&mut rng)).collect()
            };
            params.insert(name, Tensor::from_vec(&shape, data));
        }
        Ok(ModelState {
            config,
            params,
            iteration: 0,
        })
    }

    /// Checks every tensor against the layout implied by `config`.
    pub fn check_layout(&self) -> Result<()> {
        let layout = self.config.layout();
        if layout.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                self.params.len()
            )));
        }
        for (name, shape, _, _) in layout {
            match self.params.get(&name) {
                None => return Err(Error::Checkpoint(format!("missing tensor `{name}`"))),
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(Error::Checkpoint(format!(
                        "tensor `{name}` has shape {:?}, config expects {:?}",
                        t.shape(),
                        shape
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Binds every parameter as a constant.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Binding {
        Binding::new(tape, &self.params, |_| false)
    }

    pub fn input_tensor(&self, signals: &[&Signal]) -> Result<Tensor> {
        let (h, w) = (self.config.height, self.config.width);
        let mut data = Vec::with_capacity(signals.len() * h * w);
        for s in signals {
            if s.height() != h || s.width() != w {
                return Err(Error::Shape(format!(
                    "signal is {}x{}, model expects {h}x{w}",
                    s.height(),
                    s.width()
                )));
            }
            if let Some((i, v)) = s.first_invalid() {
                return Err(Error::Argument(format!("pixel {i} = {v} outside [0,1]")));
            }
            data.extend(s.data().iter().map(|&v| f64::from(v)));
        }
        Ok(Tensor::from_vec(&[signals.len(), 1, h, w], data))
    }

    fn image_tensor(&self, images: &[&[f64]]) -> Result<Tensor> {
        let (h, w) = (self.config.height, self.config.width);
        let mut data = Vec::with_capacity(images.len() * h * w);
        for img in images {
            if img.len() != h * w {
                return Err(Error::Shape(format!(
                    "image has {} values, model expects {h}x{w}",
                    img.len()
                )));
            }
            data.extend_from_slice(img);
        }
        Ok(Tensor::from_vec(&[images.len(), 1, h, w], data))
    }

    pub fn encode_batch(&self, signals: &[&Signal]) -> Result<Vec<LatentCode>> {
        let x = self.input_tensor(signals)?;
        self.encode_tensor(x)
    }

    /// Encodes raw `f64` images (e.g. decoder outputs).
    pub fn encode_images(&self, images: &[&[f64]]) -> Result<Vec<LatentCode>> {
        let x = self.image_tensor(images)?;
        self.encode_tensor(x)
    }

    fn encode_tensor(&self, x: Tensor) -> Result<Vec<LatentCode>> {
        if x.rows() == 0 {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let binding = self.bind_frozen(&mut tape);
        let net = Network::new(&self.config, &binding);
        let xv = tape.constant(x);
        let z = net.encode(&mut tape, xv);
        let zt = tape.value(z);
        (0..zt.rows())
            .map(|r| LatentCode::new(zt.row(r).to_vec(), self.config.partition.clone()))
            .collect()
    }

    pub fn encode(&self, x: &Signal) -> Result<LatentCode> {
        Ok(self.encode_batch(&[x])?.remove(0))
    }

    /// Decodes codes to row-major `H x W` images with values in `(0, 1)`.
    pub fn decode_batch(&self, codes: &[&LatentCode]) -> Result<Vec<Vec<f64>>> {
        if codes.is_empty() {
            return Ok(Vec::new());
        }
        let d = self.config.latent_dim;
        let mut data = Vec::with_capacity(codes.len() * d);
        for z in codes {
            if z.len() != d || z.partition() != self.config.partition.as_slice() {
                return Err(Error::Shape(format!(
                    "code of length {} with partition {:?} does not match model ({d}, {:?})",
                    z.len(),
                    z.partition(),
                    self.config.partition
                )));
            }
            data.extend_from_slice(z.values());
        }
        let mut tape = Tape::new();
        let binding = self.bind_frozen(&mut tape);
        let net = Network::new(&self.config, &binding);
        let zv = tape.constant(Tensor::from_vec(&[codes.len(), d], data));
        let out = net.decode(&mut tape, zv);
        let ot = tape.value(out);
        Ok((0..ot.rows()).map(|r| ot.row(r).to_vec()).collect())
    }

    pub fn decode(&self, z: &LatentCode) -> Result<Vec<f64>> {
        Ok(self.decode_batch(&[z])?.remove(0))
    }

    /// `decode(encode(x))` for a batch of signals.
    pub fn reconstruct_batch(&self, signals: &[&Signal]) -> Result<Vec<Vec<f64>>> {
        let codes = self.encode_batch(signals)?;
        self.decode_batch(&codes.iter().collect::<Vec<_>>())
    }

    /// Probability-like real/synthetic score in `(0, 1)`.
    pub fn discriminate(&self, x: &[f64]) -> Result<f64> {
        let t = self.image_tensor(&[x])?;
        let mut tape = Tape::new();
        let binding = self.bind_frozen(&mut tape);
        let net = Network::new(&self.config, &binding);
        let xv = tape.constant(t);
        let logits = net.discriminator_logits(&mut tape, xv);
        let p = tape.sigmoid(logits);
        Ok(tape.value(p).item())
    }
}

pub const CHECKPOINT_FILE: &str = "model.json";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub dtype: Dtype,
    pub config: ModelConfig,
    pub iteration: u64,
    pub tensors: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<serde_json::Value>,
}

/// Writes `model.json` and one raw little-endian file per tensor.
pub(crate) fn write_checkpoint_dir(
    dir: &Path,
    config: &ModelConfig,
    iteration: u64,
    dtype: Dtype,
    tensors: &ParamSet,
    training: Option<serde_json::Value>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, t) in tensors.iter() {
        let file = format!("{name}.bin");
        let bytes: Vec<u8> = match dtype {
            Dtype::F64 => t.data().iter().flat_map(|v| v.to_le_bytes()).collect(),
            Dtype::F32 => t.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect(),
        };
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            file,
        });
    }
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        dtype,
        config: config.clone(),
        iteration,
        tensors: entries,
        training,
    };
    let path = dir.join(CHECKPOINT_FILE);
    let text = serde_json::to_string_pretty(&header).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub(crate) fn read_checkpoint_dir(dir: &Path) -> Result<(CheckpointHeader, ParamSet)> {
    let path = dir.join(CHECKPOINT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let header: CheckpointHeader = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("malformed {CHECKPOINT_FILE}: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            header.version
        )));
    }
    let mut tensors = ParamSet::new();
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        let fpath = dir.join(&entry.file);
        let bytes = fs::read(&fpath).map_err(|e| {
            Error::Checkpoint(format!("tensor `{}`: cannot read `{}`: {e}", entry.name, entry.file))
        })?;
        let expected = n * header.dtype.width();
        if bytes.len() != expected {
            return Err(Error::Checkpoint(format!(
                "tensor `{}`: file `{}` has {} bytes, expected {expected}",
                entry.name,
                entry.file,
                bytes.len()
            )));
        }
        let data: Vec<f64> = match header.dtype {
            Dtype::F64 => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
            Dtype::F32 => bytes
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4-byte chunk"))))
                .collect(),
        };
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint(format!("tensor `{}` holds non-finite values", entry.name)));
        }
        tensors.insert(entry.name.clone(), Tensor::from_vec(&entry.shape, data));
    }
    Ok((header, tensors))
}

/// Saves model parameters at full precision.
pub fn save_checkpoint(state: &ModelState, dir: &Path) -> Result<()> {
    save_checkpoint_as(state, dir, Dtype::F64)
}

pub fn save_checkpoint_as(state: &ModelState, dir: &Path, dtype: Dtype) -> Result<()> {
    write_checkpoint_dir(dir, &state.config, state.iteration, dtype, &state.params, None)
}

/// Loads a checkpoint; with `expected`, the stored tensors must fit that config.
pub fn load_checkpoint(dir: &Path, expected: Option<&ModelConfig>) -> Result<ModelState> {
    let (header, tensors) = read_checkpoint_dir(dir)?;
    let mut params = ParamSet::new();
    for (name, t) in tensors.iter() {
        if !name.starts_with("opt.") {
            params.insert(name.clone(), t.clone());
        }
    }
    let config = match expected {
        Some(cfg) => cfg.clone(),
        None => header.config.clone(),
    };
    config.validate()?;
    let state = ModelState {
        config,
        params,
        iteration: header.iteration,
    };
    state.check_layout()?;
    Ok(state)
}
