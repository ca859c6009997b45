//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation eagerly: the forward value is computed
//! when the node is pushed, and [`Tape::backward`] walks the nodes in reverse
//! order accumulating adjoints. Nodes only propagate gradients toward inputs
//! that transitively depend on a trainable leaf.

use super::conv::{self, ConvGeometry};
use super::tensor::{gemm, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeometry,
        out_channels: usize,
        cols: Vec<f64>,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Var,
        /// Geometry of the equivalent forward convolution from output back to input.
        geom: ConvGeometry,
        in_channels: usize,
        xm: Vec<f64>,
    },
    InstanceNorm {
        x: Var,
        inv_std: Vec<f64>,
    },
    Relu(Var),
    Sigmoid(Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Add(Var, Var),
    Reshape(Var),
    Pad {
        x: Var,
        h: usize,
        w: usize,
    },
    Crop {
        x: Var,
        h: usize,
        w: usize,
    },
    ConcatRows(Vec<Var>),
    SliceRows {
        x: Var,
        start: usize,
    },
    SegmentGather {
        x: Var,
        sources: Vec<Vec<usize>>,
        bounds: Vec<(usize, usize)>,
    },
    L1Mean {
        x: Var,
        target: Tensor,
    },
    SoftplusMean {
        x: Var,
        sign: f64,
    },
    WeightedSum(Vec<(Var, f64)>),
    SoftmaxCrossEntropy {
        x: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.needs(v)
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that is treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Copies the current value of `v` into a fresh constant (stop-gradient).
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    /// Strided convolution. `x: N x C x H x W`, `w: O x C x k x k`, `b: O`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(xs.len(), 4, "conv2d input must be 4-D, got {xs:?}");
        assert_eq!(ws[1], xs[1], "conv2d channel mismatch: {xs:?} vs {ws:?}");
        let geom = ConvGeometry {
            batch: xs[0],
            channels: xs[1],
            h: xs[2],
            w: xs[3],
            kernel: ws[2],
            stride,
            pad,
        };
        let out_channels = ws[0];
        let cols = conv::im2col(self.value(x).data(), &geom);
        let (rows, ncols) = (geom.col_rows(), geom.col_cols());
        let mut out = vec![0.0; out_channels * ncols];
        gemm(
            self.value(w).data(),
            (out_channels, rows),
            false,
            &cols,
            (rows, ncols),
            false,
            &mut out,
            0.0,
        );
        let bias = self.value(b).data();
        for (o, chunk) in out.chunks_mut(ncols).enumerate() {
            chunk.iter_mut().for_each(|v| *v += bias[o]);
        }
        let plane = geom.out_h() * geom.out_w();
        let value = Tensor::from_vec(
            &[geom.batch, out_channels, geom.out_h(), geom.out_w()],
            conv::channel_to_batch_major(&out, geom.batch, out_channels, plane),
        );
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(
            value,
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                out_channels,
                cols,
            },
            needs,
        )
    }

    /// Transposed convolution. `x: N x Ci x H x W`, `w: Ci x Co x k x k`, `b: Co`.
    /// Output is `(H - 1) * stride - 2 * pad + k` on each side.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(xs.len(), 4, "conv_transpose2d input must be 4-D, got {xs:?}");
        assert_eq!(ws[0], xs[1], "conv_transpose2d channel mismatch: {xs:?} vs {ws:?}");
        let (n, ci, hi, wi) = (xs[0], xs[1], xs[2], xs[3]);
        let (co, k) = (ws[1], ws[2]);
        let geom = ConvGeometry {
            batch: n,
            channels: co,
            h: (hi - 1) * stride + k - 2 * pad,
            w: (wi - 1) * stride + k - 2 * pad,
            kernel: k,
            stride,
            pad,
        };
        debug_assert_eq!((geom.out_h(), geom.out_w()), (hi, wi));
        let xm = conv::batch_to_channel_major(self.value(x).data(), n, ci, hi * wi);
        let (rows, ncols) = (geom.col_rows(), geom.col_cols());
        let mut cols = vec![0.0; rows * ncols];
        gemm(
            self.value(w).data(),
            (ci, rows),
            true,
            &xm,
            (ci, ncols),
            false,
            &mut cols,
            0.0,
        );
        let mut out = vec![0.0; n * co * geom.h * geom.w];
        conv::col2im(&cols, &geom, &mut out);
        let bias = self.value(b).data();
        let plane = geom.h * geom.w;
        for (idx, chunk) in out.chunks_mut(plane).enumerate() {
            let c = idx % co;
            chunk.iter_mut().for_each(|v| *v += bias[c]);
        }
        let value = Tensor::from_vec(&[n, co, geom.h, geom.w], out);
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(
            value,
            Op::ConvTranspose2d {
                x,
                w,
                b,
                geom,
                in_channels: ci,
                xm,
            },
            needs,
        )
    }

    /// Per-sample, per-channel normalization over the spatial plane.
    ///
    /// A single-element plane normalizes to exactly zero, so 1x1 maps pass through unchanged.
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Var {
        let shape = self.value(x).shape().to_vec();
        assert_eq!(shape.len(), 4, "instance_norm input must be 4-D");
        let plane = shape[2] * shape[3];
        if plane == 1 {
            return x;
        }
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        let mut inv_std = Vec::with_capacity(shape[0] * shape[1]);
        for (xs, ys) in src.chunks(plane).zip(out.chunks_mut(plane)) {
            let mean = xs.iter().sum::<f64>() / plane as f64;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / plane as f64;
            let is = 1.0 / (var + eps).sqrt();
            for (y, v) in ys.iter_mut().zip(xs) {
                *y = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let needs = self.needs(x);
        self.push(Tensor::from_vec(&shape, out), Op::InstanceNorm { x, inv_std }, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let needs = self.needs(x);
        self.push(value, Op::Relu(x), needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(logistic);
        let needs = self.needs(x);
        self.push(value, Op::Sigmoid(x), needs)
    }

    /// `x: N x ...` flattened to `N x In`, `w: Out x In`, `b: Out`; returns `N x Out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (n, fan_in) = (self.value(x).rows(), self.value(x).row_len());
        let ws = self.value(w).shape().to_vec();
        assert_eq!(ws[1], fan_in, "linear fan-in mismatch");
        let out_dim = ws[0];
        let mut out = vec![0.0; n * out_dim];
        let bias = self.value(b).data();
        for row in out.chunks_mut(out_dim) {
            row.copy_from_slice(bias);
        }
        gemm(
            self.value(x).data(),
            (n, fan_in),
            false,
            self.value(w).data(),
            (out_dim, fan_in),
            true,
            &mut out,
            1.0,
        );
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(Tensor::from_vec(&[n, out_dim], out), Op::Linear { x, w, b }, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shape mismatch");
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), needs)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let value = self.value(x).clone().reshape(shape);
        let needs = self.needs(x);
        self.push(value, Op::Reshape(x), needs)
    }

    /// Zero-pads the trailing two axes to `h x w` (bottom/right).
    pub fn pad(&mut self, x: Var, h: usize, w: usize) -> Var {
        let s = self.value(x).shape().to_vec();
        let (outer, ih, iw) = (s[0] * s[1], s[2], s[3]);
        assert!(h >= ih && w >= iw);
        let src = self.value(x).data();
        let mut out = vec![0.0; outer * h * w];
        for o in 0..outer {
            for r in 0..ih {
                out[(o * h + r) * w..][..iw].copy_from_slice(&src[(o * ih + r) * iw..][..iw]);
            }
        }
        let needs = self.needs(x);
        self.push(
            Tensor::from_vec(&[s[0], s[1], h, w], out),
            Op::Pad { x, h: ih, w: iw },
            needs,
        )
    }

    /// Keeps the top-left `h x w` window of the trailing two axes.
    pub fn crop(&mut self, x: Var, h: usize, w: usize) -> Var {
        let s = self.value(x).shape().to_vec();
        let (outer, ih, iw) = (s[0] * s[1], s[2], s[3]);
        assert!(h <= ih && w <= iw);
        let src = self.value(x).data();
        let mut out = vec![0.0; outer * h * w];
        for o in 0..outer {
            for r in 0..h {
                out[(o * h + r) * w..][..w].copy_from_slice(&src[(o * ih + r) * iw..][..w]);
            }
        }
        let needs = self.needs(x);
        self.push(
            Tensor::from_vec(&[s[0], s[1], h, w], out),
            Op::Crop { x, h: ih, w: iw },
            needs,
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let tail = self.value(parts[0]).shape()[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            assert_eq!(&v.shape()[1..], tail.as_slice(), "concat_rows shape mismatch");
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(&tail);
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(Tensor::from_vec(&shape, data), Op::ConcatRows(parts.to_vec()), needs)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x);
        assert!(start + len <= v.rows(), "slice_rows out of range");
        let rl = v.row_len();
        let mut shape = v.shape().to_vec();
        shape[0] = len;
        let data = v.data()[start * rl..(start + len) * rl].to_vec();
        let needs = self.needs(x);
        self.push(Tensor::from_vec(&shape, data), Op::SliceRows { x, start }, needs)
    }

    /// Builds rows segment by segment: output row `r`, segment `s` is copied
    /// from row `sources[r][s]` of `x` over columns `bounds[s]`.
    pub fn segment_gather(
        &mut self,
        x: Var,
        sources: Vec<Vec<usize>>,
        bounds: Vec<(usize, usize)>,
    ) -> Var {
        let v = self.value(x);
        assert_eq!(v.shape().len(), 2, "segment_gather expects a 2-D input");
        let d = v.shape()[1];
        let mut data = vec![0.0; sources.len() * d];
        for (r, srcs) in sources.iter().enumerate() {
            assert_eq!(srcs.len(), bounds.len());
            for (&src, &(a, b)) in srcs.iter().zip(&bounds) {
                data[r * d + a..r * d + b].copy_from_slice(&v.row(src)[a..b]);
            }
        }
        let needs = self.needs(x);
        let rows = sources.len();
        self.push(
            Tensor::from_vec(&[rows, d], data),
            Op::SegmentGather { x, sources, bounds },
            needs,
        )
    }

    /// Mean absolute deviation from a constant target.
    pub fn l1_mean(&mut self, x: Var, target: Tensor) -> Var {
        let v = self.value(x);
        assert_eq!(v.len(), target.len(), "l1_mean size mismatch");
        let n = v.len() as f64;
        let s: f64 = v
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, t)| (a - t).abs())
            .sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s / n), Op::L1Mean { x, target }, needs)
    }

    /// `mean(softplus(sign * x))`; with `x` as logits, `sign = -1` gives
    /// `-mean(log sigmoid(x))` and `sign = +1` gives `-mean(log(1 - sigmoid(x)))`.
    pub fn softplus_mean(&mut self, x: Var, sign: f64) -> Var {
        let v = self.value(x);
        let n = v.len() as f64;
        let s: f64 = v.data().iter().map(|&z| softplus(sign * z)).sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s / n), Op::SoftplusMean { x, sign }, needs)
    }

    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let total: f64 = terms.iter().map(|&(v, c)| c * self.value(v).item()).sum();
        let needs = terms.iter().any(|&(v, _)| self.needs(v));
        self.push(Tensor::scalar(total), Op::WeightedSum(terms.to_vec()), needs)
    }

    /// Mean softmax cross-entropy of `N x K` logits against class indices.
    pub fn softmax_cross_entropy(&mut self, x: Var, labels: &[usize]) -> Var {
        let v = self.value(x);
        let k = v.row_len();
        assert_eq!(v.rows(), labels.len());
        let mut probs = vec![0.0; v.len()];
        let mut loss = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = v.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|l| (l - m).exp()).sum();
            for (j, l) in row.iter().enumerate() {
                probs[r * k + j] = (l - m).exp() / z;
            }
            loss += z.ln() + m - row[label];
        }
        let n = labels.len() as f64;
        let needs = self.needs(x);
        self.push(
            Tensor::scalar(loss / n),
            Op::SoftmaxCrossEntropy {
                x,
                labels: labels.to_vec(),
                probs,
            },
            needs,
        )
    }

    /// Accumulates `d loss / d node` for every node that depends on a trainable leaf.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward from a non-scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.needs(loss) {
            grads[loss.0] = Some(Tensor::from_vec(self.value(loss).shape(), vec![1.0]));
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                out_channels,
                cols,
            } => {
                let oc = *out_channels;
                let plane = geom.out_h() * geom.out_w();
                let dym = conv::batch_to_channel_major(g.data(), geom.batch, oc, plane);
                let (rows, ncols) = (geom.col_rows(), geom.col_cols());
                if self.needs(*w) {
                    let mut dw = vec![0.0; oc * rows];
                    gemm(&dym, (oc, ncols), false, cols, (rows, ncols), true, &mut dw, 0.0);
                    self.accumulate(grads, *w, Tensor::from_vec(self.value(*w).shape(), dw));
                }
                if self.needs(*b) {
                    let db: Vec<f64> = dym.chunks(ncols).map(|c| c.iter().sum()).collect();
                    self.accumulate(grads, *b, Tensor::from_vec(&[oc], db));
                }
                if self.needs(*x) {
                    let mut dcols = vec![0.0; rows * ncols];
                    gemm(
                        self.value(*w).data(),
                        (oc, rows),
                        true,
                        &dym,
                        (oc, ncols),
                        false,
                        &mut dcols,
                        0.0,
                    );
                    let mut dx = vec![0.0; self.value(*x).len()];
                    conv::col2im(&dcols, geom, &mut dx);
                    self.accumulate(grads, *x, Tensor::from_vec(self.value(*x).shape(), dx));
                }
            }
            Op::ConvTranspose2d {
                x,
                w,
                b,
                geom,
                in_channels,
                xm,
            } => {
                let ci = *in_channels;
                let (rows, ncols) = (geom.col_rows(), geom.col_cols());
                let dcols = conv::im2col(g.data(), geom);
                if self.needs(*w) {
                    let mut dw = vec![0.0; ci * rows];
                    gemm(xm, (ci, ncols), false, &dcols, (rows, ncols), true, &mut dw, 0.0);
                    self.accumulate(grads, *w, Tensor::from_vec(self.value(*w).shape(), dw));
                }
                if self.needs(*b) {
                    let co = geom.channels;
                    let plane = geom.h * geom.w;
                    let mut db = vec![0.0; co];
                    for (idx, chunk) in g.data().chunks(plane).enumerate() {
                        db[idx % co] += chunk.iter().sum::<f64>();
                    }
                    self.accumulate(grads, *b, Tensor::from_vec(&[co], db));
                }
                if self.needs(*x) {
                    let mut dxm = vec![0.0; ci * ncols];
                    gemm(
                        self.value(*w).data(),
                        (ci, rows),
                        false,
                        &dcols,
                        (rows, ncols),
                        false,
                        &mut dxm,
                        0.0,
                    );
                    let plane = geom.out_h() * geom.out_w();
                    let dx = conv::channel_to_batch_major(&dxm, geom.batch, ci, plane);
                    self.accumulate(grads, *x, Tensor::from_vec(self.value(*x).shape(), dx));
                }
            }
            Op::InstanceNorm { x, inv_std } => {
                let y = node.value.data();
                let plane = node.value.shape()[2] * node.value.shape()[3];
                let pf = plane as f64;
                let mut dx = vec![0.0; y.len()];
                for (idx, is) in inv_std.iter().enumerate() {
                    let ys = &y[idx * plane..][..plane];
                    let gs = &g.data()[idx * plane..][..plane];
                    let mg = gs.iter().sum::<f64>() / pf;
                    let mgy = gs.iter().zip(ys).map(|(a, b)| a * b).sum::<f64>() / pf;
                    for ((d, &gv), &yv) in dx[idx * plane..][..plane].iter_mut().zip(gs).zip(ys) {
                        *d = is * (gv - mg - yv * mgy);
                    }
                }
                self.accumulate(grads, *x, Tensor::from_vec(node.value.shape(), dx));
            }
            Op::Relu(x) => {
                let dx: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(&gv, &y)| if y > 0.0 { gv } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, Tensor::from_vec(node.value.shape(), dx));
            }
            Op::Sigmoid(x) => {
                let dx: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(&gv, &y)| gv * y * (1.0 - y))
                    .collect();
                self.accumulate(grads, *x, Tensor::from_vec(node.value.shape(), dx));
            }
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let (n, fan_in) = (xv.rows(), xv.row_len());
                let out_dim = node.value.shape()[1];
                if self.needs(*w) {
                    let mut dw = vec![0.0; out_dim * fan_in];
                    gemm(g.data(), (n, out_dim), true, xv.data(), (n, fan_in), false, &mut dw, 0.0);
                    self.accumulate(grads, *w, Tensor::from_vec(&[out_dim, fan_in], dw));
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; out_dim];
                    for row in g.data().chunks(out_dim) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    self.accumulate(grads, *b, Tensor::from_vec(&[out_dim], db));
                }
                if self.needs(*x) {
                    let mut dx = vec![0.0; n * fan_in];
                    gemm(
                        g.data(),
                        (n, out_dim),
                        false,
                        self.value(*w).data(),
                        (out_dim, fan_in),
                        false,
                        &mut dx,
                        0.0,
                    );
                    self.accumulate(grads, *x, Tensor::from_vec(xv.shape(), dx));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, g.clone().reshape(&shape));
            }
            Op::Pad { x, h, w } => {
                let s = node.value.shape();
                let (outer, ph, pw) = (s[0] * s[1], s[2], s[3]);
                let mut dx = vec![0.0; outer * h * w];
                for o in 0..outer {
                    for r in 0..*h {
                        dx[(o * h + r) * w..][..*w].copy_from_slice(&g.data()[(o * ph + r) * pw..][..*w]);
                    }
                }
                self.accumulate(grads, *x, Tensor::from_vec(self.value(*x).shape(), dx));
            }
            Op::Crop { x, h, w } => {
                let s = node.value.shape();
                let (outer, ch, cw) = (s[0] * s[1], s[2], s[3]);
                let mut dx = vec![0.0; outer * h * w];
                for o in 0..outer {
                    for r in 0..ch {
                        dx[(o * h + r) * w..][..cw].copy_from_slice(&g.data()[(o * ch + r) * cw..][..cw]);
                    }
                }
                self.accumulate(grads, *x, Tensor::from_vec(self.value(*x).shape(), dx));
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.needs(p) {
                        let part = g.data()[offset..offset + len].to_vec();
                        self.accumulate(grads, p, Tensor::from_vec(self.value(p).shape(), part));
                    }
                    offset += len;
                }
            }
            Op::SliceRows { x, start } => {
                let xv = self.value(*x);
                let rl = xv.row_len();
                let mut dx = vec![0.0; xv.len()];
                dx[start * rl..start * rl + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, *x, Tensor::from_vec(xv.shape(), dx));
            }
            Op::SegmentGather { x, sources, bounds } => {
                let xv = self.value(*x);
                let d = xv.shape()[1];
                let mut dx = vec![0.0; xv.len()];
                for (r, srcs) in sources.iter().enumerate() {
                    for (&src, &(a, b)) in srcs.iter().zip(bounds) {
                        for c in a..b {
                            dx[src * d + c] += g.data()[r * d + c];
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::from_vec(xv.shape(), dx));
            }
            Op::L1Mean { x, target } => {
                let xv = self.value(*x);
                let scale = g.item() / xv.len() as f64;
                let dx: Vec<f64> = xv
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(a, t)| {
                        let diff = a - t;
                        if diff > 0.0 {
                            scale
                        } else if diff < 0.0 {
                            -scale
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.accumulate(grads, *x, Tensor::from_vec(xv.shape(), dx));
            }
            Op::SoftplusMean { x, sign } => {
                let xv = self.value(*x);
                let scale = g.item() / xv.len() as f64;
                let dx: Vec<f64> = xv
                    .data()
                    .iter()
                    .map(|&z| scale * sign * logistic(sign * z))
                    .collect();
                self.accumulate(grads, *x, Tensor::from_vec(xv.shape(), dx));
            }
            Op::WeightedSum(terms) => {
                for &(v, c) in terms {
                    self.accumulate(grads, v, Tensor::scalar(c * g.item()));
                }
            }
            Op::SoftmaxCrossEntropy { x, labels, probs } => {
                let xv = self.value(*x);
                let k = xv.row_len();
                let scale = g.item() / labels.len() as f64;
                let mut dx: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (r, &label) in labels.iter().enumerate() {
                    dx[r * k + label] -= scale;
                }
                self.accumulate(grads, *x, Tensor::from_vec(xv.shape(), dx));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(shape: &[usize], scale: f64, offset: f64) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(
            shape,
            (0..n)
                .map(|i| ((i as f64 * 0.7311 + offset).sin()) * scale)
                .collect(),
        )
    }

    /// Central-difference check of every entry of `leaf` against the analytic adjoint.
    fn check_leaf(build: &dyn Fn(&mut Tape, Tensor) -> (Var, Var), leaf: Tensor) {
        let mut tape = Tape::new();
        let (p, loss) = build(&mut tape, leaf.clone());
        let grads = tape.backward(loss);
        let analytic = grads.get(p).expect("leaf gradient").clone();
        let h = 1e-6;
        for i in 0..leaf.len() {
            let mut plus = leaf.clone();
            plus.data_mut()[i] += h;
            let mut minus = leaf.clone();
            minus.data_mut()[i] -= h;
            let mut t1 = Tape::new();
            let (_, l1) = build(&mut t1, plus);
            let mut t2 = Tape::new();
            let (_, l2) = build(&mut t2, minus);
            let numeric = (t1.value(l1).item() - t2.value(l2).item()) / (2.0 * h);
            let a = analytic.data()[i];
            assert!(
                (a - numeric).abs() <= 1e-6 * (1.0 + a.abs().max(numeric.abs())),
                "entry {i}: analytic {a} numeric {numeric}"
            );
        }
    }

    #[test]
    fn conv2d_gradients_match_finite_differences() {
        let w0 = seq(&[3, 2, 4, 4], 0.3, 0.1);
        let x0 = seq(&[2, 2, 6, 6], 1.0, 0.5);
        let target = seq(&[2, 3, 3, 3], 0.5, 2.0);
        let build_w = {
            let x0 = x0.clone();
            let target = target.clone();
            move |t: &mut Tape, w: Tensor| {
                let x = t.constant(x0.clone());
                let w = t.param(w);
                let b = t.param(seq(&[3], 0.1, 0.3));
                let y = t.conv2d(x, w, b, 2, 1);
                let y = t.sigmoid(y);
                let l = t.l1_mean(y, target.clone());
                (w, l)
            }
        };
        check_leaf(&build_w, w0.clone());
        let build_x = move |t: &mut Tape, x: Tensor| {
            let x = t.param(x);
            let w = t.constant(w0.clone());
            let b = t.constant(seq(&[3], 0.1, 0.3));
            let y = t.conv2d(x, w, b, 2, 1);
            let y = t.sigmoid(y);
            let l = t.l1_mean(y, target.clone());
            (x, l)
        };
        check_leaf(&build_x, x0);
    }

    #[test]
    fn conv_transpose_gradients_match_finite_differences() {
        let w0 = seq(&[3, 2, 4, 4], 0.3, 0.9);
        let x0 = seq(&[2, 3, 2, 2], 1.0, 0.2);
        let target = seq(&[2, 2, 4, 4], 0.5, 1.0);
        let tg = target.clone();
        let x_c = x0.clone();
        let build_w = move |t: &mut Tape, w: Tensor| {
            let x = t.constant(x_c.clone());
            let w = t.param(w);
            let b = t.constant(seq(&[2], 0.1, 0.3));
            let y = t.conv_transpose2d(x, w, b, 2, 1);
            assert_eq!(t.value(y).shape(), &[2, 2, 4, 4]);
            let y = t.sigmoid(y);
            let l = t.l1_mean(y, tg.clone());
            (w, l)
        };
        check_leaf(&build_w, w0.clone());
        let build_x = move |t: &mut Tape, x: Tensor| {
            let x = t.param(x);
            let w = t.constant(w0.clone());
            let b = t.constant(seq(&[2], 0.1, 0.3));
            let y = t.conv_transpose2d(x, w, b, 2, 1);
            let y = t.sigmoid(y);
            let l = t.l1_mean(y, target.clone());
            (x, l)
        };
        check_leaf(&build_x, x0);
    }

    #[test]
    fn conv_transpose_is_adjoint_of_conv() {
        // <conv(x), y> == <x, conv_t(y)> with shared weights and zero bias.
        let w = seq(&[3, 2, 4, 4], 0.3, 0.4);
        let x = seq(&[1, 2, 8, 8], 1.0, 0.0);
        let y = seq(&[1, 3, 4, 4], 1.0, 1.3);
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let yv = t.constant(y.clone());
        let wv = t.constant(w);
        let b3 = t.constant(Tensor::zeros(&[3]));
        let b2 = t.constant(Tensor::zeros(&[2]));
        let cx = t.conv2d(xv, wv, b3, 2, 1);
        let ty = t.conv_transpose2d(yv, wv, b2, 2, 1);
        let lhs: f64 = t.value(cx).data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = t.value(ty).data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn instance_norm_and_linear_gradients() {
        let target = seq(&[2, 5], 0.4, 0.0);
        let build = move |t: &mut Tape, x: Tensor| {
            let xv = t.param(x);
            let n = t.instance_norm(xv, 1e-5);
            let r = t.relu(n);
            let w = t.constant(seq(&[5, 12], 0.5, 0.7));
            let b = t.constant(seq(&[5], 0.1, 0.2));
            let y = t.linear(r, w, b);
            let y = t.sigmoid(y);
            let l = t.l1_mean(y, target.clone());
            (xv, l)
        };
        check_leaf(&build, seq(&[2, 3, 2, 2], 1.0, 0.3));
    }

    #[test]
    fn instance_norm_skips_single_element_planes() {
        let mut t = Tape::new();
        let x = t.param(seq(&[2, 3, 1, 1], 1.0, 0.0));
        let y = t.instance_norm(x, 1e-5);
        assert_eq!(x, y);
    }

    #[test]
    fn gather_pad_crop_and_losses_gradients() {
        let build = |t: &mut Tape, x: Tensor| {
            let xv = t.param(x);
            let g = t.segment_gather(
                xv,
                vec![vec![0, 1], vec![1, 0], vec![1, 1]],
                vec![(0, 2), (2, 4)],
            );
            let both = t.concat_rows(&[g, xv]);
            let s = t.slice_rows(both, 1, 3);
            let img = t.reshape(s, &[3, 1, 2, 2]);
            let p = t.pad(img, 3, 4);
            let c = t.crop(p, 2, 3);
            let a = t.softplus_mean(c, -1.0);
            let b = t.softplus_mean(c, 1.0);
            let ce = t.softmax_cross_entropy(s, &[0, 3, 2]);
            let l = t.weighted_sum(&[(a, 0.5), (b, 0.25), (ce, 1.5)]);
            (xv, l)
        };
        check_leaf(&build, seq(&[2, 4], 1.0, 0.6));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::full(&[1, 3], 0.2));
        let w = t.param(Tensor::full(&[2, 3], 0.1));
        let b = t.constant(Tensor::zeros(&[2]));
        let y = t.linear(x, w, b);
        let l = t.softplus_mean(y, -1.0);
        let g = t.backward(l);
        assert!(g.get(x).is_none());
        assert!(g.get(b).is_none());
        assert!(g.get(w).is_some());
    }
}
