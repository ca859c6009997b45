//! Patch extraction kernels shared by strided and transposed convolution.
//!
//! Column matrices are laid out as `(C * k * k) x (N * Ho * Wo)`: one row per
//! (channel, kernel-row, kernel-col) triple, one column per output location of
//! every batch element.

/// Spatial geometry of a square-kernel convolution from `(h, w)` to `(out_h, out_w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.batch * self.out_h() * self.out_w()
    }

    /// Input position for an output coordinate and kernel tap, or `None` in the padding.
    #[inline]
    fn source(&self, out: usize, tap: usize, extent: usize) -> Option<usize> {
        let pos = (out * self.stride + tap) as isize - self.pad as isize;
        if pos >= 0 && (pos as usize) < extent {
            Some(pos as usize)
        } else {
            None
        }
    }
}

/// Unfolds `x` (`N x C x H x W`) into a column matrix.
pub fn im2col(x: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = oh * ow;
    let ncols = g.col_cols();
    let mut cols = vec![0.0; g.col_rows() * ncols];
    for c in 0..g.channels {
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for n in 0..g.batch {
                    let src = &x[((n * g.channels + c) * g.h) * g.w..][..g.h * g.w];
                    for oy in 0..oh {
                        let Some(iy) = g.source(oy, ki, g.h) else {
                            continue;
                        };
                        let base = n * plane + oy * ow;
                        for ox in 0..ow {
                            if let Some(ix) = g.source(ox, kj, g.w) {
                                dst[base + ox] = src[iy * g.w + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back into an image buffer.
pub fn col2im(cols: &[f64], g: &ConvGeometry, x: &mut [f64]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = oh * ow;
    let ncols = g.col_cols();
    for c in 0..g.channels {
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for n in 0..g.batch {
                    let dst = &mut x[((n * g.channels + c) * g.h) * g.w..][..g.h * g.w];
                    for oy in 0..oh {
                        let Some(iy) = g.source(oy, ki, g.h) else {
                            continue;
                        };
                        let base = n * plane + oy * ow;
                        for ox in 0..ow {
                            if let Some(ix) = g.source(ox, kj, g.w) {
                                dst[iy * g.w + ix] += src[base + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `N x C x P` (batch-major) to `C x (N * P)` (channel-major).
pub fn batch_to_channel_major(x: &[f64], n: usize, c: usize, plane: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for ch in 0..c {
            let src = &x[(b * c + ch) * plane..][..plane];
            out[ch * n * plane + b * plane..][..plane].copy_from_slice(src);
        }
    }
    out
}

/// Inverse of [`batch_to_channel_major`].
pub fn channel_to_batch_major(x: &[f64], n: usize, c: usize, plane: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for ch in 0..c {
            let src = &x[ch * n * plane + b * plane..][..plane];
            out[(b * c + ch) * plane..][..plane].copy_from_slice(src);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeometry {
            batch: 2,
            channels: 3,
            h: 5,
            w: 6,
            kernel: 4,
            stride: 2,
            pad: 1,
        };
        let x: Vec<f64> = (0..2 * 3 * 5 * 6).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..g.col_rows() * g.col_cols())
            .map(|i| ((i * 3) % 13) as f64 * 0.25)
            .collect();
        let cols = im2col(&x, &g);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&y, &g, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }

    #[test]
    fn stride_two_kernel_four_halves_the_plane() {
        let g = ConvGeometry {
            batch: 1,
            channels: 1,
            h: 16,
            w: 16,
            kernel: 4,
            stride: 2,
            pad: 1,
        };
        assert_eq!((g.out_h(), g.out_w()), (8, 8));
    }

    #[test]
    fn layout_transposes_roundtrip() {
        let x: Vec<f64> = (0..24).map(f64::from).collect();
        let cm = batch_to_channel_major(&x, 2, 3, 4);
        assert_eq!(&cm[..4], &x[..4]);
        assert_eq!(&cm[4..8], &x[12..16]);
        assert_eq!(channel_to_batch_major(&cm, 2, 3, 4), x);
    }
}
