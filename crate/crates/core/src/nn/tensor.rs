//! Minimal CHW tensor plus the im2col/col2im plumbing behind the conv
//! layers.

use super::scalar::Scalar;
use crate::io::Frame;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            h,
            w,
            data: vec![F::ZERO; c * h * w],
        }
    }

    pub fn from_frames(frames: &[&Frame]) -> Self {
        let h = frames[0].height;
        let w = frames[0].width;
        let mut data = Vec::with_capacity(frames.len() * 3 * h * w);
        for f in frames {
            debug_assert_eq!((f.width, f.height), (w, h));
            data.extend(f.data().iter().map(|v| F::from_f64(*v as f64)));
        }
        Tensor {
            c: 3 * frames.len(),
            h,
            w,
            data,
        }
    }

    /// First three channels interpreted as an RGB frame, clamped to [0, 1].
    pub fn to_frame(&self) -> Frame {
        assert!(self.c >= 3);
        let n = self.h * self.w;
        let mut out = Vec::with_capacity(3 * n);
        for v in &self.data[..3 * n] {
            out.push(v.to_f64().clamp(0.0, 1.0) as f32);
        }
        Frame::from_planar(self.w, self.h, out).expect("shape by construction")
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Unrolls `x` into the column matrix of a k x k convolution with the given
/// stride and zero padding: `K = c*k*k` rows by `N = oh*ow` columns.
pub fn im2col<F: Scalar>(
    x: &Tensor<F>,
    k: usize,
    stride: usize,
    pad: usize,
    col: &mut Vec<F>,
) -> (usize, usize) {
    let oh = (x.h + 2 * pad - k) / stride + 1;
    let ow = (x.w + 2 * pad - k) / stride + 1;
    let rows = x.c * k * k;
    let n = oh * ow;
    col.clear();
    col.resize(rows * n, F::ZERO);

    for c in 0..x.c {
        let plane = &x.data[c * x.h * x.w..(c + 1) * x.h * x.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst_base = row * n;
                if stride == 1 {
                    // Contiguous copy per output row with zero fill at the edges.
                    for oy in 0..oh {
                        let iy = oy as isize + ky as isize - pad as isize;
                        let dst = &mut col[dst_base + oy * ow..dst_base + (oy + 1) * ow];
                        if iy < 0 || iy >= x.h as isize {
                            continue; // stays zero
                        }
                        let src_row = &plane[iy as usize * x.w..(iy as usize + 1) * x.w];
                        let shift = kx as isize - pad as isize;
                        let (dst_lo, src_lo) = if shift < 0 {
                            ((-shift) as usize, 0usize)
                        } else {
                            (0usize, shift as usize)
                        };
                        if src_lo >= x.w {
                            continue;
                        }
                        let span = (x.w - src_lo).min(ow - dst_lo);
                        dst[dst_lo..dst_lo + span].copy_from_slice(&src_row[src_lo..src_lo + span]);
                    }
                } else {
                    for oy in 0..oh {
                        let iy = (oy * stride) as isize + ky as isize - pad as isize;
                        if iy < 0 || iy >= x.h as isize {
                            continue;
                        }
                        let src_row = &plane[iy as usize * x.w..(iy as usize + 1) * x.w];
                        for ox in 0..ow {
                            let ix = (ox * stride) as isize + kx as isize - pad as isize;
                            if ix >= 0 && ix < x.w as isize {
                                col[dst_base + oy * ow + ox] = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    (rows, n)
}

/// Scatter-adds a column-matrix gradient back into input layout; the adjoint
/// of [`im2col`].
pub fn col2im<F: Scalar>(
    dcol: &[F],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    dx: &mut Tensor<F>,
) {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let n = oh * ow;
    debug_assert_eq!(dx.data.len(), c * h * w);

    for ci in 0..c {
        let plane = &mut dx.data[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src_base = row * n;
                for oy in 0..oh {
                    let iy = (oy * stride) as isize + ky as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    if stride == 1 {
                        let shift = kx as isize - pad as isize;
                        let (src_lo, dst_lo) = if shift < 0 {
                            ((-shift) as usize, 0usize)
                        } else {
                            (0usize, shift as usize)
                        };
                        if dst_lo >= w {
                            continue;
                        }
                        let span = (w - dst_lo).min(ow - src_lo);
                        let src = &dcol[src_base + oy * ow + src_lo..src_base + oy * ow + src_lo + span];
                        for (d, s) in dst_row[dst_lo..dst_lo + span].iter_mut().zip(src) {
                            *d += *s;
                        }
                    } else {
                        for ox in 0..ow {
                            let ix = (ox * stride) as isize + kx as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst_row[ix as usize] += dcol[src_base + oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn im2col_identity_kernel_center() {
        // 1x1 "window" of a 3x3 kernel at pad 1: center row equals the input.
        let mut x = Tensor::<f64>::zeros(1, 4, 5);
        for (i, v) in x.data.iter_mut().enumerate() {
            *v = i as f64;
        }
        let mut col = Vec::new();
        let (rows, n) = im2col(&x, 3, 1, 1, &mut col);
        assert_eq!(rows, 9);
        assert_eq!(n, 20);
        let center = &col[4 * n..5 * n];
        assert_eq!(center, &x.data[..]);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for (c, h, w, k, stride, pad) in [(2, 6, 5, 3, 1, 1), (3, 8, 8, 3, 2, 1)] {
            let mut x = Tensor::<f64>::zeros(c, h, w);
            for v in x.data.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let mut col = Vec::new();
            let (rows, n) = im2col(&x, k, stride, pad, &mut col);
            let y: Vec<f64> = (0..rows * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
            let mut dx = Tensor::<f64>::zeros(c, h, w);
            col2im(&y, c, h, w, k, stride, pad, &mut dx);
            let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
        }
    }
}
