//! Convolution layer: im2col + GEMM forward, GEMM backward for both the
//! parameter and input gradients.

use super::scalar::Scalar;
use super::tensor::{col2im, im2col, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn same3(in_c: usize, out_c: usize) -> Self {
        ConvSpec {
            in_c,
            out_c,
            k: 3,
            stride: 1,
            pad: 1,
        }
    }

    pub fn down3(in_c: usize, out_c: usize) -> Self {
        ConvSpec {
            in_c,
            out_c,
            k: 3,
            stride: 2,
            pad: 1,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.out_c * self.in_c * self.k * self.k
    }

    pub fn n_params(&self) -> usize {
        self.weight_len() + self.out_c
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    /// Forward pass; the column matrix is left in `col` for reuse by
    /// [`ConvSpec::backward`].
    pub fn forward<F: Scalar>(&self, x: &Tensor<F>, params: &[F], col: &mut Vec<F>) -> Tensor<F> {
        debug_assert_eq!(x.c, self.in_c);
        debug_assert_eq!(params.len(), self.n_params());
        let (rows, n) = im2col(x, self.k, self.stride, self.pad, col);
        let (oh, ow) = self.out_dims(x.h, x.w);
        let mut y = Tensor::zeros(self.out_c, oh, ow);
        let weight = &params[..self.weight_len()];
        let bias = &params[self.weight_len()..];
        unsafe {
            F::gemm(
                self.out_c,
                rows,
                n,
                F::ONE,
                weight.as_ptr(),
                rows as isize,
                1,
                col.as_ptr(),
                n as isize,
                1,
                F::ZERO,
                y.data.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        for o in 0..self.out_c {
            let b = bias[o];
            for v in &mut y.data[o * n..(o + 1) * n] {
                *v += b;
            }
        }
        y
    }

    /// Backward pass: accumulates parameter gradients into `dparams` and
    /// returns the gradient with respect to the layer input. `col` must be
    /// the column matrix produced by the matching forward call and
    /// `(h, w)` the input's spatial dims.
    pub fn backward<F: Scalar>(
        &self,
        col: &[F],
        h: usize,
        w: usize,
        params: &[F],
        dy: &Tensor<F>,
        dparams: &mut [F],
    ) -> Tensor<F> {
        let rows = self.in_c * self.k * self.k;
        let (oh, ow) = self.out_dims(h, w);
        let n = oh * ow;
        debug_assert_eq!(dy.data.len(), self.out_c * n);
        debug_assert_eq!(col.len(), rows * n);
        debug_assert_eq!(dparams.len(), self.n_params());

        let (dweight, dbias) = dparams.split_at_mut(self.weight_len());
        for o in 0..self.out_c {
            let mut acc = F::ZERO;
            for v in &dy.data[o * n..(o + 1) * n] {
                acc += *v;
            }
            dbias[o] += acc;
        }
        unsafe {
            // dW += dY (out_c x n) * col^T (n x rows)
            F::gemm(
                self.out_c,
                n,
                rows,
                F::ONE,
                dy.data.as_ptr(),
                n as isize,
                1,
                col.as_ptr(),
                1,
                n as isize,
                F::ONE,
                dweight.as_mut_ptr(),
                rows as isize,
                1,
            );
        }
        let weight = &params[..self.weight_len()];
        let mut dcol = vec![F::ZERO; rows * n];
        unsafe {
            // dcol = W^T (rows x out_c) * dY (out_c x n)
            F::gemm(
                rows,
                self.out_c,
                n,
                F::ONE,
                weight.as_ptr(),
                1,
                rows as isize,
                dy.data.as_ptr(),
                n as isize,
                1,
                F::ZERO,
                dcol.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        let mut dx = Tensor::zeros(self.in_c, h, w);
        col2im(&dcol, self.in_c, h, w, self.k, self.stride, self.pad, &mut dx);
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor<f64> {
        let mut t = Tensor::zeros(c, h, w);
        for v in t.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        t
    }

    #[test]
    fn forward_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = ConvSpec::same3(2, 3);
        let params: Vec<f64> = (0..spec.n_params()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let x = random_tensor(&mut rng, 2, 5, 6);
        let mut col = Vec::new();
        let y = spec.forward(&x, &params, &mut col);

        for oc in 0..3 {
            for oy in 0..5 {
                for ox in 0..6 {
                    let mut acc = params[spec.weight_len() + oc];
                    for ic in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = oy as isize + ky as isize - 1;
                                let ix = ox as isize + kx as isize - 1;
                                if iy < 0 || ix < 0 || iy >= 5 || ix >= 6 {
                                    continue;
                                }
                                let wv = params[((oc * 2 + ic) * 3 + ky) * 3 + kx];
                                acc += wv * x.data[ic * 30 + iy as usize * 6 + ix as usize];
                            }
                        }
                    }
                    let got = y.data[oc * 30 + oy * 6 + ox];
                    assert!((got - acc).abs() < 1e-12, "({oc},{oy},{ox}): {got} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for spec in [ConvSpec::same3(2, 2), ConvSpec::down3(2, 3)] {
            let mut params: Vec<f64> =
                (0..spec.n_params()).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let x = random_tensor(&mut rng, 2, 6, 6);
            let (oh, ow) = spec.out_dims(6, 6);
            let target: Vec<f64> = (0..spec.out_c * oh * ow)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();

            let loss = |params: &[f64], x: &Tensor<f64>| -> f64 {
                let mut col = Vec::new();
                let y = spec.forward(x, params, &mut col);
                y.data
                    .iter()
                    .zip(&target)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / target.len() as f64
            };

            // Analytic gradients.
            let mut col = Vec::new();
            let y = spec.forward(&x, &params, &mut col);
            let mut dy = Tensor::zeros(spec.out_c, oh, ow);
            for (i, v) in dy.data.iter_mut().enumerate() {
                *v = 2.0 * (y.data[i] - target[i]) / target.len() as f64;
            }
            let mut dparams = vec![0.0; spec.n_params()];
            let dx = spec.backward(&col, 6, 6, &params, &dy, &mut dparams);

            let step = 1e-5;
            for i in 0..params.len() {
                let orig = params[i];
                params[i] = orig + step;
                let hi = loss(&params, &x);
                params[i] = orig - step;
                let lo = loss(&params, &x);
                params[i] = orig;
                let fd = (hi - lo) / (2.0 * step);
                assert!(
                    (fd - dparams[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "param {i}: fd {fd} vs {}",
                    dparams[i]
                );
            }
            let mut xm = x.clone();
            for i in 0..xm.data.len() {
                let orig = xm.data[i];
                xm.data[i] = orig + step;
                let hi = loss(&params, &xm);
                xm.data[i] = orig - step;
                let lo = loss(&params, &xm);
                xm.data[i] = orig;
                let fd = (hi - lo) / (2.0 * step);
                assert!(
                    (fd - dx.data[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "input {i}: fd {fd} vs {}",
                    dx.data[i]
                );
            }
        }
    }
}
