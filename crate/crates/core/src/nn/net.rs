//! The three network architectures: the residual stabilization/refinement
//! backbone, the patch discriminator, and the frozen perceptual feature
//! stack.

use super::conv::ConvSpec;
use super::scalar::Scalar;
use super::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Constant-resolution residual backbone: input conv -> ReLU ->
/// `blocks` x (conv -> ReLU -> conv + identity) -> zero-initialized output
/// conv, plus a global skip adding one input frame to the output. With the
/// zero output conv the network is an exact identity on that frame at
/// initialization.
#[derive(Debug, Clone)]
pub struct ResidualStack {
    pub in_channels: usize,
    pub width: usize,
    pub blocks: usize,
    pub out_channels: usize,
    /// First channel of the input frame that feeds the global skip.
    pub skip_offset: usize,
    convs: Vec<(ConvSpec, usize)>,
    n_params: usize,
}

/// Per-conv cache entries captured during the forward pass.
pub struct StackCache<F> {
    input_dims: (usize, usize),
    cols: Vec<Vec<F>>,
    /// Pre-activation buffers for the ReLU'd convs (input conv and the first
    /// conv of each block), indexed like `convs`.
    preacts: Vec<Option<Vec<F>>>,
    skip: Vec<F>,
}

impl ResidualStack {
    pub fn new(
        in_channels: usize,
        width: usize,
        blocks: usize,
        out_channels: usize,
        skip_offset: usize,
    ) -> Self {
        assert!(blocks >= 1, "need at least one residual block");
        assert!(skip_offset + out_channels <= in_channels);
        let mut convs = Vec::new();
        let mut offset = 0;
        let push = |spec: ConvSpec, offset: &mut usize| {
            let at = *offset;
            *offset += spec.n_params();
            (spec, at)
        };
        convs.push(push(ConvSpec::same3(in_channels, width), &mut offset));
        for _ in 0..blocks {
            convs.push(push(ConvSpec::same3(width, width), &mut offset));
            convs.push(push(ConvSpec::same3(width, width), &mut offset));
        }
        convs.push(push(ConvSpec::same3(width, out_channels), &mut offset));
        ResidualStack {
            in_channels,
            width,
            blocks,
            out_channels,
            skip_offset,
            convs,
            n_params: offset,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// He-uniform init for all hidden convs; the output conv is zeroed so
    /// the stack starts as an identity on the skip frame.
    pub fn init_params<F: Scalar>(&self, seed: u64) -> Vec<F> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![F::ZERO; self.n_params];
        let last = self.convs.len() - 1;
        for (i, (spec, offset)) in self.convs.iter().enumerate() {
            if i == last {
                continue; // zero-initialized output conv
            }
            let fan_in = (spec.in_c * spec.k * spec.k) as f64;
            let limit = (6.0 / fan_in).sqrt();
            for v in &mut params[*offset..*offset + spec.weight_len()] {
                *v = F::from_f64(rng.gen_range(-limit..limit));
            }
            // biases stay zero
        }
        params
    }

    pub fn forward<F: Scalar>(&self, x: &Tensor<F>, params: &[F]) -> (Tensor<F>, StackCache<F>) {
        assert_eq!(x.c, self.in_channels, "input channel mismatch");
        assert_eq!(params.len(), self.n_params);
        let n = x.h * x.w;
        let mut cache = StackCache {
            input_dims: (x.h, x.w),
            cols: Vec::with_capacity(self.convs.len()),
            preacts: Vec::with_capacity(self.convs.len()),
            skip: x.data[self.skip_offset * n..(self.skip_offset + self.out_channels) * n].to_vec(),
        };

        let conv_at = |i: usize| -> (&ConvSpec, &[F]) {
            let (spec, off) = &self.convs[i];
            (spec, &params[*off..*off + spec.n_params()])
        };

        // input conv + relu
        let (spec, p) = conv_at(0);
        let mut col = Vec::new();
        let mut h = spec.forward(x, p, &mut col);
        cache.cols.push(col);
        cache.preacts.push(Some(h.data.clone()));
        relu_forward(&mut h.data);

        for b in 0..self.blocks {
            let (spec1, p1) = conv_at(1 + 2 * b);
            let mut col1 = Vec::new();
            let mut u = spec1.forward(&h, p1, &mut col1);
            cache.cols.push(col1);
            cache.preacts.push(Some(u.data.clone()));
            relu_forward(&mut u.data);

            let (spec2, p2) = conv_at(2 + 2 * b);
            let mut col2 = Vec::new();
            let v = spec2.forward(&u, p2, &mut col2);
            cache.cols.push(col2);
            cache.preacts.push(None);
            for (hv, vv) in h.data.iter_mut().zip(&v.data) {
                *hv += *vv;
            }
        }

        let (spec_out, p_out) = conv_at(self.convs.len() - 1);
        let mut col_out = Vec::new();
        let mut y = spec_out.forward(&h, p_out, &mut col_out);
        cache.cols.push(col_out);
        cache.preacts.push(None);
        for (yv, sv) in y.data.iter_mut().zip(&cache.skip) {
            *yv += *sv;
        }
        (y, cache)
    }

    /// Accumulates parameter gradients into `dparams` and returns the input
    /// gradient.
    pub fn backward<F: Scalar>(
        &self,
        cache: &StackCache<F>,
        dy: &Tensor<F>,
        params: &[F],
        dparams: &mut [F],
    ) -> Tensor<F> {
        assert_eq!(dparams.len(), self.n_params);
        let (h0, w0) = cache.input_dims;
        let conv_at = |i: usize| -> (&ConvSpec, usize) {
            let (spec, off) = &self.convs[i];
            (spec, *off)
        };

        // output conv
        let last = self.convs.len() - 1;
        let (spec_out, off) = conv_at(last);
        let mut dh = spec_out.backward(
            &cache.cols[last],
            h0,
            w0,
            &params[off..off + spec_out.n_params()],
            dy,
            &mut dparams[off..off + spec_out.n_params()],
        );

        for b in (0..self.blocks).rev() {
            let i2 = 2 + 2 * b;
            let i1 = 1 + 2 * b;
            let (spec2, off2) = conv_at(i2);
            let mut du = spec2.backward(
                &cache.cols[i2],
                h0,
                w0,
                &params[off2..off2 + spec2.n_params()],
                &dh,
                &mut dparams[off2..off2 + spec2.n_params()],
            );
            relu_backward(&mut du.data, cache.preacts[i1].as_ref().expect("relu cache"));
            let (spec1, off1) = conv_at(i1);
            let dh_branch = spec1.backward(
                &cache.cols[i1],
                h0,
                w0,
                &params[off1..off1 + spec1.n_params()],
                &du,
                &mut dparams[off1..off1 + spec1.n_params()],
            );
            for (a, b) in dh.data.iter_mut().zip(&dh_branch.data) {
                *a += *b;
            }
        }

        relu_backward(&mut dh.data, cache.preacts[0].as_ref().expect("relu cache"));
        let (spec0, off0) = conv_at(0);
        let mut dx = spec0.backward(
            &cache.cols[0],
            h0,
            w0,
            &params[off0..off0 + spec0.n_params()],
            &dh,
            &mut dparams[off0..off0 + spec0.n_params()],
        );
        let n = h0 * w0;
        let skip = self.skip_offset * n;
        for (i, v) in dy.data.iter().enumerate() {
            dx.data[skip + i] += *v;
        }
        dx
    }
}

fn relu_forward<F: Scalar>(data: &mut [F]) {
    for v in data {
        if *v < F::ZERO {
            *v = F::ZERO;
        }
    }
}

fn relu_backward<F: Scalar>(grad: &mut [F], preact: &[F]) {
    for (g, p) in grad.iter_mut().zip(preact) {
        if *p <= F::ZERO {
            *g = F::ZERO;
        }
    }
}

fn leaky_forward<F: Scalar>(data: &mut [F], slope: F) {
    for v in data {
        if *v < F::ZERO {
            *v *= slope;
        }
    }
}

fn leaky_backward<F: Scalar>(grad: &mut [F], preact: &[F], slope: F) {
    for (g, p) in grad.iter_mut().zip(preact) {
        if *p <= F::ZERO {
            *g *= slope;
        }
    }
}

/// Strided conv + LeakyReLU pyramid, global average pooling and a linear
/// head producing one logit per image.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub widths: Vec<usize>,
    pub leaky_slope: f64,
    convs: Vec<(ConvSpec, usize)>,
    linear_offset: usize,
    n_params: usize,
}

pub struct DiscCache<F> {
    dims: Vec<(usize, usize)>,
    cols: Vec<Vec<F>>,
    preacts: Vec<Vec<F>>,
    pooled: Vec<F>,
    feat_dims: (usize, usize),
}

impl Discriminator {
    pub fn new(widths: &[usize], leaky_slope: f64) -> Self {
        assert!(!widths.is_empty());
        let mut convs = Vec::new();
        let mut offset = 0;
        let mut in_c = 3;
        for w in widths {
            let spec = ConvSpec::down3(in_c, *w);
            convs.push((spec, offset));
            offset += spec.n_params();
            in_c = *w;
        }
        let linear_offset = offset;
        offset += in_c + 1; // linear weights + bias
        Discriminator {
            widths: widths.to_vec(),
            leaky_slope,
            convs,
            linear_offset,
            n_params: offset,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Smallest input edge the stride stack can reduce without vanishing.
    pub fn min_input(&self) -> usize {
        1 << self.convs.len()
    }

    pub fn init_params<F: Scalar>(&self, seed: u64) -> Vec<F> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![F::ZERO; self.n_params];
        for (spec, offset) in &self.convs {
            let fan_in = (spec.in_c * spec.k * spec.k) as f64;
            let limit = (6.0 / fan_in).sqrt();
            for v in &mut params[*offset..*offset + spec.weight_len()] {
                *v = F::from_f64(rng.gen_range(-limit..limit));
            }
        }
        let head = *self.widths.last().unwrap();
        let limit = ( 3.0 / head as f64).sqrt();
        for v in &mut params[self.linear_offset..self.linear_offset + head] {
            *v = F::from_f64(rng.gen_range(-limit..limit));
        }
        params
    }

    /// Returns (score, logit, cache); the score is `sigmoid(logit)`.
    pub fn forward<F: Scalar>(&self, x: &Tensor<F>, params: &[F]) -> (F, F, DiscCache<F>) {
        assert!(
            x.h >= self.min_input() && x.w >= self.min_input(),
            "input {}x{} below discriminator minimum {}",
            x.w,
            x.h,
            self.min_input()
        );
        let slope = F::from_f64(self.leaky_slope);
        let mut cache = DiscCache {
            dims: Vec::new(),
            cols: Vec::new(),
            preacts: Vec::new(),
            pooled: Vec::new(),
            feat_dims: (0, 0),
        };
        let mut h = x.clone();
        for (spec, off) in &self.convs {
            cache.dims.push((h.h, h.w));
            let mut col = Vec::new();
            let mut y = spec.forward(&h, &params[*off..*off + spec.n_params()], &mut col);
            cache.cols.push(col);
            cache.preacts.push(y.data.clone());
            leaky_forward(&mut y.data, slope);
            h = y;
        }
        cache.feat_dims = (h.h, h.w);
        let n = h.h * h.w;
        let inv = F::from_f64(1.0 / n as f64);
        let mut pooled = vec![F::ZERO; h.c];
        for c in 0..h.c {
            let mut acc = F::ZERO;
            for v in &h.data[c * n..(c + 1) * n] {
                acc += *v;
            }
            pooled[c] = acc * inv;
        }
        let wlin = &params[self.linear_offset..self.linear_offset + h.c];
        let blin = params[self.linear_offset + h.c];
        let mut logit = blin;
        for (w, p) in wlin.iter().zip(&pooled) {
            logit += *w * *p;
        }
        cache.pooled = pooled;
        let score = sigmoid(logit);
        (score, logit, cache)
    }

    /// Backward from the logit gradient; accumulates into `dparams`, returns
    /// the input gradient.
    pub fn backward<F: Scalar>(
        &self,
        cache: &DiscCache<F>,
        dlogit: F,
        params: &[F],
        dparams: &mut [F],
    ) -> Tensor<F> {
        let head = *self.widths.last().unwrap();
        let (fh, fw) = cache.feat_dims;
        let n = fh * fw;
        let wlin = &params[self.linear_offset..self.linear_offset + head];
        for (c, p) in cache.pooled.iter().enumerate() {
            dparams[self.linear_offset + c] += dlogit * *p;
        }
        dparams[self.linear_offset + head] += dlogit;

        let inv = F::from_f64(1.0 / n as f64);
        let mut dh = Tensor::zeros(head, fh, fw);
        for c in 0..head {
            let g = dlogit * wlin[c] * inv;
            for v in &mut dh.data[c * n..(c + 1) * n] {
                *v = g;
            }
        }

        let slope = F::from_f64(self.leaky_slope);
        for (i, (spec, off)) in self.convs.iter().enumerate().rev() {
            leaky_backward(&mut dh.data, &cache.preacts[i], slope);
            let (h, w) = cache.dims[i];
            dh = spec.backward(
                &cache.cols[i],
                h,
                w,
                &params[*off..*off + spec.n_params()],
                &dh,
                &mut dparams[*off..*off + spec.n_params()],
            );
        }
        dh
    }
}

pub fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::ZERO {
        F::ONE / (F::ONE + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::ONE + e)
    }
}

/// softplus(x) = ln(1 + e^x), computed without overflow.
pub fn softplus<F: Scalar>(z: F) -> F {
    if z > F::ZERO {
        z + (F::ONE + (-z).exp()).ln()
    } else {
        (F::ONE + z.exp()).ln()
    }
}

/// Frozen convolutional feature stack with two stride-2 downsamplings.
/// Weights are derived from a fixed internal seed, never trained, so the map
/// is identical across processes and program lifetimes.
#[derive(Debug, Clone)]
pub struct FeatureExtractor<F> {
    convs: Vec<(ConvSpec, usize)>,
    params: Vec<F>,
}

pub struct PhiCache<F> {
    dims: Vec<(usize, usize)>,
    cols: Vec<Vec<F>>,
    preacts: Vec<Option<Vec<F>>>,
}

const PHI_SEED: u64 = 0x7A5C_1D93_42E6_0B1F;

impl<F: Scalar> FeatureExtractor<F> {
    pub fn new(widths: [usize; 3]) -> Self {
        let specs = [
            ConvSpec::down3(3, widths[0]),
            ConvSpec::down3(widths[0], widths[1]),
            ConvSpec::same3(widths[1], widths[2]),
        ];
        let mut convs = Vec::new();
        let mut offset = 0;
        for spec in specs {
            convs.push((spec, offset));
            offset += spec.n_params();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(PHI_SEED);
        let mut params = vec![F::ZERO; offset];
        for (spec, off) in &convs {
            let fan_in = (spec.in_c * spec.k * spec.k) as f64;
            let limit = (6.0 / fan_in).sqrt();
            for v in &mut params[*off..*off + spec.weight_len()] {
                *v = F::from_f64(rng.gen_range(-limit..limit));
            }
        }
        FeatureExtractor { convs, params }
    }

    pub fn forward(&self, x: &Tensor<F>) -> (Tensor<F>, PhiCache<F>) {
        let mut cache = PhiCache {
            dims: Vec::new(),
            cols: Vec::new(),
            preacts: Vec::new(),
        };
        let mut h = x.clone();
        let last = self.convs.len() - 1;
        for (i, (spec, off)) in self.convs.iter().enumerate() {
            cache.dims.push((h.h, h.w));
            let mut col = Vec::new();
            let mut y = spec.forward(&h, &self.params[*off..*off + spec.n_params()], &mut col);
            cache.cols.push(col);
            if i < last {
                cache.preacts.push(Some(y.data.clone()));
                relu_forward(&mut y.data);
            } else {
                cache.preacts.push(None);
            }
            h = y;
        }
        (h, cache)
    }

    /// Gradient with respect to the input only; the weights are frozen.
    pub fn backward_input(&self, cache: &PhiCache<F>, dfeat: &Tensor<F>) -> Tensor<F> {
        let mut dh = dfeat.clone();
        let mut scratch = vec![F::ZERO; self.convs.iter().map(|(s, _)| s.n_params()).max().unwrap()];
        for (i, (spec, off)) in self.convs.iter().enumerate().rev() {
            if let Some(pre) = &cache.preacts[i] {
                relu_backward(&mut dh.data, pre);
            }
            let (h, w) = cache.dims[i];
            let scratch_slice = &mut scratch[..spec.n_params()];
            dh = spec.backward(
                &cache.cols[i],
                h,
                w,
                &self.params[*off..*off + spec.n_params()],
                &dh,
                scratch_slice,
            );
        }
        dh
    }

    /// Spatial downsampling factor of the output grid.
    pub fn downsampling(&self) -> usize {
        self.convs
            .iter()
            .map(|(s, _)| s.stride)
            .product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn residual_stack_is_identity_at_init() {
        let net = ResidualStack::new(15, 8, 2, 3, 6);
        let params: Vec<f32> = net.init_params(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = Tensor::<f32>::zeros(15, 12, 10);
        for v in x.data.iter_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        let (y, _) = net.forward(&x, &params);
        let n = 12 * 10;
        assert_eq!(&y.data[..], &x.data[6 * n..9 * n]);
    }

    #[test]
    fn discriminator_score_in_open_interval() {
        let d = Discriminator::new(&[8, 12, 16, 16], 0.2);
        let params: Vec<f32> = d.init_params(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = Tensor::<f32>::zeros(3, 16, 16);
        for v in x.data.iter_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        let (score, _, _) = d.forward(&x, &params);
        assert!(score > 0.0 && score < 1.0);
        let (score2, _, _) = d.forward(&x, &params);
        assert_eq!(score, score2);
    }

    #[test]
    fn phi_is_deterministic_and_discriminative() {
        let phi = FeatureExtractor::<f32>::new([16, 32, 32]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = Tensor::<f32>::zeros(3, 32, 32);
        for v in x.data.iter_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        let (fa, _) = phi.forward(&x);
        let (fb, _) = phi.forward(&x);
        assert_eq!(fa.data, fb.data);

        // Second instance rebuilds the identical frozen weights.
        let phi2 = FeatureExtractor::<f32>::new([16, 32, 32]);
        let (fc, _) = phi2.forward(&x);
        assert_eq!(fa.data, fc.data);

        // A shifted copy must land elsewhere in feature space.
        let mut shifted = Tensor::<f32>::zeros(3, 32, 32);
        for c in 0..3 {
            for y in 0..32 {
                for xx in 0..32 {
                    let sx = (xx + 5).min(31);
                    shifted.data[(c * 32 + y) * 32 + xx] = x.data[(c * 32 + y) * 32 + sx];
                }
            }
        }
        let (fs, _) = phi.forward(&shifted);
        let dist: f32 = fa
            .data
            .iter()
            .zip(&fs.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!(dist > 0.0);
    }

    #[test]
    fn sigmoid_and_softplus_are_stable() {
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
        assert!(sigmoid(500.0f64) <= 1.0);
        assert!(sigmoid(-500.0f64) >= 0.0);
        assert!((softplus(0.0f64) - (2.0f64).ln().abs()).abs() < 1e-12);
        assert!(softplus(700.0f64).is_finite());
        assert!(softplus(-700.0f64) >= 0.0);
    }
}
