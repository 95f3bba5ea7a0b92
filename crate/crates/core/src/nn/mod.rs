//! Networks: the 5-frame residual stabilization net, the 15-channel
//! refinement net, the patch discriminator and the frozen perceptual
//! feature extractor, all with hand-derived backward passes.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod net;
pub mod scalar;
pub mod tensor;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use net::{sigmoid, softplus, Discriminator, FeatureExtractor, ResidualStack};
pub use scalar::Scalar;
pub use tensor::Tensor;

use crate::error::{Error, Result};
use crate::interp::Refiner;
use crate::io::{Frame, FrameSequence};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Stabilization network: five co-located RGB frames in, the stabilized
/// center frame out.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct StabNetSpec {
    pub residual_blocks: usize,
    pub base_width: usize,
}

impl Default for StabNetSpec {
    fn default() -> Self {
        StabNetSpec {
            residual_blocks: 8,
            base_width: 64,
        }
    }
}

impl StabNetSpec {
    pub const IN_FRAMES: usize = 5;

    pub fn desk() -> Self {
        StabNetSpec {
            residual_blocks: 8,
            base_width: 16,
        }
    }

    pub fn paper() -> Self {
        StabNetSpec {
            residual_blocks: 64,
            base_width: 64,
        }
    }

    /// Center frame occupies channels 6..9 of the 15-channel input.
    pub fn build(&self) -> ResidualStack {
        ResidualStack::new(15, self.base_width, self.residual_blocks, 3, 6)
    }
}

/// Refinement network: four clean neighbors plus the degraded center
/// (15 input channels, degraded frame in the temporal-center slot).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct RefinerSpec {
    pub residual_blocks: usize,
    pub base_width: usize,
}

impl Default for RefinerSpec {
    fn default() -> Self {
        RefinerSpec {
            residual_blocks: 6,
            base_width: 16,
        }
    }
}

impl RefinerSpec {
    pub const IN_CHANNELS: usize = 15;

    pub fn build(&self) -> ResidualStack {
        ResidualStack::new(15, self.base_width, self.residual_blocks, 3, 6)
    }
}

/// Discriminator: stride-2 conv stages with LeakyReLU, global pooling and a
/// sigmoidal scalar head.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiscriminatorSpec {
    pub widths: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        DiscriminatorSpec {
            widths: vec![64, 128, 256, 512],
            leaky_slope: 0.2,
        }
    }
}

impl DiscriminatorSpec {
    pub fn build(&self) -> Discriminator {
        Discriminator::new(&self.widths, self.leaky_slope)
    }
}

/// Frozen feature extractor parameters; `frozen` is structurally true (the
/// stack owns immutable weights derived from a fixed internal seed).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct FeatureExtractorSpec {
    pub widths: [usize; 3],
}

impl Default for FeatureExtractorSpec {
    fn default() -> Self {
        FeatureExtractorSpec {
            widths: [16, 32, 32],
        }
    }
}

impl FeatureExtractorSpec {
    pub fn build<F: Scalar>(&self) -> FeatureExtractor<F> {
        FeatureExtractor::new(self.widths)
    }
}

fn check_colocated(frames: &[&Frame]) -> Result<()> {
    let (w, h) = (frames[0].width, frames[0].height);
    for f in frames {
        if f.width != w || f.height != h {
            return Err(Error::Shape(format!(
                "input frames disagree on shape: {}x{} vs {}x{}",
                f.width, f.height, w, h
            )));
        }
    }
    Ok(())
}

/// Runs the stabilization net on a 5-frame window.
pub fn stabnet_forward(
    window: &[&Frame; 5],
    spec: &StabNetSpec,
    params: &[f32],
) -> Result<Frame> {
    check_colocated(window)?;
    let net = spec.build();
    if params.len() != net.n_params() {
        return Err(Error::Config(format!(
            "parameter count {} does not match spec ({} expected)",
            params.len(),
            net.n_params()
        )));
    }
    let x = Tensor::from_frames(window);
    let (y, _) = net.forward(&x, params);
    Ok(y.to_frame())
}

/// Runs the refinement net: neighbors at temporal offsets -2, -1, +1, +2
/// plus the degraded center.
pub fn refiner_forward(
    neighbors: &[&Frame; 4],
    degraded: &Frame,
    spec: &RefinerSpec,
    params: &[f32],
) -> Result<Frame> {
    let ordered = [neighbors[0], neighbors[1], degraded, neighbors[2], neighbors[3]];
    check_colocated(&ordered)?;
    let net = spec.build();
    if params.len() != net.n_params() {
        return Err(Error::Config(format!(
            "parameter count {} does not match spec ({} expected)",
            params.len(),
            net.n_params()
        )));
    }
    let x = Tensor::from_frames(&ordered);
    let (y, _) = net.forward(&x, params);
    Ok(y.to_frame())
}

/// Scores a frame with the discriminator; returns sigmoid(logit) in (0, 1).
pub fn discriminator_forward(
    frame: &Frame,
    spec: &DiscriminatorSpec,
    params: &[f32],
) -> Result<f64> {
    let d = spec.build();
    if frame.width < d.min_input() || frame.height < d.min_input() {
        return Err(Error::Shape(format!(
            "frame {}x{} below discriminator minimum input {}",
            frame.width,
            frame.height,
            d.min_input()
        )));
    }
    if params.len() != d.n_params() {
        return Err(Error::Config(format!(
            "parameter count {} does not match spec ({} expected)",
            params.len(),
            d.n_params()
        )));
    }
    let x = Tensor::from_frames(&[frame]);
    let (score, _, _) = d.forward(&x, params);
    Ok(score as f64)
}

/// Frozen feature map of a frame.
pub fn phi(frame: &Frame, extractor: &FeatureExtractor<f32>) -> Tensor<f32> {
    let x = Tensor::from_frames(&[frame]);
    extractor.forward(&x).0
}

/// Applies the stabilization net to every frame of a sequence via sliding
/// 5-frame windows with temporal edge replication.
pub fn stabilize_with_net(
    seq: &FrameSequence,
    spec: &StabNetSpec,
    params: &[f32],
) -> Result<FrameSequence> {
    let net = spec.build();
    if params.len() != net.n_params() {
        return Err(Error::Config(format!(
            "parameter count {} does not match spec ({} expected)",
            params.len(),
            net.n_params()
        )));
    }
    let frames: Vec<Frame> = (0..seq.len())
        .into_par_iter()
        .map(|t| {
            let t = t as isize;
            let window = [
                seq.frame_clamped(t - 2),
                seq.frame_clamped(t - 1),
                seq.frame_clamped(t),
                seq.frame_clamped(t + 1),
                seq.frame_clamped(t + 2),
            ];
            let x = Tensor::from_frames(&window);
            let (y, _) = net.forward(&x, params);
            y.to_frame()
        })
        .collect();
    FrameSequence::new(frames, seq.fps, seq.name.clone())
}

/// Adapter exposing a trained refiner as the in-loop refinement step of the
/// iterative pipeline.
pub struct NetRefiner {
    net: ResidualStack,
    spec: RefinerSpec,
    params: Vec<f32>,
}

impl NetRefiner {
    pub fn new(spec: RefinerSpec, params: Vec<f32>) -> Result<Self> {
        let net = spec.build();
        if params.len() != net.n_params() {
            return Err(Error::Config(format!(
                "parameter count {} does not match refiner spec ({} expected)",
                params.len(),
                net.n_params()
            )));
        }
        Ok(NetRefiner { net, spec, params })
    }

    pub fn spec(&self) -> &RefinerSpec {
        &self.spec
    }
}

impl Refiner for NetRefiner {
    fn refine(&self, neighbors: [&Frame; 4], degraded: &Frame) -> Result<Frame> {
        let ordered = [neighbors[0], neighbors[1], degraded, neighbors[2], neighbors[3]];
        check_colocated(&ordered)?;
        let x = Tensor::from_frames(&ordered);
        let (y, _) = self.net.forward(&x, &self.params);
        Ok(y.to_frame())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(seed: u64, w: usize, h: usize) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::from_planar(w, h, (0..3 * w * h).map(|_| rng.gen_range(0.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn stabnet_identity_at_init() {
        let spec = StabNetSpec { residual_blocks: 2, base_width: 8 };
        let net = spec.build();
        let params: Vec<f32> = net.init_params(1);
        let frames: Vec<Frame> = (0..5).map(|i| random_frame(i, 24, 20)).collect();
        let window = [&frames[0], &frames[1], &frames[2], &frames[3], &frames[4]];
        let out = stabnet_forward(&window, &spec, &params).unwrap();
        assert_eq!(out.data(), frames[2].data());
    }

    #[test]
    fn refiner_identity_at_init() {
        let spec = RefinerSpec { residual_blocks: 2, base_width: 8 };
        let net = spec.build();
        let params: Vec<f32> = net.init_params(2);
        let frames: Vec<Frame> = (0..5).map(|i| random_frame(10 + i, 16, 16)).collect();
        let neighbors = [&frames[0], &frames[1], &frames[3], &frames[4]];
        let out = refiner_forward(&neighbors, &frames[2], &spec, &params).unwrap();
        assert_eq!(out.data(), frames[2].data());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let spec = StabNetSpec { residual_blocks: 1, base_width: 4 };
        let params: Vec<f32> = spec.build().init_params(1);
        let a = random_frame(1, 16, 16);
        let b = random_frame(2, 16, 18);
        let window = [&a, &a, &b, &a, &a];
        assert!(matches!(
            stabnet_forward(&window, &spec, &params),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn discriminator_rejects_undersized() {
        let spec = DiscriminatorSpec::default();
        let params: Vec<f32> = spec.build().init_params(1);
        let f = random_frame(3, 8, 8);
        assert!(matches!(
            discriminator_forward(&f, &spec, &params),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn discriminator_score_open_interval() {
        let spec = DiscriminatorSpec { widths: vec![8, 8, 8, 8], leaky_slope: 0.2 };
        let params: Vec<f32> = spec.build().init_params(5);
        let f = random_frame(4, 16, 16);
        let s = discriminator_forward(&f, &spec, &params).unwrap();
        assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn stabilize_with_net_identity_params_preserves_sequence() {
        let spec = StabNetSpec { residual_blocks: 1, base_width: 4 };
        let params: Vec<f32> = spec.build().init_params(4);
        let frames: Vec<Frame> = (0..5).map(|i| random_frame(20 + i, 20, 16)).collect();
        let seq = FrameSequence::new(frames, 30.0, "x").unwrap();
        let out = stabilize_with_net(&seq, &spec, &params).unwrap();
        assert_eq!(out.len(), seq.len());
        for t in 0..seq.len() {
            assert_eq!(out.frame(t).data(), seq.frame(t).data());
        }
    }
}
