//! Reconstruction, perceptual and stage-2 composite losses.

use crate::error::{Error, Result};
use crate::io::Frame;
use crate::nn::net::PhiCache;
use crate::nn::{FeatureExtractor, Scalar, Tensor};

/// Mean squared difference over all pixels and channels.
pub fn loss_l2(pred: &Frame, target: &Frame) -> Result<f64> {
    if pred.width != target.width || pred.height != target.height {
        return Err(Error::Shape(format!(
            "loss shapes differ: {}x{} vs {}x{}",
            pred.width, pred.height, target.width, target.height
        )));
    }
    let n = pred.data().len();
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| ((a - b) as f64).powi(2))
        .sum();
    Ok(sum / n as f64)
}

/// Mean squared difference between frozen feature maps of the two frames.
pub fn loss_perceptual(pred: &Frame, target: &Frame, phi: &FeatureExtractor<f32>) -> Result<f64> {
    if pred.width != target.width || pred.height != target.height {
        return Err(Error::Shape(format!(
            "loss shapes differ: {}x{} vs {}x{}",
            pred.width, pred.height, target.width, target.height
        )));
    }
    let (fp, _) = phi.forward(&Tensor::from_frames(&[pred]));
    let (ft, _) = phi.forward(&Tensor::from_frames(&[target]));
    let n = fp.data.len();
    let sum: f64 = fp
        .data
        .iter()
        .zip(&ft.data)
        .map(|(a, b)| ((a - b) as f64).powi(2))
        .sum();
    Ok(sum / n as f64)
}

/// Stage-2 composite: perceptual content term plus the non-saturating
/// adversarial term `-lambda * ln(disc_score)`.
pub fn loss_stage2(
    pred: &Frame,
    target: &Frame,
    phi: &FeatureExtractor<f32>,
    disc_score: f64,
    lambda_adv: f64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&disc_score) || disc_score == 0.0 {
        return Err(Error::Range(format!(
            "discriminator score {disc_score} outside (0, 1)"
        )));
    }
    let content = loss_perceptual(pred, target, phi)?;
    Ok(content + lambda_adv * (-disc_score.ln()))
}

/// L2 (or L1) loss plus its gradient with respect to the prediction tensor.
pub fn recon_loss_grad<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>, l1: bool) -> (f64, Tensor<F>) {
    debug_assert_eq!(pred.data.len(), target.data.len());
    let n = pred.data.len();
    let inv = 1.0 / n as f64;
    let mut grad = Tensor::zeros(pred.c, pred.h, pred.w);
    let mut loss = 0.0f64;
    for i in 0..n {
        let d = (pred.data[i] - target.data[i]).to_f64();
        if l1 {
            loss += d.abs() * inv;
            grad.data[i] = F::from_f64(d.signum() * inv);
        } else {
            loss += d * d * inv;
            grad.data[i] = F::from_f64(2.0 * d * inv);
        }
    }
    (loss, grad)
}

/// Perceptual loss plus its gradient with respect to the prediction tensor,
/// backpropagated through the frozen feature stack.
pub fn perceptual_loss_grad(
    pred: &Tensor<f32>,
    target: &Tensor<f32>,
    phi: &FeatureExtractor<f32>,
) -> (f64, Tensor<f32>) {
    let (fp, cache): (Tensor<f32>, PhiCache<f32>) = phi.forward(pred);
    let (ft, _) = phi.forward(target);
    let n = fp.data.len();
    let inv = 1.0 / n as f64;
    let mut dfeat = Tensor::zeros(fp.c, fp.h, fp.w);
    let mut loss = 0.0f64;
    for i in 0..n {
        let d = (fp.data[i] - ft.data[i]) as f64;
        loss += d * d * inv;
        dfeat.data[i] = (2.0 * d * inv) as f32;
    }
    let dpred = phi.backward_input(&cache, &dfeat);
    (loss, dpred)
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
    fn l2_of_identical_frames_is_zero() {
        let f = random_frame(1, 16, 16);
        assert_eq!(loss_l2(&f, &f).unwrap(), 0.0);
    }

    #[test]
    fn l2_of_unit_difference_is_one() {
        let ones = Frame::from_fn(8, 8, |_, _| [1.0, 1.0, 1.0]);
        let zeros = Frame::zeros(8, 8);
        assert!((loss_l2(&ones, &zeros).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l2_matches_elementwise_oracle() {
        let a = random_frame(2, 12, 9);
        let b = random_frame(3, 12, 9);
        let mut acc = 0.0f64;
        for i in 0..a.data().len() {
            acc += ((a.data()[i] - b.data()[i]) as f64).powi(2);
        }
        let oracle = acc / a.data().len() as f64;
        assert!((loss_l2(&a, &b).unwrap() - oracle).abs() < 1e-7);
    }

    #[test]
    fn l2_shape_mismatch_rejected() {
        let a = random_frame(4, 8, 8);
        let b = random_frame(5, 8, 9);
        assert!(matches!(loss_l2(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn perceptual_zero_on_identical_and_positive_otherwise() {
        let phi = FeatureExtractor::<f32>::new([16, 32, 32]);
        let a = random_frame(6, 16, 16);
        let b = random_frame(7, 16, 16);
        assert_eq!(loss_perceptual(&a, &a, &phi).unwrap(), 0.0);
        assert!(loss_perceptual(&a, &b, &phi).unwrap() > 0.0);
    }

    #[test]
    fn perceptual_matches_feature_space_oracle() {
        let phi = FeatureExtractor::<f32>::new([16, 32, 32]);
        let a = random_frame(8, 16, 16);
        let b = random_frame(9, 16, 16);
        let (fa, _) = phi.forward(&Tensor::from_frames(&[&a]));
        let (fb, _) = phi.forward(&Tensor::from_frames(&[&b]));
        let oracle: f64 = fa
            .data
            .iter()
            .zip(&fb.data)
            .map(|(x, y)| ((x - y) as f64).powi(2))
            .sum::<f64>()
            / fa.data.len() as f64;
        assert!((loss_perceptual(&a, &b, &phi).unwrap() - oracle).abs() < 1e-7);
    }

    #[test]
    fn stage2_reduces_to_perceptual_at_lambda_zero() {
        let phi = FeatureExtractor::<f32>::new([16, 32, 32]);
        let a = random_frame(10, 16, 16);
        let b = random_frame(11, 16, 16);
        let l = loss_stage2(&a, &b, &phi, 0.5, 0.0).unwrap();
        assert_eq!(l, loss_perceptual(&a, &b, &phi).unwrap());
    }

    #[test]
    fn stage2_arithmetic() {
        // content 0 (identical frames), score e^-1, lambda 0.01 -> 0.01
        let phi = FeatureExtractor::<f32>::new([16, 32, 32]);
        let a = random_frame(12, 16, 16);
        let l = loss_stage2(&a, &a, &phi, (-1.0f64).exp(), 0.01).unwrap();
        assert!((l - 0.01).abs() < 1e-12);
    }
}
