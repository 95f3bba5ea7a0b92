//! The optimization loops: stage-1 reconstruction training, stage-2
//! perceptual/adversarial fine-tuning, and refiner training.
//!
//! Determinism: every random choice (video, frame, patch origin, per-sample
//! augmentation seed) is drawn from one master ChaCha stream on the driving
//! thread; the heavy per-sample work runs in parallel and is reduced in draw
//! order, so results are bit-identical regardless of thread count.

use super::augment::{augment_with_rng, AugmentSpec, TrainSample};
use super::loss::{perceptual_loss_grad, recon_loss_grad};
use super::schedule::{lr_linear, PlateauSchedule};
use super::{LossRow, TrainConfig};
use crate::error::{Error, Result};
use crate::io::{crop, extract_patch_windows, Frame};
use crate::nn::net::sigmoid;
use crate::nn::{
    softplus, Adam, CheckpointManifest, DiscriminatorSpec, FeatureExtractorSpec, RefinerSpec,
    ResidualStack, StabNetSpec, Tensor,
};
use crate::synth::{RefinerSample, StabPair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const VAL_SALT: u64 = 0x56414c5f53414c54;
const VAL_SAMPLES: usize = 32;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Vec<f32>,
    pub history: Vec<LossRow>,
    /// (iteration, held-out L2) pairs, starting with iteration 0.
    pub val_history: Vec<(usize, f64)>,
    pub initial_val: f64,
    pub final_val: f64,
}

#[derive(Debug, Clone)]
pub struct Stage2Outcome {
    pub gen_params: Vec<f32>,
    pub disc_params: Vec<f32>,
    pub history: Vec<LossRow>,
    /// Mean discriminator score on real patches, per iteration.
    pub disc_real: Vec<f64>,
    /// Mean discriminator score on generated patches, per iteration.
    pub disc_fake: Vec<f64>,
}

fn check_patch_fits(w: usize, h: usize, patch: usize) -> Result<()> {
    if patch > w || patch > h {
        return Err(Error::Config(format!(
            "patch size {patch} exceeds frame size {w}x{h}"
        )));
    }
    Ok(())
}

fn stab_sample(
    pairs: &[StabPair],
    rng: &mut ChaCha8Rng,
    patch: usize,
    augment: &AugmentSpec,
) -> TrainSample {
    let pair = &pairs[rng.gen_range(0..pairs.len())];
    let frame = rng.gen_range(0..pair.unstable.len());
    let row = rng.gen_range(0..=pair.unstable.height() - patch);
    let col = rng.gen_range(0..=pair.unstable.width() - patch);
    let inputs: Vec<Frame> = extract_patch_windows(&pair.unstable, frame, 2, patch, (row, col))
        .expect("validated bounds")
        .into_iter()
        .map(|p| p.pixels)
        .collect();
    let target = crop(pair.stable.frame(frame), col, row, patch, patch);
    let sample = TrainSample { inputs, target };
    augment_with_rng(&sample, augment, rng)
}

fn refiner_train_sample(
    samples: &[RefinerSample],
    rng: &mut ChaCha8Rng,
    patch: usize,
    augment: &AugmentSpec,
) -> TrainSample {
    let s = &samples[rng.gen_range(0..samples.len())];
    let (w, h) = (s.clean_center.width, s.clean_center.height);
    let row = rng.gen_range(0..=h - patch);
    let col = rng.gen_range(0..=w - patch);
    let cut = |f: &Frame| crop(f, col, row, patch, patch);
    let sample = TrainSample {
        inputs: vec![
            cut(&s.clean_neighbors[0]),
            cut(&s.clean_neighbors[1]),
            cut(&s.degraded_center),
            cut(&s.clean_neighbors[2]),
            cut(&s.clean_neighbors[3]),
        ],
        target: cut(&s.clean_center),
    };
    augment_with_rng(&sample, augment, rng)
}

fn forward_tensor(sample: &TrainSample) -> Tensor<f32> {
    let refs: Vec<&Frame> = sample.inputs.iter().collect();
    Tensor::from_frames(&refs)
}

fn l2_pass(
    net: &ResidualStack,
    params: &[f32],
    sample: &TrainSample,
    l1: bool,
) -> (f64, Vec<f32>) {
    let x = forward_tensor(sample);
    let (y, cache) = net.forward(&x, params);
    let t = Tensor::from_frames(&[&sample.target]);
    let (loss, dy) = recon_loss_grad(&y, &t, l1);
    let mut grads = vec![0.0f32; net.n_params()];
    net.backward(&cache, &dy, params, &mut grads);
    (loss, grads)
}

fn mean_reduce(results: Vec<(f64, Vec<f32>)>, n_params: usize) -> (f64, Vec<f32>) {
    let count = results.len() as f64;
    let mut grads = vec![0.0f32; n_params];
    let mut loss = 0.0f64;
    for (l, g) in results {
        loss += l;
        for (acc, v) in grads.iter_mut().zip(&g) {
            *acc += v;
        }
    }
    let inv = (1.0 / count) as f32;
    for v in grads.iter_mut() {
        *v *= inv;
    }
    (loss / count, grads)
}

fn mean_val_l2(net: &ResidualStack, params: &[f32], val: &[TrainSample]) -> f64 {
    let losses: Vec<f64> = val
        .par_iter()
        .map(|s| {
            let x = forward_tensor(s);
            let (y, _) = net.forward(&x, params);
            let t = Tensor::from_frames(&[&s.target]);
            recon_loss_grad(&y, &t, false).0
        })
        .collect();
    losses.iter().sum::<f64>() / losses.len().max(1) as f64
}

/// Draws a whole batch of descriptors (and their augmented samples) from the
/// master stream, then hands back the built samples.
fn draw_batch(
    mut make: impl FnMut(&mut ChaCha8Rng) -> TrainSample,
    rng: &mut ChaCha8Rng,
    count: usize,
) -> Vec<TrainSample> {
    (0..count).map(|_| make(rng)).collect()
}

fn l2_training_loop(
    net: &ResidualStack,
    mut params: Vec<f32>,
    cfg: &TrainConfig,
    mut sampler: impl FnMut(&mut ChaCha8Rng) -> TrainSample,
    val_set: Vec<TrainSample>,
) -> Result<TrainOutcome> {
    let mut adam = Adam::new(params.len());
    let mut sched = PlateauSchedule::new(cfg.lr_init, cfg.plateau_patience, cfg.plateau_factor);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let per_iter = cfg.batch_size * cfg.patches_per_batch;

    let initial_val = mean_val_l2(net, &params, &val_set);
    let mut val_history = vec![(0usize, initial_val)];
    sched.observe(initial_val);

    let mut history = Vec::with_capacity(cfg.max_iters);
    for iter in 0..cfg.max_iters {
        let samples = draw_batch(&mut sampler, &mut rng, per_iter);
        let results: Vec<(f64, Vec<f32>)> = samples
            .par_iter()
            .map(|s| l2_pass(net, &params, s, cfg.l1_loss))
            .collect();
        let (loss, grads) = mean_reduce(results, net.n_params());
        let lr = sched.lr;
        adam.step(&mut params, &grads, lr);
        history.push(LossRow {
            iter,
            loss_total: loss,
            loss_content: loss,
            loss_adv: 0.0,
            lr,
        });
        if (iter + 1) % cfg.val_interval == 0 {
            let v = mean_val_l2(net, &params, &val_set);
            val_history.push((iter + 1, v));
            sched.observe(v);
        }
    }
    let final_val = mean_val_l2(net, &params, &val_set);
    Ok(TrainOutcome {
        params,
        history,
        val_history,
        initial_val,
        final_val,
    })
}

/// Stage 1: minimizes the reconstruction loss over random co-located
/// 5-frame patch windows with Adam and the plateau schedule.
pub fn train_stage1(
    pairs: &[StabPair],
    val_pairs: &[StabPair],
    spec: &StabNetSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.stage != 1 {
        return Err(Error::Config(format!("stage-1 trainer got stage {}", cfg.stage)));
    }
    if pairs.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    for p in pairs.iter().chain(val_pairs) {
        check_patch_fits(p.unstable.width(), p.unstable.height(), cfg.patch_size)?;
    }
    let net = spec.build();
    let params: Vec<f32> = net.init_params(cfg.seed);

    let val_source = if val_pairs.is_empty() { pairs } else { val_pairs };
    let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ VAL_SALT);
    let no_augment = AugmentSpec::default();
    let val_set: Vec<TrainSample> = (0..VAL_SAMPLES)
        .map(|_| stab_sample(val_source, &mut val_rng, cfg.patch_size, &no_augment))
        .collect();

    let augment = cfg.augment;
    let patch = cfg.patch_size;
    l2_training_loop(
        &net,
        params,
        cfg,
        move |rng| stab_sample(pairs, rng, patch, &augment),
        val_set,
    )
}

/// Refiner training: stage-1 style L2 minimization on clean/degraded
/// samples.
pub fn train_refiner(
    samples: &[RefinerSample],
    val_samples: &[RefinerSample],
    spec: &RefinerSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InsufficientData("empty refiner sample set".into()));
    }
    for s in samples.iter().chain(val_samples) {
        check_patch_fits(s.clean_center.width, s.clean_center.height, cfg.patch_size)?;
    }
    let net = spec.build();
    let params: Vec<f32> = net.init_params(cfg.seed);

    let val_source = if val_samples.is_empty() { samples } else { val_samples };
    let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ VAL_SALT);
    let no_augment = AugmentSpec::default();
    let val_set: Vec<TrainSample> = (0..VAL_SAMPLES)
        .map(|_| refiner_train_sample(val_source, &mut val_rng, cfg.patch_size, &no_augment))
        .collect();

    let augment = cfg.augment;
    let patch = cfg.patch_size;
    l2_training_loop(
        &net,
        params,
        cfg,
        move |rng| refiner_train_sample(samples, rng, patch, &augment),
        val_set,
    )
}

/// Stage 2: alternating discriminator / generator updates with the
/// perceptual + adversarial objective and linear learning-rate decay.
/// Refuses to run unless `stage1` is a stage-1 stabnet checkpoint matching
/// `spec`.
pub fn train_stage2(
    pairs: &[StabPair],
    spec: &StabNetSpec,
    stage1: &CheckpointManifest,
    gen_init: Vec<f32>,
    disc_spec: &DiscriminatorSpec,
    cfg: &TrainConfig,
) -> Result<Stage2Outcome> {
    cfg.validate()?;
    if cfg.stage != 2 {
        return Err(Error::Config(format!("stage-2 trainer got stage {}", cfg.stage)));
    }
    if stage1.kind != "stabnet" {
        return Err(Error::State(format!(
            "stage 2 needs a stabnet checkpoint, got {:?}",
            stage1.kind
        )));
    }
    if stage1.stage != 1 {
        return Err(Error::State(format!(
            "stage 2 needs a stage-1 checkpoint, got stage {}",
            stage1.stage
        )));
    }
    let ckpt_spec: StabNetSpec = serde_json::from_value(stage1.spec.clone())
        .map_err(|e| Error::State(format!("stage-1 checkpoint spec unreadable: {e}")))?;
    if ckpt_spec != *spec {
        return Err(Error::State(format!(
            "checkpoint spec {ckpt_spec:?} does not match requested {spec:?}"
        )));
    }
    if pairs.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    for p in pairs {
        check_patch_fits(p.unstable.width(), p.unstable.height(), cfg.patch_size)?;
    }

    let net = spec.build();
    if gen_init.len() != net.n_params() {
        return Err(Error::State(format!(
            "checkpoint has {} parameters, spec wants {}",
            gen_init.len(),
            net.n_params()
        )));
    }
    let disc = disc_spec.build();
    if cfg.patch_size < disc.min_input() {
        return Err(Error::Config(format!(
            "patch size {} below discriminator minimum {}",
            cfg.patch_size,
            disc.min_input()
        )));
    }
    let phi = FeatureExtractorSpec::default().build::<f32>();

    let mut gen_params = gen_init;
    let mut disc_params: Vec<f32> = disc.init_params(cfg.seed ^ 0xD15C);
    let mut adam_g = Adam::new(gen_params.len());
    let mut adam_d = Adam::new(disc_params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let per_iter = cfg.batch_size * cfg.patches_per_batch;
    let lambda = cfg.lambda_adv;

    let mut history = Vec::with_capacity(cfg.max_iters);
    let mut disc_real = Vec::with_capacity(cfg.max_iters);
    let mut disc_fake = Vec::with_capacity(cfg.max_iters);

    let augment = cfg.augment;
    let patch = cfg.patch_size;
    for iter in 0..cfg.max_iters {
        let lr = lr_linear(iter, cfg.max_iters, cfg.lr_init)?;
        let samples = draw_batch(
            |rng| stab_sample(pairs, rng, patch, &augment),
            &mut rng,
            per_iter,
        );

        // Discriminator step on detached generator outputs.
        struct DStep {
            grads: Vec<f32>,
            s_real: f64,
            s_fake: f64,
        }
        let inv_n = 1.0 / per_iter as f64;
        let d_steps: Vec<DStep> = samples
            .par_iter()
            .map(|s| {
                let x = forward_tensor(s);
                let (pred, _) = net.forward(&x, &gen_params);
                let t = Tensor::from_frames(&[&s.target]);
                let (_, z_real, cache_r) = disc.forward(&t, &disc_params);
                let (_, z_fake, cache_f) = disc.forward(&pred, &disc_params);
                let mut grads = vec![0.0f32; disc.n_params()];
                let dz_real = ((sigmoid(z_real as f64) - 1.0) * inv_n) as f32;
                let dz_fake = (sigmoid(z_fake as f64) * inv_n) as f32;
                disc.backward(&cache_r, dz_real, &disc_params, &mut grads);
                disc.backward(&cache_f, dz_fake, &disc_params, &mut grads);
                DStep {
                    grads,
                    s_real: sigmoid(z_real as f64),
                    s_fake: sigmoid(z_fake as f64),
                }
            })
            .collect();
        let mut d_grads = vec![0.0f32; disc.n_params()];
        let mut mean_real = 0.0;
        let mut mean_fake = 0.0;
        for step in &d_steps {
            for (acc, v) in d_grads.iter_mut().zip(&step.grads) {
                *acc += v;
            }
            mean_real += step.s_real * inv_n;
            mean_fake += step.s_fake * inv_n;
        }
        adam_d.step(&mut disc_params, &d_grads, lr);
        disc_real.push(mean_real);
        disc_fake.push(mean_fake);

        // Generator step against the updated discriminator.
        let g_results: Vec<(f64, f64, Vec<f32>)> = samples
            .par_iter()
            .map(|s| {
                let x = forward_tensor(s);
                let (pred, cache) = net.forward(&x, &gen_params);
                let t = Tensor::from_frames(&[&s.target]);
                let (content, mut dpred) = perceptual_loss_grad(&pred, &t, &phi);
                let (_, z, dcache) = disc.forward(&pred, &disc_params);
                let adv = softplus(-(z as f64));
                if lambda > 0.0 {
                    let dz = (lambda * (sigmoid(z as f64) - 1.0)) as f32;
                    let mut scratch = vec![0.0f32; disc.n_params()];
                    let dadv = disc.backward(&dcache, dz, &disc_params, &mut scratch);
                    for (a, b) in dpred.data.iter_mut().zip(&dadv.data) {
                        *a += *b;
                    }
                }
                // Mean over the batch.
                for v in dpred.data.iter_mut() {
                    *v *= inv_n as f32;
                }
                let mut grads = vec![0.0f32; net.n_params()];
                net.backward(&cache, &dpred, &gen_params, &mut grads);
                (content, adv, grads)
            })
            .collect();
        let mut g_grads = vec![0.0f32; net.n_params()];
        let mut mean_content = 0.0;
        let mut mean_adv = 0.0;
        for (content, adv, grads) in &g_results {
            for (acc, v) in g_grads.iter_mut().zip(grads) {
                *acc += v;
            }
            mean_content += content * inv_n;
            mean_adv += adv * inv_n;
        }
        adam_g.step(&mut gen_params, &g_grads, lr);

        history.push(LossRow {
            iter,
            loss_total: mean_content + lambda * mean_adv,
            loss_content: mean_content,
            loss_adv: mean_adv,
            lr,
        });
    }

    Ok(Stage2Outcome {
        gen_params,
        disc_params,
        history,
        disc_real,
        disc_fake,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_stab_pair, procedural_texture, JitterSpec, PairSpec};

    fn tiny_pairs(n: usize, jitter_px: f64) -> Vec<StabPair> {
        let img = procedural_texture(256, 256, 77);
        (0..n)
            .map(|i| {
                let spec = PairSpec {
                    length: 10,
                    window: (64, 64),
                    speed_px: 1.0,
                    turn_rate: 0.002,
                    jitter: JitterSpec {
                        amplitude_px: jitter_px,
                        amplitude_rad: 0.003 * jitter_px.signum(),
                        seed: 100 + i as u64,
                        ..JitterSpec::default()
                    },
                    fps: 30.0,
                };
                make_stab_pair(&img, &spec, i as u64).unwrap()
            })
            .collect()
    }

    fn tiny_cfg(iters: usize) -> TrainConfig {
        let mut cfg = TrainConfig::stage1(crate::train::Profile::Desk, 3);
        cfg.patch_size = 32;
        cfg.batch_size = 2;
        cfg.patches_per_batch = 1;
        cfg.max_iters = iters;
        cfg
    }

    #[test]
    fn identical_pairs_have_zero_initial_loss() {
        let pairs = tiny_pairs(2, 0.0);
        let spec = StabNetSpec { residual_blocks: 1, base_width: 4 };
        let cfg = tiny_cfg(0);
        let out = train_stage1(&pairs, &[], &spec, &cfg).unwrap();
        // Identity init + identical stable/unstable -> exactly zero.
        assert_eq!(out.initial_val, 0.0);
    }

    #[test]
    fn short_training_is_deterministic() {
        let pairs = tiny_pairs(2, 2.0);
        let spec = StabNetSpec { residual_blocks: 1, base_width: 4 };
        let cfg = tiny_cfg(5);
        let a = train_stage1(&pairs, &[], &spec, &cfg).unwrap();
        let b = train_stage1(&pairs, &[], &spec, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history.len(), 5);
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.loss_total, y.loss_total);
        }
    }

    #[test]
    fn oversized_patch_is_config_error() {
        let pairs = tiny_pairs(1, 2.0);
        let spec = StabNetSpec { residual_blocks: 1, base_width: 4 };
        let mut cfg = tiny_cfg(1);
        cfg.patch_size = 220;
        assert!(matches!(
            train_stage1(&pairs, &[], &spec, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn stage2_requires_stage1_checkpoint() {
        let pairs = tiny_pairs(1, 2.0);
        let spec = StabNetSpec { residual_blocks: 1, base_width: 4 };
        let net = spec.build();
        let params: Vec<f32> = net.init_params(1);
        let manifest = CheckpointManifest {
            kind: "stabnet".into(),
            spec: serde_json::to_value(spec).unwrap(),
            stage: 2, // wrong stage
            iteration: 0,
            seed: 0,
            loss_history_path: None,
        };
        let mut cfg = TrainConfig::stage2(crate::train::Profile::Desk, 1);
        cfg.patch_size = 32;
        cfg.max_iters = 1;
        let err = train_stage2(&pairs, &spec, &manifest, params, &DiscriminatorSpec::default(), &cfg);
        assert!(matches!(err, Err(Error::State(_))));
    }

    #[test]
    fn stage2_lambda_zero_matches_perceptual_identity() {
        let pairs = tiny_pairs(2, 2.0);
        let spec = StabNetSpec { residual_blocks: 1, base_width: 4 };
        let net = spec.build();
        let params: Vec<f32> = net.init_params(1);
        let manifest = CheckpointManifest {
            kind: "stabnet".into(),
            spec: serde_json::to_value(spec).unwrap(),
            stage: 1,
            iteration: 0,
            seed: 0,
            loss_history_path: None,
        };
        let mut cfg = TrainConfig::stage2(crate::train::Profile::Desk, 5);
        cfg.patch_size = 32;
        cfg.batch_size = 1;
        cfg.patches_per_batch = 1;
        cfg.max_iters = 3;
        cfg.lambda_adv = 0.0;
        let out = train_stage2(
            &pairs,
            &spec,
            &manifest,
            params,
            &DiscriminatorSpec { widths: vec![8, 8, 8, 8], leaky_slope: 0.2 },
            &cfg,
        )
        .unwrap();
        for row in &out.history {
            assert_eq!(row.loss_total, row.loss_content);
            assert!(row.loss_total.is_finite());
        }
    }
}
