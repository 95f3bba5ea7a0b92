//! Evaluation suite: camera-trajectory recovery from frame pairs, the
//! frequency-domain stability score, and the homography-based distortion and
//! cropping scores.

pub mod features;
pub mod homography;

pub use features::{detect_corners, match_corners, Corner, Match};
pub use homography::{
    compose_similarity, decompose_homography, estimate_homography_ransac, fit_homography_dlt,
    Homography, PoseDecomposition, RansacParams,
};

use crate::error::{Error, Result};
use crate::io::FrameSequence;
use crate::signal::{band_sum, dft_magnitudes};
use crate::synth::Trajectory;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Low band of the stability score: DFT bins 2..=6.
pub const STABILITY_BAND_LO: usize = 2;
pub const STABILITY_BAND_HI: usize = 6;

/// Whether band sums use raw magnitudes or squared magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumKind {
    #[default]
    Magnitude,
    Energy,
}

/// Positive-frequency magnitude spectrum of one trajectory signal after DC
/// removal; `mags[k]` is the magnitude at bin `k` (entry 0 is zero).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub mags: Vec<f64>,
}

impl Spectrum {
    pub fn of_signal(signal: &[f64]) -> Spectrum {
        Spectrum {
            mags: dft_magnitudes(signal),
        }
    }

    /// Number of positive-frequency bins.
    pub fn bins(&self) -> usize {
        self.mags.len().saturating_sub(1)
    }

    pub fn band(&self, lo: usize, hi: usize, kind: SpectrumKind) -> f64 {
        band_sum(&self.mags, lo, hi, kind == SpectrumKind::Energy)
    }
}

/// Per-signal and combined stability scores.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StabilityScore {
    pub s_tx: f64,
    pub s_ty: f64,
    pub s_t: f64,
    pub s_theta: f64,
    pub s_final: f64,
}

fn signal_stability(signal: &[f64], kind: SpectrumKind) -> f64 {
    let spec = Spectrum::of_signal(signal);
    let n = spec.bins();
    let denom = spec.band(STABILITY_BAND_LO, n, kind);
    if denom < 1e-12 {
        return 1.0; // zero-energy convention
    }
    spec.band(STABILITY_BAND_LO, STABILITY_BAND_HI, kind) / denom
}

/// Fraction of low-frequency (bins 2..=6) spectral content per signal after
/// DC removal; translational score is the min over the two axes and the
/// final score the min over translation and rotation.
pub fn stability_score(traj: &Trajectory, kind: SpectrumKind) -> Result<StabilityScore> {
    if traj.len() < 8 {
        return Err(Error::Range(format!(
            "stability needs >= 8 samples, got {}",
            traj.len()
        )));
    }
    let s_tx = signal_stability(&traj.tx, kind);
    let s_ty = signal_stability(&traj.ty, kind);
    let s_theta = signal_stability(&traj.theta, kind);
    let s_t = s_tx.min(s_ty);
    Ok(StabilityScore {
        s_tx,
        s_ty,
        s_t,
        s_theta,
        s_final: s_t.min(s_theta),
    })
}

/// Corner tracking + RANSAC settings for trajectory recovery.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrackerConfig {
    pub ransac: RansacParams,
}

fn fit_pair(
    a: &crate::io::Frame,
    b: &crate::io::Frame,
    ransac: &RansacParams,
) -> Result<Homography> {
    let corners = detect_corners(a)?;
    let matches = match_corners(a, b, &corners)?;
    if matches.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "only {} matches",
            matches.len()
        )));
    }
    let (h, mask) = estimate_homography_ransac(&matches, ransac)?;
    let inliers = mask.iter().filter(|m| **m).count();
    // A tiny consensus out of many matches is a mistrack, not a fit.
    if inliers < 4 || inliers * 10 < matches.len() * 3 {
        return Err(Error::InsufficientData(format!(
            "weak consensus: {inliers} inliers of {} matches",
            matches.len()
        )));
    }
    Ok(h)
}

/// Inter-frame homographies `H_{t -> t+1}` for all consecutive pairs.
/// `Err` entries mark pairs where tracking failed.
fn chain_homographies(
    seq: &FrameSequence,
    cfg: &TrackerConfig,
) -> Vec<std::result::Result<Homography, String>> {
    (0..seq.len() - 1)
        .into_par_iter()
        .map(|t| {
            let params = RansacParams {
                seed: cfg.ransac.seed.wrapping_add(t as u64),
                ..cfg.ransac
            };
            fit_pair(seq.frame(t), seq.frame(t + 1), &params).map_err(|e| e.to_string())
        })
        .collect()
}

fn accumulate_poses(
    seq: &FrameSequence,
    fits: &[std::result::Result<Homography, String>],
) -> (Trajectory, Vec<usize>) {
    let len = seq.len();
    let cx = (seq.width() as f64 - 1.0) / 2.0;
    let cy = (seq.height() as f64 - 1.0) / 2.0;
    let mut failed = Vec::new();
    let mut tx = Vec::with_capacity(len);
    let mut ty = Vec::with_capacity(len);
    let mut theta = Vec::with_capacity(len);
    let mut world = Homography::identity();
    tx.push(0.0);
    ty.push(0.0);
    theta.push(0.0);
    for (t, fit) in fits.iter().enumerate() {
        match fit {
            Ok(h) => {
                // Frame t+1 coordinates map into frame t via the inverse;
                // composing onto the world map yields the camera pose.
                if let Ok(inv) = h.inverse() {
                    if let Ok(next) = world.compose(&inv) {
                        world = next;
                    } else {
                        failed.push(t);
                    }
                } else {
                    failed.push(t);
                }
            }
            Err(_) => failed.push(t), // bridged with identity pose
        }
        let center = world.apply([cx, cy]);
        tx.push(center[0] - cx);
        ty.push(center[1] - cy);
        let m = world.0;
        theta.push((m[(1, 0)] - m[(0, 1)]).atan2(m[(0, 0)] + m[(1, 1)]));
    }
    (
        Trajectory { tx, ty, theta },
        failed,
    )
}

/// Recovers the absolute camera trajectory of a sequence by chaining
/// inter-frame homographies (pose 0 at the origin; translation evaluated at
/// the frame center). Fails on the first frame pair that cannot be tracked.
pub fn chain_trajectory(seq: &FrameSequence, cfg: &TrackerConfig) -> Result<Trajectory> {
    if seq.len() < 2 {
        return Err(Error::Range(format!(
            "trajectory needs >= 2 frames, got {}",
            seq.len()
        )));
    }
    let fits = chain_homographies(seq, cfg);
    for (t, fit) in fits.iter().enumerate() {
        if let Err(reason) = fit {
            return Err(Error::Tracking {
                from: t,
                to: t + 1,
                reason: reason.clone(),
            });
        }
    }
    let (traj, _) = accumulate_poses(seq, &fits);
    Ok(traj)
}

/// Like [`chain_trajectory`] but bridges failed pairs with the identity pose
/// and reports their indices instead of failing.
pub fn chain_trajectory_lenient(
    seq: &FrameSequence,
    cfg: &TrackerConfig,
) -> Result<(Trajectory, Vec<usize>)> {
    if seq.len() < 2 {
        return Err(Error::Range(format!(
            "trajectory needs >= 2 frames, got {}",
            seq.len()
        )));
    }
    let fits = chain_homographies(seq, cfg);
    Ok(accumulate_poses(seq, &fits))
}

/// Outcome of a per-frame homography metric: the score over the frames that
/// could be fitted plus the indices that failed.
#[derive(Debug, Clone)]
pub struct FrameScore {
    pub score: f64,
    pub failed_frames: Vec<usize>,
}

/// Minimum anisotropy of the per-frame input->output homographies; 1 means
/// no anisotropic warping anywhere.
pub fn distortion_score(
    input: &FrameSequence,
    output: &FrameSequence,
    cfg: &TrackerConfig,
) -> Result<FrameScore> {
    per_frame_score(input, output, cfg, |h| {
        decompose_homography(h).map(|d| d.anisotropy)
    })
    .map(|(vals, failed)| FrameScore {
        score: vals.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0),
        failed_frames: failed,
    })
}

/// Mean scale of the per-frame output->input homographies; values below 1
/// indicate field-of-view loss.
pub fn cropping_score(
    input: &FrameSequence,
    output: &FrameSequence,
    cfg: &TrackerConfig,
) -> Result<FrameScore> {
    per_frame_score(output, input, cfg, |h| decompose_homography(h).map(|d| d.scale)).map(
        |(vals, failed)| FrameScore {
            score: vals.iter().sum::<f64>() / vals.len().max(1) as f64,
            failed_frames: failed,
        },
    )
}

fn per_frame_score(
    from: &FrameSequence,
    to: &FrameSequence,
    cfg: &TrackerConfig,
    extract: impl Fn(&Homography) -> Result<f64> + Sync,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if from.len() != to.len() {
        return Err(Error::Validation(format!(
            "sequence lengths differ: {} vs {}",
            from.len(),
            to.len()
        )));
    }
    let res: Vec<std::result::Result<f64, ()>> = (0..from.len())
        .into_par_iter()
        .map(|t| {
            let params = RansacParams {
                seed: cfg.ransac.seed.wrapping_add(0x9E37 + t as u64),
                ..cfg.ransac
            };
            fit_pair(from.frame(t), to.frame(t), &params)
                .and_then(|h| extract(&h))
                .map_err(|_| ())
        })
        .collect();
    let mut vals = Vec::new();
    let mut failed = Vec::new();
    for (t, r) in res.into_iter().enumerate() {
        match r {
            Ok(v) => vals.push(v),
            Err(()) => failed.push(t),
        }
    }
    if vals.is_empty() {
        return Err(Error::InsufficientData(
            "no frame pair could be fitted".into(),
        ));
    }
    Ok((vals, failed))
}

/// Stability/distortion/cropping/runtime bundle for one stabilization run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub stability: f64,
    pub stability_t: f64,
    pub stability_theta: f64,
    pub distortion: f64,
    pub cropping: f64,
    pub runtime_ms_per_frame: f64,
    pub frames_evaluated: usize,
    pub frames_failed: usize,
    pub method: String,
}

/// Full evaluation of a stabilization result. Stability is computed on the
/// trajectory recovered from `output` (or on `gt_output_traj` when given);
/// per-frame fit failures are bridged and counted, never silently dropped.
pub fn evaluate(
    input: &FrameSequence,
    output: &FrameSequence,
    runtime_ms_per_frame: f64,
    method: &str,
    gt_output_traj: Option<&Trajectory>,
    kind: SpectrumKind,
    cfg: &TrackerConfig,
) -> Result<MetricsReport> {
    if input.len() != output.len() {
        return Err(Error::Validation(format!(
            "input and output lengths differ: {} vs {}",
            input.len(),
            output.len()
        )));
    }
    let mut failed_frames = std::collections::BTreeSet::new();
    let stability = match gt_output_traj {
        Some(traj) => stability_score(traj, kind)?,
        None => {
            let (traj, failed) = chain_trajectory_lenient(output, cfg)?;
            failed_frames.extend(failed);
            stability_score(&traj, kind)?
        }
    };
    let distortion = distortion_score(input, output, cfg)?;
    failed_frames.extend(distortion.failed_frames.iter().copied());
    let cropping = cropping_score(input, output, cfg)?;
    failed_frames.extend(cropping.failed_frames.iter().copied());
    Ok(MetricsReport {
        stability: stability.s_final,
        stability_t: stability.s_t,
        stability_theta: stability.s_theta,
        distortion: distortion.score,
        cropping: cropping.score,
        runtime_ms_per_frame,
        frames_evaluated: output.len(),
        frames_failed: failed_frames.len(),
        method: method.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_smooth_trajectory, procedural_texture, render_crop_sequence};

    #[test]
    fn constant_trajectory_scores_one() {
        let traj = Trajectory::constant(32);
        let s = stability_score(&traj, SpectrumKind::Magnitude).unwrap();
        assert_eq!(s.s_final, 1.0);
        assert_eq!(s.s_t, 1.0);
        assert_eq!(s.s_theta, 1.0);
    }

    #[test]
    fn low_band_sinusoid_scores_one() {
        let len = 64;
        let w = 2.0 * std::f64::consts::PI * 3.0 / len as f64;
        let traj = Trajectory {
            tx: (0..len).map(|t| (w * t as f64).sin()).collect(),
            ty: vec![0.0; len],
            theta: vec![0.0; len],
        };
        let s = stability_score(&traj, SpectrumKind::Magnitude).unwrap();
        assert!(s.s_t > 0.999, "{s:?}");
        assert_eq!(s.s_final, 1.0f64.min(s.s_t));
    }

    #[test]
    fn high_band_sinusoid_scores_low() {
        let len = 64;
        let w = 2.0 * std::f64::consts::PI * 20.0 / len as f64;
        let traj = Trajectory {
            tx: (0..len).map(|t| (w * t as f64).sin()).collect(),
            ty: vec![0.0; len],
            theta: vec![0.0; len],
        };
        let s = stability_score(&traj, SpectrumKind::Magnitude).unwrap();
        assert!(s.s_t < 0.05, "{s:?}");
    }

    #[test]
    fn stability_invariant_to_dc_offset() {
        let traj = gen_smooth_trajectory(64, 2.0, 0.004, 5).unwrap();
        let jittered = crate::synth::inject_jitter(&traj, &crate::synth::JitterSpec::default()).unwrap();
        let mut shifted = jittered.clone();
        for v in &mut shifted.tx {
            *v += 123.0;
        }
        for v in &mut shifted.theta {
            *v -= 7.0;
        }
        let a = stability_score(&jittered, SpectrumKind::Magnitude).unwrap();
        let b = stability_score(&shifted, SpectrumKind::Magnitude).unwrap();
        assert!((a.s_final - b.s_final).abs() < 1e-12);
    }

    #[test]
    fn short_trajectory_rejected() {
        let traj = Trajectory::constant(7);
        assert!(matches!(
            stability_score(&traj, SpectrumKind::Magnitude),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn static_sequence_has_zero_trajectory() {
        let img = procedural_texture(256, 256, 21);
        let seq = render_crop_sequence(&img, &Trajectory::constant(6), (96, 96), 30.0, "s").unwrap();
        let traj = chain_trajectory(&seq, &TrackerConfig::default()).unwrap();
        for t in 0..6 {
            assert!(traj.tx[t].abs() < 1e-9);
            assert!(traj.ty[t].abs() < 1e-9);
            assert!(traj.theta[t].abs() < 1e-9);
        }
    }

    #[test]
    fn single_frame_sequence_rejected() {
        let img = procedural_texture(64, 64, 22);
        let seq = FrameSequence::new(vec![img], 30.0, "one").unwrap();
        assert!(matches!(
            chain_trajectory(&seq, &TrackerConfig::default()),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn recovered_trajectory_matches_ground_truth() {
        let img = procedural_texture(768, 768, 23);
        let traj = gen_smooth_trajectory(24, 2.0, 0.004, 9).unwrap();
        let jittered =
            crate::synth::inject_jitter(&traj, &crate::synth::JitterSpec { seed: 5, ..Default::default() })
                .unwrap();
        let seq = render_crop_sequence(&img, &jittered, (128, 128), 30.0, "gt").unwrap();
        let recovered = chain_trajectory(&seq, &TrackerConfig::default()).unwrap();
        for t in 0..seq.len() {
            let ex = jittered.tx[t] - jittered.tx[0];
            let ey = jittered.ty[t] - jittered.ty[0];
            let et = jittered.theta[t] - jittered.theta[0];
            assert!(
                (recovered.tx[t] - ex).abs() < 0.5,
                "t={t}: tx {} vs {}",
                recovered.tx[t],
                ex
            );
            assert!(
                (recovered.ty[t] - ey).abs() < 0.5,
                "t={t}: ty {} vs {}",
                recovered.ty[t],
                ey
            );
            assert!(
                (recovered.theta[t] - et).abs() < 0.01,
                "t={t}: theta {} vs {}",
                recovered.theta[t],
                et
            );
        }
    }

    #[test]
    fn identity_evaluation_scores_unity() {
        let img = procedural_texture(512, 512, 24);
        let traj = gen_smooth_trajectory(12, 1.5, 0.002, 4).unwrap();
        let seq = render_crop_sequence(&img, &traj, (96, 96), 30.0, "x").unwrap();
        let report = evaluate(
            &seq,
            &seq,
            0.0,
            "identity",
            None,
            SpectrumKind::Magnitude,
            &TrackerConfig::default(),
        )
        .unwrap();
        assert!((report.distortion - 1.0).abs() < 1e-3, "{report:?}");
        assert!((report.cropping - 1.0).abs() < 1e-3, "{report:?}");
        assert_eq!(report.frames_failed, 0);
        assert_eq!(report.frames_evaluated, 12);
        assert_eq!(report.runtime_ms_per_frame, 0.0);
    }

    #[test]
    fn distortion_detects_anisotropic_squeeze() {
        use crate::warp::{warp, AffineMap};
        let img = procedural_texture(512, 512, 25);
        let traj = Trajectory::constant(6);
        let seq = render_crop_sequence(&img, &traj, (128, 128), 30.0, "in").unwrap();
        // Squeeze y by 0.8 about the frame center.
        let frames: Vec<crate::io::Frame> = seq
            .frames()
            .iter()
            .map(|f| {
                let map = AffineMap {
                    linear: [1.0, 0.0, 0.0, 1.0 / 0.8],
                    offset: [0.0, 63.5 - 63.5 / 0.8],
                };
                warp(f, &map)
            })
            .collect();
        let out = FrameSequence::new(frames, 30.0, "out").unwrap();
        let d = distortion_score(&seq, &out, &TrackerConfig::default()).unwrap();
        assert!((d.score - 0.8).abs() < 0.02, "distortion {}", d.score);

        // A rigid rotation stays isotropic.
        let frames: Vec<crate::io::Frame> = seq
            .frames()
            .iter()
            .map(|f| warp(f, &AffineMap::about_center(63.5, 63.5, -0.2, 1.0, 0.0, 0.0)))
            .collect();
        let out = FrameSequence::new(frames, 30.0, "rot").unwrap();
        let d = distortion_score(&seq, &out, &TrackerConfig::default()).unwrap();
        assert!((d.score - 1.0).abs() < 0.02, "distortion {}", d.score);
    }

    #[test]
    fn cropping_detects_zoom() {
        use crate::warp::{warp, AffineMap};
        let img = procedural_texture(512, 512, 26);
        let seq = render_crop_sequence(&img, &Trajectory::constant(6), (128, 128), 30.0, "in").unwrap();
        // Output shows only the central 90%: sample at 0.9 scale about center.
        let frames: Vec<crate::io::Frame> = seq
            .frames()
            .iter()
            .map(|f| warp(f, &AffineMap::about_center(63.5, 63.5, 0.0, 0.9, 0.0, 0.0)))
            .collect();
        let out = FrameSequence::new(frames, 30.0, "crop").unwrap();
        let c = cropping_score(&seq, &out, &TrackerConfig::default()).unwrap();
        assert!((c.score - 0.9).abs() < 0.02, "cropping {}", c.score);
    }

    #[test]
    fn report_round_trips_through_json() {
        let report = MetricsReport {
            stability: 0.9,
            stability_t: 0.95,
            stability_theta: 0.9,
            distortion: 0.99,
            cropping: 1.0,
            runtime_ms_per_frame: 12.5,
            frames_evaluated: 64,
            frames_failed: 1,
            method: "iterative".into(),
        };
        let json = serde_json::to_string(&report).unwrap();
        let parsed: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.stability, report.stability);
        assert_eq!(parsed.method, report.method);
        for key in [
            "stability",
            "stability_t",
            "stability_theta",
            "distortion",
            "cropping",
            "runtime_ms_per_frame",
            "frames_evaluated",
            "frames_failed",
            "method",
        ] {
            assert!(json.contains(&format!("\"{key}\"")), "missing {key}");
        }
    }
}
