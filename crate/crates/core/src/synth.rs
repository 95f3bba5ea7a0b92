//! Synthetic training-data generation: smooth band-limited camera
//! trajectories, high-frequency jitter injection, moving-window rendering
//! from a single source image, and clean/degraded sample pairs for
//! refinement-network training.
//!
//! Stable and unstable sequences of a pair are rendered from the identical
//! source image, so the pair is equi-perspective by construction: the only
//! difference between them is the trajectory itself.

use crate::error::{Error, Result};
use crate::interp::{iterative_stabilize, Interpolator, StabilizeConfig};
use crate::io::{Frame, FrameSequence};
use crate::signal::band_limited_signal;
use crate::warp::{warp_into, AffineMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Smooth trajectories live in DFT bins 2..=6; injected jitter must stay
/// strictly above this band.
pub const SMOOTH_BAND_LO: usize = 2;
pub const SMOOTH_BAND_HI: usize = 6;

/// Per-frame translational and rotational camera path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub tx: Vec<f64>,
    pub ty: Vec<f64>,
    pub theta: Vec<f64>,
}

impl Trajectory {
    pub fn constant(len: usize) -> Self {
        Trajectory {
            tx: vec![0.0; len],
            ty: vec![0.0; len],
            theta: vec![0.0; len],
        }
    }

    pub fn new(tx: Vec<f64>, ty: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        let t = Trajectory { tx, ty, theta };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tx.is_empty() || self.tx.len() != self.ty.len() || self.tx.len() != self.theta.len()
        {
            return Err(Error::Validation(format!(
                "trajectory signals must share a nonzero length (got {}/{}/{})",
                self.tx.len(),
                self.ty.len(),
                self.theta.len()
            )));
        }
        let finite = |s: &[f64]| s.iter().all(|v| v.is_finite());
        if !finite(&self.tx) || !finite(&self.ty) || !finite(&self.theta) {
            return Err(Error::Validation("trajectory contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tx.is_empty()
    }

    /// (tx, ty, theta) at frame `t`.
    pub fn pose(&self, t: usize) -> (f64, f64, f64) {
        (self.tx[t], self.ty[t], self.theta[t])
    }

    /// Writes `t, tx, ty, theta` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t,tx,ty,theta\n");
        for t in 0..self.len() {
            out.push_str(&format!("{},{},{},{}\n", t, self.tx[t], self.ty[t], self.theta[t]));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tx = Vec::new();
        let mut ty = Vec::new();
        let mut theta = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('t')) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Format(format!(
                    "{}: line {} has {} fields, expected 4",
                    path.display(),
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::Format(format!("{}: bad number {s:?}", path.display())))
            };
            tx.push(parse(fields[1])?);
            ty.push(parse(fields[2])?);
            theta.push(parse(fields[3])?);
        }
        Trajectory::new(tx, ty, theta)
    }
}

/// Band-limited high-frequency perturbation parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JitterSpec {
    /// Peak translational deviation in pixels.
    pub amplitude_px: f64,
    /// Peak rotational deviation in radians.
    pub amplitude_rad: f64,
    /// Lowest DFT bin the perturbation may occupy; must stay strictly above
    /// the smooth band, i.e. >= 7.
    pub min_freq_bin: usize,
    pub seed: u64,
}

impl Default for JitterSpec {
    fn default() -> Self {
        JitterSpec {
            amplitude_px: 3.0,
            amplitude_rad: 0.01,
            min_freq_bin: SMOOTH_BAND_HI + 1,
            seed: 0,
        }
    }
}

impl JitterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.amplitude_px < 0.0 || self.amplitude_rad < 0.0 {
            return Err(Error::Validation("jitter amplitudes must be >= 0".into()));
        }
        if self.min_freq_bin <= SMOOTH_BAND_HI {
            return Err(Error::Validation(format!(
                "min_freq_bin {} overlaps the smooth band (must be >= {})",
                self.min_freq_bin,
                SMOOTH_BAND_HI + 1
            )));
        }
        Ok(())
    }
}

fn band_signal(rng: &mut ChaCha8Rng, len: usize, lo: usize, hi: usize) -> Vec<f64> {
    // Draw (amplitude, phase) for every bin in the band in fixed order.
    let nyquist = len / 2;
    let hi = hi.min(nyquist);
    let mut params = Vec::new();
    for _ in lo..=hi.max(lo) {
        let amp: f64 = rng.gen_range(0.5..1.0);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        params.push((amp, phase));
    }
    let mut it = params.into_iter();
    band_limited_signal(len, lo, hi, |_| it.next().unwrap())
}

fn step_rms(sig: &[f64]) -> f64 {
    if sig.len() < 2 {
        return 0.0;
    }
    let sum: f64 = sig.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    (sum / (sig.len() - 1) as f64).sqrt()
}

fn scale_in_place(sig: &mut [f64], s: f64) {
    for v in sig {
        *v *= s;
    }
}

/// Generates a smooth camera trajectory whose spectral energy (after DC
/// removal) sits entirely in bins 2..=6. `speed_px` sets the RMS per-frame
/// translation step and `turn_rate` the RMS per-frame rotation step.
pub fn gen_smooth_trajectory(
    length: usize,
    speed_px: f64,
    turn_rate: f64,
    seed: u64,
) -> Result<Trajectory> {
    if length < 5 {
        return Err(Error::Range(format!(
            "trajectory length {length} too short (need >= 5)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tx = band_signal(&mut rng, length, SMOOTH_BAND_LO, SMOOTH_BAND_HI);
    let mut ty = band_signal(&mut rng, length, SMOOTH_BAND_LO, SMOOTH_BAND_HI);
    let mut theta = band_signal(&mut rng, length, SMOOTH_BAND_LO, SMOOTH_BAND_HI);

    let axis_target = speed_px / std::f64::consts::SQRT_2;
    for sig in [&mut tx, &mut ty] {
        let rms = step_rms(sig);
        let s = if rms > 0.0 && axis_target > 0.0 { axis_target / rms } else { 0.0 };
        scale_in_place(sig, s);
    }
    let rms = step_rms(&theta);
    let s = if rms > 0.0 && turn_rate > 0.0 { turn_rate / rms } else { 0.0 };
    scale_in_place(&mut theta, s);

    Trajectory::new(tx, ty, theta)
}

/// Adds a zero-mean perturbation whose DFT support lies entirely in bins
/// `>= spec.min_freq_bin`. The input trajectory is not modified; with zero
/// amplitudes the output equals the input exactly.
pub fn inject_jitter(traj: &Trajectory, spec: &JitterSpec) -> Result<Trajectory> {
    traj.validate()?;
    spec.validate()?;
    let mut out = traj.clone();
    let len = traj.len();
    let nyquist = len / 2;
    if spec.min_freq_bin > nyquist {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jx = band_signal(&mut rng, len, spec.min_freq_bin, nyquist);
    let jy = band_signal(&mut rng, len, spec.min_freq_bin, nyquist);
    let jt = band_signal(&mut rng, len, spec.min_freq_bin, nyquist);

    if spec.amplitude_px > 0.0 {
        let peak = jx
            .iter()
            .chain(jy.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            let s = spec.amplitude_px / peak;
            for t in 0..len {
                out.tx[t] += jx[t] * s;
                out.ty[t] += jy[t] * s;
            }
        }
    }
    if spec.amplitude_rad > 0.0 {
        let peak = jt.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            let s = spec.amplitude_rad / peak;
            for t in 0..len {
                out.theta[t] += jt[t] * s;
            }
        }
    }
    Ok(out)
}

/// Sampling map for frame `t` of a crop render: window pixel -> source image
/// coordinates. The window is centered on the image center, translated by
/// `(tx, ty)` and rotated by `theta` about its own center.
fn crop_map(image: &Frame, window: (usize, usize), pose: (f64, f64, f64)) -> AffineMap {
    let (w, h) = window;
    let (tx, ty, theta) = pose;
    let cx = (image.width as f64 - 1.0) / 2.0 + tx;
    let cy = (image.height as f64 - 1.0) / 2.0 + ty;
    let wcx = (w as f64 - 1.0) / 2.0;
    let wcy = (h as f64 - 1.0) / 2.0;
    let (s, c) = theta.sin_cos();
    AffineMap {
        linear: [c, -s, s, c],
        offset: [cx - c * wcx + s * wcy, cy - s * wcx - c * wcy],
    }
}

/// Renders one frame per trajectory pose by bilinear resampling of the
/// rotated window. Fails with a range error naming the first frame whose
/// window escapes the image bounds.
pub fn render_crop_sequence(
    image: &Frame,
    traj: &Trajectory,
    window: (usize, usize),
    fps: f64,
    name: &str,
) -> Result<FrameSequence> {
    traj.validate()?;
    let (w, h) = window;
    if w < 2 || h < 2 || w > image.width || h > image.height {
        return Err(Error::Range(format!(
            "window {w}x{h} invalid for {}x{} image",
            image.width, image.height
        )));
    }
    for t in 0..traj.len() {
        let map = crop_map(image, window, traj.pose(t));
        for (px, py) in [
            (0.0, 0.0),
            ((w - 1) as f64, 0.0),
            (0.0, (h - 1) as f64),
            ((w - 1) as f64, (h - 1) as f64),
        ] {
            let (sx, sy) = map.apply(px, py);
            if sx < 0.0
                || sy < 0.0
                || sx > (image.width - 1) as f64
                || sy > (image.height - 1) as f64
            {
                return Err(Error::Range(format!(
                    "window escapes image bounds at frame {t} (corner maps to {sx:.1}, {sy:.1})"
                )));
            }
        }
    }
    let frames: Vec<Frame> = (0..traj.len())
        .into_par_iter()
        .map(|t| warp_into(image, &crop_map(image, window, traj.pose(t)), w, h))
        .collect();
    FrameSequence::new(frames, fps, name)
}

/// Map that resamples a frame rendered at `from` so that it matches the
/// frame rendered at `to` (both poses on the same source image, same
/// window). Used to verify the equi-perspective property.
pub fn pose_relative_map(from: (f64, f64, f64), to: (f64, f64, f64), window: (usize, usize)) -> AffineMap {
    let (w, h) = window;
    let wcx = (w as f64 - 1.0) / 2.0;
    let wcy = (h as f64 - 1.0) / 2.0;
    let dtheta = to.2 - from.2;
    let (sd, cd) = dtheta.sin_cos();
    // q = wc + R(to - from)(p - wc) + R(-from) * (c_to - c_from)
    let (su, cu) = (-from.2).sin_cos();
    let dx = to.0 - from.0;
    let dy = to.1 - from.1;
    let ox = cu * dx - su * dy;
    let oy = su * dx + cu * dy;
    AffineMap {
        linear: [cd, -sd, sd, cd],
        offset: [
            wcx - cd * wcx + sd * wcy + ox,
            wcy - sd * wcx - cd * wcy + oy,
        ],
    }
}

/// Parameters for one stable/unstable pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairSpec {
    pub length: usize,
    pub window: (usize, usize),
    /// RMS per-frame translation speed of the smooth path, pixels.
    pub speed_px: f64,
    /// RMS per-frame rotation speed of the smooth path, radians.
    pub turn_rate: f64,
    pub jitter: JitterSpec,
    pub fps: f64,
}

impl Default for PairSpec {
    fn default() -> Self {
        PairSpec {
            length: 64,
            window: (128, 128),
            speed_px: 2.0,
            turn_rate: 0.004,
            jitter: JitterSpec::default(),
            fps: 30.0,
        }
    }
}

/// An equi-perspective stable/unstable pair with its ground-truth
/// trajectories.
#[derive(Debug, Clone)]
pub struct StabPair {
    pub unstable: FrameSequence,
    pub stable: FrameSequence,
    pub unstable_traj: Trajectory,
    pub stable_traj: Trajectory,
}

/// Renders a stable sequence along a smooth trajectory and an unstable one
/// along the same trajectory with injected jitter, both from `image`.
/// The smooth path is seeded by `seed`, the jitter by `spec.jitter.seed`.
pub fn make_stab_pair(image: &Frame, spec: &PairSpec, seed: u64) -> Result<StabPair> {
    let smooth = gen_smooth_trajectory(spec.length, spec.speed_px, spec.turn_rate, seed)?;
    let jittered = inject_jitter(&smooth, &spec.jitter)?;
    let stable = render_crop_sequence(image, &smooth, spec.window, spec.fps, "stable")?;
    let unstable = render_crop_sequence(image, &jittered, spec.window, spec.fps, "unstable")?;
    Ok(StabPair {
        unstable,
        stable,
        unstable_traj: jittered,
        stable_traj: smooth,
    })
}

/// One refiner training sample: four clean temporal neighbors, the degraded
/// interpolated center and its clean ground truth, all co-located.
#[derive(Debug, Clone)]
pub struct RefinerSample {
    /// Clean frames at offsets -2, -1, +1, +2.
    pub clean_neighbors: [Frame; 4],
    pub degraded_center: Frame,
    pub clean_center: Frame,
    pub center_index: usize,
}

/// Parameters for refiner-sample generation.
#[derive(Debug, Clone)]
pub struct RefinerGenSpec {
    pub length: usize,
    pub window: (usize, usize),
    /// Constant linear window speed, pixels per frame.
    pub speed_px: f64,
    /// Interpolation-only degradation settings (no refiner in the loop).
    pub degrade: StabilizeConfig,
    pub fps: f64,
}

impl Default for RefinerGenSpec {
    fn default() -> Self {
        RefinerGenSpec {
            length: 64,
            window: (128, 128),
            speed_px: 1.5,
            degrade: StabilizeConfig {
                m: 4,
                k: 4,
                skip: 1,
            },
            fps: 30.0,
        }
    }
}

/// Renders the clean constant-velocity sequence and its interpolation-
/// degraded counterpart (`spec.degrade.m` iterations, no refiner).
pub fn render_refiner_sequences(
    image: &Frame,
    spec: &RefinerGenSpec,
    interp: &dyn Interpolator,
    seed: u64,
) -> Result<(FrameSequence, FrameSequence)> {
    if spec.length < 5 {
        return Err(Error::Range(format!(
            "refiner generation needs length >= 5, got {}",
            spec.length
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let half_span = spec.speed_px * (spec.length - 1) as f64 / 2.0;
    let traj = Trajectory::new(
        (0..spec.length)
            .map(|t| (t as f64 * spec.speed_px - half_span) * dir.cos())
            .collect(),
        (0..spec.length)
            .map(|t| (t as f64 * spec.speed_px - half_span) * dir.sin())
            .collect(),
        vec![0.0; spec.length],
    )?;
    let clean = render_crop_sequence(image, &traj, spec.window, spec.fps, "clean")?;
    let degraded = iterative_stabilize(&clean, interp, None, &spec.degrade)?;
    Ok((clean, degraded))
}

/// Renders a clean sequence under constant-velocity window motion, degrades
/// it with `spec.degrade.m` iterations of pure frame interpolation, and
/// emits one sample per interior center (those with a full radius-2
/// neighborhood).
pub fn make_refiner_samples(
    image: &Frame,
    spec: &RefinerGenSpec,
    interp: &dyn Interpolator,
    seed: u64,
) -> Result<Vec<RefinerSample>> {
    let (clean, degraded) = render_refiner_sequences(image, spec, interp, seed)?;
    let mut samples = Vec::with_capacity(spec.length.saturating_sub(4));
    for t in 2..spec.length - 2 {
        samples.push(RefinerSample {
            clean_neighbors: [
                clean.frame(t - 2).clone(),
                clean.frame(t - 1).clone(),
                clean.frame(t + 1).clone(),
                clean.frame(t + 2).clone(),
            ],
            degraded_center: degraded.frame(t).clone(),
            clean_center: clean.frame(t).clone(),
            center_index: t,
        });
    }
    Ok(samples)
}

/// Deterministic multi-octave test texture with enough structure for corner
/// detection and matching. Values stay inside [0.03, 0.97]. The spatial
/// spectrum is deliberately dominated by features larger than typical jitter
/// displacements so that warps stay locally linear in the displacement.
pub fn procedural_texture(width: usize, height: usize, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Value-noise octaves: random lattices upsampled bilinearly.
    let octaves: [(usize, f32); 4] = [(61, 0.5), (17, 0.25), (9, 0.07), (5, 0.02)];
    let mut lattices = Vec::new();
    for (cell, amp) in octaves {
        let gw = width / cell + 2;
        let gh = height / cell + 2;
        let vals: Vec<f32> = (0..3 * gw * gh).map(|_| rng.gen_range(0.0..1.0)).collect();
        lattices.push((cell, amp, gw, gh, vals));
    }
    let mut frame = Frame::from_fn(width, height, |x, y| {
        let mut rgb = [0.5f32; 3];
        for (cell, amp, gw, gh, vals) in &lattices {
            let fx = x as f32 / *cell as f32;
            let fy = y as f32 / *cell as f32;
            let x0 = fx.floor() as usize;
            let y0 = fy.floor() as usize;
            let tx = fx - x0 as f32;
            let ty = fy - y0 as f32;
            for (c, v) in rgb.iter_mut().enumerate() {
                let idx = |xx: usize, yy: usize| vals[c * gw * gh + yy * gw + xx];
                let top = idx(x0, y0) * (1.0 - tx) + idx(x0 + 1, y0) * tx;
                let bot = idx(x0, y0 + 1) * (1.0 - tx) + idx(x0 + 1, y0 + 1) * tx;
                *v += amp * (top * (1.0 - ty) + bot * ty - 0.5);
            }
        }
        rgb
    });
    // Scatter translucent rectangles to provide corner features.
    let rects = (width * height) / 6000 + 8;
    for _ in 0..rects {
        let rw = rng.gen_range(8..28usize);
        let rh = rng.gen_range(8..28usize);
        let x0 = rng.gen_range(0..width.saturating_sub(rw));
        let y0 = rng.gen_range(0..height.saturating_sub(rh));
        let color: [f32; 3] = [
            rng.gen_range(0.1..0.9),
            rng.gen_range(0.1..0.9),
            rng.gen_range(0.1..0.9),
        ];
        let alpha: f32 = rng.gen_range(0.35..0.65);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                for c in 0..3 {
                    let v = frame.get(c, x, y);
                    frame.set(c, x, y, v * (1.0 - alpha) + color[c] * alpha);
                }
            }
        }
    }
    // One light blur pass bounds the sharpest edges to a ~2 px scale.
    for c in 0..3 {
        let blurred = blur3(frame.channel(c), width, height);
        frame.channel_mut(c).copy_from_slice(&blurred);
    }
    for v in frame.data_mut() {
        *v = v.clamp(0.03, 0.97);
    }
    frame
}

fn blur3(l: &[f32], w: usize, h: usize) -> Vec<f32> {
    // Separable [1 2 1]/4.
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            tmp[y * w + x] = 0.25 * l[y * w + xm] + 0.5 * l[y * w + x] + 0.25 * l[y * w + xp];
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            out[y * w + x] = 0.25 * tmp[ym * w + x] + 0.5 * tmp[y * w + x] + 0.25 * tmp[yp * w + x];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{band_sum, dft_magnitudes};

    #[test]
    fn smooth_trajectory_is_band_limited() {
        let traj = gen_smooth_trajectory(64, 2.0, 0.004, 7).unwrap();
        for sig in [&traj.tx, &traj.ty, &traj.theta] {
            let mags = dft_magnitudes(sig);
            let inside = band_sum(&mags, 2, 6, true);
            let total = band_sum(&mags, 1, 32, true);
            assert!(inside / total >= 0.99, "band fraction {}", inside / total);
        }
    }

    #[test]
    fn smooth_trajectory_deterministic() {
        let a = gen_smooth_trajectory(64, 2.0, 0.004, 3).unwrap();
        let b = gen_smooth_trajectory(64, 2.0, 0.004, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_speed_gives_constant_trajectory() {
        let traj = gen_smooth_trajectory(32, 0.0, 0.0, 5).unwrap();
        assert!(traj.tx.iter().all(|v| *v == 0.0));
        assert!(traj.ty.iter().all(|v| *v == 0.0));
        assert!(traj.theta.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn short_trajectory_rejected() {
        assert!(matches!(
            gen_smooth_trajectory(4, 1.0, 0.0, 0),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn zero_jitter_is_identity() {
        let traj = gen_smooth_trajectory(64, 2.0, 0.004, 1).unwrap();
        let spec = JitterSpec {
            amplitude_px: 0.0,
            amplitude_rad: 0.0,
            ..JitterSpec::default()
        };
        let out = inject_jitter(&traj, &spec).unwrap();
        assert_eq!(out, traj);
    }

    #[test]
    fn jitter_lives_above_smooth_band() {
        let traj = gen_smooth_trajectory(64, 2.0, 0.004, 1).unwrap();
        let spec = JitterSpec {
            seed: 1,
            ..JitterSpec::default()
        };
        let out = inject_jitter(&traj, &spec).unwrap();
        for (sig, orig) in [(&out.tx, &traj.tx), (&out.ty, &traj.ty), (&out.theta, &traj.theta)] {
            let diff: Vec<f64> = sig.iter().zip(orig.iter()).map(|(a, b)| a - b).collect();
            let mags = dft_magnitudes(&diff);
            let low = band_sum(&mags, 2, 6, true);
            let total = band_sum(&mags, 1, 32, true);
            assert!(total > 0.0);
            assert!(low / total < 1e-9, "low-band leakage {}", low / total);
        }
    }

    #[test]
    fn jitter_peak_matches_amplitude() {
        let traj = Trajectory::constant(64);
        let spec = JitterSpec {
            amplitude_px: 3.0,
            amplitude_rad: 0.01,
            min_freq_bin: 7,
            seed: 9,
        };
        let out = inject_jitter(&traj, &spec).unwrap();
        let peak = out
            .tx
            .iter()
            .chain(out.ty.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 3.0).abs() < 1e-9);
        let peak_t = out.theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak_t - 0.01).abs() < 1e-12);
    }

    #[test]
    fn invalid_jitter_band_rejected() {
        let spec = JitterSpec {
            min_freq_bin: 6,
            ..JitterSpec::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn constant_trajectory_renders_identical_frames() {
        let img = procedural_texture(256, 256, 0);
        let traj = Trajectory::constant(8);
        let seq = render_crop_sequence(&img, &traj, (64, 64), 30.0, "t").unwrap();
        for t in 1..8 {
            assert_eq!(seq.frame(t).data(), seq.frame(0).data());
        }
    }

    #[test]
    fn render_shape_contract() {
        let img = procedural_texture(1024, 1024, 3);
        let traj = gen_smooth_trajectory(64, 2.0, 0.002, 11).unwrap();
        let seq = render_crop_sequence(&img, &traj, (128, 128), 30.0, "t").unwrap();
        assert_eq!(seq.len(), 64);
        assert_eq!(seq.width(), 128);
        assert_eq!(seq.height(), 128);
    }

    #[test]
    fn periodic_pattern_shift_invariance() {
        // Horizontal period of exactly 10 px.
        let img = Frame::from_fn(300, 200, |x, y| {
            let phase = (x % 10) as f32 / 10.0;
            let row = (y % 7) as f32 / 7.0;
            [phase, 0.5 + 0.3 * (phase - 0.5), row * 0.0 + 0.25]
        });
        let traj = gen_smooth_trajectory(16, 1.0, 0.0, 2).unwrap();
        let mut shifted = traj.clone();
        for v in &mut shifted.tx {
            *v += 10.0;
        }
        let a = render_crop_sequence(&img, &traj, (64, 64), 30.0, "a").unwrap();
        let b = render_crop_sequence(&img, &shifted, (64, 64), 30.0, "b").unwrap();
        for t in 0..16 {
            assert_eq!(a.frame(t).data(), b.frame(t).data());
        }
    }

    #[test]
    fn window_escape_names_frame() {
        let img = procedural_texture(128, 128, 1);
        let mut traj = Trajectory::constant(6);
        traj.tx[4] = 500.0;
        match render_crop_sequence(&img, &traj, (64, 64), 30.0, "t") {
            Err(Error::Range(msg)) => assert!(msg.contains("frame 4"), "{msg}"),
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn stab_pair_zero_jitter_identical() {
        let img = procedural_texture(512, 512, 4);
        let spec = PairSpec {
            jitter: JitterSpec {
                amplitude_px: 0.0,
                amplitude_rad: 0.0,
                ..JitterSpec::default()
            },
            ..PairSpec::default()
        };
        let pair = make_stab_pair(&img, &spec, 3).unwrap();
        for t in 0..pair.stable.len() {
            assert_eq!(pair.stable.frame(t).data(), pair.unstable.frame(t).data());
        }
    }

    #[test]
    fn stab_pair_differs_with_jitter() {
        let img = procedural_texture(512, 512, 4);
        let spec = PairSpec::default();
        let pair = make_stab_pair(&img, &spec, 3).unwrap();
        let mut any_diff = false;
        for t in 0..pair.stable.len() {
            let d = pair.stable.frame(t).mean_abs_diff(pair.unstable.frame(t));
            if d > 0.0 {
                any_diff = true;
            }
        }
        assert!(any_diff);
    }

    #[test]
    fn equi_perspective_within_resampling_tolerance() {
        let img = procedural_texture(512, 512, 8);
        let spec = PairSpec::default();
        let pair = make_stab_pair(&img, &spec, 5).unwrap();
        let mut total = 0.0f64;
        for t in 0..pair.stable.len() {
            let map = pose_relative_map(
                pair.unstable_traj.pose(t),
                pair.stable_traj.pose(t),
                spec.window,
            );
            let predicted = crate::warp::warp(pair.unstable.frame(t), &map);
            total += predicted.mean_abs_diff(pair.stable.frame(t)) as f64;
        }
        let mean = total / pair.stable.len() as f64;
        assert!(mean < 0.02, "mean abs reprojection error {mean}");
    }
}
