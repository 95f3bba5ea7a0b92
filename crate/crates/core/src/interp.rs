//! Iterative frame-interpolation stabilization: a pluggable interpolator
//! interface, a built-in phase-correlation midpoint interpolator, the
//! iteration orchestrator with optional in-loop refinement, and an analytic
//! trajectory-space oracle.
//!
//! Each iteration replaces every interior frame with an interpolation of its
//! two neighbors from the previous iteration (a Jacobi-style simultaneous
//! update), acting as a temporal low-pass filter on the camera path. In
//! trajectory space one iteration multiplies the mode at angular frequency
//! `w` by `cos(w)`, which the oracle makes testable.

use crate::error::{Error, Result};
use crate::io::{Frame, FrameSequence};
use crate::synth::Trajectory;
use crate::warp::{warp, AffineMap};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

/// Iteration parameters; `m` total interpolation iterations with a
/// refinement pass after every `k`-th one.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StabilizeConfig {
    pub m: usize,
    pub k: usize,
    /// Frame gap between the interpolator's neighbors (1 = adjacent).
    pub skip: usize,
}

impl Default for StabilizeConfig {
    fn default() -> Self {
        StabilizeConfig { m: 5, k: 4, skip: 1 }
    }
}

impl StabilizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.skip < 1 {
            return Err(Error::Validation(format!(
                "k and skip must be >= 1 (got k={}, skip={})",
                self.k, self.skip
            )));
        }
        Ok(())
    }
}

/// Produces a middle frame from two neighbors.
pub trait Interpolator: Sync {
    fn interp(&self, prev: &Frame, next: &Frame) -> Result<Frame>;
}

/// Consumes the original (sharp) neighbor frames plus the current degraded
/// iterate and returns a cleaned frame.
pub trait Refiner: Sync {
    fn refine(&self, neighbors: [&Frame; 4], degraded: &Frame) -> Result<Frame>;
}

/// Integer global translation between two frames by phase correlation on
/// luma. Returns `(dx, dy)` such that `b` best matches `a` circularly
/// shifted by `(dx, dy)`; ties are broken by smallest magnitude, then
/// smallest dy, then smallest dx.
pub fn estimate_global_shift(a: &Frame, b: &Frame) -> Result<(i64, i64)> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Shape(format!(
            "frame shapes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.width < 8 || a.height < 8 {
        return Err(Error::Range(format!(
            "frames too small for shift estimation: {}x{}",
            a.width, a.height
        )));
    }
    let w = a.width;
    let h = a.height;
    let la = a.luma();
    let lb = b.luma();

    let mut fa: Vec<Complex<f64>> = la.iter().map(|v| Complex::new(*v as f64, 0.0)).collect();
    let mut fb: Vec<Complex<f64>> = lb.iter().map(|v| Complex::new(*v as f64, 0.0)).collect();
    fft_2d(&mut fa, w, h, false);
    fft_2d(&mut fb, w, h, false);

    // Normalized cross-power spectrum conj(Fa) * Fb: its inverse transform
    // peaks at the displacement taking a to b.
    let mut cross: Vec<Complex<f64>> = fa
        .iter()
        .zip(&fb)
        .map(|(pa, pb)| {
            let r = pa.conj() * pb;
            let n = r.norm();
            if n > 1e-12 {
                r / n
            } else {
                Complex::new(0.0, 0.0)
            }
        })
        .collect();
    fft_2d(&mut cross, w, h, true);

    let mut best = f64::NEG_INFINITY;
    for v in &cross {
        if v.re > best {
            best = v.re;
        }
    }
    let tol = 1e-9 * best.abs().max(1.0);
    let mut pick: Option<(i64, i64)> = None;
    let mut pick_key = (i64::MAX, i64::MAX, i64::MAX);
    for y in 0..h {
        for x in 0..w {
            if cross[y * w + x].re >= best - tol {
                let dx = signed_shift(x, w);
                let dy = signed_shift(y, h);
                let key = (dx * dx + dy * dy, dy, dx);
                if key < pick_key {
                    pick_key = key;
                    pick = Some((dx, dy));
                }
            }
        }
    }
    Ok(pick.expect("non-empty correlation surface"))
}

fn signed_shift(idx: usize, n: usize) -> i64 {
    let idx = idx as i64;
    let n = n as i64;
    if idx > n / 2 {
        idx - n
    } else {
        idx
    }
}

fn fft_2d(buf: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    for row in buf.chunks_mut(w) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
    if inverse {
        let scale = 1.0 / (w * h) as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

fn blur_luma(l: &[f32], w: usize, h: usize) -> Vec<f32> {
    // Separable binomial [1 4 6 4 1]/16; damps resampling noise before the
    // motion fit without biasing it.
    const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in K.iter().enumerate() {
                let sx = (x as i64 + i as i64 - 2).clamp(0, w as i64 - 1) as usize;
                acc += k * l[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in K.iter().enumerate() {
                let sy = (y as i64 + i as i64 - 2).clamp(0, h as i64 - 1) as usize;
                acc += k * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn downsample2(l: &[f32], w: usize, h: usize) -> (Vec<f32>, usize, usize) {
    let w2 = w / 2;
    let h2 = h / 2;
    let mut out = vec![0.0f32; w2 * h2];
    for y in 0..h2 {
        for x in 0..w2 {
            out[y * w2 + x] = 0.25
                * (l[2 * y * w + 2 * x]
                    + l[2 * y * w + 2 * x + 1]
                    + l[(2 * y + 1) * w + 2 * x]
                    + l[(2 * y + 1) * w + 2 * x + 1]);
        }
    }
    (out, w2, h2)
}

fn gn_motion_level(
    la: &[f32],
    lb: &[f32],
    w: usize,
    h: usize,
    init: (f64, f64, f64),
    step: usize,
) -> (f64, f64, f64) {
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let sample = |l: &[f32], x: f64, y: f64| -> f64 {
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let p00 = l[y0 * w + x0] as f64;
        let p10 = l[y0 * w + x1] as f64;
        let p01 = l[y1 * w + x0] as f64;
        let p11 = l[y1 * w + x1] as f64;
        (p00 + (p10 - p00) * fx) * (1.0 - fy) + (p01 + (p11 - p01) * fx) * fy
    };

    let (mut tx, mut ty, mut theta) = init;
    let margin = 3usize;
    if h <= 2 * margin || w <= 2 * margin {
        return (tx, ty, theta);
    }
    for _ in 0..8 {
        let (st, ct) = (-theta).sin_cos();
        let mut ata = [[0.0f64; 3]; 3];
        let mut atb = [0.0f64; 3];
        for py in (margin..h - margin).step_by(step) {
            for px in (margin..w - margin).step_by(step) {
                // Source position in `a` for this pixel of `b`:
                // q = R(-theta)(p - c - t) + c.
                let vx = px as f64 - cx - tx;
                let vy = py as f64 - cy - ty;
                let qx = ct * vx - st * vy + cx;
                let qy = st * vx + ct * vy + cy;
                if qx < 1.0 || qy < 1.0 || qx > (w - 2) as f64 || qy > (h - 2) as f64 {
                    continue;
                }
                let r = lb[py * w + px] as f64 - sample(la, qx, qy);
                let gx = 0.5 * (sample(la, qx + 1.0, qy) - sample(la, qx - 1.0, qy));
                let gy = 0.5 * (sample(la, qx, qy + 1.0) - sample(la, qx, qy - 1.0));
                // Rows of d(residual)/d(tx, ty, theta).
                let jx = gx * ct + gy * st;
                let jy = -gx * st + gy * ct;
                let dq_dth = (st * vx + ct * vy, -ct * vx + st * vy);
                let jt = -(gx * dq_dth.0 + gy * dq_dth.1);
                let j = [jx, jy, jt];
                for i in 0..3 {
                    for k in 0..3 {
                        ata[i][k] += j[i] * j[k];
                    }
                    atb[i] += j[i] * r;
                }
            }
        }
        let Some((dx, dy, dth)) = solve3(&ata, &atb) else { break };
        // J holds d(residual)/d(param), so descend against it.
        tx -= dx;
        ty -= dy;
        theta -= dth;
        if dx.abs() < 1e-4 && dy.abs() < 1e-4 && dth.abs() < 1e-6 {
            break;
        }
    }
    (tx, ty, theta)
}

fn motion_residual(la: &[f32], lb: &[f32], w: usize, h: usize, m: (f64, f64, f64)) -> f64 {
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let (st, ct) = (-m.2).sin_cos();
    let mut acc = 0.0f64;
    let mut count = 0usize;
    let margin = 3usize;
    for py in (margin..h - margin).step_by(2) {
        for px in (margin..w - margin).step_by(2) {
            let vx = px as f64 - cx - m.0;
            let vy = py as f64 - cy - m.1;
            let qx = ct * vx - st * vy + cx;
            let qy = st * vx + ct * vy + cy;
            if qx < 1.0 || qy < 1.0 || qx > (w - 2) as f64 || qy > (h - 2) as f64 {
                continue;
            }
            let x0 = qx.floor() as usize;
            let y0 = qy.floor() as usize;
            let fx = qx - x0 as f64;
            let fy = qy - y0 as f64;
            let p00 = la[y0 * w + x0] as f64;
            let p10 = la[y0 * w + x0 + 1] as f64;
            let p01 = la[(y0 + 1) * w + x0] as f64;
            let p11 = la[(y0 + 1) * w + x0 + 1] as f64;
            let v = (p00 + (p10 - p00) * fx) * (1.0 - fy) + (p01 + (p11 - p01) * fx) * fy;
            let r = lb[py * w + px] as f64 - v;
            acc += r * r;
            count += 1;
        }
    }
    if count == 0 {
        f64::INFINITY
    } else {
        acc / count as f64
    }
}

/// Refines a global similarity motion (translation plus small rotation
/// about the frame center) between two frames, coarse-to-fine from an
/// integer translation estimate. Motion convention: content at position `q`
/// of `a` appears in `b` at `R(theta) * (q - c) + c + t`.
///
/// Phase correlation can lock onto a false peak on (quasi-)periodic
/// content, so the refinement is run from both the estimated shift and a
/// zero-motion start, keeping whichever converges to the lower residual.
fn refine_global_motion(a: &Frame, b: &Frame, init: (f64, f64)) -> (f64, f64, f64) {
    let w = a.width;
    let h = a.height;
    let la = blur_luma(&a.luma(), w, h);
    let lb = blur_luma(&b.luma(), w, h);

    let run = |start: (f64, f64)| -> (f64, f64, f64) {
        let mut motion = (start.0, start.1, 0.0);
        if w >= 32 && h >= 32 {
            // Half-resolution pass widens the rotation basin; the
            // box-filtered grid keeps rotation about the same center.
            let (la2, w2, h2) = downsample2(&la, w, h);
            let (lb2, _, _) = downsample2(&lb, w, h);
            let coarse = gn_motion_level(
                &la2,
                &lb2,
                w2,
                h2,
                (start.0 / 2.0, start.1 / 2.0, 0.0),
                1,
            );
            motion = (coarse.0 * 2.0, coarse.1 * 2.0, coarse.2);
        }
        gn_motion_level(&la, &lb, w, h, motion, 2)
    };

    let primary = run(init);
    if init.0 == 0.0 && init.1 == 0.0 {
        return primary;
    }
    let fallback = run((0.0, 0.0));
    let r_primary = motion_residual(&la, &lb, w, h, primary);
    let r_fallback = motion_residual(&la, &lb, w, h, fallback);
    if r_fallback < r_primary {
        fallback
    } else {
        primary
    }
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<(f64, f64, f64)> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < 1e-9 {
        return None;
    }
    let inv_det = 1.0 / det;
    let x = (b[0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (b[1] * a[2][2] - a[1][2] * b[2])
        + a[0][2] * (b[1] * a[2][1] - a[1][1] * b[2]))
        * inv_det;
    let y = (a[0][0] * (b[1] * a[2][2] - a[1][2] * b[2])
        - b[0] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * b[2] - b[1] * a[2][0]))
        * inv_det;
    let z = (a[0][0] * (a[1][1] * b[2] - b[1] * a[2][1])
        - a[0][1] * (a[1][0] * b[2] - b[1] * a[2][0])
        + b[0] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]))
        * inv_det;
    Some((x, y, z))
}

/// Test hook exposing the refined global motion estimate.
pub fn debug_refine_motion(a: &Frame, b: &Frame) -> (f64, f64, f64) {
    let (ix, iy) = estimate_global_shift(a, b).unwrap_or((0, 0));
    refine_global_motion(a, b, (ix as f64, iy as f64))
}

/// Global motion-compensated midpoint: estimates the global motion between
/// the neighbors (integer shift by phase correlation, then sub-pixel
/// translation + small-rotation refinement), warps each frame halfway
/// toward the middle pose and averages.
///
/// The refinement step matters: quantized translation-only midpoints leave
/// sub-pixel and rotational misalignment whose ghosting shows up as
/// high-frequency rotational noise in recovered trajectories, defeating the
/// smoothing the iteration exists to provide.
pub struct BuiltinInterp;

impl Interpolator for BuiltinInterp {
    fn interp(&self, prev: &Frame, next: &Frame) -> Result<Frame> {
        let (ix, iy) = estimate_global_shift(prev, next)?;
        let (tx, ty, theta) = refine_global_motion(prev, next, (ix as f64, iy as f64));
        if tx == 0.0 && ty == 0.0 && theta == 0.0 {
            let mut out = prev.clone();
            let od = out.data_mut();
            let nd = next.data();
            for (o, n) in od.iter_mut().zip(nd) {
                *o = 0.5 * (*o + *n);
            }
            return Ok(out);
        }
        let cx = (prev.width as f64 - 1.0) / 2.0;
        let cy = (prev.height as f64 - 1.0) / 2.0;
        let half = theta / 2.0;
        // Midpoint from prev: sample at R(-theta/2)(p - c) + c - R(-theta/2) s/2.
        let (sh, ch) = (-half).sin_cos();
        let ox = -(ch * (tx / 2.0) - sh * (ty / 2.0));
        let oy = -(sh * (tx / 2.0) + ch * (ty / 2.0));
        let map_prev = AffineMap::about_center(cx, cy, -half, 1.0, ox, oy);
        // Midpoint from next: sample at R(theta/2)(p - c) + c + s - R(theta/2) s/2.
        let (sh2, ch2) = half.sin_cos();
        let ox2 = tx - (ch2 * (tx / 2.0) - sh2 * (ty / 2.0));
        let oy2 = ty - (sh2 * (tx / 2.0) + ch2 * (ty / 2.0));
        let map_next = AffineMap::about_center(cx, cy, half, 1.0, ox2, oy2);

        let half_fwd = warp(prev, &map_prev);
        let half_bwd = warp(next, &map_next);
        let mut out = half_fwd;
        let od = out.data_mut();
        for (o, b) in od.iter_mut().zip(half_bwd.data()) {
            *o = 0.5 * (*o + *b);
        }
        Ok(out)
    }
}

pub fn builtin_interp(prev: &Frame, next: &Frame) -> Result<Frame> {
    BuiltinInterp.interp(prev, next)
}

/// Runs `cfg.m` interpolation iterations over the sequence. Within one
/// iteration every interior frame `t` is replaced by
/// `interp(prev_frames[t - skip], prev_frames[t + skip])` computed entirely
/// from the previous iteration's frames; boundary frames pass through
/// unchanged. After every `cfg.k`-th iteration the optional refiner is
/// applied to each interior frame, consuming the *original* input neighbors
/// (indices clamped at the boundary) plus the current iterate.
pub fn iterative_stabilize(
    seq: &FrameSequence,
    interp: &dyn Interpolator,
    refiner: Option<&dyn Refiner>,
    cfg: &StabilizeConfig,
) -> Result<FrameSequence> {
    cfg.validate()?;
    if seq.len() < 3 {
        return Err(Error::Range(format!(
            "iterative stabilization needs >= 3 frames, got {}",
            seq.len()
        )));
    }
    let len = seq.len();
    let skip = cfg.skip;
    let mut cur: Vec<Frame> = seq.frames().to_vec();
    for iter in 1..=cfg.m {
        if len > 2 * skip {
            let interior: Vec<Frame> = (skip..len - skip)
                .into_par_iter()
                .map(|t| interp.interp(&cur[t - skip], &cur[t + skip]))
                .collect::<Result<_>>()?;
            for (offset, frame) in interior.into_iter().enumerate() {
                cur[skip + offset] = frame;
            }
        }
        if let Some(refiner) = refiner {
            if iter % cfg.k == 0 && len > 2 * skip {
                let refined: Vec<Frame> = (skip..len - skip)
                    .into_par_iter()
                    .map(|t| {
                        let t = t as isize;
                        let neighbors = [
                            seq.frame_clamped(t - 2),
                            seq.frame_clamped(t - 1),
                            seq.frame_clamped(t + 1),
                            seq.frame_clamped(t + 2),
                        ];
                        refiner.refine(neighbors, &cur[t as usize])
                    })
                    .collect::<Result<_>>()?;
                for (offset, frame) in refined.into_iter().enumerate() {
                    cur[skip + offset] = frame;
                }
            }
        }
    }
    FrameSequence::new(cur, seq.fps, seq.name.clone())
}

/// Analytic shadow of [`iterative_stabilize`]: applies the simultaneous
/// midpoint update `x_t <- (x_{t-1} + x_{t+1}) / 2` to the interior samples
/// of each trajectory signal `m` times, keeping the boundary samples fixed.
pub fn trajectory_smooth_oracle(traj: &Trajectory, m: usize) -> Trajectory {
    let mut out = traj.clone();
    let len = traj.len();
    if len < 3 {
        return out;
    }
    let smooth = |sig: &mut Vec<f64>| {
        for _ in 0..m {
            let prev = sig.clone();
            for t in 1..len - 1 {
                sig[t] = 0.5 * (prev[t - 1] + prev[t + 1]);
            }
        }
    };
    smooth(&mut out.tx);
    smooth(&mut out.ty);
    smooth(&mut out.theta);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::procedural_texture;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn circular_shift(frame: &Frame, dx: i64, dy: i64) -> Frame {
        let (w, h) = (frame.width, frame.height);
        Frame::from_fn(w, h, |x, y| {
            let sx = (x as i64 - dx).rem_euclid(w as i64) as usize;
            let sy = (y as i64 - dy).rem_euclid(h as i64) as usize;
            [
                frame.get(0, sx, sy),
                frame.get(1, sx, sy),
                frame.get(2, sx, sy),
            ]
        })
    }

    #[test]
    fn shift_of_identical_frames_is_zero() {
        let f = procedural_texture(64, 48, 0);
        assert_eq!(estimate_global_shift(&f, &f).unwrap(), (0, 0));
    }

    #[test]
    fn circular_shift_recovered_exactly() {
        let f = procedural_texture(64, 64, 1);
        let shifted = circular_shift(&f, 5, -3);
        assert_eq!(estimate_global_shift(&f, &shifted).unwrap(), (5, -3));
    }

    #[test]
    fn flat_frames_tie_break_to_zero() {
        let f = Frame::from_fn(32, 32, |_, _| [0.5, 0.5, 0.5]);
        assert_eq!(estimate_global_shift(&f, &f).unwrap(), (0, 0));
    }

    #[test]
    fn tiny_frames_rejected() {
        let f = Frame::zeros(4, 4);
        assert!(matches!(
            estimate_global_shift(&f, &f),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn interp_of_equal_frames_is_identity() {
        let f = procedural_texture(64, 64, 2);
        let out = builtin_interp(&f, &f).unwrap();
        assert_eq!(out.data(), f.data());
    }

    #[test]
    fn interp_halves_translation() {
        let img = procedural_texture(256, 256, 3);
        let prev = crate::io::crop(&img, 60, 60, 96, 96);
        let next = crate::io::crop(&img, 62, 60, 96, 96);
        let expected = crate::io::crop(&img, 61, 60, 96, 96);
        let out = builtin_interp(&prev, &next).unwrap();
        // Compare away from the border band affected by edge clamping.
        let mut err = 0.0f64;
        let mut count = 0usize;
        for c in 0..3 {
            for y in 4..92 {
                for x in 4..92 {
                    err += (out.get(c, x, y) - expected.get(c, x, y)).abs() as f64;
                    count += 1;
                }
            }
        }
        let mean = err / count as f64;
        assert!(mean < 0.02, "interior mean abs error {mean}");
    }

    #[test]
    fn zero_iterations_is_identity() {
        let img = procedural_texture(256, 256, 4);
        let traj = crate::synth::gen_smooth_trajectory(8, 1.0, 0.0, 1).unwrap();
        let seq = crate::synth::render_crop_sequence(&img, &traj, (64, 64), 30.0, "t").unwrap();
        let cfg = StabilizeConfig { m: 0, k: 4, skip: 1 };
        let out = iterative_stabilize(&seq, &BuiltinInterp, None, &cfg).unwrap();
        for t in 0..seq.len() {
            assert_eq!(out.frame(t).data(), seq.frame(t).data());
        }
    }

    #[test]
    fn static_sequence_is_fixed_point() {
        let f = procedural_texture(64, 64, 5);
        let frames = vec![f.clone(); 6];
        let seq = FrameSequence::new(frames, 30.0, "static").unwrap();
        let cfg = StabilizeConfig { m: 5, k: 4, skip: 1 };
        let out = iterative_stabilize(&seq, &BuiltinInterp, None, &cfg).unwrap();
        for t in 0..seq.len() {
            assert_eq!(out.frame(t).data(), seq.frame(t).data());
        }
    }

    #[test]
    fn too_short_sequence_rejected() {
        let f = procedural_texture(32, 32, 6);
        let seq = FrameSequence::new(vec![f.clone(), f], 30.0, "x").unwrap();
        let cfg = StabilizeConfig::default();
        assert!(matches!(
            iterative_stabilize(&seq, &BuiltinInterp, None, &cfg),
            Err(Error::Range(_))
        ));
    }

    struct CountingRefiner {
        calls: AtomicUsize,
    }

    impl Refiner for CountingRefiner {
        fn refine(&self, _neighbors: [&Frame; 4], degraded: &Frame) -> Result<Frame> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(degraded.clone())
        }
    }

    #[test]
    fn refinement_cadence_k4_m5_fires_once() {
        let img = procedural_texture(256, 256, 7);
        let traj = crate::synth::gen_smooth_trajectory(10, 1.0, 0.0, 2).unwrap();
        let seq = crate::synth::render_crop_sequence(&img, &traj, (64, 64), 30.0, "t").unwrap();
        let refiner = CountingRefiner { calls: AtomicUsize::new(0) };
        let cfg = StabilizeConfig { m: 5, k: 4, skip: 1 };
        iterative_stabilize(&seq, &BuiltinInterp, Some(&refiner), &cfg).unwrap();
        // One pass over the 8 interior frames, after iteration 4 only.
        assert_eq!(refiner.calls.load(Ordering::SeqCst), 8);
    }

    #[test]
    fn refinement_cadence_k2_m5_fires_twice() {
        let img = procedural_texture(256, 256, 8);
        let traj = crate::synth::gen_smooth_trajectory(8, 1.0, 0.0, 3).unwrap();
        let seq = crate::synth::render_crop_sequence(&img, &traj, (64, 64), 30.0, "t").unwrap();
        let refiner = CountingRefiner { calls: AtomicUsize::new(0) };
        let cfg = StabilizeConfig { m: 5, k: 2, skip: 1 };
        iterative_stabilize(&seq, &BuiltinInterp, Some(&refiner), &cfg).unwrap();
        assert_eq!(refiner.calls.load(Ordering::SeqCst), 2 * 6);
    }

    #[test]
    fn oracle_keeps_linear_ramp_fixed() {
        let len = 32;
        let traj = Trajectory::new(
            (0..len).map(|t| 0.7 * t as f64 - 3.0).collect(),
            (0..len).map(|t| -0.2 * t as f64).collect(),
            vec![0.0; len],
        )
        .unwrap();
        let out = trajectory_smooth_oracle(&traj, 7);
        for t in 0..len {
            assert!((out.tx[t] - traj.tx[t]).abs() < 1e-12);
            assert!((out.ty[t] - traj.ty[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_damps_sinusoid_by_cos_power() {
        let len = 64usize;
        let omega = std::f64::consts::PI / 3.0;
        let m = 5usize;
        let traj = Trajectory::new(
            (0..len).map(|t| (omega * t as f64).sin()).collect(),
            vec![0.0; len],
            vec![0.0; len],
        )
        .unwrap();
        let out = trajectory_smooth_oracle(&traj, m);
        let factor = omega.cos().powi(m as i32);
        assert!((factor - 0.03125).abs() < 1e-12);
        // Samples farther than m from either boundary are exact.
        for t in m + 1..len - m - 1 {
            let expected = factor * (omega * t as f64).sin();
            assert!(
                (out.tx[t] - expected).abs() < 1e-9,
                "t={t}: {} vs {}",
                out.tx[t],
                expected
            );
        }
    }

    #[test]
    fn oracle_annihilates_nyquist_half_band() {
        let len = 33usize;
        let omega = std::f64::consts::PI / 2.0;
        let traj = Trajectory::new(
            (0..len).map(|t| (omega * t as f64).sin()).collect(),
            vec![0.0; len],
            vec![0.0; len],
        )
        .unwrap();
        let out = trajectory_smooth_oracle(&traj, 1);
        for t in 2..len - 2 {
            assert!(out.tx[t].abs() < 1e-12);
        }
    }
}
