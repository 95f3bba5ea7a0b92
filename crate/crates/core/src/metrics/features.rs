//! Harris corner detection and patch matching by zero-mean normalized
//! cross-correlation.

use crate::error::{Error, Result};
use crate::io::Frame;
use rayon::prelude::*;

pub const MAX_CORNERS: usize = 500;
pub const NMS_RADIUS: f64 = 8.0;
pub const MATCH_PATCH_HALF: usize = 5; // 11x11 patch
pub const MATCH_SEARCH: i64 = 16; // +-16 px window
pub const MATCH_MIN_NCC: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub x: f64,
    pub y: f64,
    pub response: f64,
}

/// A matched point pair: position in the first frame and in the second.
pub type Match = ([f64; 2], [f64; 2]);

/// Harris corners: local response maxima, strongest first, 8-px
/// non-maximum suppression, at most [`MAX_CORNERS`] entries. Ordering is
/// deterministic (response desc, then y, then x).
pub fn detect_corners(frame: &Frame) -> Result<Vec<Corner>> {
    if frame.width < 16 || frame.height < 16 {
        return Err(Error::Range(format!(
            "frame {}x{} too small for corner detection",
            frame.width, frame.height
        )));
    }
    let w = frame.width;
    let h = frame.height;
    let luma = frame.luma();

    let mut ix = vec![0.0f32; w * h];
    let mut iy = vec![0.0f32; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            ix[y * w + x] = 0.5 * (luma[y * w + x + 1] - luma[y * w + x - 1]);
            iy[y * w + x] = 0.5 * (luma[(y + 1) * w + x] - luma[(y - 1) * w + x]);
        }
    }
    let mut xx = vec![0.0f32; w * h];
    let mut yy = vec![0.0f32; w * h];
    let mut xy = vec![0.0f32; w * h];
    for i in 0..w * h {
        xx[i] = ix[i] * ix[i];
        yy[i] = iy[i] * iy[i];
        xy[i] = ix[i] * iy[i];
    }
    let xx = blur5(&xx, w, h);
    let yy = blur5(&yy, w, h);
    let xy = blur5(&xy, w, h);

    let mut response = vec![0.0f32; w * h];
    let mut peak = 0.0f32;
    for i in 0..w * h {
        let det = xx[i] * yy[i] - xy[i] * xy[i];
        let tr = xx[i] + yy[i];
        let r = det - 0.04 * tr * tr;
        response[i] = r;
        if r > peak {
            peak = r;
        }
    }
    if peak <= 0.0 {
        return Ok(Vec::new());
    }
    let floor = (peak * 1e-4).max(1e-12);

    // Local maxima away from the gradient border.
    let margin = 2usize;
    let mut candidates = Vec::new();
    for y in margin..h - margin {
        for x in margin..w - margin {
            let r = response[y * w + x];
            if r < floor {
                continue;
            }
            let mut is_max = true;
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = response[(y as i64 + dy) as usize * w + (x as i64 + dx) as usize];
                    if n > r {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push(Corner {
                    x: x as f64,
                    y: y as f64,
                    response: r as f64,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.response
            .partial_cmp(&a.response)
            .unwrap()
            .then((a.y as i64).cmp(&(b.y as i64)))
            .then((a.x as i64).cmp(&(b.x as i64)))
    });

    let mut kept: Vec<Corner> = Vec::new();
    let r2 = NMS_RADIUS * NMS_RADIUS;
    for cand in candidates {
        if kept.len() >= MAX_CORNERS {
            break;
        }
        let suppressed = kept
            .iter()
            .any(|k| (k.x - cand.x).powi(2) + (k.y - cand.y).powi(2) < r2);
        if !suppressed {
            kept.push(cand);
        }
    }
    Ok(kept)
}

fn blur5(src: &[f32], w: usize, h: usize) -> Vec<f32> {
    // Separable binomial kernel [1 4 6 4 1]/16.
    const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in K.iter().enumerate() {
                let sx = (x as i64 + i as i64 - 2).clamp(0, w as i64 - 1) as usize;
                acc += k * src[y * w + sx];
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

/// For each corner of `a`, finds the best 11x11 ZNCC match in `b` within a
/// +-16 px search window; matches scoring below 0.8 are discarded.
pub fn match_corners(a: &Frame, b: &Frame, corners: &[Corner]) -> Result<Vec<Match>> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Shape(format!(
            "frame shapes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let w = a.width as i64;
    let h = a.height as i64;
    let la = a.luma();
    let lb = b.luma();
    let half = MATCH_PATCH_HALF as i64;

    let matches: Vec<Option<Match>> = corners
        .par_iter()
        .map(|kp| {
            let cx = kp.x.round() as i64;
            let cy = kp.y.round() as i64;
            if cx - half < 0 || cy - half < 0 || cx + half >= w || cy + half >= h {
                return None;
            }
            let patch = gather(&la, w as usize, cx, cy, half);
            let (mean_a, norm_a) = patch_stats(&patch);
            if norm_a < 1e-6 {
                return None;
            }
            let score_at = |mx: i64, my: i64| -> Option<f64> {
                if mx - half < 0 || my - half < 0 || mx + half >= w || my + half >= h {
                    return None;
                }
                let cand = gather(&lb, w as usize, mx, my, half);
                let (mean_b, norm_b) = patch_stats(&cand);
                if norm_b < 1e-6 {
                    return None;
                }
                let mut dot = 0.0f64;
                for (pa, pb) in patch.iter().zip(&cand) {
                    dot += (*pa as f64 - mean_a) * (*pb as f64 - mean_b);
                }
                Some(dot / (norm_a * norm_b))
            };
            let mut best_score = f64::NEG_INFINITY;
            let mut best_pos = None;
            for dy in -MATCH_SEARCH..=MATCH_SEARCH {
                for dx in -MATCH_SEARCH..=MATCH_SEARCH {
                    if let Some(ncc) = score_at(cx + dx, cy + dy) {
                        if ncc > best_score {
                            best_score = ncc;
                            best_pos = Some((cx + dx, cy + dy));
                        }
                    }
                }
            }
            let (mx, my) = best_pos?;
            if best_score < MATCH_MIN_NCC {
                return None;
            }
            let (off_x, off_y) = refine_subpixel(&patch, &lb, w as usize, h as usize, mx, my, half);
            Some(([kp.x, kp.y], [mx as f64 + off_x, my as f64 + off_y]))
        })
        .collect();

    Ok(matches.into_iter().flatten().collect())
}

/// Gauss-Newton sub-pixel refinement of an integer NCC peak: iteratively
/// solves for the fractional displacement minimizing the SSD between the
/// template patch and a bilinearly resampled target patch. Exact (returns
/// zero) when the integer match is already perfect.
fn refine_subpixel(
    template: &[f32],
    target_luma: &[f32],
    w: usize,
    h: usize,
    mx: i64,
    my: i64,
    half: i64,
) -> (f64, f64) {
    let side = (2 * half + 1) as usize;
    let sample = |x: f64, y: f64| -> f64 {
        let x = x.clamp(0.0, (w - 1) as f64);
        let y = y.clamp(0.0, (h - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p00 = target_luma[y0 * w + x0] as f64;
        let p10 = target_luma[y0 * w + x1] as f64;
        let p01 = target_luma[y1 * w + x0] as f64;
        let p11 = target_luma[y1 * w + x1] as f64;
        (p00 + (p10 - p00) * fx) * (1.0 - fy) + (p01 + (p11 - p01) * fx) * fy
    };
    let mut dx = 0.0f64;
    let mut dy = 0.0f64;
    for _ in 0..3 {
        let (mut sxx, mut sxy, mut syy, mut bx, mut by) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for py in 0..side {
            for px in 0..side {
                let tx = (mx - half + px as i64) as f64 + dx;
                let ty = (my - half + py as i64) as f64 + dy;
                let q = sample(tx, ty);
                let gx = 0.5 * (sample(tx + 1.0, ty) - sample(tx - 1.0, ty));
                let gy = 0.5 * (sample(tx, ty + 1.0) - sample(tx, ty - 1.0));
                let r = template[py * side + px] as f64 - q;
                sxx += gx * gx;
                sxy += gx * gy;
                syy += gy * gy;
                bx += gx * r;
                by += gy * r;
            }
        }
        let det = sxx * syy - sxy * sxy;
        if det < 1e-12 {
            break;
        }
        let step_x = (syy * bx - sxy * by) / det;
        let step_y = (sxx * by - sxy * bx) / det;
        dx = (dx + step_x).clamp(-1.0, 1.0);
        dy = (dy + step_y).clamp(-1.0, 1.0);
        if step_x.abs() < 1e-4 && step_y.abs() < 1e-4 {
            break;
        }
    }
    (dx, dy)
}

fn gather(luma: &[f32], w: usize, cx: i64, cy: i64, half: i64) -> Vec<f32> {
    let mut out = Vec::with_capacity(((2 * half + 1) * (2 * half + 1)) as usize);
    for y in cy - half..=cy + half {
        let row = y as usize * w;
        for x in cx - half..=cx + half {
            out.push(luma[row + x as usize]);
        }
    }
    out
}

fn patch_stats(patch: &[f32]) -> (f64, f64) {
    let n = patch.len() as f64;
    let mean = patch.iter().map(|v| *v as f64).sum::<f64>() / n;
    let var: f64 = patch.iter().map(|v| (*v as f64 - mean).powi(2)).sum();
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::procedural_texture;

    #[test]
    fn flat_frame_has_no_corners() {
        let f = Frame::from_fn(32, 32, |_, _| [0.4, 0.4, 0.4]);
        assert!(detect_corners(&f).unwrap().is_empty());
    }

    #[test]
    fn single_white_pixel_yields_nearby_corner() {
        let f = Frame::from_fn(32, 32, |x, y| {
            if x == 16 && y == 14 {
                [1.0, 1.0, 1.0]
            } else {
                [0.0, 0.0, 0.0]
            }
        });
        let corners = detect_corners(&f).unwrap();
        assert!(!corners.is_empty());
        let close = corners
            .iter()
            .any(|c| (c.x - 16.0).abs() <= 1.0 && (c.y - 14.0).abs() <= 1.0);
        assert!(close, "{corners:?}");
    }

    #[test]
    fn detection_is_deterministic() {
        let f = procedural_texture(96, 96, 11);
        let a = detect_corners(&f).unwrap();
        let b = detect_corners(&f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn undersized_frame_rejected() {
        let f = Frame::zeros(8, 8);
        assert!(matches!(detect_corners(&f), Err(Error::Range(_))));
    }

    #[test]
    fn identity_matches_have_zero_displacement() {
        let f = procedural_texture(96, 96, 12);
        let corners = detect_corners(&f).unwrap();
        let matches = match_corners(&f, &f, &corners).unwrap();
        assert!(!matches.is_empty());
        for (pa, pb) in &matches {
            assert_eq!(pa, pb);
        }
    }

    #[test]
    fn constructed_shift_recovered_by_median() {
        let img = procedural_texture(160, 160, 13);
        let a = crate::io::crop(&img, 20, 20, 96, 96);
        let b = crate::io::crop(&img, 23, 22, 96, 96);
        let corners = detect_corners(&a).unwrap();
        let matches = match_corners(&a, &b, &corners).unwrap();
        assert!(matches.len() >= 8);
        let mut dxs: Vec<f64> = matches.iter().map(|(pa, pb)| pb[0] - pa[0]).collect();
        let mut dys: Vec<f64> = matches.iter().map(|(pa, pb)| pb[1] - pa[1]).collect();
        dxs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        dys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Content moves by (-3, -2) when the crop window moves by (3, 2);
        // sub-pixel refinement may land a fraction off the integer truth.
        assert!((dxs[dxs.len() / 2] + 3.0).abs() < 0.2, "{}", dxs[dxs.len() / 2]);
        assert!((dys[dys.len() / 2] + 2.0).abs() < 0.2, "{}", dys[dys.len() / 2]);
    }

    #[test]
    fn textureless_target_yields_near_empty_matches() {
        let a = procedural_texture(64, 64, 14);
        let b = Frame::from_fn(64, 64, |_, _| [0.5, 0.5, 0.5]);
        let corners = detect_corners(&a).unwrap();
        let matches = match_corners(&a, &b, &corners).unwrap();
        assert!(matches.is_empty());
    }
}
