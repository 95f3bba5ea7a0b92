//! Bilinear image resampling shared by the synthesizer, the built-in
//! interpolator, augmentation and the metric oracles.
//!
//! Sampling coordinates stay in f64 end to end; only the interpolated value
//! is narrowed to the frame's f32 storage. This keeps renders of shifted
//! trajectories exactly consistent.

use crate::io::Frame;

/// A 2-D affine sampling map: source = linear * p + offset.
#[derive(Debug, Clone, Copy)]
pub struct AffineMap {
    /// Row-major 2x2 linear part.
    pub linear: [f64; 4],
    pub offset: [f64; 2],
}

impl AffineMap {
    pub fn translation(dx: f64, dy: f64) -> Self {
        AffineMap {
            linear: [1.0, 0.0, 0.0, 1.0],
            offset: [dx, dy],
        }
    }

    /// Rotation by `theta` about `(cx, cy)`, scaled by `scale` about the same
    /// center, followed by translation `(dx, dy)`.
    ///
    /// The map is expressed in sampling direction: a destination pixel `p`
    /// reads the source at `center + scale * R(theta) * (p - center) + t`.
    pub fn about_center(cx: f64, cy: f64, theta: f64, scale: f64, dx: f64, dy: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let (c, s) = (c * scale, s * scale);
        // p' = R (p - center) + center + t
        let ox = cx + dx - (c * cx - s * cy);
        let oy = cy + dy - (s * cx + c * cy);
        AffineMap {
            linear: [c, -s, s, c],
            offset: [ox, oy],
        }
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.linear[0] * x + self.linear[1] * y + self.offset[0],
            self.linear[2] * x + self.linear[3] * y + self.offset[1],
        )
    }
}

/// Resamples `src` through `map` with bilinear interpolation and edge
/// clamping, producing a frame of size `w`x`h`.
pub fn warp_into(src: &Frame, map: &AffineMap, w: usize, h: usize) -> Frame {
    let mut out = Frame::zeros(w, h);
    for c in 0..3 {
        let dst = out.channel_mut(c);
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = map.apply(x as f64, y as f64);
                dst[y * w + x] = src.sample_bilinear(c, sx, sy);
            }
        }
    }
    out
}

/// Same-size warp of a frame.
pub fn warp(src: &Frame, map: &AffineMap) -> Frame {
    warp_into(src, map, src.width, src.height)
}

/// Shifts frame content by `(dx, dy)` pixels (edge-clamped bilinear):
/// output(x, y) = input(x - dx, y - dy).
pub fn translate(src: &Frame, dx: f64, dy: f64) -> Frame {
    warp(src, &AffineMap::translation(-dx, -dy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_frame(w: usize, h: usize) -> Frame {
        Frame::from_fn(w, h, |x, y| {
            let v = (x + y) as f32 / (w + h) as f32;
            [v, v * 0.5, 1.0 - v]
        })
    }

    #[test]
    fn translate_moves_content() {
        let f = ramp_frame(16, 16);
        let shifted = translate(&f, 2.0, 0.0);
        // Interior pixels: shifted(x, y) == f(x-2, y).
        for y in 2..14 {
            for x in 3..14 {
                assert!((shifted.get(0, x, y) - f.get(0, x - 2, y)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn identity_map_is_identity() {
        let f = ramp_frame(9, 7);
        let out = warp(&f, &AffineMap::translation(0.0, 0.0));
        assert_eq!(out.data(), f.data());
    }

    #[test]
    fn rotation_about_center_keeps_center() {
        let f = ramp_frame(17, 17);
        let map = AffineMap::about_center(8.0, 8.0, 0.3, 1.0, 0.0, 0.0);
        let out = warp(&f, &map);
        assert!((out.get(0, 8, 8) - f.get(0, 8, 8)).abs() < 1e-6);
    }
}
