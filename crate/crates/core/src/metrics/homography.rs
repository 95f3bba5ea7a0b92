//! Normalized-DLT homography fitting with a deterministic RANSAC wrapper,
//! and decomposition of homographies into pose ingredients.

use crate::error::{Error, Result};
use crate::metrics::features::Match;
use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// 3x3 projective map, normalized so the bottom-right entry is 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Homography(Matrix3::identity())
    }

    pub fn normalized(mat: Matrix3<f64>) -> Result<Self> {
        let s = mat[(2, 2)];
        if s.abs() < 1e-12 {
            return Err(Error::Degeneracy(
                "homography has (near-)zero bottom-right entry".into(),
            ));
        }
        Ok(Homography(mat / s))
    }

    /// Applies the map to a point, dividing by the projective coordinate.
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let v = self.0 * Vector3::new(p[0], p[1], 1.0);
        [v[0] / v[2], v[1] / v[2]]
    }

    pub fn inverse(&self) -> Result<Homography> {
        let inv = self
            .0
            .try_inverse()
            .ok_or_else(|| Error::Degeneracy("homography not invertible".into()))?;
        Homography::normalized(inv)
    }

    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        Homography::normalized(self.0 * other.0)
    }
}

/// Similarity/affine ingredients of a homography.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PoseDecomposition {
    pub tx: f64,
    pub ty: f64,
    pub theta: f64,
    pub scale: f64,
    /// sigma_min / sigma_max of the 2x2 affine part, in (0, 1].
    pub anisotropy: f64,
}

/// Decomposes the affine part of a (normalized) homography: singular values
/// give scale and anisotropy, the polar factor gives the rotation angle, and
/// the third column gives the translation.
pub fn decompose_homography(h: &Homography) -> Result<PoseDecomposition> {
    let m = h.0;
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    // Singular values of [[a, b], [c, d]] in closed form.
    let e = (a * a + b * b + c * c + d * d) / 2.0;
    let det = a * d - b * c;
    let disc = (e * e - det * det).max(0.0).sqrt();
    let smax = (e + disc).sqrt();
    let smin2 = e - disc;
    let smin = smin2.max(0.0).sqrt();
    if !smax.is_finite() || smax < 1e-12 || smin < 1e-9 * smax {
        return Err(Error::Degeneracy(
            "affine part of homography is (near-)singular".into(),
        ));
    }
    let theta = (c - b).atan2(a + d);
    Ok(PoseDecomposition {
        tx: m[(0, 2)],
        ty: m[(1, 2)],
        theta,
        scale: (smax * smin).sqrt(),
        anisotropy: smin / smax,
    })
}

/// Builds the homography for a similarity pose (rotation `theta`, uniform
/// `scale`, translation): the closed-form inverse of [`decompose_homography`]
/// on similarity transforms.
pub fn compose_similarity(tx: f64, ty: f64, theta: f64, scale: f64) -> Homography {
    let (s, c) = theta.sin_cos();
    Homography(Matrix3::new(
        scale * c,
        -scale * s,
        tx,
        scale * s,
        scale * c,
        ty,
        0.0,
        0.0,
        1.0,
    ))
}

/// RANSAC parameters. `iters` caps the number of minimal samples; the loop
/// exits early once the inlier ratio makes further samples pointless at the
/// given confidence.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RansacParams {
    pub iters: usize,
    pub thresh_px: f64,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            iters: 2000,
            thresh_px: 2.0,
            confidence: 0.9999,
            seed: 0,
        }
    }
}

/// Least-squares DLT with Hartley normalization over all given pairs.
pub fn fit_homography_dlt(pairs: &[Match]) -> Result<Homography> {
    let n = pairs.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "homography needs >= 4 correspondences, got {n}"
        )));
    }
    let src: Vec<[f64; 2]> = pairs.iter().map(|(a, _)| *a).collect();
    let dst: Vec<[f64; 2]> = pairs.iter().map(|(_, b)| *b).collect();
    let (src_n, t_src) = normalize_points(&src)?;
    let (dst_n, t_dst) = normalize_points(&dst)?;

    let mut design = DMatrix::<f64>::zeros(2 * n, 9);
    for i in 0..n {
        let [x, y] = src_n[i];
        let [u, v] = dst_n[i];
        let r0 = 2 * i;
        let r1 = 2 * i + 1;
        design[(r0, 0)] = -x;
        design[(r0, 1)] = -y;
        design[(r0, 2)] = -1.0;
        design[(r0, 6)] = u * x;
        design[(r0, 7)] = u * y;
        design[(r0, 8)] = u;
        design[(r1, 3)] = -x;
        design[(r1, 4)] = -y;
        design[(r1, 5)] = -1.0;
        design[(r1, 6)] = v * x;
        design[(r1, 7)] = v * y;
        design[(r1, 8)] = v;
    }
    // Pad to at least 9 rows: nalgebra's compact SVD of a wide matrix does
    // not expose the null space.
    let nrows = design.nrows();
    if nrows < 9 {
        design = design.insert_rows(nrows, 9 - nrows, 0.0);
    }
    let svd = design.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Degeneracy("svd failed".into()))?;
    let hvec = v_t.row(v_t.nrows() - 1);
    let h_norm = Matrix3::new(
        hvec[0], hvec[1], hvec[2], hvec[3], hvec[4], hvec[5], hvec[6], hvec[7], hvec[8],
    );
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or_else(|| Error::Degeneracy("normalization not invertible".into()))?;
    Homography::normalized(t_dst_inv * h_norm * t_src)
}

fn normalize_points(pts: &[[f64; 2]]) -> Result<(Vec<[f64; 2]>, Matrix3<f64>)> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let mean_dist = pts
        .iter()
        .map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if mean_dist < 1e-12 {
        return Err(Error::Degeneracy("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let out = pts
        .iter()
        .map(|p| [s * (p[0] - cx), s * (p[1] - cy)])
        .collect();
    Ok((out, t))
}

fn collinear3(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> bool {
    let area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]);
    area.abs() < 1e-9
}

fn sample_degenerate(pts: &[[f64; 2]; 4]) -> bool {
    for skip in 0..4 {
        let kept: Vec<[f64; 2]> = (0..4).filter(|i| *i != skip).map(|i| pts[i]).collect();
        if collinear3(kept[0], kept[1], kept[2]) {
            return true;
        }
    }
    false
}

fn support_collinear(pts: &[[f64; 2]]) -> bool {
    // Smallest principal axis of the point spread collapses on a line.
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let dx = p[0] - cx;
        let dy = p[1] - cy;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    if tr < 1e-12 {
        return true;
    }
    let disc = ((tr * tr) / 4.0 - det).max(0.0).sqrt();
    let lmin = tr / 2.0 - disc;
    lmin < 1e-9 * tr
}

/// RANSAC homography estimate: best 4-point DLT model by inlier count (ties
/// by lower mean inlier error), refit on all inliers, deterministic under
/// `params.seed`.
pub fn estimate_homography_ransac(
    pairs: &[Match],
    params: &RansacParams,
) -> Result<(Homography, Vec<bool>)> {
    let n = pairs.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "RANSAC needs >= 4 correspondences, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let thresh2 = params.thresh_px * params.thresh_px;

    let mut best_count = 0usize;
    let mut best_err = f64::INFINITY;
    let mut best_mask: Option<Vec<bool>> = None;
    let mut needed = params.iters;

    let mut iter = 0usize;
    while iter < params.iters && iter < needed {
        iter += 1;
        // Four distinct indices.
        let mut idx = [0usize; 4];
        let mut filled = 0;
        while filled < 4 {
            let cand = rng.gen_range(0..n);
            if !idx[..filled].contains(&cand) {
                idx[filled] = cand;
                filled += 1;
            }
        }
        let src = [pairs[idx[0]].0, pairs[idx[1]].0, pairs[idx[2]].0, pairs[idx[3]].0];
        let dst = [pairs[idx[0]].1, pairs[idx[1]].1, pairs[idx[2]].1, pairs[idx[3]].1];
        if sample_degenerate(&src) || sample_degenerate(&dst) {
            continue;
        }
        let sample: Vec<Match> = idx.iter().map(|i| pairs[*i]).collect();
        let model = match fit_homography_dlt(&sample) {
            Ok(h) => h,
            Err(_) => continue,
        };
        let mut count = 0usize;
        let mut err_sum = 0.0f64;
        let mut mask = vec![false; n];
        for (i, (a, b)) in pairs.iter().enumerate() {
            let p = model.apply(*a);
            let e2 = (p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2);
            if e2 < thresh2 {
                mask[i] = true;
                count += 1;
                err_sum += e2.sqrt();
            }
        }
        if count > best_count || (count == best_count && count > 0 && err_sum / (count as f64) < best_err)
        {
            best_count = count;
            best_err = if count > 0 { err_sum / count as f64 } else { f64::INFINITY };
            best_mask = Some(mask);
            if count >= 4 {
                let w = count as f64 / n as f64;
                let denom = (1.0 - w.powi(4)).max(1e-12).ln();
                if denom < 0.0 {
                    let est = ((1.0 - params.confidence).ln() / denom).ceil();
                    needed = (est.max(1.0) as usize).min(params.iters);
                }
            }
        }
    }

    let mask = best_mask.ok_or_else(|| {
        Error::Degeneracy("RANSAC found no valid minimal sample".into())
    })?;
    if best_count < 4 {
        return Err(Error::InsufficientData(format!(
            "RANSAC consensus too small: {best_count} inliers"
        )));
    }
    let inliers: Vec<Match> = pairs
        .iter()
        .zip(&mask)
        .filter(|(_, keep)| **keep)
        .map(|(m, _)| *m)
        .collect();
    let src: Vec<[f64; 2]> = inliers.iter().map(|(a, _)| *a).collect();
    if support_collinear(&src) {
        return Err(Error::Degeneracy("final inlier support is collinear".into()));
    }
    let refit = fit_homography_dlt(&inliers)?;
    Ok((refit, mask))
}
