//! Frame sequence container: in-memory types, the on-disk directory format,
//! and patch extraction.
//!
//! Sequences are stored as one lossless 8-bit PNG per frame
//! (`frame_%06d.png`) plus a `manifest.json` describing shape, fps and a
//! SHA-256 checksum over the raw RGB bytes of all frames in index order.
//! In memory every channel value is a normalized `f32` in `[0, 1]`;
//! conversion to/from 8-bit rounds half up so round-trips are exact.

use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_FRAME_PATTERN: &str = "frame_%06d.png";

/// A single RGB frame, planar channel-major layout (`data[c*w*h + y*w + x]`),
/// values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn zeros(width: usize, height: usize) -> Self {
        Frame {
            width,
            height,
            data: vec![0.0; 3 * width * height],
        }
    }

    pub fn from_planar(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::Shape(format!(
                "planar buffer length {} does not match 3x{}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Frame {
            width,
            height,
            data,
        })
    }

    /// Builds a frame from a per-pixel closure returning (r, g, b).
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut frame = Frame::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let rgb = f(x, y);
                for (c, v) in rgb.iter().enumerate() {
                    frame.set(c, x, y, *v);
                }
            }
        }
        frame
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[c * self.width * self.height + y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f32) {
        self.data[c * self.width * self.height + y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Luma (BT.601 weights), row-major.
    pub fn luma(&self) -> Vec<f32> {
        let n = self.width * self.height;
        let (r, g, b) = (self.channel(0), self.channel(1), self.channel(2));
        (0..n)
            .map(|i| 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i])
            .collect()
    }

    /// Bilinear sample of channel `c` at continuous position `(x, y)` with
    /// edge clamping. Pixel centers sit at integer coordinates; weights are
    /// computed in f64 so that renders of shifted coordinates agree exactly.
    #[inline]
    pub fn sample_bilinear(&self, c: usize, x: f64, y: f64) -> f32 {
        let xm = (self.width - 1) as f64;
        let ym = (self.height - 1) as f64;
        let x = x.clamp(0.0, xm);
        let y = y.clamp(0.0, ym);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0 as usize;
        let y0 = y0 as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let ch = self.channel(c);
        let w = self.width;
        let p00 = ch[y0 * w + x0] as f64;
        let p10 = ch[y0 * w + x1] as f64;
        let p01 = ch[y1 * w + x0] as f64;
        let p11 = ch[y1 * w + x1] as f64;
        let top = p00 + (p10 - p00) * fx;
        let bot = p01 + (p11 - p01) * fx;
        (top + (bot - top) * fy) as f32
    }

    /// Encodes to interleaved RGB8 with round-half-up quantization.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let (r, g, b) = (self.channel(0), self.channel(1), self.channel(2));
        let mut out = Vec::with_capacity(3 * n);
        for i in 0..n {
            out.push(quantize(r[i]));
            out.push(quantize(g[i]));
            out.push(quantize(b[i]));
        }
        out
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 3 * width * height {
            return Err(Error::Shape(format!(
                "rgb8 buffer length {} does not match {}x{}",
                bytes.len(),
                width,
                height
            )));
        }
        let n = width * height;
        let mut frame = Frame::zeros(width, height);
        for i in 0..n {
            let r = bytes[3 * i] as f32 / 255.0;
            let g = bytes[3 * i + 1] as f32 / 255.0;
            let b = bytes[3 * i + 2] as f32 / 255.0;
            frame.data[i] = r;
            frame.data[n + i] = g;
            frame.data[2 * n + i] = b;
        }
        Ok(frame)
    }

    pub fn mean_abs_diff(&self, other: &Frame) -> f32 {
        assert_eq!(self.data.len(), other.data.len());
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        (sum / self.data.len() as f64) as f32
    }
}

#[inline]
fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Ordered RGB frames with shared resolution plus fps metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    pub fps: f64,
    pub name: String,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>, fps: f64, name: impl Into<String>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Validation("sequence must contain at least one frame".into()));
        }
        let (w, h) = (frames[0].width, frames[0].height);
        for (i, f) in frames.iter().enumerate() {
            if f.width != w || f.height != h {
                return Err(Error::Validation(format!(
                    "frame {} is {}x{}, expected {}x{}",
                    i, f.width, f.height, w, h
                )));
            }
            if f.data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
                return Err(Error::Validation(format!(
                    "frame {} contains values outside [0, 1]",
                    i
                )));
            }
        }
        Ok(FrameSequence {
            frames,
            fps,
            name: name.into(),
        })
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, idx: usize) -> &Frame {
        &self.frames[idx]
    }

    /// Frame at `idx` clamped into the valid range (temporal edge replication).
    pub fn frame_clamped(&self, idx: isize) -> &Frame {
        let last = self.frames.len() as isize - 1;
        &self.frames[idx.clamp(0, last) as usize]
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }
}

/// On-disk description of a stored sequence.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SequenceManifest {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub fps: f64,
    pub frame_pattern: String,
    pub checksum: String,
}

/// Expands a `%0Nd` pattern such as `frame_%06d.png`.
pub fn pattern_filename(pattern: &str, index: usize) -> Result<String> {
    let start = pattern
        .find("%0")
        .ok_or_else(|| Error::Format(format!("frame pattern {pattern:?} lacks a %0Nd field")))?;
    let rest = &pattern[start + 2..];
    let dpos = rest
        .find('d')
        .ok_or_else(|| Error::Format(format!("frame pattern {pattern:?} lacks a %0Nd field")))?;
    let width: usize = rest[..dpos]
        .parse()
        .map_err(|_| Error::Format(format!("bad pad width in frame pattern {pattern:?}")))?;
    Ok(format!(
        "{}{:0width$}{}",
        &pattern[..start],
        index,
        &rest[dpos + 1..],
        width = width
    ))
}

/// Writes all frames plus the manifest to `dir` (created if missing).
/// Returns the manifest that was written.
pub fn save_sequence(seq: &FrameSequence, dir: &Path) -> Result<SequenceManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut hasher = Sha256::new();
    let encoded: Vec<(String, Vec<u8>)> = seq
        .frames()
        .par_iter()
        .enumerate()
        .map(|(i, frame)| {
            let name = pattern_filename(DEFAULT_FRAME_PATTERN, i)?;
            Ok((name, frame.to_rgb8()))
        })
        .collect::<Result<_>>()?;
    for (name, rgb) in &encoded {
        hasher.update(rgb);
        let path = dir.join(name);
        let img = image::RgbImage::from_raw(seq.width() as u32, seq.height() as u32, rgb.clone())
            .expect("buffer size matches dimensions");
        img.save(&path)
            .map_err(|e| Error::Format(format!("png encode {}: {}", path.display(), e)))?;
    }
    let manifest = SequenceManifest {
        width: seq.width(),
        height: seq.height(),
        frame_count: seq.len(),
        fps: seq.fps,
        frame_pattern: DEFAULT_FRAME_PATTERN.to_string(),
        checksum: hex_digest(hasher),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest encode: {e}")))?;
    fs::write(dir.join(MANIFEST_FILE), manifest_json)
        .map_err(|e| Error::io(dir.join(MANIFEST_FILE), e))?;
    Ok(manifest)
}

/// Loads a sequence directory written by [`save_sequence`], verifying frame
/// count, index contiguity and the manifest checksum.
pub fn load_sequence(dir: &Path) -> Result<FrameSequence> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest_json = fs::read_to_string(&manifest_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::Format(format!("missing manifest {}", manifest_path.display()))
        }
        _ => Error::io(&manifest_path, e),
    })?;
    let manifest: SequenceManifest = serde_json::from_str(&manifest_json)
        .map_err(|e| Error::Format(format!("manifest parse: {e}")))?;

    // Contiguity: indices 0..frame_count must all exist and index frame_count must not.
    for i in 0..manifest.frame_count {
        let path = dir.join(pattern_filename(&manifest.frame_pattern, i)?);
        if !path.exists() {
            return Err(Error::Integrity(format!(
                "manifest lists {} frames but {} is missing",
                manifest.frame_count,
                path.display()
            )));
        }
    }
    let overshoot = dir.join(pattern_filename(&manifest.frame_pattern, manifest.frame_count)?);
    if overshoot.exists() {
        return Err(Error::Integrity(format!(
            "frame files are not contiguous with the manifest: unexpected {}",
            overshoot.display()
        )));
    }

    let decoded: Vec<(Frame, Vec<u8>)> = (0..manifest.frame_count)
        .into_par_iter()
        .map(|i| {
            let path = dir.join(pattern_filename(&manifest.frame_pattern, i)?);
            let img = image::open(&path)
                .map_err(|e| Error::Format(format!("png decode {}: {}", path.display(), e)))?
                .to_rgb8();
            if img.width() as usize != manifest.width || img.height() as usize != manifest.height {
                return Err(Error::Integrity(format!(
                    "frame {} is {}x{}, manifest says {}x{}",
                    i,
                    img.width(),
                    img.height(),
                    manifest.width,
                    manifest.height
                )));
            }
            let bytes = img.into_raw();
            let frame = Frame::from_rgb8(manifest.width, manifest.height, &bytes)?;
            Ok((frame, bytes))
        })
        .collect::<Result<_>>()?;

    let mut hasher = Sha256::new();
    let mut frames = Vec::with_capacity(decoded.len());
    for (frame, bytes) in decoded {
        hasher.update(&bytes);
        frames.push(frame);
    }
    let checksum = hex_digest(hasher);
    if checksum != manifest.checksum {
        return Err(Error::Integrity(format!(
            "checksum mismatch: manifest {} vs frames {}",
            manifest.checksum, checksum
        )));
    }

    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".to_string());
    FrameSequence::new(frames, manifest.fps, name)
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// A square patch cut from one frame.
#[derive(Debug, Clone)]
pub struct Patch {
    pub pixels: Frame,
    /// (row, col) of the patch's top-left corner in the source frame.
    pub origin: (usize, usize),
    pub source_index: usize,
}

/// Extracts co-located patches from the `2*radius + 1` frames centered on
/// `center_index`. Frame indices outside the sequence are clamped to the
/// nearest valid frame, so the result always has `2*radius + 1` entries.
pub fn extract_patch_windows(
    seq: &FrameSequence,
    center_index: usize,
    radius: usize,
    patch_size: usize,
    origin: (usize, usize),
) -> Result<Vec<Patch>> {
    if center_index >= seq.len() {
        return Err(Error::Range(format!(
            "center index {} out of range for {} frames",
            center_index,
            seq.len()
        )));
    }
    let (row, col) = origin;
    if patch_size == 0 || col + patch_size > seq.width() || row + patch_size > seq.height() {
        return Err(Error::Range(format!(
            "patch {}x{} at ({}, {}) exceeds frame bounds {}x{}",
            patch_size,
            patch_size,
            row,
            col,
            seq.width(),
            seq.height()
        )));
    }
    let mut out = Vec::with_capacity(2 * radius + 1);
    for offset in -(radius as isize)..=(radius as isize) {
        let idx = center_index as isize + offset;
        let src = seq.frame_clamped(idx);
        let clamped = idx.clamp(0, seq.len() as isize - 1) as usize;
        out.push(Patch {
            pixels: crop(src, col, row, patch_size, patch_size),
            origin,
            source_index: clamped,
        });
    }
    Ok(out)
}

/// Copies the `w`x`h` region with top-left pixel (`x0`, `y0`); caller
/// guarantees bounds.
pub fn crop(frame: &Frame, x0: usize, y0: usize, w: usize, h: usize) -> Frame {
    let mut out = Frame::zeros(w, h);
    for c in 0..3 {
        let src = frame.channel(c);
        let dst = out.channel_mut(c);
        for y in 0..h {
            let srow = (y0 + y) * frame.width + x0;
            dst[y * w..(y + 1) * w].copy_from_slice(&src[srow..srow + w]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sequence(seed: u64, frames: usize, w: usize, h: usize) -> FrameSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames: Vec<Frame> = (0..frames)
            .map(|_| {
                let data: Vec<f32> = (0..3 * w * h).map(|_| rng.gen_range(0.0..=1.0)).collect();
                Frame::from_planar(w, h, data).unwrap()
            })
            .collect();
        FrameSequence::new(frames, 30.0, "test").unwrap()
    }

    #[test]
    fn save_load_identity_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let seq = random_sequence(1, 10, 64, 64);
        // Quantize up front so the in-memory values are exactly representable.
        let frames: Vec<Frame> = seq
            .frames()
            .iter()
            .map(|f| Frame::from_rgb8(64, 64, &f.to_rgb8()).unwrap())
            .collect();
        let seq = FrameSequence::new(frames, 30.0, "test").unwrap();
        save_sequence(&seq, dir.path()).unwrap();
        let loaded = load_sequence(dir.path()).unwrap();
        assert_eq!(loaded.len(), 10);
        assert_eq!(loaded.width(), 64);
        assert_eq!(loaded.height(), 64);
        for (a, b) in seq.frames().iter().zip(loaded.frames()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn save_twice_same_checksum() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let seq = random_sequence(7, 5, 32, 24);
        let m1 = save_sequence(&seq, d1.path()).unwrap();
        let m2 = save_sequence(&seq, d2.path()).unwrap();
        assert_eq!(m1.checksum, m2.checksum);
        assert_eq!(m1.frame_count, 5);
    }

    #[test]
    fn missing_frame_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let seq = random_sequence(3, 10, 16, 16);
        save_sequence(&seq, dir.path()).unwrap();
        fs::remove_file(dir.path().join("frame_000009.png")).unwrap();
        match load_sequence(dir.path()) {
            Err(Error::Integrity(_)) => {}
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn missing_manifest_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        match load_sequence(dir.path()) {
            Err(Error::Format(_)) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn empty_sequence_rejected() {
        assert!(matches!(
            FrameSequence::new(vec![], 30.0, "x"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn patch_windows_clamp_at_edges() {
        let seq = random_sequence(5, 20, 32, 32);
        let patches = extract_patch_windows(&seq, 5, 2, 8, (4, 4)).unwrap();
        assert_eq!(
            patches.iter().map(|p| p.source_index).collect::<Vec<_>>(),
            vec![3, 4, 5, 6, 7]
        );
        let patches = extract_patch_windows(&seq, 0, 2, 8, (0, 0)).unwrap();
        assert_eq!(
            patches.iter().map(|p| p.source_index).collect::<Vec<_>>(),
            vec![0, 0, 0, 1, 2]
        );
        for p in &patches {
            assert_eq!(p.pixels.width, 8);
            assert_eq!(p.pixels.height, 8);
        }
    }

    #[test]
    fn oversized_patch_rejected() {
        let seq = random_sequence(2, 4, 128, 128);
        assert!(matches!(
            extract_patch_windows(&seq, 1, 2, 220, (0, 0)),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn pattern_expansion() {
        assert_eq!(pattern_filename("frame_%06d.png", 12).unwrap(), "frame_000012.png");
        assert!(pattern_filename("frame.png", 0).is_err());
    }
}
