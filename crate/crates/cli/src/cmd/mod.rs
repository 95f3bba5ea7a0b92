pub mod evaluate;
pub mod smooth;
pub mod stabilize;
pub mod synth;
pub mod train;

use framestab::error::{Error, Result};
use framestab::io::{load_sequence, Frame, FrameSequence};
use framestab::synth::{RefinerSample, StabPair, Trajectory};
use std::path::{Path, PathBuf};

/// Loads the source image for synthesis: an explicit image file, or a
/// seeded procedural texture when none is given.
pub fn load_source_image(
    image: &Option<PathBuf>,
    width: usize,
    height: usize,
    texture_seed: u64,
) -> Result<Frame> {
    match image {
        Some(path) => {
            let img = image::open(path)
                .map_err(|e| Error::Format(format!("image decode {}: {e}", path.display())))?
                .to_rgb8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            Frame::from_rgb8(w, h, &img.into_raw())
        }
        None => Ok(framestab::synth::procedural_texture(width, height, texture_seed)),
    }
}

fn sorted_subdirs(root: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir()
            && path
                .file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with(prefix))
                .unwrap_or(false)
        {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Loads a training dataset directory of `pair_*` subdirectories, each with
/// `stable/` and `unstable/` sequences plus their trajectory CSVs.
pub fn load_pair_dataset(root: &Path) -> Result<Vec<StabPair>> {
    let dirs = sorted_subdirs(root, "pair_")?;
    if dirs.is_empty() {
        return Err(Error::State(format!(
            "no pair_* directories under {}",
            root.display()
        )));
    }
    let mut pairs = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let stable = load_sequence(&dir.join("stable"))?;
        let unstable = load_sequence(&dir.join("unstable"))?;
        let stable_traj = Trajectory::read_csv(&dir.join("stable").join("trajectory.csv"))?;
        let unstable_traj = Trajectory::read_csv(&dir.join("unstable").join("trajectory.csv"))?;
        pairs.push(StabPair {
            stable,
            unstable,
            stable_traj,
            unstable_traj,
        });
    }
    Ok(pairs)
}

/// Loads a refiner dataset directory of `set_*` subdirectories, each with
/// `clean/` and `degraded/` sequences; samples are the interior centers.
pub fn load_refiner_dataset(root: &Path) -> Result<Vec<RefinerSample>> {
    let dirs = sorted_subdirs(root, "set_")?;
    if dirs.is_empty() {
        return Err(Error::State(format!(
            "no set_* directories under {}",
            root.display()
        )));
    }
    let mut samples = Vec::new();
    for dir in dirs {
        let clean = load_sequence(&dir.join("clean"))?;
        let degraded = load_sequence(&dir.join("degraded"))?;
        if clean.len() != degraded.len() {
            return Err(Error::Integrity(format!(
                "{}: clean and degraded lengths differ",
                dir.display()
            )));
        }
        samples.extend(samples_from_sequences(&clean, &degraded));
    }
    Ok(samples)
}

pub fn samples_from_sequences(
    clean: &FrameSequence,
    degraded: &FrameSequence,
) -> Vec<RefinerSample> {
    let mut out = Vec::new();
    if clean.len() < 5 {
        return out;
    }
    for t in 2..clean.len() - 2 {
        out.push(RefinerSample {
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
    out
}

pub fn parse_window(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("window {s:?} must look like 128x128")));
    }
    let w = parts[0]
        .parse()
        .map_err(|_| Error::Config(format!("bad window width {:?}", parts[0])))?;
    let h = parts[1]
        .parse()
        .map_err(|_| Error::Config(format!("bad window height {:?}", parts[1])))?;
    Ok((w, h))
}
