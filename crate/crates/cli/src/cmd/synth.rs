//! `synth pair` and `synth refiner`: synthetic dataset emission.

use crate::runmeta::{write_run_json, ConfigFile};
use crate::Cli;
use clap::{ArgMatches, Args, Subcommand};
use framestab::error::{Error, Result};
use framestab::interp::{BuiltinInterp, StabilizeConfig};
use framestab::io::save_sequence;
use framestab::synth::{
    gen_smooth_trajectory, inject_jitter, render_crop_sequence, render_refiner_sequences,
    JitterSpec, PairSpec, RefinerGenSpec,
};
use serde_json::json;
use std::path::PathBuf;

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Equi-perspective stable/unstable pairs with ground-truth trajectories.
    Pair(PairArgs),
    /// Clean/degraded sequences for refiner training.
    Refiner(RefinerArgs),
}

#[derive(Debug, Args)]
pub struct PairArgs {
    /// Source image (PNG); a seeded procedural texture is used when absent.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Procedural texture size when no image is given.
    #[arg(long, default_value_t = 768)]
    pub texture_size: usize,
    #[arg(long, default_value_t = 64)]
    pub frames: usize,
    /// Output frame size, WxH.
    #[arg(long, default_value = "128x128")]
    pub window: String,
    /// RMS per-frame translation of the smooth path, pixels.
    #[arg(long, default_value_t = 2.0)]
    pub speed: f64,
    /// RMS per-frame rotation of the smooth path, radians.
    #[arg(long, default_value_t = 0.004)]
    pub turn_rate: f64,
    /// Peak translational jitter, pixels.
    #[arg(long, default_value_t = 3.0)]
    pub jitter_px: f64,
    /// Peak rotational jitter, radians.
    #[arg(long, default_value_t = 0.01)]
    pub jitter_rad: f64,
    /// Lowest DFT bin of the jitter band (>= 7).
    #[arg(long, default_value_t = 7)]
    pub jitter_min_bin: usize,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    /// Number of pairs to emit (pair_000, pair_001, ...).
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, required = true)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RefinerArgs {
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, default_value_t = 768)]
    pub texture_size: usize,
    #[arg(long, default_value_t = 64)]
    pub frames: usize,
    #[arg(long, default_value = "128x128")]
    pub window: String,
    /// Constant linear window speed, pixels per frame.
    #[arg(long, default_value_t = 1.5)]
    pub speed: f64,
    /// Interpolation-only degradation iterations.
    #[arg(long, default_value_t = 4)]
    pub degrade_m: usize,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    /// Number of sets to emit (set_000, set_001, ...).
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, required = true)]
    pub out: PathBuf,
}

pub fn run(cli: &Cli, args: &SynthCommand, matches: &ArgMatches) -> Result<()> {
    let sub = matches
        .subcommand()
        .map(|(_, m)| m)
        .ok_or_else(|| Error::Config("missing synth subcommand".into()))?;
    match args {
        SynthCommand::Pair(pair) => run_pair(cli, pair, sub),
        SynthCommand::Refiner(refiner) => run_refiner(cli, refiner, sub),
    }
}

fn run_pair(cli: &Cli, args: &PairArgs, matches: &ArgMatches) -> Result<()> {
    let config = ConfigFile::load(cli)?;
    let mut frames = args.frames;
    let mut speed = args.speed;
    let mut turn_rate = args.turn_rate;
    let mut jitter_px = args.jitter_px;
    let mut jitter_rad = args.jitter_rad;
    let mut jitter_min_bin = args.jitter_min_bin;
    let mut count = args.count;
    config.apply(matches, "frames", "frames", &mut frames);
    config.apply(matches, "speed", "speed", &mut speed);
    config.apply(matches, "turn_rate", "turn_rate", &mut turn_rate);
    config.apply(matches, "jitter_px", "jitter_px", &mut jitter_px);
    config.apply(matches, "jitter_rad", "jitter_rad", &mut jitter_rad);
    config.apply(matches, "jitter_min_bin", "jitter_min_bin", &mut jitter_min_bin);
    config.apply(matches, "count", "count", &mut count);

    let window = super::parse_window(&args.window)?;

    for i in 0..count {
        let pair_seed = cli.seed.wrapping_add(i as u64);
        let spec = PairSpec {
            length: frames,
            window,
            speed_px: speed,
            turn_rate,
            jitter: JitterSpec {
                amplitude_px: jitter_px,
                amplitude_rad: jitter_rad,
                min_freq_bin: jitter_min_bin,
                seed: pair_seed.wrapping_add(0x4A17),
            },
            fps: args.fps,
        };
        let image = super::load_source_image(
            &args.image,
            args.texture_size,
            args.texture_size,
            pair_seed.wrapping_add(0x7E47),
        )?;
        // Render via the same path as make_stab_pair, kept explicit here so
        // the trajectories can be written next to each sequence.
        let smooth = gen_smooth_trajectory(spec.length, spec.speed_px, spec.turn_rate, pair_seed)?;
        let jittered = inject_jitter(&smooth, &spec.jitter)?;
        let stable = render_crop_sequence(&image, &smooth, spec.window, spec.fps, "stable")?;
        let unstable = render_crop_sequence(&image, &jittered, spec.window, spec.fps, "unstable")?;

        let pair_dir = args.out.join(format!("pair_{i:03}"));
        let stable_dir = pair_dir.join("stable");
        let unstable_dir = pair_dir.join("unstable");
        save_sequence(&stable, &stable_dir)?;
        save_sequence(&unstable, &unstable_dir)?;
        smooth.write_csv(&stable_dir.join("trajectory.csv"))?;
        jittered.write_csv(&unstable_dir.join("trajectory.csv"))?;
        log::info!("wrote {}", pair_dir.display());
    }

    write_run_json(
        &args.out,
        "synth pair",
        cli,
        json!({
            "image": args.image,
            "texture_size": args.texture_size,
            "frames": frames,
            "window": args.window,
            "speed": speed,
            "turn_rate": turn_rate,
            "jitter_px": jitter_px,
            "jitter_rad": jitter_rad,
            "jitter_min_bin": jitter_min_bin,
            "fps": args.fps,
            "count": count,
            "out": args.out,
        }),
    )
}

fn run_refiner(cli: &Cli, args: &RefinerArgs, matches: &ArgMatches) -> Result<()> {
    let config = ConfigFile::load(cli)?;
    let mut frames = args.frames;
    let mut degrade_m = args.degrade_m;
    let mut count = args.count;
    config.apply(matches, "frames", "frames", &mut frames);
    config.apply(matches, "degrade_m", "degrade_m", &mut degrade_m);
    config.apply(matches, "count", "count", &mut count);

    let window = super::parse_window(&args.window)?;

    for i in 0..count {
        let set_seed = cli.seed.wrapping_add(i as u64);
        let image = super::load_source_image(
            &args.image,
            args.texture_size,
            args.texture_size,
            set_seed.wrapping_add(0x5E7),
        )?;
        let spec = RefinerGenSpec {
            length: frames,
            window,
            speed_px: args.speed,
            degrade: StabilizeConfig {
                m: degrade_m,
                k: degrade_m.max(1),
                skip: 1,
            },
            fps: args.fps,
        };
        // Store the two whole sequences; samples are the interior centers
        // and can be rebuilt on load without re-running the degradation.
        let (clean, degraded) =
            render_refiner_sequences(&image, &spec, &BuiltinInterp, set_seed)?;
        let set_dir = args.out.join(format!("set_{i:03}"));
        save_sequence(&clean, &set_dir.join("clean"))?;
        save_sequence(&degraded, &set_dir.join("degraded"))?;
        log::info!("wrote {} ({} interior samples)", set_dir.display(), frames.saturating_sub(4));
    }

    write_run_json(
        &args.out,
        "synth refiner",
        cli,
        json!({
            "image": args.image,
            "texture_size": args.texture_size,
            "frames": frames,
            "window": args.window,
            "speed": args.speed,
            "degrade_m": degrade_m,
            "fps": args.fps,
            "count": count,
            "out": args.out,
        }),
    )
}
