//! `train`: stage-1 / stage-2 stabilization-network training and refiner
//! training.

use crate::runmeta::{write_run_json, ConfigFile};
use crate::Cli;
use clap::{ArgMatches, Args};
use framestab::error::{Error, Result};
use framestab::nn::{
    load_checkpoint, save_checkpoint, CheckpointManifest, DiscriminatorSpec, RefinerSpec,
    StabNetSpec,
};
use framestab::train::{
    train_refiner, train_stage1, train_stage2, write_loss_csv, Profile, TrainConfig,
};
use serde_json::json;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Which network to train: stabnet | refiner.
    #[arg(long, default_value = "stabnet")]
    pub net: String,
    /// Training stage for stabnet: 1 (reconstruction) or 2 (perceptual +
    /// adversarial fine-tuning).
    #[arg(long, default_value_t = 1)]
    pub stage: u8,
    /// Dataset directory (pair_* subdirs for stabnet, set_* for refiner).
    #[arg(long, required = true)]
    pub data: PathBuf,
    /// Held-out dataset directory for validation.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Stage-1 checkpoint to fine-tune from (required for --stage 2).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Override the profile's iteration budget.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Override the profile's patch size.
    #[arg(long)]
    pub patch: Option<usize>,
    /// Override residual block count.
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Override base channel width.
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, required = true)]
    pub out: PathBuf,
}

pub fn run(cli: &Cli, args: &TrainArgs, matches: &ArgMatches) -> Result<()> {
    let config = ConfigFile::load(cli)?;
    let profile = Profile::from_str(&cli.profile)?;
    let mut iters = args.iters;
    let mut patch = args.patch;
    let mut blocks = args.blocks;
    let mut width = args.width;
    config.apply(matches, "iters", "iters", &mut iters);
    config.apply(matches, "patch", "patch", &mut patch);
    config.apply(matches, "blocks", "blocks", &mut blocks);
    config.apply(matches, "width", "width", &mut width);

    match args.net.as_str() {
        "stabnet" => run_stabnet(cli, args, profile, iters, patch, blocks, width),
        "refiner" => run_refiner_train(cli, args, profile, iters, patch, blocks, width),
        other => Err(Error::Config(format!(
            "unknown --net {other:?} (expected stabnet or refiner)"
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_stabnet(
    cli: &Cli,
    args: &TrainArgs,
    profile: Profile,
    iters: Option<usize>,
    patch: Option<usize>,
    blocks: Option<usize>,
    width: Option<usize>,
) -> Result<()> {
    let mut spec = match profile {
        Profile::Desk => StabNetSpec::desk(),
        Profile::Paper => StabNetSpec::paper(),
    };
    if let Some(b) = blocks {
        spec.residual_blocks = b;
    }
    if let Some(w) = width {
        spec.base_width = w;
    }

    let mut cfg = match args.stage {
        1 => TrainConfig::stage1(profile, cli.seed),
        2 => TrainConfig::stage2(profile, cli.seed),
        s => return Err(Error::Config(format!("stage must be 1 or 2, got {s}"))),
    };
    if let Some(i) = iters {
        cfg.max_iters = i;
    }
    if let Some(p) = patch {
        cfg.patch_size = p;
    }

    let pairs = super::load_pair_dataset(&args.data)?;
    let val_pairs = match &args.val {
        Some(dir) => super::load_pair_dataset(dir)?,
        None => Vec::new(),
    };
    log::info!(
        "training stabnet stage {} on {} pairs ({} val), {} iters",
        args.stage,
        pairs.len(),
        val_pairs.len(),
        cfg.max_iters
    );

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let loss_csv = args.out.join("loss.csv");
    let ckpt_base = args.out.join("checkpoint");

    match args.stage {
        1 => {
            let outcome = train_stage1(&pairs, &val_pairs, &spec, &cfg)?;
            write_loss_csv(&loss_csv, &outcome.history)?;
            let manifest = CheckpointManifest {
                kind: "stabnet".into(),
                spec: serde_json::to_value(spec).expect("serializable"),
                stage: 1,
                iteration: cfg.max_iters,
                seed: cfg.seed,
                loss_history_path: Some("loss.csv".into()),
            };
            save_checkpoint(&ckpt_base, &manifest, &outcome.params)?;
            log::info!(
                "stage 1 done: held-out L2 {:.6} -> {:.6}",
                outcome.initial_val,
                outcome.final_val
            );
        }
        2 => {
            let init_path = args.init.as_ref().ok_or_else(|| {
                Error::State("--stage 2 requires --init <stage-1 checkpoint>".into())
            })?;
            let (stage1_manifest, gen_init) = load_checkpoint(init_path)?;
            let ckpt_spec: StabNetSpec =
                serde_json::from_value(stage1_manifest.spec.clone()).map_err(|e| {
                    Error::State(format!("checkpoint spec unreadable: {e}"))
                })?;
            let disc_spec = DiscriminatorSpec::default();
            let outcome = train_stage2(
                &pairs,
                &ckpt_spec,
                &stage1_manifest,
                gen_init,
                &disc_spec,
                &cfg,
            )?;
            write_loss_csv(&loss_csv, &outcome.history)?;
            let manifest = CheckpointManifest {
                kind: "stabnet".into(),
                spec: stage1_manifest.spec.clone(),
                stage: 2,
                iteration: cfg.max_iters,
                seed: cfg.seed,
                loss_history_path: Some("loss.csv".into()),
            };
            save_checkpoint(&ckpt_base, &manifest, &outcome.gen_params)?;
            let disc_manifest = CheckpointManifest {
                kind: "discriminator".into(),
                spec: serde_json::to_value(disc_spec).expect("serializable"),
                stage: 2,
                iteration: cfg.max_iters,
                seed: cfg.seed,
                loss_history_path: Some("loss.csv".into()),
            };
            save_checkpoint(&args.out.join("discriminator"), &disc_manifest, &outcome.disc_params)?;
            let n = outcome.disc_real.len().max(1);
            log::info!(
                "stage 2 done: final disc scores real {:.3} fake {:.3}",
                outcome.disc_real.iter().sum::<f64>() / n as f64,
                outcome.disc_fake.iter().sum::<f64>() / n as f64
            );
        }
        _ => unreachable!(),
    }

    write_run_json(
        &args.out,
        "train",
        cli,
        json!({
            "net": "stabnet",
            "stage": args.stage,
            "data": args.data,
            "val": args.val,
            "init": args.init,
            "iters": cfg.max_iters,
            "patch": cfg.patch_size,
            "batch_size": cfg.batch_size,
            "patches_per_batch": cfg.patches_per_batch,
            "lr_init": cfg.lr_init,
            "lambda_adv": cfg.lambda_adv,
            "blocks": spec.residual_blocks,
            "width": spec.base_width,
            "out": args.out,
        }),
    )
}

#[allow(clippy::too_many_arguments)]
fn run_refiner_train(
    cli: &Cli,
    args: &TrainArgs,
    profile: Profile,
    iters: Option<usize>,
    patch: Option<usize>,
    blocks: Option<usize>,
    width: Option<usize>,
) -> Result<()> {
    let mut spec = RefinerSpec::default();
    if let Some(b) = blocks {
        spec.residual_blocks = b;
    }
    if let Some(w) = width {
        spec.base_width = w;
    }
    let mut cfg = TrainConfig::refiner(profile, cli.seed);
    if let Some(i) = iters {
        cfg.max_iters = i;
    }
    if let Some(p) = patch {
        cfg.patch_size = p;
    }

    let samples = super::load_refiner_dataset(&args.data)?;
    let val_samples = match &args.val {
        Some(dir) => super::load_refiner_dataset(dir)?,
        None => Vec::new(),
    };
    log::info!(
        "training refiner on {} samples ({} val), {} iters",
        samples.len(),
        val_samples.len(),
        cfg.max_iters
    );

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let outcome = train_refiner(&samples, &val_samples, &spec, &cfg)?;
    let loss_csv = args.out.join("loss.csv");
    write_loss_csv(&loss_csv, &outcome.history)?;
    let manifest = CheckpointManifest {
        kind: "refiner".into(),
        spec: serde_json::to_value(spec).expect("serializable"),
        stage: 1,
        iteration: cfg.max_iters,
        seed: cfg.seed,
        loss_history_path: Some("loss.csv".into()),
    };
    save_checkpoint(&args.out.join("checkpoint"), &manifest, &outcome.params)?;
    log::info!(
        "refiner done: held-out L2 {:.6} -> {:.6}",
        outcome.initial_val,
        outcome.final_val
    );

    write_run_json(
        &args.out,
        "train",
        cli,
        json!({
            "net": "refiner",
            "data": args.data,
            "val": args.val,
            "iters": cfg.max_iters,
            "patch": cfg.patch_size,
            "lr_init": cfg.lr_init,
            "blocks": spec.residual_blocks,
            "width": spec.base_width,
            "out": args.out,
        }),
    )
}
