//! Two-stage stabilization-network training plus refiner training:
//! patch sampling, augmentation, schedules and the optimization loops.

pub mod augment;
pub mod loss;
pub mod run;
pub mod schedule;

pub use augment::{augment, AugmentSpec, TrainSample};
pub use loss::{loss_l2, loss_perceptual, loss_stage2};
pub use run::{train_refiner, train_stage1, train_stage2, Stage2Outcome, TrainOutcome};
pub use schedule::{lr_linear, lr_plateau, PlateauSchedule};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

/// Scale profile: paper-faithful constants or the desk-scale configuration
/// that keeps training runs in the minutes range on a CPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Desk => write!(f, "desk"),
            Profile::Paper => write!(f, "paper"),
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!("unknown profile {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: u8,
    pub lr_init: f64,
    pub lambda_adv: f64,
    pub patch_size: usize,
    pub batch_size: usize,
    /// Patch windows contributed by each sampled video per batch element.
    pub patches_per_batch: usize,
    pub max_iters: usize,
    pub val_interval: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub seed: u64,
    pub augment: AugmentSpec,
    /// Stage-1 alternative reconstruction loss (no acceptance claims).
    pub l1_loss: bool,
}

impl TrainConfig {
    pub fn stage1(profile: Profile, seed: u64) -> Self {
        let (patch_size, patches_per_batch, max_iters) = match profile {
            Profile::Desk => (48, 2, 2000),
            Profile::Paper => (220, 5, 70_000),
        };
        TrainConfig {
            stage: 1,
            lr_init: 1e-4,
            lambda_adv: 0.01,
            patch_size,
            batch_size: 5,
            patches_per_batch,
            max_iters,
            val_interval: 50,
            plateau_patience: 5,
            plateau_factor: 0.5,
            seed,
            augment: AugmentSpec::enabled(seed),
            l1_loss: false,
        }
    }

    pub fn stage2(profile: Profile, seed: u64) -> Self {
        let (patch_size, patches_per_batch, max_iters) = match profile {
            Profile::Desk => (48, 2, 500),
            Profile::Paper => (220, 5, 70_000),
        };
        TrainConfig {
            stage: 2,
            lr_init: 5e-5,
            lambda_adv: 0.01,
            patch_size,
            batch_size: 3,
            patches_per_batch,
            max_iters,
            val_interval: 50,
            plateau_patience: 5,
            plateau_factor: 0.5,
            seed,
            augment: AugmentSpec::enabled(seed),
            l1_loss: false,
        }
    }

    pub fn refiner(profile: Profile, seed: u64) -> Self {
        let mut cfg = TrainConfig::stage1(profile, seed);
        cfg.max_iters = match profile {
            Profile::Desk => 1500,
            Profile::Paper => 70_000,
        };
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stage == 1 || self.stage == 2) {
            return Err(Error::Config(format!("stage must be 1 or 2, got {}", self.stage)));
        }
        if self.lambda_adv < 0.0 {
            return Err(Error::Config("lambda_adv must be >= 0".into()));
        }
        if self.patch_size == 0 || self.batch_size == 0 || self.patches_per_batch == 0 {
            return Err(Error::Config("patch/batch sizes must be positive".into()));
        }
        Ok(())
    }
}

/// One loss-log line, serialized as CSV `iter,loss_total,loss_content,loss_adv,lr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub iter: usize,
    pub loss_total: f64,
    pub loss_content: f64,
    pub loss_adv: f64,
    pub lr: f64,
}

pub fn write_loss_csv(path: &Path, rows: &[LossRow]) -> Result<()> {
    let mut out = String::from("iter,loss_total,loss_content,loss_adv,lr\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iter, r.loss_total, r.loss_content, r.loss_adv, r.lr
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
