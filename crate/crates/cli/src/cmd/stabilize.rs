//! `stabilize`: run the iterative pipeline or the trained network over a
//! sequence directory.

use crate::runmeta::{write_run_json, ConfigFile};
use crate::Cli;
use clap::{ArgMatches, Args};
use framestab::error::{Error, Result};
use framestab::interp::{iterative_stabilize, BuiltinInterp, Refiner, StabilizeConfig};
use framestab::io::{load_sequence, save_sequence};
use framestab::nn::{load_checkpoint, stabilize_with_net, NetRefiner, RefinerSpec, StabNetSpec};
use serde_json::json;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Args)]
pub struct StabilizeArgs {
    /// Input sequence directory.
    #[arg(long, required = true)]
    pub input: PathBuf,
    /// iterative | net
    #[arg(long, default_value = "iterative")]
    pub method: String,
    /// Refinement period (refine after every k interpolation iterations).
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Total interpolation iterations.
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    /// Neighbor gap used by the interpolator.
    #[arg(long, default_value_t = 1)]
    pub skip: usize,
    /// Stabilization-network checkpoint (for --method net).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Optional refiner checkpoint for in-loop refinement (iterative method).
    #[arg(long)]
    pub refiner: Option<PathBuf>,
    #[arg(long, required = true)]
    pub out: PathBuf,
}

pub fn run(cli: &Cli, args: &StabilizeArgs, matches: &ArgMatches) -> Result<()> {
    let config = ConfigFile::load(cli)?;
    let mut k = args.k;
    let mut m = args.m;
    let mut skip = args.skip;
    let mut method = args.method.clone();
    config.apply(matches, "k", "k", &mut k);
    config.apply(matches, "m", "m", &mut m);
    config.apply(matches, "skip", "skip", &mut skip);
    config.apply(matches, "method", "method", &mut method);

    let seq = load_sequence(&args.input)?;
    let t0 = Instant::now();
    let (stabilized, method_label) = match method.as_str() {
        "iterative" => {
            let cfg = StabilizeConfig { m, k, skip };
            let net_refiner = match &args.refiner {
                Some(path) => {
                    let (manifest, params) = load_checkpoint(path)?;
                    if manifest.kind != "refiner" {
                        return Err(Error::State(format!(
                            "--refiner checkpoint has kind {:?}, expected refiner",
                            manifest.kind
                        )));
                    }
                    let spec: RefinerSpec = serde_json::from_value(manifest.spec)
                        .map_err(|e| Error::State(format!("refiner spec unreadable: {e}")))?;
                    Some(NetRefiner::new(spec, params)?)
                }
                None => None,
            };
            let refiner_ref = net_refiner.as_ref().map(|r| r as &dyn Refiner);
            (
                iterative_stabilize(&seq, &BuiltinInterp, refiner_ref, &cfg)?,
                if net_refiner.is_some() { "iterative+refiner" } else { "iterative" },
            )
        }
        "net" => {
            let path = args.checkpoint.as_ref().ok_or_else(|| {
                Error::State("--method net requires --checkpoint".into())
            })?;
            let (manifest, params) = load_checkpoint(path)?;
            if manifest.kind != "stabnet" {
                return Err(Error::State(format!(
                    "checkpoint has kind {:?}, expected stabnet",
                    manifest.kind
                )));
            }
            let spec: StabNetSpec = serde_json::from_value(manifest.spec)
                .map_err(|e| Error::State(format!("stabnet spec unreadable: {e}")))?;
            (stabilize_with_net(&seq, &spec, &params)?, "net")
        }
        other => {
            return Err(Error::Config(format!(
                "unknown --method {other:?} (expected iterative or net)"
            )))
        }
    };
    let elapsed = t0.elapsed();
    let ms_per_frame = elapsed.as_secs_f64() * 1000.0 / seq.len() as f64;

    save_sequence(&stabilized, &args.out)?;
    log::info!(
        "stabilized {} frames with {method_label} in {:.2?} ({:.1} ms/frame)",
        seq.len(),
        elapsed,
        ms_per_frame
    );

    write_run_json(
        &args.out,
        "stabilize",
        cli,
        json!({
            "input": args.input,
            "method": method_label,
            "k": k,
            "m": m,
            "skip": skip,
            "checkpoint": args.checkpoint,
            "refiner": args.refiner,
            "frames": seq.len(),
            "runtime_ms_per_frame": ms_per_frame,
            "out": args.out,
        }),
    )
}
