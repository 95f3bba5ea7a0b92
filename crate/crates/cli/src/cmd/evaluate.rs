//! `evaluate`: stability / distortion / cropping report for a stabilization
//! run, with optional trajectory and spectrum figures.

use crate::plot::{self, Series};
use crate::runmeta::{write_run_json, ConfigFile};
use crate::Cli;
use clap::{ArgMatches, Args};
use framestab::error::{Error, Result};
use framestab::io::load_sequence;
use framestab::metrics::{
    chain_trajectory_lenient, evaluate, Spectrum, SpectrumKind, TrackerConfig,
};
use framestab::synth::Trajectory;
use serde_json::json;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Original (unstable) sequence directory.
    #[arg(long, required = true)]
    pub input: PathBuf,
    /// Stabilized sequence directory.
    #[arg(long, required = true)]
    pub output: PathBuf,
    /// estimated | ground-truth: how the output trajectory is obtained.
    #[arg(long, default_value = "estimated")]
    pub trajectory: String,
    /// Ground-truth trajectory CSV of the *output* sequence
    /// (required with --trajectory ground-truth).
    #[arg(long)]
    pub traj_csv: Option<PathBuf>,
    /// magnitude | energy spectrum convention for the stability score.
    #[arg(long, default_value = "magnitude")]
    pub spectrum: String,
    /// Wall-clock per-frame cost of the stabilization run, milliseconds.
    #[arg(long, default_value_t = 0.0)]
    pub runtime_ms: f64,
    /// Method label recorded in the report.
    #[arg(long, default_value = "unknown")]
    pub method: String,
    /// Additionally emit trajectory/spectrum plots and CSVs.
    #[arg(long)]
    pub plot: bool,
    #[arg(long, required = true)]
    pub out: PathBuf,
}

pub fn run(cli: &Cli, args: &EvaluateArgs, matches: &ArgMatches) -> Result<()> {
    let config = ConfigFile::load(cli)?;
    let mut spectrum = args.spectrum.clone();
    let mut trajectory = args.trajectory.clone();
    config.apply(matches, "spectrum", "spectrum", &mut spectrum);
    config.apply(matches, "trajectory", "trajectory", &mut trajectory);

    let kind = match spectrum.as_str() {
        "magnitude" => SpectrumKind::Magnitude,
        "energy" => SpectrumKind::Energy,
        other => {
            return Err(Error::Config(format!(
                "unknown --spectrum {other:?} (expected magnitude or energy)"
            )))
        }
    };

    let input = load_sequence(&args.input)?;
    let output = load_sequence(&args.output)?;
    if input.len() != output.len() {
        return Err(Error::Validation(format!(
            "input has {} frames, output {}",
            input.len(),
            output.len()
        )));
    }

    let gt_traj = match trajectory.as_str() {
        "estimated" => None,
        "ground-truth" => {
            let path = args.traj_csv.as_ref().ok_or_else(|| {
                Error::State("--trajectory ground-truth requires --traj-csv".into())
            })?;
            let traj = Trajectory::read_csv(path)?;
            if traj.len() != output.len() {
                return Err(Error::Validation(format!(
                    "trajectory has {} samples, output {} frames",
                    traj.len(),
                    output.len()
                )));
            }
            Some(traj)
        }
        other => {
            return Err(Error::Config(format!(
                "unknown --trajectory {other:?} (expected estimated or ground-truth)"
            )))
        }
    };

    let tracker = TrackerConfig::default();
    let report = evaluate(
        &input,
        &output,
        args.runtime_ms,
        &args.method,
        gt_traj.as_ref(),
        kind,
        &tracker,
    )?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let report_path = args.out.join("report.json");
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Format(format!("report encode: {e}")))?;
    std::fs::write(&report_path, text).map_err(|e| Error::io(&report_path, e))?;
    println!(
        "stability {:.4} (t {:.4}, theta {:.4})  distortion {:.4}  cropping {:.4}",
        report.stability, report.stability_t, report.stability_theta, report.distortion,
        report.cropping
    );

    if args.plot {
        let out_traj = match &gt_traj {
            Some(t) => t.clone(),
            None => chain_trajectory_lenient(&output, &tracker)?.0,
        };
        let (in_traj, _) = chain_trajectory_lenient(&input, &tracker)?;
        in_traj.write_csv(&args.out.join("trajectory_input.csv"))?;
        out_traj.write_csv(&args.out.join("trajectory_output.csv"))?;

        plot::line_plot(
            &args.out.join("trajectory_translation.png"),
            &[
                Series { values: &in_traj.tx, color: plot::COLOR_ALT },
                Series { values: &in_traj.ty, color: plot::COLOR_TY },
                Series { values: &out_traj.tx, color: plot::COLOR_TX },
                Series { values: &out_traj.ty, color: plot::COLOR_THETA },
            ],
        )?;
        plot::line_plot(
            &args.out.join("trajectory_rotation.png"),
            &[
                Series { values: &in_traj.theta, color: plot::COLOR_ALT },
                Series { values: &out_traj.theta, color: plot::COLOR_THETA },
            ],
        )?;

        let spec_in = Spectrum::of_signal(&in_traj.tx);
        let spec_out = Spectrum::of_signal(&out_traj.tx);
        plot::spectrum_plot(
            &args.out.join("spectrum_tx.png"),
            &[
                Series { values: &spec_in.mags, color: plot::COLOR_ALT },
                Series { values: &spec_out.mags, color: plot::COLOR_TX },
            ],
        )?;
        let mut spec_csv = String::from("bin,input_tx,output_tx\n");
        for k in 0..spec_in.mags.len().max(spec_out.mags.len()) {
            spec_csv.push_str(&format!(
                "{},{},{}\n",
                k,
                spec_in.mags.get(k).copied().unwrap_or(0.0),
                spec_out.mags.get(k).copied().unwrap_or(0.0)
            ));
        }
        let spec_path = args.out.join("spectrum_tx.csv");
        std::fs::write(&spec_path, spec_csv).map_err(|e| Error::io(&spec_path, e))?;
    }

    write_run_json(
        &args.out,
        "evaluate",
        cli,
        json!({
            "input": args.input,
            "output": args.output,
            "trajectory": trajectory,
            "traj_csv": args.traj_csv,
            "spectrum": spectrum,
            "runtime_ms": args.runtime_ms,
            "method": args.method,
            "plot": args.plot,
            "out": args.out,
        }),
    )
}
