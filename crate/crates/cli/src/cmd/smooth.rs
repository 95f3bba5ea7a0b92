//! `smooth-demo`: trajectory-oracle demonstration; prints and saves the
//! per-frequency attenuation table against the analytic damping law.

use crate::runmeta::{write_run_json, ConfigFile};
use crate::Cli;
use clap::{ArgMatches, Args};
use framestab::error::{Error, Result};
use framestab::interp::trajectory_smooth_oracle;
use framestab::synth::Trajectory;
use serde_json::json;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct SmoothDemoArgs {
    #[arg(long, default_value_t = 96)]
    pub length: usize,
    /// Smoothing iterations.
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    /// Angular frequencies as fractions of pi, comma separated.
    #[arg(long, default_value = "0.125,0.25,0.3333,0.5")]
    pub freqs: String,
    #[arg(long, required = true)]
    pub out: PathBuf,
}

pub fn run(cli: &Cli, args: &SmoothDemoArgs, matches: &ArgMatches) -> Result<()> {
    let config = ConfigFile::load(cli)?;
    let mut m = args.m;
    let mut length = args.length;
    config.apply(matches, "m", "m", &mut m);
    config.apply(matches, "length", "length", &mut length);
    if length < 3 + 2 * (m + 1) {
        return Err(Error::Range(format!(
            "length {length} too short for m={m} (boundary effects swallow the interior)"
        )));
    }

    let fracs: Vec<f64> = args
        .freqs
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad frequency fraction {s:?}")))
        })
        .collect::<Result<_>>()?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut csv = String::from("freq_over_pi,t,before,after\n");
    let mut table = String::from("freq/pi   predicted |cos w|^m   measured ratio\n");
    println!("trajectory smoothing oracle, m = {m}");
    println!("{}", table.trim_end());
    for frac in &fracs {
        let omega = frac * std::f64::consts::PI;
        let signal: Vec<f64> = (0..length).map(|t| (omega * t as f64).sin()).collect();
        let traj = Trajectory::new(signal.clone(), vec![0.0; length], vec![0.0; length])?;
        let smoothed = trajectory_smooth_oracle(&traj, m);
        // Measure on samples unaffected by the fixed boundaries.
        let lo = m + 1;
        let hi = length - m - 1;
        let before_amp = signal[lo..hi].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let after_amp = smoothed.tx[lo..hi].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let measured = after_amp / before_amp.max(1e-300);
        let predicted = omega.cos().abs().powi(m as i32);
        let line = format!("{frac:<9.4} {predicted:<21.9} {measured:.9}");
        println!("{line}");
        table.push_str(&line);
        table.push('\n');
        for t in 0..length {
            csv.push_str(&format!("{},{},{},{}\n", frac, t, signal[t], smoothed.tx[t]));
        }
    }
    let csv_path = args.out.join("smooth_demo.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    let table_path = args.out.join("attenuation.txt");
    std::fs::write(&table_path, table).map_err(|e| Error::io(&table_path, e))?;

    write_run_json(
        &args.out,
        "smooth-demo",
        cli,
        json!({
            "length": length,
            "m": m,
            "freqs": args.freqs,
            "out": args.out,
        }),
    )
}
