// Temporary feasibility probe; removed before release.
use framestab::interp::{iterative_stabilize, BuiltinInterp, StabilizeConfig};
use framestab::metrics::{chain_trajectory, stability_score, Spectrum, SpectrumKind, TrackerConfig};
use framestab::nn::StabNetSpec;
use framestab::synth::{make_stab_pair, procedural_texture, JitterSpec, PairSpec, Trajectory};
use framestab::train::{train_stage1, Profile, TrainConfig};
use std::time::Instant;

fn band(tr: &Trajectory) -> f64 {
    let mut total = 0.0;
    for sig in [&tr.tx, &tr.ty, &tr.theta] {
        let sp = Spectrum::of_signal(sig);
        total += sp.band(7, sp.bins(), SpectrumKind::Magnitude);
    }
    total
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("crit2");

    if mode == "crit2" {
        let cfg = StabilizeConfig { m: 5, k: 4, skip: 1 };
        let mut worse = 0;
        let mut reductions = Vec::new();
        let t_all = Instant::now();
        for seed in 0..10u64 {
            let img = procedural_texture(768, 768, 1000 + seed);
            let spec = PairSpec {
                jitter: JitterSpec { seed: 2000 + seed, ..JitterSpec::default() },
                ..PairSpec::default()
            };
            let pair = make_stab_pair(&img, &spec, seed).unwrap();
            let out = iterative_stabilize(&pair.unstable, &BuiltinInterp, None, &cfg).unwrap();
            let recovered = chain_trajectory(&out, &TrackerConfig::default()).unwrap();
            let s_in = stability_score(&pair.unstable_traj, SpectrumKind::Magnitude).unwrap();
            let s_out = stability_score(&recovered, SpectrumKind::Magnitude).unwrap();
            let red = 1.0 - band(&recovered) / band(&pair.unstable_traj);
            reductions.push(red);
            let ok = s_out.s_final > s_in.s_final;
            if !ok {
                worse += 1;
            }
            println!(
                "seed {seed}: S_in {:.3} -> S_out {:.3} ({}), band reduction {:.1}%",
                s_in.s_final,
                s_out.s_final,
                if ok { "better" } else { "WORSE" },
                red * 100.0
            );
        }
        println!(
            "total {:.1?}; mean reduction {:.1}%; worse count {worse}",
            t_all.elapsed(),
            reductions.iter().sum::<f64>() / reductions.len() as f64 * 100.0
        );
    }

    if mode == "grid" {
        let cfg = StabilizeConfig { m: 5, k: 4, skip: 1 };
        for (speed, turn) in [(2.0f64, 0.004f64), (2.0, 0.008), (2.5, 0.01)] {
            let mut worse = 0;
            let mut reds = Vec::new();
            let mut min_margin = f64::INFINITY;
            for seed in 0..10u64 {
                let img = procedural_texture(768, 768, 1000 + seed);
                let spec = PairSpec {
                    speed_px: speed,
                    turn_rate: turn,
                    jitter: JitterSpec { seed: 2000 + seed, ..JitterSpec::default() },
                    ..PairSpec::default()
                };
                let pair = make_stab_pair(&img, &spec, seed).unwrap();
                let out = iterative_stabilize(&pair.unstable, &BuiltinInterp, None, &cfg).unwrap();
                let recovered = chain_trajectory(&out, &TrackerConfig::default()).unwrap();
                let s_in = stability_score(&pair.unstable_traj, SpectrumKind::Magnitude).unwrap();
                let s_out = stability_score(&recovered, SpectrumKind::Magnitude).unwrap();
                let red = 1.0 - band(&recovered) / band(&pair.unstable_traj);
                reds.push(red);
                let margin = s_out.s_final - s_in.s_final;
                min_margin = min_margin.min(margin);
                if margin <= 0.0 {
                    worse += 1;
                    println!("  seed {seed}: in {:?}", s_in);
                    println!("  seed {seed}: out {:?}", s_out);
                }
            }
            println!("speed {speed} turn {turn}: worse {worse}/10, min margin {min_margin:.3}, mean reduction {:.1}%",
                reds.iter().sum::<f64>() / reds.len() as f64 * 100.0);
        }
    }

    if mode == "gradcheck" {
        use framestab::nn::{ResidualStack, Tensor};
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        let net = ResidualStack::new(15, 4, 2, 3, 6);
        let mut params: Vec<f64> = net.init_params(11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut x = Tensor::<f64>::zeros(15, 8, 8);
        for v in x.data.iter_mut() { *v = rng.gen_range(0.0..1.0); }
        let target: Vec<f64> = (0..3 * 64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let loss = |p: &[f64]| -> f64 {
            let (y, _) = net.forward(&x, p);
            y.data.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / target.len() as f64
        };
        let (y, cache) = net.forward(&x, &params);
        let mut dy = Tensor::<f64>::zeros(3, 8, 8);
        for (i, v) in dy.data.iter_mut().enumerate() { *v = 2.0 * (y.data[i] - target[i]) / target.len() as f64; }
        let mut grads = vec![0.0f64; net.n_params()];
        net.backward(&cache, &dy, &params, &mut grads);
        let step = 1e-5;
        let mut max_rel = 0.0f64;
        let mut max_i = 0;
        let mut norm_a = 0.0f64; let mut norm_d = 0.0f64;
        for i in 0..params.len() {
            let orig = params[i];
            params[i] = orig + step; let hi = loss(&params);
            params[i] = orig - step; let lo = loss(&params);
            params[i] = orig;
            let fd = (hi - lo) / (2.0 * step);
            let rel = (fd - grads[i]).abs() / (fd.abs().max(grads[i].abs()).max(1e-8));
            norm_a += grads[i] * grads[i]; norm_d += (fd - grads[i]) * (fd - grads[i]);
            if rel > max_rel { max_rel = rel; max_i = i; }
        }
        println!("max rel err {max_rel:.2e} at {max_i}; vec rel {:.2e}", (norm_d / norm_a).sqrt());
        println!("n_params {}", net.n_params());
    }

    if mode == "overfit" {
        let img = procedural_texture(320, 320, 3000);
        let spec = PairSpec {
            jitter: JitterSpec { seed: 4000, ..JitterSpec::default() },
            ..PairSpec::default()
        };
        let pairs = vec![make_stab_pair(&img, &spec, 100).unwrap()];
        let net_spec = StabNetSpec::desk();
        for lr in [1e-4f64, 1e-3] {
            let mut cfg = TrainConfig::stage1(Profile::Desk, 7);
            cfg.patches_per_batch = 1;
            cfg.batch_size = 2;
            cfg.max_iters = 300;
            cfg.lr_init = lr;
            cfg.val_interval = 1000;
            cfg.augment = framestab::train::AugmentSpec::default();
            let out = train_stage1(&pairs, &[], &net_spec, &cfg).unwrap();
            println!("lr {lr:.0e}: initial {:.6} final {:.6}; train first {:.6} last {:.6}",
                out.initial_val, out.final_val, out.history[0].loss_total, out.history.last().unwrap().loss_total);
        }
    }

    if mode == "frame58" {
        let seed = 7u64;
        let img = procedural_texture(768, 768, 1000 + seed);
        let spec = PairSpec {
            jitter: JitterSpec { seed: 2000 + seed, ..JitterSpec::default() },
            ..PairSpec::default()
        };
        let pair = make_stab_pair(&img, &spec, seed).unwrap();
        let cfg = StabilizeConfig { m: 1, k: 9, skip: 1 };
        let out = iterative_stabilize(&pair.unstable, &BuiltinInterp, None, &cfg).unwrap();
        // GN estимates around t=58
        for t in [39usize, 40, 41, 42] {
            let est = framestab::interp::debug_refine_motion(pair.unstable.frame(t - 1), pair.unstable.frame(t + 1));
            let tr = &pair.unstable_traj;
            let dth = tr.theta[t - 1] - tr.theta[t + 1];
            println!("interp pair ({},{}) est ({:.2},{:.2},{:.4}) gt theta {:.4}", t-1, t+1, est.0, est.1, est.2, dth);
        }
        let rec = chain_trajectory(&out, &TrackerConfig::default()).unwrap();
        let oracle = framestab::interp::trajectory_smooth_oracle(&pair.unstable_traj, 1);
        for t in 0..rec.theta.len() - 1 {
            let d = rec.theta[t + 1] - rec.theta[t];
            if d.abs() > 0.03 {
                println!("JUMP at pair ({},{}): dtheta {:.4}", t, t + 1, d);
            }
        }
        let _ = &oracle;
        // chain fits between output frames around the jump
        for t in 38..43usize {
            let corners = framestab::metrics::detect_corners(out.frame(t)).unwrap();
            let matches = framestab::metrics::match_corners(out.frame(t), out.frame(t + 1), &corners).unwrap();
            match framestab::metrics::estimate_homography_ransac(&matches, &framestab::metrics::RansacParams::default()) {
                Ok((h, mask)) => {
                    let d = framestab::metrics::decompose_homography(&h).unwrap();
                    println!("chain pair ({},{}) matches {} inliers {} theta {:.4} tx {:.2} ty {:.2} aniso {:.3}",
                        t, t + 1, matches.len(), mask.iter().filter(|m| **m).count(), d.theta, d.tx, d.ty, d.anisotropy);
                }
                Err(e) => println!("chain pair ({},{}) matches {} FAILED: {e}", t, t + 1, matches.len()),
            }
        }
    }

    if mode == "iter" {
        let seed = 7u64;
        let img = procedural_texture(768, 768, 1000 + seed);
        let spec = PairSpec {
            jitter: JitterSpec { seed: 2000 + seed, ..JitterSpec::default() },
            ..PairSpec::default()
        };
        let pair = make_stab_pair(&img, &spec, seed).unwrap();
        let bandsig = |sig: &Vec<f64>| { let sp = Spectrum::of_signal(sig); sp.band(7, sp.bins(), SpectrumKind::Magnitude) };
        let lowsig = |sig: &Vec<f64>| { let sp = Spectrum::of_signal(sig); sp.band(2, 6, SpectrumKind::Magnitude) };
        println!("in: theta high {:.4} low {:.4}", bandsig(&pair.unstable_traj.theta), lowsig(&pair.unstable_traj.theta));
        for m in 1..=5 {
            let cfg = StabilizeConfig { m, k: 9, skip: 1 };
            let out = iterative_stabilize(&pair.unstable, &BuiltinInterp, None, &cfg).unwrap();
            let rec = chain_trajectory(&out, &TrackerConfig::default()).unwrap();
            let oracle = framestab::interp::trajectory_smooth_oracle(&pair.unstable_traj, m);
            println!("m={m}: rec theta high {:.4} low {:.4} | oracle high {:.4} low {:.4}",
                bandsig(&rec.theta), lowsig(&rec.theta), bandsig(&oracle.theta), lowsig(&oracle.theta));
            // max per-frame theta deviation from oracle
            let mut max_dev = 0.0f64; let mut max_t = 0;
            for t in 0..rec.theta.len() {
                let d = (rec.theta[t] - (oracle.theta[t] - oracle.theta[0])).abs();
                if d > max_dev { max_dev = d; max_t = t; }
            }
            println!("   max |theta_rec - theta_oracle| = {:.5} at t={}", max_dev, max_t);
        }
    }

    if mode == "motion" {
        let seed = 3u64;
        let img = procedural_texture(768, 768, 1000 + seed);
        let spec = PairSpec {
            jitter: JitterSpec { seed: 2000 + seed, ..JitterSpec::default() },
            ..PairSpec::default()
        };
        let pair = make_stab_pair(&img, &spec, seed).unwrap();
        let tr = &pair.unstable_traj;
        for t in 0..pair.unstable.len() - 1 {
            let est = framestab::interp::debug_refine_motion(pair.unstable.frame(t), pair.unstable.frame(t + 1));
            // ground truth relative motion in my model convention
            let dth = tr.theta[t] - tr.theta[t + 1];
            let (s1, c1) = (-tr.theta[t + 1]).sin_cos();
            let dcx = tr.tx[t] - tr.tx[t + 1];
            let dcy = tr.ty[t] - tr.ty[t + 1];
            let gtx = c1 * dcx - s1 * dcy;
            let gty = s1 * dcx + c1 * dcy;
            let err = ((est.0 - gtx).powi(2) + (est.1 - gty).powi(2)).sqrt();
            let terr = (est.2 - dth).abs();
            if err > 0.1 || terr > 0.002 {
                println!("pair {t}: est ({:.3},{:.3},{:.5}) gt ({:.3},{:.3},{:.5}) err {:.3}px {:.5}rad", est.0, est.1, est.2, gtx, gty, dth, err, terr);
            }
        }
        println!("done");
    }

    if mode == "diag" {
        let cfg = StabilizeConfig { m: 5, k: 4, skip: 1 };
        for seed in [1u64, 4] {
            let img = procedural_texture(768, 768, 1000 + seed);
            let spec = PairSpec {
                jitter: JitterSpec { seed: 2000 + seed, ..JitterSpec::default() },
                ..PairSpec::default()
            };
            let pair = make_stab_pair(&img, &spec, seed).unwrap();
            let out = iterative_stabilize(&pair.unstable, &BuiltinInterp, None, &cfg).unwrap();
            let rec_in = chain_trajectory(&pair.unstable, &TrackerConfig::default()).unwrap();
            let rec_out = chain_trajectory(&out, &TrackerConfig::default()).unwrap();
            let oracle = framestab::interp::trajectory_smooth_oracle(&pair.unstable_traj, 5);
            println!("--- seed {seed}");
            println!("GT  in:  {:?}", stability_score(&pair.unstable_traj, SpectrumKind::Magnitude).unwrap());
            println!("REC in:  {:?}", stability_score(&rec_in, SpectrumKind::Magnitude).unwrap());
            println!("REC out: {:?}", stability_score(&rec_out, SpectrumKind::Magnitude).unwrap());
            println!("ORACLE:  {:?}", stability_score(&oracle, SpectrumKind::Magnitude).unwrap());
            let bandsig = |sig: &Vec<f64>| { let sp = Spectrum::of_signal(sig); sp.band(7, sp.bins(), SpectrumKind::Magnitude) };
            println!("theta band: gt_in {:.4} rec_in {:.4} rec_out {:.4} oracle {:.4}",
                bandsig(&pair.unstable_traj.theta), bandsig(&rec_in.theta), bandsig(&rec_out.theta), bandsig(&oracle.theta));
            println!("tx band: gt_in {:.3} rec_in {:.3} rec_out {:.3} oracle {:.3}",
                bandsig(&pair.unstable_traj.tx), bandsig(&rec_in.tx), bandsig(&rec_out.tx), bandsig(&oracle.tx));
            // theta low band too
            let lowsig = |sig: &Vec<f64>| { let sp = Spectrum::of_signal(sig); sp.band(2, 6, SpectrumKind::Magnitude) };
            println!("theta low: gt_in {:.4} rec_in {:.4} rec_out {:.4} oracle {:.4}",
                lowsig(&pair.unstable_traj.theta), lowsig(&rec_in.theta), lowsig(&rec_out.theta), lowsig(&oracle.theta));
            println!("tx low: gt_in {:.3} rec_in {:.3} rec_out {:.3} oracle {:.3}",
                lowsig(&pair.unstable_traj.tx), lowsig(&rec_in.tx), lowsig(&rec_out.tx), lowsig(&oracle.tx));
        }
    }

    if mode == "train" {
        use framestab::train::AugmentSpec;
        let build_pairs = |n: usize, base: u64| -> Vec<framestab::synth::StabPair> {
            (0..n as u64)
                .map(|i| {
                    let img = procedural_texture(320, 320, base + i);
                    let spec = PairSpec {
                        jitter: JitterSpec { seed: base + 1000 + i, ..JitterSpec::default() },
                        ..PairSpec::default()
                    };
                    make_stab_pair(&img, &spec, base + 2000 + i).unwrap()
                })
                .collect()
        };
        let pairs = build_pairs(6, 3000);
        let val_pairs = build_pairs(2, 9000);

        for (name, augment) in [
            ("no-aug", AugmentSpec::default()),
            ("flips-only", AugmentSpec { flip_h: true, flip_v: true, reverse_order: true, ..AugmentSpec::default() }),
            ("full-aug", AugmentSpec::enabled(7)),
        ] {
            let spec = StabNetSpec::desk();
            let mut cfg = TrainConfig::stage1(Profile::Desk, 7);
            cfg.patches_per_batch = 1;
            cfg.max_iters = 600;
            cfg.val_interval = 100;
            cfg.augment = augment;
            let t0 = Instant::now();
            let out = train_stage1(&pairs, &val_pairs, &spec, &cfg).unwrap();
            println!(
                "{name}: {:.1?}  initial {:.6} final {:.6} ({:+.1}%)  val: {:?}",
                t0.elapsed(),
                out.initial_val,
                out.final_val,
                100.0 * (out.final_val / out.initial_val - 1.0),
                out.val_history.iter().map(|(i, v)| format!("{i}:{v:.3e}")).collect::<Vec<_>>()
            );
        }
    }
}
