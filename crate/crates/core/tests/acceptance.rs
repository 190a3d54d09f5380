//! Acceptance suite. Runs every criterion in sequence, prints one line per
//! criterion and exits nonzero if any fails.
//!
//! cargo test -p evball --test acceptance

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use evball::detect::{HoughConfig, HoughDetector, RadiusRange, Tracker, TrackerConfig};
use evball::eros::{decay_factor, ErosSurface};
use evball::evstream::{trail_filter, Event, Polarity, StreamHeader, DEFAULT_DT_BURST_NS};
use evball::flight::{
    continuous_jacobian, derivative, ekf_predict, ekf_update, em_fit, initial_params,
    integrate_rk4, BallParams, EkfBelief, EkfParams, FlightState, Matrix9, Vector9,
};
use evball::geom::{triangulate, CameraModel, Obs3D};
use evball::pipeline::{
    evaluate, first_time_below, run_pipeline, run_prediction_study, subsample_detections,
    update_rate, CameraStream, DetectorKind, PipelineConfig, StudyConfig,
};
use evball::simcam::{default_cameras, simulate, GroundTruth, SimConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn streams(cfg: &SimConfig, cams: &[CameraModel]) -> (Vec<CameraStream>, GroundTruth) {
    let (events, gt) = simulate(cfg, cams).unwrap();
    let streams = cams
        .iter()
        .zip(events)
        .map(|(c, events)| CameraStream {
            header: StreamHeader::new(c.width, c.height, c.id.clone()).unwrap(),
            events,
        })
        .collect();
    (streams, gt)
}

// Straight transcription of the per-event update: decay every cell of the
// clamped (2k+1)^2 window by d with floor rounding, then saturate the centre.
fn reference_update(cells: &mut [u8], w: i64, h: i64, k: i64, d: f64, x: i64, y: i64) {
    for yy in (y - k).max(0)..=(y + k).min(h - 1) {
        for xx in (x - k).max(0)..=(x + k).min(w - 1) {
            let c = &mut cells[(yy * w + xx) as usize];
            *c = (*c as f64 * d).floor() as u8;
        }
    }
    cells[(y * w + x) as usize] = 255;
}

fn c1_eros_oracle() -> Outcome {
    let (w, h, k) = (320u32, 240u32, 10u32);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut surface = ErosSurface::new(w, h, k).unwrap();
    let mut reference = vec![0u8; (w * h) as usize];
    let d = decay_factor(k);
    let n = 100_000;
    for i in 0..n {
        // cluster half the events so windows overlap heavily
        let (x, y) = if i % 2 == 0 {
            (rng.random_range(0..w), rng.random_range(0..h))
        } else {
            (rng.random_range(140..180), rng.random_range(100..140))
        };
        let e = Event::new(x as u16, y as u16, i as u64, Polarity::On);
        surface.update(&e).unwrap();
        reference_update(&mut reference, w as i64, h as i64, k as i64, d, x as i64, y as i64);
    }
    let mismatches = surface
        .values()
        .as_raw()
        .iter()
        .zip(&reference)
        .filter(|(a, b)| a != b)
        .count();
    outcome(
        mismatches == 0,
        format!("{n} events, {mismatches} mismatching cells (required: 0)"),
    )
}

fn c2_eros_throughput() -> Outcome {
    let (w, h) = (1280u32, 720u32);
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let events: Vec<Event> = (0..2_000_000u64)
        .map(|t| Event::new(rng.random_range(0..w) as u16, rng.random_range(0..h) as u16, t, Polarity::On))
        .collect();
    let mut surface = ErosSurface::new(w, h, 10).unwrap();
    let mut best = 0.0f64;
    let start_all = Instant::now();
    // best of three passes to stay robust against scheduler noise
    for _ in 0..3 {
        let start = Instant::now();
        for e in &events {
            surface.update(e).unwrap();
        }
        best = best.max(events.len() as f64 / start.elapsed().as_secs_f64());
    }
    let total = start_all.elapsed().as_secs_f64();
    outcome(
        best >= 1e6,
        format!(
            "{:.2} Mevents/s at k_eros=10 over {} uniform events (required: >= 1.00), {total:.1} s",
            best / 1e6,
            events.len()
        ),
    )
}

fn c3_detection_accuracy() -> Outcome {
    let cams = default_cameras();
    let mut lines = Vec::new();
    let (mut px_all, mut iou_all) = (Vec::new(), Vec::new());
    for (seed, vy) in [(1u64, 0.0), (2, 0.4), (3, -0.4)] {
        let v = Vector3::new(4.0, vy, 1.2).normalize() * 4.0;
        let cfg = SimConfig {
            seed,
            launch: FlightState::new(Vector3::new(-1.0, 0.0, 0.3), v, Vector3::new(0.0, 80.0, 0.0)),
            noise_rate: 1e3,
            ..Default::default()
        };
        let (s, gt) = streams(&cfg, &cams);
        let pcfg = PipelineConfig::with_detector(DetectorKind::ErosHough).deterministic(50);
        let out = run_pipeline(&s[0], &s[1], &cams, &pcfg).unwrap();
        let r = evaluate(&out.merged_detections(), &gt).unwrap();
        let (px, iou) = (r.pixel_error.unwrap().mean, r.iou.unwrap().mean);
        lines.push(format!("seed {seed}: {px:.2} px / {iou:.3}"));
        px_all.push(px);
        iou_all.push(iou);
    }
    let px = px_all.iter().sum::<f64>() / px_all.len() as f64;
    let iou = iou_all.iter().sum::<f64>() / iou_all.len() as f64;
    outcome(
        px <= 2.0 && iou >= 0.70,
        format!(
            "mean pixel error {px:.2} px (required: <= 2.0), mean IoU {iou:.3} (required: >= 0.70); {}",
            lines.join(", ")
        ),
    )
}

fn c4_baseline_ordering() -> Outcome {
    let cams = default_cameras();
    let (s, gt) = streams(&SimConfig::default(), &cams);
    let duration = gt.duration();
    let mut rate = std::collections::HashMap::new();
    let mut err = std::collections::HashMap::new();
    let mut emulated = 0.0;
    for kind in DetectorKind::ALL {
        let out = run_pipeline(&s[0], &s[1], &cams, &PipelineConfig::with_detector(kind)).unwrap();
        let r = evaluate(&out.merged_detections(), &gt).unwrap();
        rate.insert(kind, r.update_rate.map_or(0.0, |s| s.mean));
        err.insert(kind, r.pixel_error.map_or(f64::INFINITY, |s| s.mean));
        if kind == DetectorKind::ErosHough {
            let per_cam: Vec<f64> = out
                .detections
                .iter()
                .map(|d| update_rate(subsample_detections(d, 149.0).len(), duration).unwrap())
                .collect();
            emulated = per_cam.iter().sum::<f64>() / per_cam.len() as f64;
        }
    }
    let (eh, med, pf) = (DetectorKind::ErosHough, DetectorKind::Median, DetectorKind::Particle);
    let pass = rate[&med] > rate[&eh]
        && rate[&eh] > emulated
        && rate[&eh] >= 1490.0
        && err[&med] >= err[&eh]
        && err[&pf] >= err[&eh];
    outcome(
        pass,
        format!(
            "updates/s median {:.0} > eros_hough {:.0} > emulated {:.0}, eros_hough >= 1490; \
             pixel error eros_hough {:.2}, median {:.2}, particle {:.2} (baselines must be >=)",
            rate[&med], rate[&eh], emulated, err[&eh], err[&med], err[&pf]
        ),
    )
}

fn c5_roi_speedup() -> Outcome {
    let cams = default_cameras();
    let cfg = SimConfig::default();
    let (s, _) = streams(&cfg, &cams);
    let events = trail_filter(&s[0].events, DEFAULT_DT_BURST_NS);
    let mut surface = ErosSurface::new(1280, 720, 10).unwrap();
    let mut tracker = Tracker::new(TrackerConfig::default());
    let mut full = HoughDetector::new();
    let (rr, hcfg) = (RadiusRange::default(), HoughConfig::default());
    let (mut t_full, mut t_roi, mut n) = (0.0, 0.0, 0);
    let mut next = 5_000_000u64;
    for e in &events {
        surface.update(e).unwrap();
        if e.t < next {
            continue;
        }
        next += 5_000_000;
        let img = surface.values();
        let start = Instant::now();
        std::hint::black_box(full.detect(img, rr, None, &hcfg));
        let full_s = start.elapsed().as_secs_f64();
        let tracking = tracker.state().is_tracking();
        let start = Instant::now();
        std::hint::black_box(tracker.step(img));
        let roi_s = start.elapsed().as_secs_f64();
        if tracking {
            t_full += full_s;
            t_roi += roi_s;
            n += 1;
        }
    }
    let ratio = t_full / t_roi;
    outcome(
        n > 10 && ratio >= 5.0,
        format!(
            "full frame {:.0} us vs ROI {:.0} us over {n} 1280x720 snapshots: {ratio:.1}x (required: >= 5x)",
            t_full / n as f64 * 1e6,
            t_roi / n as f64 * 1e6
        ),
    )
}

fn c6_triangulation() -> Outcome {
    let cams = default_cameras();
    let (a, b) = (&cams[0], &cams[1]);
    let baseline = (a.center() - b.center()).norm();
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let (mut worst_exact, mut noisy) = (0.0f64, Vec::new());
    while noisy.len() < 1000 {
        let p = Point3::new(
            rng.random_range(-1.5..1.0),
            rng.random_range(-0.8..0.8),
            rng.random_range(-0.2..0.8),
        );
        let (Ok(ua), Ok(ub)) = (a.project(&p), b.project(&p)) else { continue };
        if !a.in_image(ua.0, ua.1) || !b.in_image(ub.0, ub.1) {
            continue;
        }
        worst_exact = worst_exact.max((triangulate(a, ua, b, ub).unwrap().p - p).norm());
        let mut j = |(u, v): (f64, f64)| (u + noise.sample(&mut rng), v + noise.sample(&mut rng));
        let (na, nb) = (j(ua), j(ub));
        noisy.push((triangulate(a, na, b, nb).unwrap().p - p).norm());
    }
    noisy.sort_by(f64::total_cmp);
    let median = noisy[noisy.len() / 2];
    outcome(
        worst_exact < 1e-9 && median < 0.01,
        format!(
            "1000 points, {baseline:.1} m baseline: noise-free max error {worst_exact:.1e} m (required: < 1e-9), \
             0.5 px noise median error {:.2} mm (required: < 10)",
            median * 1e3
        ),
    )
}

fn fd_jacobian(s: &FlightState, bp: &BallParams) -> Matrix9 {
    let x = s.to_vector();
    let mut j = Matrix9::zeros();
    for c in 0..9 {
        let h = 1e-6 * x[c].abs().max(1.0);
        let mut xp = x;
        let mut xm = x;
        xp[c] += h;
        xm[c] -= h;
        let fp = derivative(&FlightState::from_vector(&xp), bp).to_vector();
        let fm = derivative(&FlightState::from_vector(&xm), bp).to_vector();
        j.set_column(c, &((fp - fm) / (2.0 * h)));
    }
    j
}

fn rollout(s: &FlightState, dt: f64, steps: usize, bp: &BallParams) -> FlightState {
    (0..steps).fold(*s, |s, _| integrate_rk4(&s, dt, bp).unwrap())
}

fn c7_ekf_numerics() -> Outcome {
    // stronger aerodynamics than the default ball so the nonlinear terms matter
    let bp = BallParams {
        k_m: 5e-3,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut worst_rel = 0.0f64;
    for _ in 0..200 {
        let r = |rng: &mut ChaCha8Rng, s: f64| Vector3::from_fn(|_, _| rng.random_range(-s..s));
        let s = FlightState::new(r(&mut rng, 2.0), r(&mut rng, 8.0), r(&mut rng, 300.0));
        let fd = fd_jacobian(&s, &bp);
        let an = continuous_jacobian(&s, &bp);
        worst_rel = worst_rel.max((fd - an).norm() / an.norm());
    }

    let s0 = FlightState::new(
        Vector3::new(0.0, 0.0, 0.3),
        Vector3::new(6.0, 1.0, 3.0),
        Vector3::new(50.0, 150.0, -40.0),
    );
    let horizon = 0.2;
    let reference = rollout(&s0, 1e-5, 20_000, &bp).to_vector();
    let err = |dt: f64| {
        let n = (horizon / dt).round() as usize;
        (rollout(&s0, dt, n, &bp).to_vector() - reference).norm()
    };
    let ratio = err(0.02) / err(0.01);

    let ep = EkfParams {
        q: Matrix9::from_diagonal(&Vector9::from_fn(|i, _| [1e-8, 1e-3, 1.0][i / 3])),
        rm: Matrix3::identity() * 1e-6,
        mu0: s0.to_vector(),
        p0: Matrix9::identity() * 1e-2,
        dt_ref: 1e-3,
    };
    let mut belief = EkfBelief {
        mean: ep.mu0,
        cov: ep.p0,
        t: 0,
    };
    let mut truth = s0;
    let noise = Normal::new(0.0, 1e-3).unwrap();
    let mut min_eig = f64::INFINITY;
    let mut max_asym = 0.0f64;
    let mut ok = true;
    for _ in 0..1000 {
        let dt = rng.random_range(2e-4..2e-3);
        truth = integrate_rk4(&truth, dt, &bp).unwrap();
        let step = ekf_predict(&belief, dt, &bp, &ep).and_then(|b| {
            let z = truth.p + Vector3::from_fn(|_, _| noise.sample(&mut rng));
            ekf_update(&b, &z, &ep)
        });
        match step {
            Ok(b) => belief = b,
            Err(_) => {
                ok = false;
                break;
            }
        }
        let c = belief.cov;
        max_asym = max_asym.max((c - c.transpose()).abs().max());
        let eig = ((c + c.transpose()) * 0.5).symmetric_eigenvalues().min();
        min_eig = min_eig.min(eig / c.norm());
    }
    let psd = ok && min_eig > -1e-9 && max_asym <= 1e-12;
    outcome(
        worst_rel <= 1e-4 && (12.0..=20.0).contains(&ratio) && psd,
        format!(
            "Jacobian max relative error {worst_rel:.1e} (required: <= 1e-4); RK4 Richardson ratio {ratio:.2} \
             (required: 12..20); 1000 cycles: min relative eigenvalue {min_eig:.1e}, max asymmetry {max_asym:.1e}"
        ),
    )
}

fn c8_em() -> Outcome {
    let bp = BallParams::default();
    let sigma = 5e-3;
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let dt = 2e-3;
    let trajs: Vec<Vec<Obs3D>> = (0..4)
        .map(|i| {
            let mut s = FlightState::new(
                Vector3::new(-1.0, 0.1 * i as f64, 0.3),
                Vector3::new(4.0 + 0.2 * i as f64, -0.3 * i as f64, 1.0 + 0.1 * i as f64),
                Vector3::new(0.0, 80.0, 10.0 * i as f64),
            );
            (0..150)
                .map(|k| {
                    let o = Obs3D {
                        p: Point3::from(s.p + Vector3::from_fn(|_, _| noise.sample(&mut rng))),
                        t: (k as f64 * dt * 1e9).round() as u64,
                        residual: 0.0,
                    };
                    s = integrate_rk4(&s, dt, &bp).unwrap();
                    o
                })
                .collect()
        })
        .collect();
    let init = initial_params(&trajs, dt).unwrap();
    let fit = em_fit(&trajs, &bp, &init, 20).unwrap();
    let worst_drop = fit
        .loglik
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::NEG_INFINITY, f64::max);
    let fitted = (fit.params.rm.trace() / 3.0).sqrt();
    let ratio = fitted / sigma;
    outcome(
        worst_drop <= 1e-6 && (0.5..=2.0).contains(&ratio),
        format!(
            "20 iterations on 4 trajectories: largest log-likelihood drop {worst_drop:.2e} (required: <= 1e-6); \
             fitted sigma {:.2} mm vs 5 mm, ratio {ratio:.2} (required: 0.5..2)",
            fitted * 1e3
        ),
    )
}

fn c9_rate_study() -> Outcome {
    let cams = default_cameras();
    let (s, gt) = streams(&SimConfig::default(), &cams);
    let cfg = PipelineConfig::default().deterministic(25);
    let obs = run_pipeline(&s[0], &s[1], &cams, &cfg).unwrap().obs;
    let res = run_prediction_study(
        &obs,
        &[4000.0, 149.0],
        &BallParams::default(),
        &StudyConfig::default(),
        Some(&gt.states),
    )
    .unwrap();
    let mid = (obs[0].t + obs[obs.len() - 1].t) / 2;
    let (full, frame) = (&res[0], &res[1]);
    let (bf, bs) = (full.belief_at(mid).unwrap(), frame.belief_at(mid).unwrap());
    let never = u64::MAX;
    let (tf, ts) = (
        first_time_below(full, 0.02).unwrap_or(never),
        first_time_below(frame, 0.02).unwrap_or(never),
    );
    let ms = |t: u64| if t == never { "never".to_string() } else { format!("{:.1} ms", t as f64 * 1e-6) };
    let vel = bf.trace_vel() < bs.trace_vel();
    let spin = bf.trace_spin() < bs.trace_spin();
    let earlier = tf < ts;
    outcome(
        vel && spin && earlier,
        format!(
            "{} vs {} measurements; mid-flight trace vel {:.2e} vs {:.2e} ({}), spin {:.2e} vs {:.2e} ({}); \
             error below 20 mm from {} vs {} ({})",
            full.n_obs,
            frame.n_obs,
            bf.trace_vel(),
            bs.trace_vel(),
            if vel { "ok" } else { "not smaller" },
            bf.trace_spin(),
            bs.trace_spin(),
            if spin { "ok" } else { "not smaller" },
            ms(tf),
            ms(ts),
            if earlier { "ok" } else { "not earlier" },
        ),
    )
}

fn evball(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_evball"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> Vec<String> {
    names
        .iter()
        .filter(|n| {
            let (x, y) = (std::fs::read(a.join(n)), std::fs::read(b.join(n)));
            !matches!((x, y), (Ok(x), Ok(y)) if x == y)
        })
        .map(|n| n.to_string())
        .collect()
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scene = d.join("scene.json");
    std::fs::write(&scene, r#"{"seed": 5, "duration": 0.3}"#).unwrap();
    let p = |s: &str| d.join(s).to_string_lossy().into_owned();
    let mut ok = true;
    for out in ["sim1", "sim2"] {
        ok &= evball(&["sim", "--config", &p("scene.json"), "--out-dir", &p(out)]);
    }
    for (out, sim) in [("run1", "sim1"), ("run2", "sim2")] {
        ok &= evball(&[
            "run",
            "--events-a",
            &p(&format!("{sim}/cam_a.evb")),
            "--events-b",
            &p(&format!("{sim}/cam_b.evb")),
            "--calib",
            &p(&format!("{sim}/calib.json")),
            "--detector",
            "eros_hough",
            "--deterministic",
            "50",
            "--out",
            &p(out),
        ]);
    }
    let mut diff = same_files(
        &d.join("sim1"),
        &d.join("sim2"),
        &["cam_a.evb", "cam_b.evb", "calib.json", "ground_truth.json"],
    );
    diff.extend(same_files(&d.join("run1"), &d.join("run2"), &["detections.csv", "triangulated.csv"]));
    let dets = std::fs::read_to_string(d.join("run1/detections.csv"))
        .map(|s| s.lines().count().saturating_sub(1))
        .unwrap_or(0);
    outcome(
        ok && diff.is_empty() && dets > 0,
        format!(
            "two sim and two run --deterministic invocations: {} differing files{}; {dets} detections",
            diff.len(),
            if diff.is_empty() { String::new() } else { format!(" ({})", diff.join(", ")) }
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("EROS oracle equivalence", c1_eros_oracle),
        ("EROS throughput", c2_eros_throughput),
        ("detection accuracy", c3_detection_accuracy),
        ("baseline ordering", c4_baseline_ordering),
        ("ROI speedup", c5_roi_speedup),
        ("triangulation round trip", c6_triangulation),
        ("EKF numerical suite", c7_ekf_numerics),
        ("EM properties", c8_em),
        ("rate vs uncertainty", c9_rate_study),
        ("determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{}] {:>2} {name}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
