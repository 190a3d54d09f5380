//! Full-frame Hough initialisation followed by ROI tracking on EROS
//! snapshots taken every millisecond, compared with the simulator's circles.

use std::time::Instant;

use evball::detect::{Tracker, TrackerConfig};
use evball::eros::{ErosSurface, DEFAULT_K_EROS};
use evball::evstream::{trail_filter, DEFAULT_DT_BURST_NS};
use evball::pipeline::{eval_iou, eval_pixel_error};
use evball::simcam::{camera_rng, default_cameras, sim_events, sim_trajectory, SimConfig};

fn main() -> evball::Result<()> {
    let cfg = SimConfig::default();
    let cam = &default_cameras()[0];
    let traj = sim_trajectory(&cfg)?;
    let (events, gt) = sim_events(&traj, cam, &cfg, &mut camera_rng(cfg.seed, 0));
    let events = trail_filter(&events, DEFAULT_DT_BURST_NS);

    let mut surface = ErosSurface::new(cam.width, cam.height, DEFAULT_K_EROS)?;
    let mut tracker = Tracker::new(TrackerConfig::default());
    let (mut dets, mut init_us, mut roi_us) = (Vec::new(), Vec::new(), Vec::new());
    let mut next = 1_000_000u64;
    for e in &events {
        surface.update(e)?;
        if e.t < next {
            continue;
        }
        next += 1_000_000;
        let tracking = tracker.state().is_tracking();
        let start = Instant::now();
        let det = tracker.step(surface.values());
        let us = start.elapsed().as_secs_f64() * 1e6;
        if tracking { &mut roi_us } else { &mut init_us }.push(us);
        if let Some(d) = det {
            dets.push(d.stamped(e.t, &cam.id));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    println!("{} detections", dets.len());
    println!("full-frame search: {} runs, {:.0} us mean", init_us.len(), mean(&init_us));
    println!("ROI search:        {} runs, {:.0} us mean", roi_us.len(), mean(&roi_us));
    let px = eval_pixel_error(&dets, &gt)?;
    let iou = eval_iou(&dets, &gt)?;
    println!("pixel error {:.2} px over {} samples, IoU {:.3}", px.stats.mean, px.matched, iou.stats.mean);
    Ok(())
}
