//! Feeds one simulated camera stream through the trail filter into an EROS
//! surface and writes the final surface as a PGM image.
//!
//! cargo run --example eros_surface -- [out.pgm]

use std::time::Instant;

use evball::eros::{ErosSurface, DEFAULT_K_EROS};
use evball::evstream::{trail_filter, DEFAULT_DT_BURST_NS};
use evball::simcam::{camera_rng, default_cameras, sim_events, sim_trajectory, SimConfig};

fn main() -> evball::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "eros.pgm".into());
    let cfg = SimConfig::default();
    let cam = &default_cameras()[0];
    let traj = sim_trajectory(&cfg)?;
    let (events, _) = sim_events(&traj, cam, &cfg, &mut camera_rng(cfg.seed, 0));
    let kept = trail_filter(&events, DEFAULT_DT_BURST_NS);
    println!("{} events, {} after the trail filter", events.len(), kept.len());

    let mut surface = ErosSurface::new(cam.width, cam.height, DEFAULT_K_EROS)?;
    let start = Instant::now();
    for e in &kept {
        surface.update(e)?;
    }
    let secs = start.elapsed().as_secs_f64();
    println!(
        "EROS k={} (decay {:.4}): {:.2} Mevents/s",
        surface.k(),
        surface.decay(),
        kept.len() as f64 / secs / 1e6
    );
    surface.values().write_pgm(out.as_ref())?;
    println!("wrote {out}");
    Ok(())
}
