//! Simulates a stereo recording and writes it to a directory: one event
//! file per camera, the calibration and the ground truth.
//!
//! cargo run --example simulate_scene -- [out_dir] [seed]

use std::path::PathBuf;

use evball::evstream::{write_events, EventFormat, StreamHeader};
use evball::geom::save_calibration;
use evball::simcam::{default_cameras, simulate, SimConfig};

fn main() -> evball::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "sim_out".into()));
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = SimConfig {
        seed,
        ..Default::default()
    };
    let cams = default_cameras();
    let (streams, gt) = simulate(&cfg, &cams)?;
    std::fs::create_dir_all(&dir).expect("cannot create output directory");
    for (cam, events) in cams.iter().zip(&streams) {
        let header = StreamHeader::new(cam.width, cam.height, cam.id.clone())?;
        let path = dir.join(format!("{}.csv", cam.id));
        write_events(&header, events, &path, EventFormat::Csv)?;
        let rate = events.len() as f64 / gt.duration();
        println!("{}: {} events ({:.0} events/s)", path.display(), events.len(), rate);
    }
    save_calibration(&dir.join("calib.json"), &cams)?;
    gt.save(&dir.join("ground_truth.json"))?;
    println!("flight of {:.3} s, {} states", gt.duration(), gt.states.len());
    Ok(())
}
