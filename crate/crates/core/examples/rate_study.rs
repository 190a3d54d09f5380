//! Flight prediction at the full event-based rate and at a frame-camera
//! rate: EM-fitted filters on both, compared by uncertainty at mid-flight
//! and by when the predicted landing point settles within 20 mm.
//!
//! cargo run --example rate_study -- [out_dir]

use evball::evstream::StreamHeader;
use evball::flight::BallParams;
use evball::pipeline::{
    first_time_below, run_pipeline, run_prediction_study, write_study, CameraStream,
    PipelineConfig, StudyConfig,
};
use evball::simcam::{default_cameras, simulate, SimConfig};

fn main() -> evball::Result<()> {
    let cams = default_cameras();
    let (streams, gt) = simulate(&SimConfig::default(), &cams)?;
    let streams: Vec<CameraStream> = cams
        .iter()
        .zip(streams)
        .map(|(c, events)| {
            Ok(CameraStream {
                header: StreamHeader::new(c.width, c.height, c.id.clone())?,
                events,
            })
        })
        .collect::<evball::Result<_>>()?;
    let cfg = PipelineConfig::default().deterministic(25);
    let obs = run_pipeline(&streams[0], &streams[1], &cams, &cfg)?.obs;
    println!("{} triangulated positions", obs.len());

    let rates = [4000.0, 149.0];
    let results = run_prediction_study(
        &obs,
        &rates,
        &BallParams::default(),
        &StudyConfig::default(),
        Some(&gt.states),
    )?;
    let mid = (obs[0].t + obs[obs.len() - 1].t) / 2;
    for r in &results {
        let b = r.belief_at(mid).expect("no estimate before mid-flight");
        let settle = first_time_below(r, 0.02)
            .map_or("never".to_string(), |t| format!("{:.0} ms", t as f64 * 1e-6));
        println!(
            "{:>6} Hz: {:4} measurements, mid-flight trace vel {:.2e} spin {:.2e}, within 20 mm from {settle}",
            r.rate_hz,
            r.n_obs,
            b.trace_vel(),
            b.trace_spin()
        );
    }
    if let Some(dir) = std::env::args().nth(1) {
        write_study(dir.as_ref(), &results)?;
        println!("wrote {dir}");
    }
    Ok(())
}
