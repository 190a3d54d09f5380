//! Simulation, real-time replay through the two-thread EROS+Hough pipeline,
//! triangulation and evaluation.

use evball::evstream::StreamHeader;
use evball::pipeline::{evaluate, rmse_3d, run_pipeline, CameraStream, PipelineConfig};
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

    let out = run_pipeline(&streams[0], &streams[1], &cams, &PipelineConfig::default())?;
    let mut report = evaluate(&out.merged_detections(), &gt)?;
    report.rmse_3d_m = rmse_3d(&out.obs, &gt.states);
    report.runtimes_us = out.timing_summary();

    for (id, m) in &report.cameras {
        println!("{id}: {} detections, {:.0} updates/s", m.detections, m.update_rate);
    }
    if let (Some(px), Some(iou)) = (&report.pixel_error, &report.iou) {
        println!("pixel error {:.2} px, IoU {:.3}", px.mean, iou.mean);
    }
    println!("{} triangulated positions", out.obs.len());
    if let Some(rmse) = report.rmse_3d_m {
        println!("3D RMSE {:.1} mm", rmse * 1e3);
    }
    for (stage, s) in &report.runtimes_us {
        println!("  {stage:<12} {:>6} runs {:>9.1} us", s.n, s.mean);
    }
    Ok(())
}
