//! Compares the EROS+Hough tracker with the median and particle-filter
//! baselines on the same simulated recording, in deterministic mode.

use evball::evstream::StreamHeader;
use evball::pipeline::{evaluate, run_pipeline, CameraStream, DetectorKind, PipelineConfig};
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

    println!("{:<11} {:>10} {:>10} {:>8}", "detector", "updates/s", "error px", "IoU");
    for kind in DetectorKind::ALL {
        let cfg = PipelineConfig::with_detector(kind).deterministic(50);
        let out = run_pipeline(&streams[0], &streams[1], &cams, &cfg)?;
        let report = evaluate(&out.merged_detections(), &gt)?;
        let fmt = |s: Option<f64>, p: usize| s.map_or("-".into(), |v| format!("{v:.p$}"));
        println!(
            "{:<11} {:>10} {:>10} {:>8}",
            kind.name(),
            fmt(report.update_rate.map(|s| s.mean), 0),
            fmt(report.pixel_error.map(|s| s.mean), 2),
            fmt(report.iou.map(|s| s.mean), 3),
        );
    }
    Ok(())
}
