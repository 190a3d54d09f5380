use std::time::Instant;

use serde::Serialize;

use super::metrics::Stats;
use crate::detect::{HoughConfig, HoughDetector, RadiusRange, Roi};
use crate::eros::ErosSurface;
use crate::error::Result;
use crate::evstream::{Event, StreamHeader, TrailFilter, DEFAULT_DT_BURST_NS};
use crate::image::Image8;

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub events: usize,
    pub events_after_trail: usize,
    pub k_eros: u32,
    pub trail_ns_per_event: f64,
    pub eros_seconds: f64,
    pub eros_events_per_s: f64,
    pub snapshot_full_us: Option<Stats>,
    pub hough_full_us: Option<Stats>,
    pub snapshot_roi_us: Option<Stats>,
    pub hough_roi_us: Option<Stats>,
}

fn repeat_us(n: usize, mut f: impl FnMut()) -> Option<Stats> {
    let xs: Vec<f64> = (0..n)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e6
        })
        .collect();
    Stats::from_samples(&xs)
}

/// EROS ingestion throughput on a recorded stream, followed by snapshot and
/// Hough timings on the final surface (ROI timings only if a ball is found).
pub fn bench_eros(header: &StreamHeader, events: &[Event], k_eros: u32) -> Result<BenchReport> {
    let mut trail = TrailFilter::new(header.width, header.height, DEFAULT_DT_BURST_NS);
    let start = Instant::now();
    let kept: Vec<Event> = events.iter().filter(|e| trail.accept(e)).copied().collect();
    let trail_s = start.elapsed().as_secs_f64();

    let mut surface = ErosSurface::new(header.width, header.height, k_eros)?;
    let start = Instant::now();
    for e in &kept {
        surface.update(e)?;
    }
    let eros_s = start.elapsed().as_secs_f64();

    let rr = RadiusRange::default();
    let cfg = HoughConfig::default();
    let mut hough = HoughDetector::new();
    let mut image = Image8::new(header.width, header.height);
    let full = image.full_rect();
    let snapshot_full_us = repeat_us(20, || surface.copy_region_into(full, &mut image));
    let det = hough.detect(&image, rr, None, &cfg);
    let hough_full_us = repeat_us(20, || {
        hough.detect(&image, rr, None, &cfg);
    });
    let (snapshot_roi_us, hough_roi_us) = match det {
        Some(d) => {
            let roi = Roi::new(d.cx, d.cy, 3 * rr.max);
            let rect = roi
                .rect(header.width, header.height)
                .map(|r| r.expanded(1, header.width, header.height))
                .unwrap_or(full);
            (
                repeat_us(200, || surface.copy_region_into(rect, &mut image)),
                repeat_us(200, || {
                    hough.detect(&image, rr, Some(&roi), &cfg);
                }),
            )
        }
        None => (None, None),
    };
    Ok(BenchReport {
        events: events.len(),
        events_after_trail: kept.len(),
        k_eros,
        trail_ns_per_event: if events.is_empty() {
            0.0
        } else {
            trail_s * 1e9 / events.len() as f64
        },
        eros_seconds: eros_s,
        eros_events_per_s: if eros_s > 0.0 { kept.len() as f64 / eros_s } else { 0.0 },
        snapshot_full_us,
        hough_full_us,
        snapshot_roi_us,
        hough_roi_us,
    })
}
