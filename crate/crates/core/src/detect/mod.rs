//! Ball detectors: gradient-voting Hough circles with ROI tracking, blob
//! initialisation, and the median and particle-filter baselines.

mod blob;
mod hough;
mod median;
mod particle;
mod tracker;

pub use blob::{blob_init, BlobConfig};
pub use hough::{hough_detect, HoughConfig, HoughDetector};
pub use median::{median_detect, MedianConfig};
pub use particle::{ParticleFilter, PfConfig, PfStep};
pub use tracker::{track_step, TrackMode, Tracker, TrackerConfig, TrackerState};

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Rect;

/// Detected ball circle in image coordinates.
///
/// Position-only detectors (the median baseline) report `r` and `score` as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleDetection {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub score: f64,
    pub t: u64,
    pub camera_id: String,
}

impl CircleDetection {
    pub fn has_radius(&self) -> bool {
        self.r.is_finite()
    }

    pub fn stamped(mut self, t: u64, camera_id: &str) -> Self {
        self.t = t;
        self.camera_id = camera_id.to_string();
        self
    }
}

/// Inclusive radius search range in whole pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadiusRange {
    pub min: u32,
    pub max: u32,
}

impl RadiusRange {
    pub fn new(min: u32, max: u32) -> Result<Self> {
        if min < 2 || max < min {
            return Err(Error::InvalidArgument(format!(
                "radius range [{min}, {max}] must satisfy 2 <= min <= max"
            )));
        }
        Ok(Self { min, max })
    }
}

impl Default for RadiusRange {
    fn default() -> Self {
        Self { min: 4, max: 16 }
    }
}

/// Square search window centred on the last known ball position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub cx: f64,
    pub cy: f64,
    pub half: u32,
}

impl Roi {
    pub fn new(cx: f64, cy: f64, half: u32) -> Self {
        Self { cx, cy, half }
    }

    /// Pixel rectangle covered by the ROI, clipped to the image; `None` when
    /// the ROI does not intersect it.
    pub fn rect(&self, width: u32, height: u32) -> Option<Rect> {
        let h = self.half as f64;
        let x0 = (self.cx - h).round().max(0.0);
        let y0 = (self.cy - h).round().max(0.0);
        let x1 = (self.cx + h).round() + 1.0;
        let y1 = (self.cy + h).round() + 1.0;
        let rect = Rect {
            x0: x0.min(width as f64) as u32,
            y0: y0.min(height as f64) as u32,
            x1: x1.clamp(0.0, width as f64) as u32,
            y1: y1.clamp(0.0, height as f64) as u32,
        };
        (!rect.is_empty()).then_some(rect)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let h = self.half as f64 + 0.5;
        (x - self.cx).abs() <= h && (y - self.cy).abs() <= h
    }
}

/// A circle hypothesis of the particle filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub x: f64,
    pub y: f64,
    pub r: f64,
    pub w: f64,
}

fn fmt_opt(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

/// Writes detections as `t_ns,camera_id,cx,cy,r,score`; missing radius and
/// score are left empty.
pub fn write_detections_csv(path: &Path, dets: &[CircleDetection]) -> Result<()> {
    let mut out = Vec::with_capacity(dets.len() * 48);
    writeln!(out, "t_ns,camera_id,cx,cy,r,score").unwrap();
    for d in dets {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            d.t,
            d.camera_id,
            d.cx,
            d.cy,
            fmt_opt(d.r),
            fmt_opt(d.score)
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_detections_csv(path: &Path) -> Result<Vec<CircleDetection>> {
    #[derive(Deserialize)]
    struct Row {
        t_ns: u64,
        camera_id: String,
        cx: f64,
        cy: f64,
        r: Option<f64>,
        score: Option<f64>,
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: Row = row?;
        out.push(CircleDetection {
            cx: r.cx,
            cy: r.cy,
            r: r.r.unwrap_or(f64::NAN),
            score: r.score.unwrap_or(f64::NAN),
            t: r.t_ns,
            camera_id: r.camera_id,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roi_rect_is_clipped() {
        let roi = Roi::new(2.0, 3.0, 5);
        assert_eq!(roi.rect(100, 100), Some(Rect { x0: 0, y0: 0, x1: 8, y1: 9 }));
        assert_eq!(Roi::new(-20.0, 5.0, 5).rect(100, 100), None);
        assert_eq!(Roi::new(50.0, 50.0, 5).rect(100, 100).unwrap().area(), 121);
    }

    #[test]
    fn radius_range_validation() {
        assert!(RadiusRange::new(1, 5).is_err());
        assert!(RadiusRange::new(6, 5).is_err());
        assert!(RadiusRange::new(2, 2).is_ok());
    }

    #[test]
    fn detections_csv_round_trip_with_missing_radius() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let dets = vec![
            CircleDetection { cx: 1.5, cy: 2.25, r: 8.0, score: 0.5, t: 10, camera_id: "a".into() },
            CircleDetection {
                cx: 3.0,
                cy: 4.0,
                r: f64::NAN,
                score: f64::NAN,
                t: 11,
                camera_id: "b".into(),
            },
        ];
        write_detections_csv(&path, &dets).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.ends_with("11,b,3,4,,\n"), "{text}");
        let back = read_detections_csv(&path).unwrap();
        assert_eq!(back[0], dets[0]);
        assert!(!back[1].has_radius());
        assert_eq!((back[1].cx, back[1].t), (3.0, 11));
    }
}
