use serde::{Deserialize, Serialize};

use super::{CircleDetection, HoughConfig, HoughDetector, RadiusRange, Roi};
use crate::image::{Image8, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub r_range: RadiusRange,
    pub hough: HoughConfig,
    /// ROI half-width; `None` means three times the largest radius.
    pub roi_half: Option<u32>,
    /// Consecutive misses after which tracking falls back to a full search.
    pub miss_limit: u32,
    /// While tracking, search only radii within this many pixels of the
    /// last detection; `None` searches the full range.
    pub radius_slack: Option<u32>,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            r_range: RadiusRange::default(),
            hough: HoughConfig::default(),
            roi_half: None,
            miss_limit: 5,
            radius_slack: Some(3),
        }
    }
}

impl TrackerConfig {
    pub fn roi_half(&self) -> u32 {
        self.roi_half.unwrap_or(3 * self.r_range.max)
    }

    /// Radius search range given the last detected radius.
    pub fn radius_range(&self, last_r: Option<f64>) -> RadiusRange {
        match (last_r, self.radius_slack) {
            (Some(r), Some(slack)) => {
                let r = r.round() as u32;
                let min = r.saturating_sub(slack).max(self.r_range.min);
                let max = (r + slack).min(self.r_range.max);
                if min <= max {
                    RadiusRange { min, max }
                } else {
                    self.r_range
                }
            }
            _ => self.r_range,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrackMode {
    Initializing,
    Tracking(Roi),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerState {
    pub mode: TrackMode,
    pub miss_count: u32,
    /// Radius of the last detection while tracking.
    pub last_r: Option<f64>,
}

impl Default for TrackerState {
    fn default() -> Self {
        Self {
            mode: TrackMode::Initializing,
            miss_count: 0,
            last_r: None,
        }
    }
}

impl TrackerState {
    pub fn roi(&self) -> Option<&Roi> {
        match &self.mode {
            TrackMode::Tracking(roi) => Some(roi),
            TrackMode::Initializing => None,
        }
    }

    pub fn is_tracking(&self) -> bool {
        matches!(self.mode, TrackMode::Tracking(_))
    }
}

/// Full-resolution initialisation followed by ROI-restricted detection.
#[derive(Debug)]
pub struct Tracker {
    cfg: TrackerConfig,
    state: TrackerState,
    hough: HoughDetector,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self {
            cfg,
            state: TrackerState::default(),
            hough: HoughDetector::new(),
        }
    }

    pub fn state(&self) -> &TrackerState {
        &self.state
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Pixels the next step will read from a `width x height` image: the ROI
    /// plus the one-pixel gradient border, or `None` for the whole image.
    pub fn read_region(&self, width: u32, height: u32) -> Option<Rect> {
        self.state
            .roi()
            .and_then(|roi| roi.rect(width, height))
            .map(|r| r.expanded(1, width, height))
    }

    pub fn step(&mut self, image: &Image8) -> Option<CircleDetection> {
        let roi = self.state.roi().copied();
        let rr = self.cfg.radius_range(self.state.last_r.filter(|_| roi.is_some()));
        let det = self.hough.detect(image, rr, roi.as_ref(), &self.cfg.hough);
        match (&det, roi) {
            (Some(d), _) => {
                self.state = TrackerState {
                    mode: TrackMode::Tracking(Roi::new(d.cx, d.cy, self.cfg.roi_half())),
                    miss_count: 0,
                    last_r: Some(d.r),
                };
            }
            (None, Some(_)) => {
                self.state.miss_count += 1;
                if self.state.miss_count >= self.cfg.miss_limit {
                    self.state = TrackerState::default();
                }
            }
            (None, None) => {}
        }
        det
    }
}

/// Functional form of [`Tracker::step`].
pub fn track_step(
    state: TrackerState,
    image: &Image8,
    cfg: &TrackerConfig,
) -> (Option<CircleDetection>, TrackerState) {
    let mut tracker = Tracker {
        cfg: *cfg,
        state,
        hough: HoughDetector::new(),
    };
    let det = tracker.step(image);
    (det, tracker.state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(w: u32, h: u32, cx: f64, cy: f64, r: f64) -> Image8 {
        let mut img = Image8::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if (d - r).abs() <= 0.5 {
                    img.set(x, y, 255);
                }
            }
        }
        img
    }

    #[test]
    fn initialization_switches_to_tracking() {
        let cfg = TrackerConfig::default();
        let img = ring(320, 240, 150.0, 100.0, 9.0);
        let (det, state) = track_step(TrackerState::default(), &img, &cfg);
        let det = det.unwrap();
        let roi = state.roi().unwrap();
        assert_eq!((roi.cx, roi.cy), (det.cx, det.cy));
        assert_eq!(roi.half, 48);
        assert!((roi.cx - 150.0).abs() <= 1.0 && (roi.cy - 100.0).abs() <= 1.0);
    }

    #[test]
    fn tracking_follows_motion_and_recentres() {
        let cfg = TrackerConfig::default();
        let mut tracker = Tracker::new(cfg);
        tracker.step(&ring(320, 240, 150.0, 100.0, 9.0)).unwrap();
        let det = tracker.step(&ring(320, 240, 154.0, 100.0, 9.0)).unwrap();
        assert!((det.cx - 154.0).abs() <= 1.0 && (det.cy - 100.0).abs() <= 1.0);
        let roi = tracker.state().roi().unwrap();
        assert_eq!((roi.cx, roi.cy), (det.cx, det.cy));
    }

    #[test]
    fn misses_reset_to_initializing() {
        let cfg = TrackerConfig {
            miss_limit: 3,
            ..Default::default()
        };
        let mut tracker = Tracker::new(cfg);
        tracker.step(&ring(320, 240, 150.0, 100.0, 9.0)).unwrap();
        let blank = Image8::new(320, 240);
        for i in 1..3 {
            assert!(tracker.step(&blank).is_none());
            assert!(tracker.state().is_tracking());
            assert_eq!(tracker.state().miss_count, i);
        }
        assert!(tracker.step(&blank).is_none());
        assert_eq!(*tracker.state(), TrackerState::default());
    }

    #[test]
    fn read_region_covers_roi_border() {
        let mut tracker = Tracker::new(TrackerConfig::default());
        assert_eq!(tracker.read_region(320, 240), None);
        tracker.step(&ring(320, 240, 150.0, 100.0, 9.0)).unwrap();
        let r = tracker.read_region(320, 240).unwrap();
        assert_eq!(r.width(), 48 * 2 + 1 + 2);
    }
}
