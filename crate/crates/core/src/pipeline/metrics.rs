use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::CircleDetection;
use crate::error::{Error, Result};
use crate::geom::Obs3D;
use crate::simcam::{GroundTruth, GtCircle, TimedState};

/// Sample statistics; `std` is present only for two or more samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub std: Option<f64>,
}

impl Stats {
    pub fn from_samples(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = (n >= 2).then(|| {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Some(Self { n, mean, std })
    }
}

/// Result of comparing detections with ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Matched {
    pub stats: Stats,
    pub matched: usize,
    /// Ground-truth samples outside the detections' time span.
    pub excluded: usize,
}

/// Detection state linearly interpolated to `t` from the two bracketing
/// detections; `None` outside the detections' time span.
pub fn interpolate_detection(dets: &[CircleDetection], t: u64) -> Option<(f64, f64, f64)> {
    let i = dets.partition_point(|d| d.t <= t);
    if i == 0 {
        return None;
    }
    let lo = &dets[i - 1];
    if lo.t == t {
        return Some((lo.cx, lo.cy, lo.r));
    }
    let hi = dets.get(i)?;
    let a = (t - lo.t) as f64 / (hi.t - lo.t) as f64;
    let lerp = |x: f64, y: f64| x + a * (y - x);
    Some((lerp(lo.cx, hi.cx), lerp(lo.cy, hi.cy), lerp(lo.r, hi.r)))
}

fn matched_samples(
    dets: &[CircleDetection],
    gt: &[GtCircle],
    f: impl Fn(&GtCircle, (f64, f64, f64)) -> Option<f64>,
) -> Result<Matched> {
    if gt.is_empty() {
        return Err(Error::InsufficientData("empty ground truth".into()));
    }
    let mut xs = Vec::with_capacity(gt.len());
    let mut excluded = 0;
    for g in gt {
        match interpolate_detection(dets, g.t).and_then(|d| f(g, d)) {
            Some(x) => xs.push(x),
            None => excluded += 1,
        }
    }
    let stats = Stats::from_samples(&xs)
        .ok_or_else(|| Error::InsufficientData("no ground-truth sample could be matched".into()))?;
    Ok(Matched {
        stats,
        matched: xs.len(),
        excluded,
    })
}

/// Centre distance between interpolated detections and ground truth.
pub fn eval_pixel_error(dets: &[CircleDetection], gt: &[GtCircle]) -> Result<Matched> {
    matched_samples(dets, gt, |g, (x, y, _)| Some((x - g.cx).hypot(y - g.cy)))
}

/// Disk IoU between interpolated detections and ground truth. Needs
/// detections with radii.
pub fn eval_iou(dets: &[CircleDetection], gt: &[GtCircle]) -> Result<Matched> {
    matched_samples(dets, gt, |g, (x, y, r)| {
        r.is_finite().then(|| circle_iou((x, y, r), (g.cx, g.cy, g.r)))
    })
}

/// Intersection over union of two disks `(cx, cy, r)`.
pub fn circle_iou(a: (f64, f64, f64), b: (f64, f64, f64)) -> f64 {
    let (r1, r2) = (a.2, b.2);
    let d = (a.0 - b.0).hypot(a.1 - b.1);
    let (a1, a2) = (PI * r1 * r1, PI * r2 * r2);
    let inter = if d >= r1 + r2 {
        0.0
    } else if d <= (r1 - r2).abs() {
        a1.min(a2)
    } else {
        let c1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0);
        let c2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0);
        let k = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
        r1 * r1 * c1.acos() + r2 * r2 * c2.acos() - 0.5 * k.max(0.0).sqrt()
    };
    let union = a1 + a2 - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Position updates per second.
pub fn update_rate(n_detections: usize, duration_s: f64) -> Result<f64> {
    if !(duration_s > 0.0) {
        return Err(Error::InvalidArgument("duration must be positive".into()));
    }
    Ok(n_detections as f64 / duration_s)
}

/// Root-mean-square distance between observations and the true trajectory
/// interpolated to their timestamps.
pub fn rmse_3d(obs: &[Obs3D], states: &[TimedState]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for o in obs {
        let i = states.partition_point(|s| s.t <= o.t);
        if i == 0 {
            continue;
        }
        let lo = &states[i - 1];
        let p = if lo.t == o.t {
            lo.state.p
        } else {
            let Some(hi) = states.get(i) else { continue };
            let a = (o.t - lo.t) as f64 / (hi.t - lo.t) as f64;
            lo.state.p + (hi.state.p - lo.state.p) * a
        };
        sum += (o.p.coords - p).norm_squared();
        n += 1;
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// Per-camera accuracy figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraMetrics {
    pub detections: usize,
    pub update_rate: f64,
    pub pixel_error: Option<Matched>,
    pub iou: Option<Matched>,
}

/// Summary of a run against ground truth.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Detections per second, statistics over cameras.
    pub update_rate: Option<Stats>,
    /// Pixel error pooled over all matched samples of all cameras.
    pub pixel_error: Option<Stats>,
    pub iou: Option<Stats>,
    pub cameras: BTreeMap<String, CameraMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse_3d_m: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub runtimes_us: BTreeMap<String, Stats>,
}

impl MetricsReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn pooled(dets: &BTreeMap<&str, &[CircleDetection]>, gt: &GroundTruth, iou: bool) -> Option<Stats> {
    let mut xs = Vec::new();
    for (id, d) in dets {
        let Some(g) = gt.cameras.get(*id) else { continue };
        for c in g {
            if let Some((x, y, r)) = interpolate_detection(d, c.t) {
                if !iou {
                    xs.push((x - c.cx).hypot(y - c.cy));
                } else if r.is_finite() {
                    xs.push(circle_iou((x, y, r), (c.cx, c.cy, c.r)));
                }
            }
        }
    }
    Stats::from_samples(&xs)
}

/// Evaluates detections of any number of cameras against ground truth.
/// Cameras are matched by id; the update rate uses the ground-truth flight
/// duration.
pub fn evaluate(dets: &[CircleDetection], gt: &GroundTruth) -> Result<MetricsReport> {
    let duration = gt.duration();
    let mut by_camera: BTreeMap<&str, Vec<CircleDetection>> = BTreeMap::new();
    for id in gt.cameras.keys() {
        by_camera.insert(id, Vec::new());
    }
    for d in dets {
        by_camera.entry(&d.camera_id).or_default().push(d.clone());
    }
    for v in by_camera.values_mut() {
        v.sort_by_key(|d| d.t);
    }
    let mut report = MetricsReport::default();
    let mut rates = Vec::new();
    for (id, d) in &by_camera {
        let rate = update_rate(d.len(), duration)?;
        rates.push(rate);
        let g = gt.cameras.get(*id).map(Vec::as_slice).unwrap_or(&[]);
        report.cameras.insert(
            id.to_string(),
            CameraMetrics {
                detections: d.len(),
                update_rate: rate,
                pixel_error: eval_pixel_error(d, g).ok(),
                iou: eval_iou(d, g).ok(),
            },
        );
    }
    let views: BTreeMap<&str, &[CircleDetection]> =
        by_camera.iter().map(|(k, v)| (*k, v.as_slice())).collect();
    report.update_rate = Stats::from_samples(&rates);
    report.pixel_error = pooled(&views, gt, false);
    report.iou = pooled(&views, gt, true);
    Ok(report)
}
