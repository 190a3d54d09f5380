//! End-to-end processing: per-camera ingestion and detection, stereo
//! pairing and triangulation, evaluation metrics, the trajectory prediction
//! study and throughput benchmarks.

mod bench;
mod metrics;
mod study;
mod timing;
mod worker;

pub use bench::{bench_eros, BenchReport};
pub use metrics::{
    circle_iou, eval_iou, eval_pixel_error, evaluate, interpolate_detection, rmse_3d,
    update_rate, CameraMetrics, Matched, MetricsReport, Stats,
};
pub use study::{
    first_time_below, run_prediction_study, write_study, PredictionRow, RateResult, StudyConfig,
};
pub use timing::StageTimes;
pub use worker::{CameraRun, ReplayClock};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detect::{
    write_detections_csv, BlobConfig, CircleDetection, MedianConfig, PfConfig, TrackerConfig,
};
use crate::eros::DEFAULT_K_EROS;
use crate::error::{Error, Result};
use crate::evstream::{
    read_events, validate_stream, Event, EventFormat, StreamHeader, DEFAULT_DT_BURST_NS,
};
use crate::geom::{
    load_calibration, pair_streams, triangulate_pairs, write_obs_csv, CameraModel, Obs3D,
    DEFAULT_MAX_RESIDUAL_M,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    ErosHough,
    Median,
    Particle,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [Self::ErosHough, Self::Median, Self::Particle];

    pub fn name(self) -> &'static str {
        match self {
            Self::ErosHough => "eros_hough",
            Self::Median => "median",
            Self::Particle => "particle",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown detector {s:?}")))
    }
}

/// How detection is scheduled relative to ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    /// Events are replayed against the wall clock; detection runs as fast
    /// as it can in its own thread.
    Realtime,
    /// Single-threaded, with a detection after every N filtered events.
    Deterministic { events_per_detection: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub detector: DetectorKind,
    pub mode: ExecMode,
    pub k_eros: u32,
    pub dt_burst_ns: u64,
    pub tracker: TrackerConfig,
    pub blob: BlobConfig,
    /// Event window accumulated for blob initialisation.
    pub blob_window_ns: u64,
    pub median: MedianConfig,
    pub pf: PfConfig,
    pub pf_seed: u64,
    /// Keep at most one detection per `1 / rate_hz` (0 disables), emulating
    /// a frame-based camera.
    pub rate_hz: f64,
    pub max_gap_ns: u64,
    pub max_residual_m: f64,
    /// Replay speed in realtime mode (1 is real time).
    pub replay_speed: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            detector: DetectorKind::ErosHough,
            mode: ExecMode::Realtime,
            k_eros: DEFAULT_K_EROS,
            dt_burst_ns: DEFAULT_DT_BURST_NS,
            tracker: TrackerConfig::default(),
            blob: BlobConfig::default(),
            blob_window_ns: 2_000_000,
            median: MedianConfig::default(),
            pf: PfConfig::default(),
            pf_seed: 7,
            rate_hz: 0.0,
            max_gap_ns: 2_000_000,
            max_residual_m: DEFAULT_MAX_RESIDUAL_M,
            replay_speed: 1.0,
        }
    }
}

impl PipelineConfig {
    pub fn with_detector(detector: DetectorKind) -> Self {
        Self {
            detector,
            ..Default::default()
        }
    }

    pub fn deterministic(mut self, events_per_detection: usize) -> Self {
        self.mode = ExecMode::Deterministic {
            events_per_detection,
        };
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let ExecMode::Deterministic {
            events_per_detection: 0,
        } = self.mode
        {
            return Err(Error::InvalidArgument("events per detection must be positive".into()));
        }
        if !(self.replay_speed > 0.0) || !(self.rate_hz >= 0.0) {
            return Err(Error::InvalidArgument(
                "replay speed must be positive and rate non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One camera's event stream.
#[derive(Debug, Clone)]
pub struct CameraStream {
    pub header: StreamHeader,
    pub events: Vec<Event>,
}

impl CameraStream {
    pub fn read(path: &Path) -> Result<Self> {
        let (header, events) = read_events(path, EventFormat::from_path(path))?;
        Ok(Self { header, events })
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Per camera, in the order of the input streams.
    pub detections: Vec<Vec<CircleDetection>>,
    pub obs: Vec<Obs3D>,
    pub runs: Vec<CameraRun>,
    pub times: StageTimes,
}

impl PipelineOutput {
    /// All detections ordered by time, then by camera.
    pub fn merged_detections(&self) -> Vec<CircleDetection> {
        let mut all: Vec<(usize, &CircleDetection)> = self
            .detections
            .iter()
            .enumerate()
            .flat_map(|(i, d)| d.iter().map(move |d| (i, d)))
            .collect();
        all.sort_by_key(|(i, d)| (d.t, *i));
        all.into_iter().map(|(_, d)| d.clone()).collect()
    }

    pub fn timing_summary(&self) -> BTreeMap<String, Stats> {
        let mut all = self.times.clone();
        for r in &self.runs {
            all.merge(&r.times);
        }
        all.summary()
    }

    /// Writes `detections.csv`, `triangulated.csv` and `timings.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_detections_csv(&dir.join("detections.csv"), &self.merged_detections())?;
        write_obs_csv(&dir.join("triangulated.csv"), &self.obs)?;
        #[derive(Serialize)]
        struct CameraCounts<'a> {
            camera_id: &'a str,
            events_in: usize,
            events_applied: u64,
            detections: usize,
        }
        #[derive(Serialize)]
        struct Timings<'a> {
            cameras: Vec<CameraCounts<'a>>,
            observations: usize,
            runtimes_us: BTreeMap<String, Stats>,
        }
        let t = Timings {
            cameras: self
                .runs
                .iter()
                .zip(&self.detections)
                .map(|(r, d)| CameraCounts {
                    camera_id: &r.camera_id,
                    events_in: r.events_in,
                    events_applied: r.events_applied,
                    detections: d.len(),
                })
                .collect(),
            observations: self.obs.len(),
            runtimes_us: self.timing_summary(),
        };
        let path = dir.join("timings.json");
        std::fs::write(&path, serde_json::to_string_pretty(&t)? + "\n")
            .map_err(|e| Error::io(&path, e))
    }
}

fn find_camera<'a>(cams: &'a [CameraModel], header: &StreamHeader) -> Result<&'a CameraModel> {
    let cam = cams
        .iter()
        .find(|c| c.id == header.camera_id)
        .ok_or_else(|| {
            Error::Calibration(format!("no calibration for camera {:?}", header.camera_id))
        })?;
    if cam.width != header.width || cam.height != header.height {
        return Err(Error::Calibration(format!(
            "camera {:?}: stream is {}x{} but calibration is {}x{}",
            cam.id, header.width, header.height, cam.width, cam.height
        )));
    }
    Ok(cam)
}

/// First detection of each `1 / rate_hz` bucket, counted from the first one.
pub fn subsample_detections(dets: &[CircleDetection], rate_hz: f64) -> Vec<CircleDetection> {
    let Some(first) = dets.first() else {
        return Vec::new();
    };
    let bucket = 1e9 / rate_hz;
    let mut last = None;
    dets.iter()
        .filter(|d| {
            let b = ((d.t - first.t) as f64 / bucket).floor() as u64;
            let fresh = last != Some(b);
            last = Some(b);
            fresh
        })
        .cloned()
        .collect()
}

/// Runs both cameras, then pairs and triangulates their detections.
///
/// In realtime mode the cameras are processed concurrently against a shared
/// replay clock.
pub fn run_pipeline(
    stream_a: &CameraStream,
    stream_b: &CameraStream,
    cams: &[CameraModel],
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let streams = [stream_a, stream_b];
    let mut models = Vec::with_capacity(2);
    for s in streams {
        models.push(find_camera(cams, &s.header)?);
        validate_stream(&s.header, &s.events)?;
    }
    if models[0].id == models[1].id {
        return Err(Error::Calibration("both streams come from the same camera".into()));
    }

    let runs: Vec<CameraRun> = match cfg.mode {
        ExecMode::Deterministic { .. } => streams
            .iter()
            .enumerate()
            .map(|(i, s)| worker::process_camera(&s.header, &s.events, cfg, i, None))
            .collect::<Result<_>>()?,
        ExecMode::Realtime => {
            let t0 = streams
                .iter()
                .filter_map(|s| s.events.first().map(|e| e.t))
                .min()
                .unwrap_or(0);
            let clock = ReplayClock::new(t0, cfg.replay_speed);
            std::thread::scope(|scope| {
                let handles: Vec<_> = streams
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let clock = &clock;
                        scope.spawn(move || {
                            worker::process_camera(&s.header, &s.events, cfg, i, Some(clock))
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("camera thread panicked"))
                    .collect::<Result<Vec<_>>>()
            })?
        }
    };

    let mut detections: Vec<Vec<CircleDetection>> =
        runs.iter().map(|r| r.detections.clone()).collect();
    let mut max_gap = cfg.max_gap_ns;
    if cfg.rate_hz > 0.0 {
        for d in &mut detections {
            *d = subsample_detections(d, cfg.rate_hz);
        }
        max_gap = max_gap.max((2e9 / cfg.rate_hz).ceil() as u64);
    }

    let mut times = StageTimes::default();
    let pairs = times.time("pair", || pair_streams(&detections[0], &detections[1], max_gap));
    let obs = times.time("triangulate", || {
        triangulate_pairs(models[0], models[1], &pairs, cfg.max_residual_m)
    });
    Ok(PipelineOutput {
        detections,
        obs,
        runs,
        times,
    })
}

/// [`run_pipeline`] on event files and a calibration file.
pub fn run_pipeline_files(
    events_a: &Path,
    events_b: &Path,
    calib: &Path,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let cams = load_calibration(calib)?;
    let a = CameraStream::read(events_a)?;
    let b = CameraStream::read(events_b)?;
    run_pipeline(&a, &b, &cams, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(t: u64) -> CircleDetection {
        CircleDetection {
            cx: 0.0,
            cy: 0.0,
            r: 5.0,
            score: 1.0,
            t,
            camera_id: "a".into(),
        }
    }

    #[test]
    fn detector_names_round_trip() {
        for d in DetectorKind::ALL {
            assert_eq!(d.name().parse::<DetectorKind>().unwrap(), d);
        }
        assert!("hough".parse::<DetectorKind>().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let cfg: PipelineConfig =
            serde_json::from_str(r#"{"detector":"median","mode":{"deterministic":{"events_per_detection":50}}}"#)
                .unwrap();
        assert_eq!(cfg.detector, DetectorKind::Median);
        assert_eq!(cfg.mode, ExecMode::Deterministic { events_per_detection: 50 });
        assert_eq!(cfg.k_eros, 10);
        assert!(PipelineConfig::default().deterministic(0).validate().is_err());
    }

    #[test]
    fn detection_subsampling() {
        let dets: Vec<_> = (0..1000).map(|k| det(k * 250_000)).collect();
        let sub = subsample_detections(&dets, 149.0);
        assert!((sub.len() as i64 - 37).abs() <= 1, "{}", sub.len());
        assert!(subsample_detections(&[], 149.0).is_empty());
    }
}
