//! Per-camera ingestion and detection.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use super::timing::StageTimes;
use super::{DetectorKind, ExecMode, PipelineConfig};
use crate::detect::{blob_init, median_detect, CircleDetection, ParticleFilter, Roi, Tracker};
use crate::eros::{ErosSurface, SharedSurface};
use crate::error::Result;
use crate::evstream::{Event, StreamHeader, TrailFilter};
use crate::image::Image8;

const IDLE: Duration = Duration::from_micros(20);
const MAX_SLEEP: Duration = Duration::from_micros(500);

/// Output of one camera's processing.
#[derive(Debug, Clone)]
pub struct CameraRun {
    pub camera_id: String,
    pub detections: Vec<CircleDetection>,
    pub times: StageTimes,
    pub events_in: usize,
    /// Events that passed the trail filter and reached the detector input.
    pub events_applied: u64,
}

/// Maps wall-clock time onto stream time for paced replay.
#[derive(Debug, Clone, Copy)]
pub struct ReplayClock {
    start: Instant,
    t0: u64,
    speed: f64,
}

impl ReplayClock {
    pub fn new(t0: u64, speed: f64) -> Self {
        Self {
            start: Instant::now(),
            t0,
            speed,
        }
    }

    pub fn now_ns(&self) -> u64 {
        self.t0 + (self.start.elapsed().as_nanos() as f64 * self.speed) as u64
    }

    fn until(&self, t: u64) -> Duration {
        let now = self.now_ns();
        Duration::from_nanos(((t.saturating_sub(now)) as f64 / self.speed) as u64)
    }
}

fn hough_step(
    tracker: &mut Tracker,
    image: &Image8,
    t: u64,
    camera_id: &str,
    times: &mut StageTimes,
) -> Option<CircleDetection> {
    let stage = if tracker.state().is_tracking() {
        "detect_roi"
    } else {
        "detect_init"
    };
    times.time(stage, || tracker.step(image)).map(|d| d.stamped(t, camera_id))
}

/// Median and particle-filter detectors over a buffer of recent events.
struct WindowDetector<'a> {
    cfg: &'a PipelineConfig,
    header: &'a StreamHeader,
    seed: u64,
    roi: Option<Roi>,
    misses: u32,
    pf: Option<ParticleFilter>,
    inits: u64,
}

fn since(buf: &[Event], t0: u64) -> &[Event] {
    &buf[buf.partition_point(|e| e.t < t0)..]
}

fn init_roi(
    cfg: &PipelineConfig,
    header: &StreamHeader,
    buf: &[Event],
    t_now: u64,
    times: &mut StageTimes,
) -> Option<Roi> {
    let recent = since(buf, t_now.saturating_sub(cfg.blob_window_ns));
    times.time("detect_init", || blob_init(recent, cfg.blob_window_ns, header, &cfg.blob))
}

impl<'a> WindowDetector<'a> {
    fn new(cfg: &'a PipelineConfig, header: &'a StreamHeader, camera_index: usize) -> Self {
        Self {
            cfg,
            header,
            seed: cfg.pf_seed.wrapping_add((camera_index as u64) << 32),
            roi: None,
            misses: 0,
            pf: None,
            inits: 0,
        }
    }

    /// Longest look-back any step may need.
    fn horizon(&self) -> u64 {
        self.cfg
            .blob_window_ns
            .max(self.cfg.median.window_ns)
            .max(self.cfg.pf.w_max_ns)
    }

    /// `buf` holds the most recent events in time order, ending at `t_now`.
    fn detect(&mut self, buf: &[Event], t_now: u64, times: &mut StageTimes) -> Option<CircleDetection> {
        match self.cfg.detector {
            DetectorKind::Particle => self.particle(buf, t_now, times),
            _ => self.median(buf, t_now, times),
        }
    }

    fn median(&mut self, buf: &[Event], t_now: u64, times: &mut StageTimes) -> Option<CircleDetection> {
        let mcfg = &self.cfg.median;
        let roi = match self.roi {
            Some(r) => r,
            None => {
                let found = init_roi(self.cfg, self.header, buf, t_now, times)?;
                Roi::new(found.cx, found.cy, mcfg.roi_half)
            }
        };
        let t0 = t_now.saturating_sub(mcfg.window_ns);
        let window = since(buf, t0);
        match times.time("detect_steady", || median_detect(window, t0, t_now, &roi, mcfg.min_events)) {
            Some((x, y, t)) => {
                self.roi = Some(Roi::new(x, y, roi.half));
                self.misses = 0;
                Some(CircleDetection {
                    cx: x,
                    cy: y,
                    r: f64::NAN,
                    score: f64::NAN,
                    t,
                    camera_id: self.header.camera_id.clone(),
                })
            }
            None => {
                self.misses += 1;
                if self.misses >= mcfg.miss_limit {
                    self.roi = None;
                    self.misses = 0;
                } else {
                    self.roi = Some(roi);
                }
                None
            }
        }
    }

    fn particle(&mut self, buf: &[Event], t_now: u64, times: &mut StageTimes) -> Option<CircleDetection> {
        if self.pf.is_none() {
            let found = init_roi(self.cfg, self.header, buf, t_now, times)?;
            let seed = self.seed.wrapping_add(self.inits);
            self.pf = Some(ParticleFilter::new(&found, self.cfg.tracker.r_range, self.cfg.pf, seed));
            self.inits += 1;
        }
        let filter = self.pf.as_mut().unwrap();
        let window = since(buf, t_now.saturating_sub(filter.window_ns()));
        let step = times.time("detect_steady", || filter.step(window, t_now));
        if filter.is_lost() {
            self.pf = None;
        }
        step.estimate.map(|d| d.stamped(t_now, &self.header.camera_id))
    }
}

pub(crate) fn process_camera(
    header: &StreamHeader,
    events: &[Event],
    cfg: &PipelineConfig,
    camera_index: usize,
    clock: Option<&ReplayClock>,
) -> Result<CameraRun> {
    match (cfg.mode, clock) {
        (ExecMode::Realtime, Some(clock)) => run_realtime(header, events, cfg, camera_index, clock),
        (ExecMode::Deterministic { events_per_detection }, _) => {
            run_deterministic(header, events, cfg, camera_index, events_per_detection.max(1))
        }
        (ExecMode::Realtime, None) => run_deterministic(header, events, cfg, camera_index, 1),
    }
}

fn run_deterministic(
    header: &StreamHeader,
    events: &[Event],
    cfg: &PipelineConfig,
    camera_index: usize,
    every: usize,
) -> Result<CameraRun> {
    let (w, h) = (header.width, header.height);
    let mut trail = TrailFilter::new(w, h, cfg.dt_burst_ns);
    let mut times = StageTimes::default();
    let mut detections = Vec::new();
    let mut applied = 0u64;
    let mut pending = 0usize;
    let mut chunk_start = Instant::now();
    let flush = |times: &mut StageTimes, pending: &mut usize, start: &mut Instant| {
        times.record("ingest_event", start.elapsed().as_secs_f64() * 1e6 / *pending as f64);
        *pending = 0;
    };

    match cfg.detector {
        DetectorKind::ErosHough => {
            let mut surface = ErosSurface::new(w, h, cfg.k_eros)?;
            let mut tracker = Tracker::new(cfg.tracker);
            for e in events {
                if !trail.accept(e) {
                    continue;
                }
                surface.update(e)?;
                applied += 1;
                pending += 1;
                if pending == every {
                    flush(&mut times, &mut pending, &mut chunk_start);
                    let t = surface.last_event_t();
                    if let Some(d) =
                        hough_step(&mut tracker, surface.values(), t, &header.camera_id, &mut times)
                    {
                        detections.push(d);
                    }
                    chunk_start = Instant::now();
                }
            }
        }
        DetectorKind::Median | DetectorKind::Particle => {
            let mut detector = WindowDetector::new(cfg, header, camera_index);
            let mut buf: Vec<Event> = Vec::new();
            for e in events {
                if !trail.accept(e) {
                    continue;
                }
                buf.push(*e);
                applied += 1;
                pending += 1;
                if pending == every {
                    flush(&mut times, &mut pending, &mut chunk_start);
                    if let Some(d) = detector.detect(&buf, e.t, &mut times) {
                        detections.push(d);
                    }
                    chunk_start = Instant::now();
                }
            }
        }
    }
    Ok(CameraRun {
        camera_id: header.camera_id.clone(),
        detections,
        times,
        events_in: events.len(),
        events_applied: applied,
    })
}

/// Releases events when the replay clock reaches their timestamps, filters
/// them and hands each non-empty batch to `sink`.
fn ingest_paced(
    events: &[Event],
    clock: &ReplayClock,
    trail: &mut TrailFilter,
    times: &mut StageTimes,
    mut sink: impl FnMut(Vec<Event>) -> Result<()>,
) -> Result<u64> {
    let mut applied = 0u64;
    let mut i = 0;
    while i < events.len() {
        let now = clock.now_ns();
        let end = i + events[i..].partition_point(|e| e.t <= now);
        if end == i {
            std::thread::sleep(clock.until(events[i].t).min(MAX_SLEEP));
            continue;
        }
        let start = Instant::now();
        let batch: Vec<Event> = events[i..end].iter().filter(|e| trail.accept(e)).copied().collect();
        let n = batch.len() as u64;
        if n > 0 {
            sink(batch)?;
        }
        times.record(
            "ingest_event",
            start.elapsed().as_secs_f64() * 1e6 / (end - i) as f64,
        );
        applied += n;
        i = end;
    }
    Ok(applied)
}

fn run_realtime(
    header: &StreamHeader,
    events: &[Event],
    cfg: &PipelineConfig,
    camera_index: usize,
    clock: &ReplayClock,
) -> Result<CameraRun> {
    let (w, h) = (header.width, header.height);
    let id = &header.camera_id;
    let mut det_times = StageTimes::default();
    let mut detections = Vec::new();

    let (applied, ingest_times) = match cfg.detector {
        DetectorKind::ErosHough => {
            let shared = SharedSurface::new(ErosSurface::new(w, h, cfg.k_eros)?);
            let done = AtomicBool::new(false);
            std::thread::scope(|s| {
                let ingest = s.spawn(|| {
                    let mut trail = TrailFilter::new(w, h, cfg.dt_burst_ns);
                    let mut times = StageTimes::default();
                    let r = ingest_paced(events, clock, &mut trail, &mut times, |b| {
                        shared.apply_batch(&b)
                    });
                    done.store(true, Ordering::Release);
                    r.map(|n| (n, times))
                });

                let mut tracker = Tracker::new(cfg.tracker);
                let mut image = Image8::new(w, h);
                let full = image.full_rect();
                let mut last = 0u64;
                loop {
                    let finished = done.load(Ordering::Acquire);
                    if shared.applied() == last {
                        if finished {
                            break;
                        }
                        std::thread::sleep(IDLE);
                        continue;
                    }
                    let region = tracker.read_region(w, h).unwrap_or(full);
                    let info = det_times
                        .time("snapshot", || shared.snapshot_region_into(region, &mut image));
                    last = info.applied;
                    if let Some(d) = hough_step(&mut tracker, &image, info.t, id, &mut det_times) {
                        detections.push(d);
                    }
                }
                ingest.join().expect("ingestion thread panicked")
            })?
        }
        DetectorKind::Median | DetectorKind::Particle => {
            let (tx, rx) = mpsc::channel::<Vec<Event>>();
            let mut detector = WindowDetector::new(cfg, header, camera_index);
            let horizon = detector.horizon();
            std::thread::scope(|s| {
                let ingest = s.spawn(move || {
                    let mut trail = TrailFilter::new(w, h, cfg.dt_burst_ns);
                    let mut times = StageTimes::default();
                    ingest_paced(events, clock, &mut trail, &mut times, |b| {
                        // a closed receiver only means detection stopped early
                        let _ = tx.send(b);
                        Ok(())
                    })
                    .map(|n| (n, times))
                });

                let mut buf: VecDeque<Event> = VecDeque::new();
                loop {
                    let mut fresh = false;
                    let mut closed = false;
                    loop {
                        match rx.try_recv() {
                            Ok(b) => {
                                buf.extend(b);
                                fresh = true;
                            }
                            Err(mpsc::TryRecvError::Empty) => break,
                            Err(mpsc::TryRecvError::Disconnected) => {
                                closed = true;
                                break;
                            }
                        }
                    }
                    if !fresh {
                        if closed {
                            break;
                        }
                        std::thread::sleep(IDLE);
                        continue;
                    }
                    let t_now = buf.back().unwrap().t;
                    let keep_from = t_now.saturating_sub(horizon);
                    while buf.front().is_some_and(|e| e.t < keep_from) {
                        buf.pop_front();
                    }
                    if let Some(d) = detector.detect(buf.make_contiguous(), t_now, &mut det_times) {
                        detections.push(d);
                    }
                }
                ingest.join().expect("ingestion thread panicked")
            })?
        }
    };
    det_times.merge(&ingest_times);
    Ok(CameraRun {
        camera_id: id.clone(),
        detections,
        times: det_times,
        events_in: events.len(),
        events_applied: applied,
    })
}
