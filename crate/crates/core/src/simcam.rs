//! Synthetic stereo event data with exact ground truth.
//!
//! Ball trajectories come from the flight model. Each camera sees the
//! projected disk; between consecutive trajectory samples every boundary
//! element emits events in proportion to how far the boundary moves along
//! its normal. The edge moving outward (leading) brightens pixels, the
//! inward-moving (trailing) edge darkens them.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evstream::{Event, Polarity};
use crate::flight::{integrate_rk4, BallParams, FlightState};
use crate::geom::{CalibrationFile, CameraModel, CameraRecord, Obs3D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub launch: FlightState,
    pub bp: BallParams,
    /// Seconds of flight to simulate.
    pub duration: f64,
    pub sim_dt: f64,
    pub ball_radius_m: f64,
    /// Expected events per boundary pixel per pixel of normal displacement.
    pub contrast_event_density: f64,
    /// Background events per second over the whole sensor.
    pub noise_rate: f64,
    pub seed: u64,
    /// Flight stops when the ball centre drops below this height.
    pub table_height: f64,
    /// Dark ball on bright background instead of the reverse.
    pub flip_polarity: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            launch: FlightState::new(
                Vector3::new(-1.0, 0.0, 0.30),
                Vector3::new(4.0, 0.0, 1.2),
                Vector3::new(0.0, 80.0, 0.0),
            ),
            bp: BallParams::default(),
            duration: 0.5,
            sim_dt: 1e-4,
            ball_radius_m: 0.02,
            contrast_event_density: 2.0,
            noise_rate: 1e3,
            seed: 1,
            table_height: 0.0,
            flip_polarity: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sim_dt > 0.0
            && self.duration >= 0.0
            && self.ball_radius_m > 0.0
            && self.contrast_event_density >= 0.0
            && self.noise_rate >= 0.0
            && self.launch.is_finite();
        if !ok {
            return Err(Error::InvalidArgument(
                "simulation needs sim_dt > 0, radius > 0 and non-negative duration, density and noise"
                    .into(),
            ));
        }
        self.bp.validate()
    }
}

/// The default stereo rig: two 1280x720 cameras 3 m apart, raised above and
/// behind the table, both aimed at its middle.
pub fn default_cameras() -> Vec<CameraModel> {
    let target = Point3::new(-0.25, 0.0, 0.25);
    let up = Vector3::z();
    [("cam_a", -1.5), ("cam_b", 1.5)]
        .into_iter()
        .map(|(id, x)| {
            CameraModel::look_at(id, 1280, 720, 1200.0, Point3::new(x, -2.0, 1.3), target, up)
                .unwrap()
        })
        .collect()
}

/// Trajectory state at time `t` (ns since launch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedState {
    pub t: u64,
    #[serde(flatten)]
    pub state: FlightState,
}

/// True projected ball circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtCircle {
    pub t: u64,
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub states: Vec<TimedState>,
    pub cameras: BTreeMap<String, Vec<GtCircle>>,
}

impl GroundTruth {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Noise-free 3D observations of the ball centre.
    pub fn observations(&self) -> Vec<Obs3D> {
        self.states
            .iter()
            .map(|s| Obs3D {
                p: Point3::from(s.state.p),
                t: s.t,
                residual: 0.0,
            })
            .collect()
    }

    /// Duration covered by the 3D states (s).
    pub fn duration(&self) -> f64 {
        match (self.states.first(), self.states.last()) {
            (Some(a), Some(b)) => (b.t - a.t) as f64 * 1e-9,
            _ => 0.0,
        }
    }
}

fn sample_time(k: usize, dt: f64) -> u64 {
    (k as f64 * dt * 1e9).round() as u64
}

/// RK4 rollout sampled every `sim_dt`, ending at `duration` or before the
/// first sample below the table.
pub fn sim_trajectory(cfg: &SimConfig) -> Result<Vec<TimedState>> {
    cfg.validate()?;
    let steps = (cfg.duration / cfg.sim_dt + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = cfg.launch;
    for k in 0..=steps {
        if s.p.z < cfg.table_height {
            break;
        }
        out.push(TimedState {
            t: sample_time(k, cfg.sim_dt),
            state: s,
        });
        if k < steps {
            s = integrate_rk4(&s, cfg.sim_dt, &cfg.bp)?;
        }
    }
    Ok(out)
}

fn project_circle(cam: &CameraModel, p: &Vector3<f64>, radius_m: f64) -> Option<(f64, f64, f64)> {
    let pw = Point3::from(*p);
    let (u, v) = cam.project(&pw).ok()?;
    let z = cam.to_camera(&pw).z;
    Some((u, v, cam.fx * radius_m / z))
}

/// Projected circles; samples behind the camera or centred outside the
/// image are dropped.
pub fn project_ground_truth(
    traj: &[TimedState],
    cam: &CameraModel,
    ball_radius_m: f64,
) -> Vec<GtCircle> {
    traj.iter()
        .filter_map(|s| {
            let (cx, cy, r) = project_circle(cam, &s.state.p, ball_radius_m)?;
            cam.in_image(cx, cy).then_some(GtCircle { t: s.t, cx, cy, r })
        })
        .collect()
}

/// Camera-specific generator seeded from the master seed.
pub fn camera_rng(seed: u64, camera_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(camera_index as u64 + 1);
    rng
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Boundary and background events seen by `cam`, plus its ground truth.
pub fn sim_events(
    traj: &[TimedState],
    cam: &CameraModel,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<Event>, Vec<GtCircle>) {
    let gt = project_ground_truth(traj, cam, cfg.ball_radius_m);
    let (w, h) = (cam.width as f64, cam.height as f64);
    let (on, off) = if cfg.flip_polarity {
        (Polarity::Off, Polarity::On)
    } else {
        (Polarity::On, Polarity::Off)
    };
    let mut events = Vec::new();
    let push = |events: &mut Vec<Event>, x: f64, y: f64, t: u64, p: Polarity| {
        let (px, py) = (x.round(), y.round());
        if px >= 0.0 && py >= 0.0 && px < w && py < h {
            events.push(Event::new(px as u16, py as u16, t, p));
        }
    };

    let circles: Vec<_> = traj
        .iter()
        .map(|s| project_circle(cam, &s.state.p, cfg.ball_radius_m))
        .collect();
    for i in 0..traj.len().saturating_sub(1) {
        let (Some((x0, y0, r0)), Some((x1, y1, r1))) = (circles[i], circles[i + 1]) else {
            continue;
        };
        let rmax = r0.max(r1);
        let visible = |x: f64, y: f64| x > -rmax && y > -rmax && x < w + rmax && y < h + rmax;
        if !visible(x0, y0) && !visible(x1, y1) {
            continue;
        }
        let (t0, t1) = (traj[i].t, traj[i + 1].t);
        let (dx, dy, dr) = (x1 - x0, y1 - y0, r1 - r0);
        let segments = (TAU * rmax).ceil().max(8.0) as usize;
        let dtheta = TAU / segments as f64;
        for j in 0..segments {
            let theta = (j as f64 + 0.5) * dtheta;
            let (c, s) = (theta.cos(), theta.sin());
            let normal_shift = dx * c + dy * s + dr;
            let ds = 0.5 * (r0 + r1) * dtheta;
            let n = poisson(rng, cfg.contrast_event_density * normal_shift.abs() * ds);
            let p = if normal_shift > 0.0 { on } else { off };
            for _ in 0..n {
                let a: f64 = rng.random();
                let t = t0 + ((t1 - t0) as f64 * a) as u64;
                let a = (t - t0) as f64 / (t1 - t0) as f64;
                let th = theta + (rng.random::<f64>() - 0.5) * dtheta;
                let r = r0 + a * dr + (rng.random::<f64>() - 0.5);
                let x = x0 + a * dx + r * th.cos();
                let y = y0 + a * dy + r * th.sin();
                push(&mut events, x, y, t, p);
            }
        }
    }

    if let (Some(first), Some(last)) = (traj.first(), traj.last()) {
        let span = last.t - first.t;
        let n = poisson(rng, cfg.noise_rate * span as f64 * 1e-9);
        for _ in 0..n {
            let x = rng.random_range(0..cam.width) as f64;
            let y = rng.random_range(0..cam.height) as f64;
            let t = first.t + rng.random_range(0..=span);
            let p = if rng.random::<bool>() { Polarity::On } else { Polarity::Off };
            push(&mut events, x, y, t, p);
        }
    }
    events.sort_by_key(|e| e.t);
    (events, gt)
}

/// Events for every camera plus the full ground truth.
pub fn simulate(cfg: &SimConfig, cams: &[CameraModel]) -> Result<(Vec<Vec<Event>>, GroundTruth)> {
    let traj = sim_trajectory(cfg)?;
    let mut streams = Vec::with_capacity(cams.len());
    let mut gt = GroundTruth {
        states: traj.clone(),
        cameras: BTreeMap::new(),
    };
    for (i, cam) in cams.iter().enumerate() {
        let mut rng = camera_rng(cfg.seed, i);
        let (events, circles) = sim_events(&traj, cam, cfg, &mut rng);
        streams.push(events);
        gt.cameras.insert(cam.id.clone(), circles);
    }
    Ok((streams, gt))
}

/// Keeps the first observation of each `1 / rate_hz` bucket, counted from
/// the first timestamp. Input already sparser than the rate is returned
/// unchanged.
pub fn subsample_rate(obs: &[Obs3D], rate_hz: f64) -> Vec<Obs3D> {
    let Some(first) = obs.first() else {
        return Vec::new();
    };
    if !(rate_hz > 0.0) {
        return obs.to_vec();
    }
    let bucket = 1e9 / rate_hz;
    let min_gap = obs.windows(2).map(|w| w[1].t - w[0].t).min().unwrap_or(u64::MAX);
    if min_gap as f64 >= bucket {
        return obs.to_vec();
    }
    let mut out = Vec::with_capacity((obs.len() as f64 * rate_hz / 1e3) as usize + 1);
    let mut last_bucket = None;
    for o in obs {
        let b = ((o.t - first.t) as f64 / bucket).floor() as u64;
        if last_bucket != Some(b) {
            out.push(*o);
            last_bucket = Some(b);
        }
    }
    out
}

/// Configuration file of the `sim` command: simulation settings and an
/// optional camera rig (the default rig otherwise).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    #[serde(flatten)]
    pub sim: SimConfig,
    pub cameras: Option<Vec<CameraRecord>>,
}

impl SceneConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn camera_models(&self) -> Result<Vec<CameraModel>> {
        match &self.cameras {
            Some(records) => CalibrationFile {
                cameras: records.clone(),
            }
            .to_cameras(),
            None => Ok(default_cameras()),
        }
    }
}
