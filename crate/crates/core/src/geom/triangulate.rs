use std::io::Write;
use std::path::Path;

use nalgebra::Point3;

use super::{CameraModel, PairedObs};
use crate::error::{Error, Result};

/// Pairs whose rays pass further apart than this are rejected by default.
pub const DEFAULT_MAX_RESIDUAL_M: f64 = 0.030;

/// Triangulated ball position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obs3D {
    pub p: Point3<f64>,
    pub t: u64,
    /// Length of the shortest segment between the two viewing rays (m).
    pub residual: f64,
}

/// Midpoint of the common perpendicular of the two back-projected rays.
///
/// The returned observation carries `t = 0`; callers stamp it.
pub fn triangulate(
    cam_a: &CameraModel,
    uv_a: (f64, f64),
    cam_b: &CameraModel,
    uv_b: (f64, f64),
) -> Result<Obs3D> {
    let ca = cam_a.center();
    let cb = cam_b.center();
    let da = cam_a.ray_direction(uv_a.0, uv_a.1);
    let db = cam_b.ray_direction(uv_b.0, uv_b.1);

    let a = da.dot(&da);
    let b = da.dot(&db);
    let c = db.dot(&db);
    let w0 = ca - cb;
    let d = da.dot(&w0);
    let e = db.dot(&w0);
    let denom = a * c - b * b;
    if denom <= 1e-12 * a * c {
        return Err(Error::ParallelRays);
    }
    let s = (b * e - c * d) / denom;
    let u = (a * e - b * d) / denom;
    if s <= 0.0 || u <= 0.0 {
        return Err(Error::BehindCamera);
    }
    let pa = ca + da * s;
    let pb = cb + db * u;
    Ok(Obs3D {
        p: Point3::from((pa.coords + pb.coords) * 0.5),
        t: 0,
        residual: (pa - pb).norm(),
    })
}

/// Triangulates paired detections, dropping failures and pairs whose
/// residual exceeds `max_residual`.
pub fn triangulate_pairs(
    cam_a: &CameraModel,
    cam_b: &CameraModel,
    pairs: &[PairedObs],
    max_residual: f64,
) -> Vec<Obs3D> {
    pairs
        .iter()
        .filter_map(|pair| {
            let mut obs = triangulate(cam_a, pair.a, cam_b, pair.b).ok()?;
            obs.t = pair.t;
            (obs.residual <= max_residual).then_some(obs)
        })
        .collect()
}

pub fn write_obs_csv(path: &Path, obs: &[Obs3D]) -> Result<()> {
    let mut out = Vec::with_capacity(obs.len() * 64);
    writeln!(out, "t_ns,x,y,z,residual").unwrap();
    for o in obs {
        writeln!(out, "{},{},{},{},{}", o.t, o.p.x, o.p.y, o.p.z, o.residual).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_obs_csv(path: &Path) -> Result<Vec<Obs3D>> {
    #[derive(serde::Deserialize)]
    struct Row {
        t_ns: u64,
        x: f64,
        y: f64,
        z: f64,
        residual: f64,
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: Row = row?;
        out.push(Obs3D {
            p: Point3::new(r.x, r.y, r.z),
            t: r.t_ns,
            residual: r.residual,
        });
    }
    if out.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(Error::InvalidArgument(format!(
            "{}: observations are not timestamp-ordered",
            path.display()
        )));
    }
    Ok(out)
}
