use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ideal pinhole camera with a rigid world-to-camera transform
/// `X_cam = R * X_world + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        let cam = Self {
            id: id.into(),
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`; image y points along `-up`.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        id: impl Into<String>,
        width: u32,
        height: u32,
        focal: f64,
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self> {
        let z = (target - eye).normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-9 {
            return Err(Error::InvalidArgument("viewing direction parallel to up".into()));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye.coords);
        Self::new(
            id,
            width,
            height,
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            rotation,
            translation,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Calibration(format!(
                "camera {}: focal lengths must be positive",
                self.id
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Calibration(format!("camera {}: empty image", self.id)));
        }
        let orth = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        let det = self.rotation.determinant();
        if orth > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::Calibration(format!(
                "camera {}: rotation is not a proper orthonormal matrix",
                self.id
            )));
        }
        Ok(())
    }

    pub fn to_camera(&self, p_world: &Point3<f64>) -> Vector3<f64> {
        self.rotation * p_world.coords + self.translation
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }

    /// Pixel coordinates of a world point.
    pub fn project(&self, p_world: &Point3<f64>) -> Result<(f64, f64)> {
        let pc = self.to_camera(p_world);
        if pc.z <= 0.0 {
            return Err(Error::NonPositiveDepth(pc.z));
        }
        Ok((self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy))
    }

    /// World-frame direction (not normalised) of the ray through pixel `(u, v)`.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        let dc = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        self.rotation.transpose() * dc
    }

    pub fn in_image(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// On-disk calibration record for one camera.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(rename = "R")]
    pub rotation: [f64; 9],
    pub t: [f64; 3],
    #[serde(default)]
    pub dist: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub cameras: Vec<CameraRecord>,
}

impl CalibrationFile {
    pub fn from_cameras(cams: &[CameraModel]) -> Self {
        let cameras = cams
            .iter()
            .map(|c| {
                let mut rotation = [0.0; 9];
                for r in 0..3 {
                    for k in 0..3 {
                        rotation[r * 3 + k] = c.rotation[(r, k)];
                    }
                }
                CameraRecord {
                    id: c.id.clone(),
                    width: c.width,
                    height: c.height,
                    fx: c.fx,
                    fy: c.fy,
                    cx: c.cx,
                    cy: c.cy,
                    rotation,
                    t: [c.translation.x, c.translation.y, c.translation.z],
                    dist: Vec::new(),
                }
            })
            .collect();
        Self { cameras }
    }

    pub fn to_cameras(&self) -> Result<Vec<CameraModel>> {
        self.cameras
            .iter()
            .map(|r| {
                if r.dist.iter().any(|&k| k != 0.0) {
                    return Err(Error::Calibration(format!(
                        "camera {}: lens distortion is not supported (coefficients must be zero)",
                        r.id
                    )));
                }
                CameraModel::new(
                    r.id.clone(),
                    r.width,
                    r.height,
                    r.fx,
                    r.fy,
                    r.cx,
                    r.cy,
                    Matrix3::from_row_slice(&r.rotation),
                    Vector3::from_row_slice(&r.t),
                )
            })
            .collect()
    }
}

pub fn load_calibration(path: &Path) -> Result<Vec<CameraModel>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CalibrationFile = serde_json::from_str(&text)?;
    file.to_cameras()
}

pub fn save_calibration(path: &Path, cams: &[CameraModel]) -> Result<()> {
    let text = serde_json::to_string_pretty(&CalibrationFile::from_cameras(cams))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_cam() -> CameraModel {
        CameraModel::new(
            "c",
            640,
            640,
            500.0,
            500.0,
            320.0,
            320.0,
            Matrix3::identity(),
            Vector3::zeros(),
        )
        .unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let (u, v) = identity_cam().project(&Point3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((u, v), (320.0, 320.0));
    }

    #[test]
    fn lateral_offset_scales_with_focal() {
        let (u, v) = identity_cam().project(&Point3::new(0.1, 0.0, 2.0)).unwrap();
        assert!((u - 345.0).abs() < 1e-12);
        assert_eq!(v, 320.0);
    }

    #[test]
    fn point_behind_camera_rejected() {
        let err = identity_cam().project(&Point3::new(0.0, 0.0, -1.0)).unwrap_err();
        assert!(err.to_string().contains("non-positive depth"));
    }

    #[test]
    fn bad_rotation_rejected() {
        let r = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        let err = CameraModel::new("c", 10, 10, 1.0, 1.0, 0.0, 0.0, r, Vector3::zeros());
        assert!(err.is_err());
        let err = CameraModel::new(
            "c",
            10,
            10,
            0.0,
            1.0,
            0.0,
            0.0,
            Matrix3::identity(),
            Vector3::zeros(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn look_at_centres_target() {
        let cam = CameraModel::look_at(
            "a",
            1280,
            720,
            1000.0,
            Point3::new(-1.5, -2.0, 1.3),
            Point3::new(0.0, 0.0, 0.2),
            Vector3::z(),
        )
        .unwrap();
        let (u, v) = cam.project(&Point3::new(0.0, 0.0, 0.2)).unwrap();
        assert!((u - 640.0).abs() < 1e-9 && (v - 360.0).abs() < 1e-9);
        // a point above the target appears higher in the image
        let (_, v_up) = cam.project(&Point3::new(0.0, 0.0, 0.5)).unwrap();
        assert!(v_up < 360.0);
        assert!((cam.center() - Point3::new(-1.5, -2.0, 1.3)).norm() < 1e-12);
    }

    #[test]
    fn calibration_json_round_trip_and_distortion_check() {
        let cam = identity_cam();
        let file = CalibrationFile::from_cameras(std::slice::from_ref(&cam));
        let json = serde_json::to_string(&file).unwrap();
        assert!(json.contains("\"R\":[1.0,0.0,0.0"));
        let back: CalibrationFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_cameras().unwrap(), vec![cam]);

        let mut distorted = back.clone();
        distorted.cameras[0].dist = vec![0.1, 0.0];
        assert!(matches!(distorted.to_cameras(), Err(Error::Calibration(_))));
    }
}
