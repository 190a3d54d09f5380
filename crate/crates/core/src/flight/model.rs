use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{Matrix9, Vector9};
use crate::error::{Error, Result};

/// Position (m), velocity (m/s) and spin (rad/s) of the ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub w: Vector3<f64>,
}

impl FlightState {
    pub fn new(p: Vector3<f64>, v: Vector3<f64>, w: Vector3<f64>) -> Self {
        Self { p, v, w }
    }

    pub fn to_vector(&self) -> Vector9 {
        let mut x = Vector9::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.p);
        x.fixed_rows_mut::<3>(3).copy_from(&self.v);
        x.fixed_rows_mut::<3>(6).copy_from(&self.w);
        x
    }

    pub fn from_vector(x: &Vector9) -> Self {
        Self {
            p: x.fixed_rows::<3>(0).into_owned(),
            v: x.fixed_rows::<3>(3).into_owned(),
            w: x.fixed_rows::<3>(6).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }
}

/// Physical constants of the ball and the air.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallParams {
    pub mass: f64,
    pub radius: f64,
    /// Drag constant `k_d` (1/m): drag acceleration is `k_d |v| v`.
    pub k_d: f64,
    /// Magnus constant `k_m` (s): Magnus acceleration is `k_m (w x v)`.
    pub k_m: f64,
    pub g: Vector3<f64>,
}

pub const AIR_DENSITY: f64 = 1.204;

impl BallParams {
    /// Drag constant from the drag coefficient: `k_d = C_d rho pi r^2 / (2 m)`.
    pub fn drag_constant(mass: f64, radius: f64, air_density: f64, drag_coeff: f64) -> f64 {
        0.5 * drag_coeff * air_density * std::f64::consts::PI * radius * radius / mass
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.mass, self.radius, self.k_d, self.k_m]
            .iter()
            .chain(self.g.iter())
            .all(|v| v.is_finite());
        if !finite || self.mass <= 0.0 || self.radius <= 0.0 || self.k_d < 0.0 {
            return Err(Error::InvalidArgument(
                "ball parameters need mass > 0, radius > 0, k_d >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Parameters without drag or Magnus effect.
    pub fn ballistic() -> Self {
        Self {
            k_d: 0.0,
            k_m: 0.0,
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bp: Self = serde_json::from_str(&text)?;
        bp.validate()?;
        Ok(bp)
    }
}

impl Default for BallParams {
    /// A 40 mm, 2.7 g table-tennis ball with C_d = 0.4.
    fn default() -> Self {
        let (mass, radius) = (2.7e-3, 0.02);
        Self {
            mass,
            radius,
            k_d: Self::drag_constant(mass, radius, AIR_DENSITY, 0.4),
            k_m: 4.0e-4,
            g: Vector3::new(0.0, 0.0, -9.81),
        }
    }
}

pub fn derivative(s: &FlightState, bp: &BallParams) -> FlightState {
    let speed = s.v.norm();
    FlightState {
        p: s.v,
        v: bp.g - bp.k_d * speed * s.v + bp.k_m * s.w.cross(&s.v),
        w: Vector3::zeros(),
    }
}

fn deriv_vec(x: &Vector9, bp: &BallParams) -> Vector9 {
    derivative(&FlightState::from_vector(x), bp).to_vector()
}

/// One classical Runge-Kutta step on the stacked state, without checks.
pub fn rk4_map(x: &Vector9, dt: f64, bp: &BallParams) -> Vector9 {
    let k1 = deriv_vec(x, bp);
    let k2 = deriv_vec(&(x + k1 * (dt / 2.0)), bp);
    let k3 = deriv_vec(&(x + k2 * (dt / 2.0)), bp);
    let k4 = deriv_vec(&(x + k3 * dt), bp);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

pub fn integrate_rk4(s: &FlightState, dt: f64, bp: &BallParams) -> Result<FlightState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let next = FlightState::from_vector(&rk4_map(&s.to_vector(), dt, bp));
    if !next.is_finite() {
        return Err(Error::Numerical("non-finite state after integration step".into()));
    }
    Ok(next)
}

/// Jacobian of the RK4 step by central differences with step 1e-6.
pub fn transition_jacobian(x: &Vector9, dt: f64, bp: &BallParams) -> Matrix9 {
    const H: f64 = 1e-6;
    let mut f = Matrix9::zeros();
    for j in 0..9 {
        let mut xp = *x;
        let mut xm = *x;
        xp[j] += H;
        xm[j] -= H;
        let col = (rk4_map(&xp, dt, bp) - rk4_map(&xm, dt, bp)) / (2.0 * H);
        f.set_column(j, &col);
    }
    f
}

fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Analytic Jacobian of [`derivative`] with respect to the stacked state.
pub fn continuous_jacobian(s: &FlightState, bp: &BallParams) -> Matrix9 {
    let mut a = Matrix9::zeros();
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    let speed = s.v.norm();
    let mut dvdv = bp.k_m * skew(&s.w);
    if speed > 0.0 {
        dvdv -= bp.k_d * (Matrix3::identity() * speed + s.v * s.v.transpose() / speed);
    }
    a.fixed_view_mut::<3, 3>(3, 3).copy_from(&dvdv);
    a.fixed_view_mut::<3, 3>(3, 6).copy_from(&(-bp.k_m * skew(&s.v)));
    a
}
