//! Ball flight dynamics, an extended Kalman filter over position, velocity
//! and spin, a Rauch-Tung-Striebel smoother and EM noise estimation.

mod ekf;
mod em;
mod model;
mod smoother;

pub use ekf::{
    ekf_filter, ekf_predict, ekf_update, load_ekf_params, save_ekf_params, EkfBelief, EkfParams,
    FilterRun, FilterStep,
};
pub use em::{em_fit, initial_params, EmFit};
pub use model::{
    continuous_jacobian, derivative, integrate_rk4, rk4_map, transition_jacobian, BallParams,
    FlightState,
};
pub use smoother::{ekf_smooth, Smoothed};

use nalgebra::{SMatrix, SVector};

/// Flight state as a stacked vector `[p, v, w]`.
pub type Vector9 = SVector<f64, 9>;
pub type Matrix9 = SMatrix<f64, 9, 9>;
