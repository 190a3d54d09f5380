//! Pinhole cameras, stereo triangulation and pairing of asynchronous
//! detection streams.

mod camera;
mod pair;
mod triangulate;

pub use camera::{load_calibration, save_calibration, CalibrationFile, CameraModel, CameraRecord};
pub use pair::{pair_streams, PairedObs};
pub use triangulate::{
    triangulate, triangulate_pairs, write_obs_csv, read_obs_csv, Obs3D, DEFAULT_MAX_RESIDUAL_M,
};
