pub mod cli;
pub mod detect;
pub mod eros;
pub mod error;
pub mod evstream;
pub mod flight;
pub mod geom;
pub mod image;
pub mod pipeline;
pub mod simcam;

pub use error::{Error, Result};
