//! Event data model, event file I/O and the sensor-side burst ("trail") filter.

mod io;
mod trail;

pub use io::{read_events, write_events, EventFormat};
pub use trail::{trail_filter, TrailFilter, DEFAULT_DT_BURST_NS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign of the brightness change reported by a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    /// Pixel got darker.
    Off,
    /// Pixel got brighter.
    On,
}

impl Polarity {
    pub fn as_i8(self) -> i8 {
        match self {
            Polarity::Off => -1,
            Polarity::On => 1,
        }
    }

    pub fn from_i64(p: i64) -> Option<Self> {
        match p {
            -1 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::Off => Polarity::On,
            Polarity::On => Polarity::Off,
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Polarity::Off => 0,
            Polarity::On => 1,
        }
    }
}

/// One camera event. Timestamps are integer nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: u64,
    pub p: Polarity,
}

impl Event {
    pub fn new(x: u16, y: u16, t: u64, p: Polarity) -> Self {
        Self { x, y, t, p }
    }
}

/// Sensor geometry and label attached to an event stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub width: u32,
    pub height: u32,
    pub camera_id: String,
}

impl StreamHeader {
    pub fn new(width: u32, height: u32, camera_id: impl Into<String>) -> Result<Self> {
        let header = Self {
            width,
            height,
            camera_id: camera_id.into(),
        };
        header.validate()?;
        Ok(header)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument(format!(
                "sensor size must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        if self.width > u16::MAX as u32 + 1 || self.height > u16::MAX as u32 + 1 {
            return Err(Error::InvalidArgument(format!(
                "sensor size {}x{} exceeds 16-bit pixel addressing",
                self.width, self.height
            )));
        }
        if self.camera_id.contains(['\n', '\r', ',']) {
            return Err(Error::InvalidArgument(format!(
                "camera id {:?} must not contain commas or line breaks",
                self.camera_id
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height
    }
}

/// Checks bounds and timestamp ordering of a whole stream.
pub fn validate_stream(header: &StreamHeader, events: &[Event]) -> Result<()> {
    let mut prev = 0u64;
    for ev in events {
        if !header.contains(ev.x as u32, ev.y as u32) {
            return Err(Error::OutOfBounds {
                x: ev.x as u32,
                y: ev.y as u32,
                width: header.width,
                height: header.height,
            });
        }
        if ev.t < prev {
            return Err(Error::TimestampRegression { prev, t: ev.t });
        }
        prev = ev.t;
    }
    Ok(())
}
